//! Run configuration (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainOptions, Schedule};
use crate::domain::{build_grid, build_kernel, r_alpha, BoxDomain, FracParams, Grid, Kernel};
use crate::error::{FssError, Result};
use crate::ops::WeightField;
use crate::solver::SolveOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
    pub collar_width: f64,
    #[serde(default = "yes")]
    pub tail_enabled: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub s: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightKind {
    Constant {
        value: f64,
    },
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    /// `amplitude exp(1 - 1/(1 - |x-c|^2/radius^2))` inside the ball, zero outside.
    CompactBump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
    /// JSON array of nodal values in grid order.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    #[serde(flatten)]
    pub kind: WeightKind,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha0: Option<f64>,
    #[serde(default)]
    pub n_schedule: Schedule,
    #[serde(default = "default_tol_fp")]
    pub tol_fp: f64,
    #[serde(default = "default_tol_chain")]
    pub tol_chain: f64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol_fp() -> f64 {
    1e-9
}
fn default_tol_chain() -> f64 {
    1e-7
}
fn default_grad_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_trials() -> usize {
    1000
}
fn default_seed() -> u64 {
    42
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub solution: Option<PathBuf>,
    pub diagnostics: Option<PathBuf>,
    pub sweep_csv: Option<PathBuf>,
    pub mu_json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub params: ParamsConfig,
    pub weight: WeightConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory relative paths are resolved against; set at load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn cfg_err(path: &str, reason: impl Into<String>) -> FssError {
    FssError::Config {
        path: path.to_string(),
        reason: reason.into(),
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

/// Parses without validating.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| FssError::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        self.grid.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.lo.len() == 1 || g.lo.len() == 2) {
            return Err(cfg_err("grid.lo", "need 1 or 2 coordinates"));
        }
        if g.hi.len() != g.lo.len() {
            return Err(cfg_err("grid.hi", "must have as many coordinates as grid.lo"));
        }
        if g.lo.iter().zip(&g.hi).any(|(a, b)| !(a < b)) {
            return Err(cfg_err("grid.hi", "need lo < hi on every axis"));
        }
        if !(g.h > 0.0 && g.h.is_finite()) {
            return Err(cfg_err("grid.h", "need h > 0"));
        }
        if !(g.collar_width >= g.h) {
            return Err(cfg_err("grid.collar_width", "need collar_width >= h"));
        }
        let ps = self.params;
        if !(ps.s > 0.0 && ps.s < 1.0) {
            return Err(cfg_err("params.s", format!("need 0 < s < 1, got {}", ps.s)));
        }
        if !(ps.p > 1.0 && ps.p.is_finite()) {
            return Err(cfg_err("params.p", format!("need p > 1, got {}", ps.p)));
        }
        let params = self.frac_params()?;
        self.validate_weight()?;

        let pr = &self.problem;
        let r = self.weight.r;
        if let Some(a) = pr.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(cfg_err("problem.alpha", format!("need alpha > 0, got {a}")));
            }
            if a > 1.0 && !matches!(self.weight.kind, WeightKind::CompactBump { .. }) {
                return Err(cfg_err(
                    "problem.alpha",
                    "alpha > 1 requires a compactly supported weight (kind compact-bump); \
                     for other weights weak solutions may not exist",
                ));
            }
        }
        if let Some(a0) = pr.alpha0 {
            if !(a0 > 0.0 && a0 < 1.0) {
                return Err(cfg_err("problem.alpha0", "need 0 < alpha0 < 1"));
            }
            let ra = r_alpha(a0, &params)?;
            if r < ra {
                return Err(cfg_err(
                    "problem.alpha0",
                    format!("need weight.r >= r_alpha(alpha0) = {ra}, got {r}"),
                ));
            }
        }
        if let Some(grid) = &pr.alpha_grid {
            if grid.is_empty() {
                return Err(cfg_err("problem.alpha_grid", "empty"));
            }
            if grid.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(cfg_err("problem.alpha_grid", "must be strictly increasing"));
            }
            for (i, &a) in grid.iter().enumerate() {
                let path = format!("problem.alpha_grid[{i}]");
                if !(a > 0.0 && a < 1.0) {
                    return Err(cfg_err(&path, format!("need 0 < alpha < 1, got {a}")));
                }
                if let Some(a0) = pr.alpha0 {
                    if a < a0 {
                        return Err(cfg_err(&path, format!("below alpha0 = {a0}")));
                    }
                }
                let ra = r_alpha(a, &params)?;
                if r < ra {
                    return Err(cfg_err(&path, format!("need weight.r >= r_alpha = {ra}, got {r}")));
                }
            }
        }
        pr.n_schedule
            .levels()
            .map_err(|e| cfg_err("problem.n_schedule", e.to_string()))?;
        for (name, v) in [
            ("problem.tol_fp", pr.tol_fp),
            ("problem.tol_chain", pr.tol_chain),
            ("problem.grad_tol", pr.grad_tol),
        ] {
            if !(v > 0.0) {
                return Err(cfg_err(name, "must be positive"));
            }
        }
        if pr.max_iter == 0 {
            return Err(cfg_err("problem.max_iter", "must be at least 1"));
        }
        Ok(())
    }

    fn validate_weight(&self) -> Result<()> {
        let dim = self.dim();
        if !(self.weight.r >= 1.0) {
            return Err(cfg_err("weight.r", "need r >= 1"));
        }
        match &self.weight.kind {
            WeightKind::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(cfg_err("weight.value", "need a positive value"));
                }
            }
            WeightKind::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                if center.len() != dim {
                    return Err(cfg_err("weight.center", format!("need {dim} coordinates")));
                }
                if !(*width > 0.0) {
                    return Err(cfg_err("weight.width", "need width > 0"));
                }
                if !(*amplitude > 0.0) {
                    return Err(cfg_err("weight.amplitude", "need amplitude > 0"));
                }
            }
            WeightKind::CompactBump {
                center,
                radius,
                amplitude,
            } => {
                if center.len() != dim {
                    return Err(cfg_err("weight.center", format!("need {dim} coordinates")));
                }
                if !(*radius > 0.0) {
                    return Err(cfg_err("weight.radius", "need radius > 0"));
                }
                if !(*amplitude > 0.0) {
                    return Err(cfg_err("weight.amplitude", "need amplitude > 0"));
                }
                let g = &self.grid;
                for ((c, lo), hi) in center.iter().zip(&g.lo).zip(&g.hi) {
                    if !(c - radius > *lo && c + radius < *hi) {
                        return Err(cfg_err(
                            "weight.radius",
                            "the support ball must lie strictly inside the domain",
                        ));
                    }
                }
            }
            WeightKind::File { path } => {
                if path.as_os_str().is_empty() {
                    return Err(cfg_err("weight.path", "empty path"));
                }
            }
        }
        Ok(())
    }

    pub fn frac_params(&self) -> Result<FracParams> {
        FracParams::new(self.params.s, self.params.p, self.dim())
    }

    pub fn domain(&self) -> BoxDomain {
        BoxDomain {
            lo: self.grid.lo.clone(),
            hi: self.grid.hi.clone(),
        }
    }

    pub fn build_grid(&self) -> Result<Grid> {
        build_grid(&self.domain(), self.grid.h, self.grid.collar_width)
    }

    pub fn build_kernel(&self, grid: &Grid) -> Result<Kernel> {
        build_kernel(grid, &self.frac_params()?, self.grid.tail_enabled)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Nodal weight on `grid`.
    pub fn build_weight(&self, grid: &Grid) -> Result<WeightField> {
        let values: Vec<f64> = match &self.weight.kind {
            WeightKind::Constant { value } => vec![*value; grid.num_interior()],
            WeightKind::GaussianBump {
                center,
                width,
                amplitude,
            } => grid
                .interior_nodes()
                .map(|x| {
                    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                    amplitude * (-r2 / (2.0 * width * width)).exp()
                })
                .collect(),
            WeightKind::CompactBump {
                center,
                radius,
                amplitude,
            } => grid
                .interior_nodes()
                .map(|x| compact_bump(x, center, *radius, *amplitude))
                .collect(),
            WeightKind::File { path } => {
                let full = self.resolve(path);
                let text = std::fs::read_to_string(&full)?;
                let values: Vec<f64> = serde_json::from_str(&text).map_err(|e| FssError::Parse {
                    line: e.line(),
                    column: e.column(),
                    msg: format!("{}: {e}", full.display()),
                })?;
                if values.len() != grid.num_interior() {
                    return Err(FssError::GridMismatch {
                        expected: grid.num_interior(),
                        found: values.len(),
                    });
                }
                values
            }
        };
        WeightField::new(grid, values, self.weight.r)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            grad_tol: self.problem.grad_tol,
            max_iter: self.problem.max_iter,
            ..SolveOptions::default()
        }
    }

    pub fn chain_options(&self) -> ChainOptions {
        ChainOptions {
            solve: self.solve_options(),
            tol_fp: self.problem.tol_fp,
            tol_chain: self.problem.tol_chain,
            seed: self.verification.seed,
            ..ChainOptions::default()
        }
    }
}

/// `amplitude exp(1 - 1/(1 - |x-c|^2/radius^2))` for `|x - c| < radius`.
pub fn compact_bump(x: &[f64], center: &[f64], radius: f64, amplitude: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / (radius * radius);
    if r2 < 1.0 {
        amplitude * (1.0 - 1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "grid": {"lo": [0.0], "hi": [1.0], "h": 0.0625, "collar_width": 0.5},
        "params": {"s": 0.5, "p": 2.0},
        "weight": {"kind": "constant", "value": 1.0, "r": 4.0},
        "problem": {"alpha": 0.5}
    }"#;

    fn with(f: impl FnOnce(&mut serde_json::Value)) -> RunConfig {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        f(&mut v);
        parse_config(&v.to_string()).unwrap()
    }

    #[test]
    fn minimal_loads() {
        let cfg = parse_config(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.problem.n_schedule, Schedule::default());
        assert_eq!(cfg.verification.seed, 42);
        let g = cfg.build_grid().unwrap();
        assert_eq!(g.num_interior(), 15);
        assert_eq!(cfg.build_weight(&g).unwrap().values(), &[1.0; 15]);
    }

    #[test]
    fn range_errors_name_the_field() {
        let cfg = with(|v| v["params"]["s"] = 1.2.into());
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("params.s"), "{err}");
        let cfg = with(|v| v["problem"]["alpha"] = 1.5.into());
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("problem.alpha") && err.contains("compact"), "{err}");
    }

    #[test]
    fn compact_bump_alpha_above_one() {
        let cfg = with(|v| {
            v["weight"] = serde_json::json!({
                "kind": "compact-bump", "center": [0.5], "radius": 0.3, "amplitude": 1.0, "r": 4.0
            });
            v["problem"]["alpha"] = 1.5.into();
        });
        cfg.validate().unwrap();
        let g = cfg.build_grid().unwrap();
        let w = cfg.build_weight(&g).unwrap();
        assert_eq!(w.values()[0], 0.0);
        assert!((w.values()[7] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_config("{\n  \"grid\": [,\n}").unwrap_err();
        match err {
            FssError::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_grid_needs_r() {
        let cfg = with(|v| {
            v["params"]["s"] = 0.8.into();
            v["weight"]["r"] = 1.0.into();
            v["problem"]["alpha_grid"] = serde_json::json!([0.5, 0.9]);
        });
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("problem.alpha_grid[0]"), "{err}");
    }
}
