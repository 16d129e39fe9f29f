//! Solution files, sweep tables and diagnostics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::LevelDiagnostics;
use crate::config::{RunConfig, WeightKind};
use crate::constants::{MuEstimate, Sweep};
use crate::error::{FssError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: &[u32] = &[1];

pub const SWEEP_HEADER: [&str; 5] = ["alpha", "lambda", "scaled", "seminorm_V", "converged"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantKind {
    Lambda,
    Mu,
}

/// Best constant attached to a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantValue {
    pub kind: ConstantKind,
    pub value: f64,
    pub ln_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub version: u32,
    /// SHA-256 of the canonical config encoding.
    pub config_hash: String,
    pub config: RunConfig,
    pub grid_shape: Vec<usize>,
    pub alpha: f64,
    pub constant: Option<ConstantValue>,
    /// `[u]^p` of the stored field.
    pub seminorm_u: f64,
    /// `[U]^p` or `[V]^p` of the normalized extremal, when defined.
    pub seminorm_extremal: Option<f64>,
    pub converged: bool,
    /// Interior values, row-major with the first axis slowest.
    pub values: Vec<f64>,
}

/// Hex SHA-256 of the config with relative paths resolved.
pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_vec(&portable_config(cfg)).expect("config serializes");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Copy with a weight file path made absolute, so the embedded config can be
/// rebuilt from anywhere.
pub fn portable_config(cfg: &RunConfig) -> RunConfig {
    let mut out = cfg.clone();
    if let WeightKind::File { path } = &mut out.weight.kind {
        *path = cfg.resolve(path);
    }
    out
}

pub fn save_solution(path: &Path, solution: &SolutionFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(solution)
        .map_err(|e| FssError::CorruptSolution(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_solution(path: &Path) -> Result<SolutionFile> {
    let text = std::fs::read_to_string(path)?;
    parse_solution(&text)
}

pub fn parse_solution(text: &str) -> Result<SolutionFile> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| FssError::CorruptSolution(e.to_string()))?;
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| FssError::CorruptSolution("missing version".into()))?;
    let found = u32::try_from(version).unwrap_or(u32::MAX);
    if !SUPPORTED_VERSIONS.contains(&found) {
        return Err(FssError::UnsupportedVersion {
            found,
            supported: SUPPORTED_VERSIONS.to_vec(),
        });
    }
    let sol: SolutionFile =
        serde_json::from_value(raw).map_err(|e| FssError::CorruptSolution(e.to_string()))?;
    let expected: usize = sol.grid_shape.iter().product();
    if expected != sol.values.len() {
        return Err(FssError::CorruptSolution(format!(
            "grid shape {:?} needs {expected} values, found {}",
            sol.grid_shape,
            sol.values.len()
        )));
    }
    Ok(sol)
}

/// One JSON object per line.
pub fn write_diagnostics(path: &Path, levels: &[LevelDiagnostics]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in levels {
        serde_json::to_writer(&mut out, d).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<LevelDiagnostics>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FssError::Parse {
                line: i + 1,
                column: e.column(),
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, sweep: &Sweep) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in &sweep.records {
        w.write_record([
            r.alpha.to_string(),
            r.lambda().to_string(),
            r.scaled().to_string(),
            r.seminorm_v().to_string(),
            r.converged().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sweep_csv(path: &Path, sweep: &Sweep) -> Result<()> {
    write_sweep_csv(std::fs::File::create(path)?, sweep)
}

pub fn save_mu_json(path: &Path, mu: &MuEstimate) -> Result<()> {
    let mut text = serde_json::to_string_pretty(mu).map_err(std::io::Error::from)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
