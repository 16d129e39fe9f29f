//! Sharp constants from singular solutions.
//!
//! For `0 < alpha < 1` the limit `u_alpha` of the chain gives
//! `lambda_alpha = [u_alpha]^(p(1-alpha-p)/(1-alpha))`, attained at the
//! normalized field `U_alpha`. As `alpha -> 1` the scaled values
//! `lambda_alpha |omega|_1^(p/(1-alpha))` increase to the log-Sobolev
//! constant `mu`, which is also computed directly from the `alpha = 1` solution.
//!
//! `lambda_alpha` itself over- or underflows easily near `alpha = 1`, so it is
//! carried as a logarithm and every comparison is done in log form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{run_chain, weak_residual, ChainOptions, ChainResult, LevelDiagnostics, Schedule};
use crate::domain::{r_alpha, Kernel};
use crate::error::{invalid, FssError, Result};
use crate::ops::{check_field, check_weight, log_functional, seminorm_p, weighted_qmean, Field, WeightField};
use crate::rng::trial_field;
use crate::solver::solve_psi;

/// `lambda` from `[u_alpha]^p`.
pub fn lambda_from_seminorm(seminorm_p: f64, alpha: f64, p: f64) -> f64 {
    seminorm_p.powf((1.0 - alpha - p) / (1.0 - alpha))
}

/// A singular solution with its normalizations and best constant.
#[derive(Debug, Clone)]
pub struct SingularSolution {
    pub alpha: f64,
    pub p: f64,
    pub u: Field,
    /// `ln lambda` from `[u]^p`.
    pub ln_lambda: f64,
    /// `ln [U]^p`, the second route to `ln lambda`.
    pub ln_lambda_direct: f64,
    /// `(sum m omega u^(1-alpha))^(-1/(1-alpha))`.
    pub normalization: f64,
    pub big_u: Field,
    pub big_v: Field,
    pub omega_norm1: f64,
    pub seminorm_u: f64,
    pub seminorm_v: f64,
    pub converged: bool,
}

impl SingularSolution {
    /// Builds the normalizations of a positive solution `u` for `0 < alpha < 1`.
    pub fn from_field(
        u: &Field,
        alpha: f64,
        omega: &WeightField,
        kernel: &Kernel,
        converged: bool,
    ) -> Result<Self> {
        if alpha == 1.0 {
            return Err(FssError::AlphaIsOne);
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("need 0 < alpha < 1, got {alpha}")));
        }
        check_field(kernel, u)?;
        check_weight(kernel, omega)?;
        if let Some((i, &v)) = u.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(FssError::NotPositive { node: i, value: v });
        }
        let p = kernel.params().p();
        let m = kernel.cell_measure();
        let e: f64 = omega
            .values()
            .iter()
            .zip(u.values())
            .map(|(&w, &x)| m * w * x.powf(1.0 - alpha))
            .sum();
        let ln_e = e.ln();
        let normalization = (-ln_e / (1.0 - alpha)).exp();
        let big_u = u.scaled(normalization);
        let v_scale = ((omega.norm1().ln() - ln_e) / (1.0 - alpha)).exp();
        let big_v = u.scaled(v_scale);
        let seminorm_u = seminorm_p(u, kernel)?;
        let seminorm_big_u = seminorm_p(&big_u, kernel)?;
        let seminorm_v = seminorm_p(&big_v, kernel)?;
        Ok(Self {
            alpha,
            p,
            u: u.clone(),
            ln_lambda: (1.0 - alpha - p) / (1.0 - alpha) * seminorm_u.ln(),
            ln_lambda_direct: seminorm_big_u.ln(),
            normalization,
            big_u,
            big_v,
            omega_norm1: omega.norm1(),
            seminorm_u,
            seminorm_v,
            converged,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.ln_lambda.exp()
    }

    /// `ln(lambda |omega|_1^(p/(1-alpha)))`.
    pub fn ln_scaled(&self) -> f64 {
        self.ln_lambda + self.p / (1.0 - self.alpha) * self.omega_norm1.ln()
    }

    pub fn scaled(&self) -> f64 {
        self.ln_scaled().exp()
    }

    /// Relative disagreement of the two routes to `lambda`.
    pub fn lambda_gap(&self) -> f64 {
        (self.ln_lambda - self.ln_lambda_direct).exp_m1().abs()
    }

    /// `sum m omega |U|^(1-alpha)`, equal to one for a solution.
    pub fn membership(&self, omega: &WeightField) -> f64 {
        let m = omega.cell_measure();
        omega
            .values()
            .iter()
            .zip(self.big_u.values())
            .map(|(&w, &x)| m * w * x.abs().powf(1.0 - self.alpha))
            .sum()
    }
}

/// Normalizes the limit of a chain with `0 < alpha < 1`.
pub fn lambda_alpha(chain: &ChainResult, omega: &WeightField, kernel: &Kernel) -> Result<SingularSolution> {
    SingularSolution::from_field(&chain.u_alpha, chain.alpha, omega, kernel, chain.converged)
}

/// Outcome of a randomized inequality certification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub trials: usize,
    /// `min slack / [v]^p` over the random fields.
    pub min_slack: f64,
    pub worst_trial: Option<u64>,
    /// `min slack / [v]^p` over multiples of the extremal.
    pub extremal_min: f64,
    /// `max |slack| / [v]^p` over multiples of the extremal.
    pub extremal_gap: f64,
    pub tolerance: f64,
}

impl InequalityReport {
    /// No violation on random fields and equality on the extremal line.
    pub fn passed(&self) -> bool {
        self.min_slack >= -self.tolerance && self.extremal_gap <= self.tolerance
    }

    /// Some tested field violates the inequality.
    pub fn violation_found(&self) -> bool {
        self.min_slack < -self.tolerance || self.extremal_min < -self.tolerance
    }
}

const EXTREMAL_MULTIPLES: [f64; 3] = [-2.0, 0.5, 1.0];
const INEQ_TOL: f64 = 1e-8;

fn certify(
    kernel: &Kernel,
    extremal: &Field,
    trials: usize,
    seed: u64,
    slack: impl Fn(&Field, f64) -> f64 + Sync,
) -> Result<InequalityReport> {
    let random: Vec<(u64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let v = trial_field(kernel.grid(), seed, t);
            let semi = seminorm_p(&v, kernel)?;
            Ok((t, slack(&v, semi) / semi))
        })
        .collect::<Result<_>>()?;
    let (worst_trial, min_slack) = random
        .iter()
        .fold((None, f64::INFINITY), |(bt, bs), &(t, s)| {
            if s < bs {
                (Some(t), s)
            } else {
                (bt, bs)
            }
        });
    let mut extremal_min = f64::INFINITY;
    let mut extremal_gap: f64 = 0.0;
    for k in EXTREMAL_MULTIPLES {
        let v = extremal.scaled(k);
        let semi = seminorm_p(&v, kernel)?;
        let s = slack(&v, semi) / semi;
        extremal_min = extremal_min.min(s);
        extremal_gap = extremal_gap.max(s.abs());
    }
    Ok(InequalityReport {
        trials,
        min_slack,
        worst_trial,
        extremal_min,
        extremal_gap,
        tolerance: INEQ_TOL,
    })
}

/// `ln sum m omega |v|^q`, `-inf` if the sum vanishes.
fn ln_weighted_power(v: &Field, omega: &WeightField, q: f64) -> f64 {
    let m = omega.cell_measure();
    let s: f64 = omega
        .values()
        .iter()
        .zip(v.values())
        .map(|(&w, &x)| if w > 0.0 { m * w * x.abs().powf(q) } else { 0.0 })
        .sum();
    s.ln()
}

/// Certifies `[v]^p >= lambda (sum m omega |v|^(1-alpha))^(p/(1-alpha))`.
pub fn verify_sobolev(
    solution: &SingularSolution,
    omega: &WeightField,
    kernel: &Kernel,
    trials: usize,
    seed: u64,
) -> Result<InequalityReport> {
    verify_sobolev_with(solution, solution.ln_lambda, omega, kernel, trials, seed)
}

/// [`verify_sobolev`] with an arbitrary constant given as its logarithm.
pub fn verify_sobolev_with(
    solution: &SingularSolution,
    ln_constant: f64,
    omega: &WeightField,
    kernel: &Kernel,
    trials: usize,
    seed: u64,
) -> Result<InequalityReport> {
    check_weight(kernel, omega)?;
    let a = solution.alpha;
    let p = solution.p;
    certify(kernel, &solution.big_u, trials, seed, |v, semi| {
        let ln_rhs = ln_constant + p / (1.0 - a) * ln_weighted_power(v, omega, 1.0 - a);
        semi - ln_rhs.exp()
    })
}

/// One point of an alpha sweep.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub alpha: f64,
    pub solution: SingularSolution,
    pub levels: Vec<LevelDiagnostics>,
}

impl SweepRecord {
    pub fn lambda(&self) -> f64 {
        self.solution.lambda()
    }

    pub fn scaled(&self) -> f64 {
        self.solution.scaled()
    }

    pub fn seminorm_v(&self) -> f64 {
        self.solution.seminorm_v
    }

    pub fn converged(&self) -> bool {
        self.solution.converged
    }
}

/// Records of a sweep with its assertions.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub records: Vec<SweepRecord>,
    /// `min (s_{k+1} - s_k) / s_k` over consecutive converged records.
    pub min_increment: f64,
    /// `max |[V]^p - scaled| / scaled`.
    pub v_identity_gap: f64,
}

impl Sweep {
    pub fn monotone(&self) -> bool {
        self.min_increment >= -1e-8
    }

    pub fn identity_holds(&self) -> bool {
        self.v_identity_gap <= 1e-8
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.alpha).collect()
    }

    pub fn last(&self) -> &SweepRecord {
        self.records.last().expect("sweep has at least one record")
    }
}

/// Solves one chain per `alpha` in `grid` and checks scaled monotonicity.
///
/// Chains are independent and run concurrently.
pub fn sweep_alpha(
    omega: &WeightField,
    grid: &[f64],
    kernel: &Kernel,
    schedule: &Schedule,
    opts: &ChainOptions,
) -> Result<Sweep> {
    if grid.is_empty() {
        return Err(invalid("alpha_grid", "empty"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("alpha_grid", "must be strictly increasing"));
    }
    for &a in grid {
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid("alpha_grid", format!("values must lie in (0, 1), got {a}")));
        }
        let ra = r_alpha(a, kernel.params())?;
        if omega.r() < ra {
            return Err(invalid(
                "alpha_grid",
                format!("alpha = {a} needs r >= r_alpha = {ra}, weight has r = {}", omega.r()),
            ));
        }
    }
    let records: Vec<SweepRecord> = grid
        .par_iter()
        .map(|&a| {
            let chain = run_chain(omega, a, kernel, schedule, opts)?;
            let solution = lambda_alpha(&chain, omega, kernel)?;
            Ok(SweepRecord {
                alpha: a,
                solution,
                levels: chain.diagnostics(),
            })
        })
        .collect::<Result<_>>()?;

    let converged: Vec<&SweepRecord> = records.iter().filter(|r| r.converged()).collect();
    let min_increment = converged
        .windows(2)
        .map(|w| (w[1].solution.ln_scaled() - w[0].solution.ln_scaled()).exp_m1())
        .fold(f64::INFINITY, f64::min);
    let v_identity_gap = records
        .iter()
        .map(|r| (r.solution.seminorm_v.ln() - r.solution.ln_scaled()).exp_m1().abs())
        .fold(0.0, f64::max);
    Ok(Sweep {
        records,
        min_increment,
        v_identity_gap,
    })
}

/// The `alpha = 1` solution rescaled onto `sum m omega log V = 0`.
#[derive(Debug, Clone)]
pub struct MuDirect {
    pub u_star: Field,
    pub v: Field,
    pub mu: f64,
    pub ln_k: f64,
    /// `sum m omega log V`.
    pub log_mean: f64,
    /// `|[u*]^p - |omega|_1| / |omega|_1`.
    pub energy_gap: f64,
    /// Weak residual of `(-Delta_p)^s V = (mu/|omega|_1) omega / V`.
    pub residual: f64,
    pub converged: bool,
}

/// Solves `alpha = 1` and rescales: `V = k u*`, `mu = [V]^p`.
pub fn estimate_mu_direct(
    omega: &WeightField,
    kernel: &Kernel,
    schedule: &Schedule,
    opts: &ChainOptions,
) -> Result<MuDirect> {
    let chain = run_chain(omega, 1.0, kernel, schedule, opts)?;
    mu_from_solution(&chain.u_alpha, omega, kernel, chain.converged, opts)
}

/// [`estimate_mu_direct`] from an already computed `alpha = 1` solution.
pub fn mu_from_solution(
    u_star: &Field,
    omega: &WeightField,
    kernel: &Kernel,
    converged: bool,
    opts: &ChainOptions,
) -> Result<MuDirect> {
    let l = log_functional(u_star, omega);
    if !l.is_finite() {
        return Err(FssError::MuUndefined);
    }
    let norm1 = omega.norm1();
    let ln_k = -l / norm1;
    let v = u_star.scaled(ln_k.exp());
    let mu = seminorm_p(&v, kernel)?;
    let energy_gap = (seminorm_p(u_star, kernel)? - norm1).abs() / norm1;
    let rescaled = omega.scaled(mu / norm1)?;
    let residual = weak_residual(&v, &rescaled, 1.0, kernel, opts.residual_trials, opts.seed)?.max_residual;
    Ok(MuDirect {
        u_star: u_star.clone(),
        log_mean: log_functional(&v, omega),
        v,
        mu,
        ln_k,
        energy_gap,
        residual,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Converged,
    StillRising,
    Diverging,
}

/// Sweep and direct estimates of `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub grid: Vec<f64>,
    pub scaled: Vec<f64>,
    pub mu_sweep: f64,
    pub mu_direct: f64,
    pub trend: Trend,
    /// Linear extrapolation in `1 - alpha` from the last two points.
    pub richardson: Option<f64>,
}

impl MuEstimate {
    pub fn relative_gap(&self) -> f64 {
        (self.mu_sweep - self.mu_direct).abs() / self.mu_direct
    }
}

pub fn mu_estimate(sweep: &Sweep, direct: &MuDirect) -> MuEstimate {
    let grid = sweep.alphas();
    let scaled: Vec<f64> = sweep.records.iter().map(|r| r.scaled()).collect();
    let mu_sweep = *scaled.last().expect("nonempty sweep");
    let rel = (mu_sweep - direct.mu).abs() / direct.mu;
    let trend = if !sweep.monotone() || !mu_sweep.is_finite() {
        Trend::Diverging
    } else if rel <= 1e-3 {
        Trend::Converged
    } else {
        Trend::StillRising
    };
    let richardson = (grid.len() >= 2).then(|| {
        let k = grid.len() - 1;
        let slope = (scaled[k] - scaled[k - 1]) / (grid[k] - grid[k - 1]);
        scaled[k] + slope * (1.0 - grid[k])
    });
    MuEstimate {
        grid,
        scaled,
        mu_sweep,
        mu_direct: direct.mu,
        trend,
        richardson,
    }
}

/// Certifies `[v]^p >= mu exp((p/|omega|_1) sum m omega log|v|)`.
pub fn verify_log_sobolev(
    mu: f64,
    extremal: &Field,
    omega: &WeightField,
    kernel: &Kernel,
    trials: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid("mu", format!("need a finite positive constant, got {mu}")));
    }
    check_weight(kernel, omega)?;
    check_field(kernel, extremal)?;
    let p = kernel.params().p();
    let norm1 = omega.norm1();
    certify(kernel, extremal, trials, seed, |v, semi| {
        let l = log_functional(v, omega);
        if l == f64::NEG_INFINITY {
            semi
        } else {
            semi - mu * (p / norm1 * l).exp()
        }
    })
}

/// Convergence of `V_alpha` to `V` and the uniform two-sided bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValfaReport {
    /// `|V_alpha - V|_inf` along the sweep.
    pub gaps: Vec<f64>,
    pub decreasing: bool,
    pub final_gap: f64,
    /// Lower constant `m` with `m psi <= V_alpha`.
    pub lower: f64,
    /// `M = max |V_alpha|_inf`.
    pub upper: f64,
    /// `min (V_alpha - m psi)` over the sweep.
    pub lower_slack: f64,
    pub tol: f64,
}

impl ValfaReport {
    pub fn passed(&self) -> bool {
        self.decreasing && self.final_gap <= self.tol && self.lower_slack >= -1e-8
    }
}

/// Compares the sweep extremals with the direct `V`.
pub fn check_valfa_limit(
    sweep: &Sweep,
    direct: &MuDirect,
    omega: &WeightField,
    kernel: &Kernel,
    tol: f64,
    opts: &ChainOptions,
) -> Result<ValfaReport> {
    let gaps: Vec<f64> = sweep
        .records
        .iter()
        .map(|r| r.solution.big_v.max_diff(&direct.v))
        .collect();
    let decreasing = gaps.windows(2).all(|w| w[1] <= w[0]);
    let final_gap = *gaps.last().expect("nonempty sweep");
    let upper = sweep
        .records
        .iter()
        .map(|r| r.solution.big_v.max_abs())
        .fold(0.0, f64::max);
    let first = &sweep.records[0].solution;
    let p = first.p;
    // |omega|_1^(p/(1-a0) - 1) lambda_a0 M^-a, minimized over a in {a0, 1}
    let ln_base = first.ln_scaled() - first.omega_norm1.ln();
    let lower = [first.alpha, 1.0]
        .iter()
        .map(|&a| ((ln_base - a * upper.ln()) / (p - 1.0)).exp())
        .fold(f64::INFINITY, f64::min);
    let psi = solve_psi(omega, kernel, &opts.solve)?;
    let barrier = psi.scaled(lower);
    let lower_slack = sweep
        .records
        .iter()
        .map(|r| r.solution.big_v.sub(&barrier).min())
        .fold(f64::INFINITY, f64::min);
    Ok(ValfaReport {
        gaps,
        decreasing,
        final_gap,
        lower,
        upper,
        lower_slack,
        tol,
    })
}

/// Weighted power means of `|v|` at decreasing `q` and their log limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMeans {
    pub q: Vec<f64>,
    pub means: Vec<f64>,
    /// `exp((1/|omega|_1) sum m omega log|v|)`.
    pub geometric: f64,
}

impl PowerMeans {
    /// Means decrease with `q` and stay above the geometric mean.
    pub fn monotone(&self) -> bool {
        self.means.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
            && self.means.iter().all(|&m| m >= self.geometric * (1.0 - 1e-12))
    }

    /// Relative distance of the smallest-`q` mean to the geometric mean.
    pub fn limit_gap(&self) -> f64 {
        (self.means.last().copied().unwrap_or(f64::NAN) - self.geometric).abs() / self.geometric
    }
}

pub fn power_means(v: &Field, omega: &WeightField, q: &[f64]) -> Result<PowerMeans> {
    let means = q
        .iter()
        .map(|&q| weighted_qmean(v, omega, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerMeans {
        q: q.to_vec(),
        means,
        geometric: (log_functional(v, omega) / omega.norm1()).exp(),
    })
}
