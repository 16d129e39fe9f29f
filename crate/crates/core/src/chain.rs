//! Approximation chain for `(-Delta_p)^s u = omega / u^alpha`.
//!
//! Level `n` solves the regularized problem with the truncated weight
//! `omega_n = min(omega, n)` and datum `omega_n / (u + 1/n)^alpha`. Levels are
//! visited along an increasing schedule with warm starts; their pointwise
//! supremum is the singular solution `u_alpha`.
//!
//! Each level is the unique minimizer of the strictly convex energy
//! `(1/p)[v]^p - sum m omega_n G_n(v)` with `G_n' = (v + 1/n)^-alpha`, so it is
//! computed by direct minimization and then certified as a fixed point of the
//! map `T`. The limit is polished the same way with `G' = v^-alpha` on the
//! positive cone.

use serde::{Deserialize, Serialize};

use crate::domain::{conjugate, r_alpha, FracParams, Kernel};
use crate::error::{invalid, FssError, Result};
use crate::ops::{
    check_field, check_weight, norm_r, pairing, seminorm_p, Field, WeightField,
};
use crate::props::{stampacchia_d, stampacchia_levels};
use crate::rng::trial_field;
use crate::solver::{
    embedding_constant, minimize, solve_nonsingular, solve_psi, ConvexEnergy, SolveOptions,
    Source,
};

/// One step of the chain: truncated weight, shift `1/n`, exponent `alpha`.
#[derive(Debug, Clone)]
pub struct RegularizedProblem {
    pub level: u64,
    pub weight: WeightField,
    pub alpha: f64,
}

impl RegularizedProblem {
    pub fn new(omega: &WeightField, level: u64, alpha: f64) -> Result<Self> {
        if level < 1 {
            return Err(invalid("n", "levels start at 1"));
        }
        if !(alpha > 0.0) {
            return Err(invalid("alpha", format!("need alpha > 0, got {alpha}")));
        }
        Ok(Self {
            level,
            weight: truncate_weight(omega, level)?,
            alpha,
        })
    }

    pub fn shift(&self) -> f64 {
        1.0 / self.level as f64
    }

    /// `omega_n,i / (|w_i| + 1/n)^alpha`.
    pub fn datum(&self, w: &[f64]) -> Vec<f64> {
        let shift = self.shift();
        self.weight
            .values()
            .iter()
            .zip(w)
            .map(|(&om, &wi)| om / (wi.abs() + shift).powf(self.alpha))
            .collect()
    }

    fn energy<'a>(&self, kernel: &'a Kernel) -> ConvexEnergy<'a> {
        let m = kernel.cell_measure();
        ConvexEnergy::new(
            kernel,
            self.weight.values().iter().map(|w| m * w).collect(),
            Source::Regularized {
                shift: self.shift(),
                alpha: self.alpha,
            },
        )
    }
}

/// Nodewise `min(omega, n)` with norms recomputed.
pub fn truncate_weight(omega: &WeightField, n: u64) -> Result<WeightField> {
    if n < 1 {
        return Err(invalid("n", "truncation level must be at least 1"));
    }
    omega.capped(n as f64)
}

/// One application of `T`: the nonsingular solve with datum
/// `omega_n / (|w| + 1/n)^alpha`.
pub fn fixed_point_t(
    problem: &RegularizedProblem,
    kernel: &Kernel,
    w: &Field,
    opts: &SolveOptions,
) -> Result<Field> {
    check_field(kernel, w)?;
    check_weight(kernel, &problem.weight)?;
    let f = Field::on_kernel(kernel, problem.datum(w.values()))?;
    solve_nonsingular(&f, kernel, opts)
}

/// Options for level solves and chains.
#[derive(Debug, Clone)]
pub struct ChainOptions {
    pub solve: SolveOptions,
    /// Bound on `|T(u) - u|_inf` certifying a level.
    pub tol_fp: f64,
    /// Stop once consecutive stored levels differ by at most this in max-norm.
    pub tol_chain: f64,
    /// Attempts to tighten the level solve before reporting stagnation.
    pub max_sweeps: usize,
    /// Random test fields per level for the weak-form residual.
    pub residual_trials: usize,
    pub seed: u64,
    /// Solve the singular limit problem after the chain stops.
    pub polish_limit: bool,
    /// Compute the a-priori seminorm bound (needs an embedding constant).
    pub a_priori: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            tol_fp: 1e-9,
            tol_chain: 1e-7,
            max_sweeps: 3,
            residual_trials: 100,
            seed: 42,
            polish_limit: true,
            a_priori: false,
        }
    }
}

/// Result of [`solve_level`].
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub field: Field,
    /// Applications of `T` used to certify the fixed point.
    pub fp_iters: usize,
    pub solver_iters: usize,
    /// `|T(u) - u|_inf` at the certified field.
    pub fp_step: f64,
}

/// Solves level `n` from `init` and certifies `|T(u) - u|_inf <= tol_fp`.
pub fn solve_level(
    problem: &RegularizedProblem,
    kernel: &Kernel,
    init: &Field,
    opts: &ChainOptions,
) -> Result<LevelSolution> {
    check_field(kernel, init)?;
    check_weight(kernel, &problem.weight)?;
    let energy = problem.energy(kernel);
    let mut x0: Vec<f64> = init.values().iter().map(|v| v.max(0.0)).collect();
    let mut solve = opts.solve.clone();
    let mut solver_iters = 0;
    let mut step = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps.max(1) {
        let min = minimize(&energy, x0, &solve)?;
        solver_iters += min.iterations;
        let u = Field::on_kernel(kernel, min.x)?;
        let tu = fixed_point_t(problem, kernel, &u, &solve.warm(&u))?;
        step = tu.max_diff(&u);
        if step <= opts.tol_fp {
            return Ok(LevelSolution {
                field: u,
                fp_iters: sweep,
                solver_iters,
                fp_step: step,
            });
        }
        x0 = u.into_values();
        solve.grad_tol *= 1e-2;
    }
    Err(FssError::FixedPointStagnation {
        level: problem.level,
        sweeps: opts.max_sweeps,
        step,
    })
}

/// Which levels the chain visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// `n = base^k` for `k = 0..=max_exponent`.
    Geometric { base: u64, max_exponent: u32 },
    Explicit(Vec<u64>),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Geometric {
            base: 2,
            max_exponent: 40,
        }
    }
}

impl Schedule {
    pub fn levels(&self) -> Result<Vec<u64>> {
        let levels = match self {
            Schedule::Geometric { base, max_exponent } => {
                if *base < 2 {
                    return Err(invalid("schedule", "geometric base must be at least 2"));
                }
                let mut out = Vec::new();
                let mut n: u64 = 1;
                for _ in 0..=*max_exponent {
                    out.push(n);
                    match n.checked_mul(*base) {
                        Some(next) => n = next,
                        None => break,
                    }
                }
                out
            }
            Schedule::Explicit(v) => v.clone(),
        };
        if levels.is_empty() || levels[0] < 1 || levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("schedule", "levels must be a strictly increasing list of n >= 1"));
        }
        Ok(levels)
    }
}

/// Diagnostics for one stored level, serialized one JSON record per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub n: u64,
    pub seminorm_p: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub fp_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct LevelRecord {
    pub n: u64,
    pub field: Field,
    pub seminorm_p: f64,
    pub fp_iters: usize,
    pub solver_iters: usize,
    pub residual: f64,
}

impl LevelRecord {
    pub fn diagnostics(&self) -> LevelDiagnostics {
        LevelDiagnostics {
            n: self.n,
            seminorm_p: self.seminorm_p,
            min_u: self.field.min(),
            max_u: self.field.max(),
            fp_iters: self.fp_iters,
            residual: self.residual,
        }
    }
}

/// A-priori bound `[u_n]^(p-(1-alpha)) <= |omega|_{r_alpha} S^((1-alpha)/p)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AprioriBound {
    pub r_alpha: f64,
    pub embedding_exponent: f64,
    pub embedding_constant: f64,
    /// Right-hand side of the bound.
    pub bound: f64,
    /// Largest `[u_n]^(p-(1-alpha))` over the stored levels.
    pub worst: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub alpha: f64,
    pub levels: Vec<LevelRecord>,
    /// Singular solution (limit of the levels).
    pub u_alpha: Field,
    /// Whether consecutive levels met `tol_chain`.
    pub converged: bool,
    /// Whether `u_alpha` comes from the limit solve (otherwise the last level).
    pub polished: bool,
    pub psi: Field,
    /// `(|u_1|_inf + 1)^(-alpha/(p-1))`.
    pub m_alpha: f64,
    /// `m_alpha psi`.
    pub barrier: Field,
    pub a_priori: Option<AprioriBound>,
}

/// Monotonicity report for a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainChecks {
    /// `min_n min_i (u_{n+1} - u_n)`; nonnegative up to slack.
    pub pointwise: f64,
    /// `min_n ([u_{n+1}]^p - [u_n]^p) / [u_n]^p`.
    pub seminorm: f64,
    /// `min_n min_i (u_n - m_alpha psi)`.
    pub barrier: f64,
    /// `min_i (u_alpha - u_last)`.
    pub limit: f64,
}

impl ChainResult {
    pub fn final_level(&self) -> &LevelRecord {
        self.levels.last().expect("chain has at least one level")
    }

    pub fn diagnostics(&self) -> Vec<LevelDiagnostics> {
        self.levels.iter().map(|l| l.diagnostics()).collect()
    }

    pub fn checks(&self) -> ChainChecks {
        let mut pointwise = f64::INFINITY;
        let mut seminorm = f64::INFINITY;
        let mut barrier = f64::INFINITY;
        for w in self.levels.windows(2) {
            let d = w[1].field.sub(&w[0].field).min();
            pointwise = pointwise.min(d);
            seminorm = seminorm.min((w[1].seminorm_p - w[0].seminorm_p) / w[0].seminorm_p);
        }
        for l in &self.levels {
            barrier = barrier.min(l.field.sub(&self.barrier).min());
        }
        let limit = self.u_alpha.sub(&self.final_level().field).min();
        ChainChecks {
            pointwise,
            seminorm,
            barrier,
            limit,
        }
    }

    /// `|[u_alpha]^p - sum m omega u_alpha^(1-alpha)| / [u_alpha]^p`.
    pub fn energy_identity_gap(&self, omega: &WeightField, kernel: &Kernel) -> Result<f64> {
        let semi = seminorm_p(&self.u_alpha, kernel)?;
        let m = kernel.cell_measure();
        let rhs: f64 = omega
            .values()
            .iter()
            .zip(self.u_alpha.values())
            .map(|(&w, &u)| m * w * u.powf(1.0 - self.alpha))
            .sum();
        Ok((semi - rhs).abs() / semi)
    }
}

/// Rejects `alpha > 1` unless `omega` vanishes within one cell of the boundary.
pub fn validate_alpha(omega: &WeightField, alpha: f64, kernel: &Kernel) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("need alpha > 0, got {alpha}")));
    }
    if alpha > 1.0 {
        let h = kernel.h();
        for (i, &w) in omega.values().iter().enumerate() {
            if w > 0.0 && kernel.boundary_distance(i) <= h * (1.0 + 1e-9) {
                return Err(invalid(
                    "alpha",
                    format!(
                        "alpha > 1 requires a weight vanishing near the boundary \
                         (node {i} is within one cell and has weight {w}); \
                         weak solutions may not exist otherwise"
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Runs the chain along `schedule` and returns the limit with diagnostics.
pub fn run_chain(
    omega: &WeightField,
    alpha: f64,
    kernel: &Kernel,
    schedule: &Schedule,
    opts: &ChainOptions,
) -> Result<ChainResult> {
    check_weight(kernel, omega)?;
    validate_alpha(omega, alpha, kernel)?;
    let levels = schedule.levels()?;
    let p = kernel.params().p();

    let psi = solve_psi(omega, kernel, &opts.solve)?;

    let zero = Field::on_kernel(kernel, vec![0.0; kernel.num_nodes()])?;
    let mut records: Vec<LevelRecord> = Vec::with_capacity(levels.len());
    let mut u1: Option<Field> = None;
    let mut converged = false;
    let mut prev = zero.clone();
    for &n in &levels {
        let problem = RegularizedProblem::new(omega, n, alpha)?;
        let sol = solve_level(&problem, kernel, &prev, opts)?;
        if n == 1 {
            u1 = Some(sol.field.clone());
        }
        let residual = level_residual(&problem, kernel, &sol.field, opts.residual_trials, opts.seed)?;
        let seminorm = seminorm_p(&sol.field, kernel)?;
        let change = sol.field.max_diff(&prev);
        let first = records.is_empty();
        records.push(LevelRecord {
            n,
            field: sol.field.clone(),
            seminorm_p: seminorm,
            fp_iters: sol.fp_iters,
            solver_iters: sol.solver_iters,
            residual,
        });
        prev = sol.field;
        if !first && change <= opts.tol_chain {
            converged = true;
            break;
        }
    }

    let u1 = match u1 {
        Some(u) => u,
        None => {
            let problem = RegularizedProblem::new(omega, 1, alpha)?;
            solve_level(&problem, kernel, &zero, opts)?.field
        }
    };
    let m_alpha = (u1.max_abs() + 1.0).powf(-alpha / (p - 1.0));
    let barrier = psi.scaled(m_alpha);

    let last = records.last().expect("nonempty schedule").field.clone();
    let (u_alpha, polished) = if opts.polish_limit {
        match solve_limit(omega, alpha, kernel, &last, &opts.solve) {
            Ok(u) => (u, true),
            Err(FssError::NonConvergence { .. }) => (last, false),
            Err(e) => return Err(e),
        }
    } else {
        (last, false)
    };

    let a_priori = if opts.a_priori && alpha <= 1.0 {
        a_priori_bound(omega, alpha, kernel, &records, &opts.solve)?
    } else {
        None
    };

    Ok(ChainResult {
        alpha,
        levels: records,
        u_alpha,
        converged,
        polished,
        psi,
        m_alpha,
        barrier,
        a_priori,
    })
}

/// Direct solve of the singular problem on the positive cone, started from a
/// positive field below the solution (typically the last chain level).
pub fn solve_limit(
    omega: &WeightField,
    alpha: f64,
    kernel: &Kernel,
    start: &Field,
    opts: &SolveOptions,
) -> Result<Field> {
    check_weight(kernel, omega)?;
    check_field(kernel, start)?;
    if let Some((i, &v)) = start
        .values()
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0))
    {
        return Err(FssError::NotPositive { node: i, value: v });
    }
    let m = kernel.cell_measure();
    let energy = ConvexEnergy::new(
        kernel,
        omega.values().iter().map(|w| m * w).collect(),
        Source::Singular { alpha },
    );
    let min = minimize(&energy, start.values().to_vec(), opts)?;
    Field::on_kernel(kernel, min.x)
}

fn a_priori_bound(
    omega: &WeightField,
    alpha: f64,
    kernel: &Kernel,
    records: &[LevelRecord],
    opts: &SolveOptions,
) -> Result<Option<AprioriBound>> {
    let params = kernel.params();
    let p = params.p();
    let ra = r_alpha(alpha, params)?;
    if omega.r() < ra {
        return Ok(None);
    }
    let norm = norm_r(omega, ra)?;
    let (theta, s) = if alpha == 1.0 {
        (1.0, 1.0)
    } else {
        let theta = if params.sp() < params.dim() as f64 {
            params.p_star()
        } else {
            1.0
        };
        (theta, embedding_constant(theta, kernel, opts)?.value)
    };
    let bound = norm * s.powf((1.0 - alpha) / p);
    let worst = records
        .iter()
        .map(|r| r.seminorm_p.powf((p - (1.0 - alpha)) / p))
        .fold(0.0, f64::max);
    Ok(Some(AprioriBound {
        r_alpha: ra,
        embedding_exponent: theta,
        embedding_constant: s,
        bound,
        worst,
        holds: worst <= bound * (1.0 + 1e-8),
    }))
}

fn gagliardo(v: &Field, kernel: &Kernel) -> Result<f64> {
    Ok(seminorm_p(v, kernel)?.powf(1.0 / kernel.params().p()))
}

/// Max weak-form residual of a level against seeded random test fields.
fn level_residual(
    problem: &RegularizedProblem,
    kernel: &Kernel,
    u: &Field,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let datum = problem.datum(u.values());
    residual_against(kernel, u, &datum, trials, seed)
}

fn residual_against(
    kernel: &Kernel,
    u: &Field,
    datum: &[f64],
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let m = kernel.cell_measure();
    let mut worst: f64 = 0.0;
    for t in 0..trials as u64 {
        let phi = trial_field(kernel.grid(), seed, t);
        let lhs = pairing(u, &phi, kernel)?;
        let rhs: f64 = datum.iter().zip(phi.values()).map(|(f, v)| m * f * v).sum();
        worst = worst.max((lhs - rhs).abs() / (1.0 + gagliardo(&phi, kernel)?));
    }
    Ok(worst)
}


/// Weak-form residual and the duality bound for a candidate singular solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    /// `max |<A u, phi> - sum m omega phi / u^alpha| / (1 + [phi])`.
    pub max_residual: f64,
    /// `min ([u]^(p-1) [v] - |sum m omega v / u^alpha|)`.
    pub min_duality_slack: f64,
    pub trials: usize,
}

/// Checks the weak formulation of the singular problem on random test fields.
pub fn weak_residual(
    u: &Field,
    omega: &WeightField,
    alpha: f64,
    kernel: &Kernel,
    trials: usize,
    seed: u64,
) -> Result<WeakResidual> {
    check_field(kernel, u)?;
    check_weight(kernel, omega)?;
    if let Some((i, &v)) = u.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(FssError::NotPositive { node: i, value: v });
    }
    let p = kernel.params().p();
    let m = kernel.cell_measure();
    let datum: Vec<f64> = omega
        .values()
        .iter()
        .zip(u.values())
        .map(|(&w, &x)| w / x.powf(alpha))
        .collect();
    let u_norm = gagliardo(u, kernel)?;
    let mut max_residual: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    for t in 0..trials as u64 {
        let phi = trial_field(kernel.grid(), seed, t);
        let lhs = pairing(u, &phi, kernel)?;
        let rhs: f64 = datum.iter().zip(phi.values()).map(|(f, v)| m * f * v).sum();
        let phi_norm = gagliardo(&phi, kernel)?;
        max_residual = max_residual.max((lhs - rhs).abs() / (1.0 + phi_norm));
        min_slack = min_slack.min(u_norm.powf(p - 1.0) * phi_norm - rhs.abs());
    }
    Ok(WeakResidual {
        max_residual,
        min_duality_slack: min_slack,
        trials,
    })
}

/// Sup-norm bound for a positive subsolution of the singular problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub c_alpha: f64,
    pub b: f64,
    pub bound: f64,
    pub linf: f64,
    pub holds: bool,
}

/// `C_alpha = (alpha/(p-1))^((p-1)/(p-1+alpha)) (1 + (p-1)/alpha)`.
pub fn c_alpha(alpha: f64, p: f64) -> f64 {
    (alpha / (p - 1.0)).powf((p - 1.0) / (p - 1.0 + alpha)) * (1.0 + (p - 1.0) / alpha)
}

/// `b = (theta/r' - 1)/(p - 1)`.
pub fn stampacchia_exponent(theta: f64, r: f64, p: f64) -> f64 {
    (theta / conjugate(r) - 1.0) / (p - 1.0)
}

/// Default embedding exponent for the level-set argument: `p_star` when that
/// gives `b > 1`, otherwise `2 p r'` if `sp >= N`.
pub fn stampacchia_theta(params: &FracParams, r: f64) -> Result<f64> {
    let p = params.p();
    let theta = if params.p_star().is_finite() {
        params.p_star()
    } else {
        2.0 * p * conjugate(r)
    };
    let b = stampacchia_exponent(theta, r, p);
    if b > 1.0 && theta.is_finite() {
        Ok(theta)
    } else {
        Err(FssError::ThetaTooSmall { b })
    }
}

/// Evaluates the sup-norm bound for `u` with embedding exponent `theta`.
///
/// `s_theta` is the best constant of `|v|_theta^p <= S [v]^p`. The level-set
/// argument behind the bound uses the reverse form `S' |v|_theta^p <= [v]^p`,
/// so the bound is evaluated with `S' = 1/s_theta`.
pub fn linfty_bound_report(
    u: &Field,
    omega: &WeightField,
    alpha: f64,
    kernel: &Kernel,
    theta: f64,
    s_theta: f64,
) -> Result<BoundReport> {
    check_field(kernel, u)?;
    let params = kernel.params();
    let p = params.p();
    if theta > params.p_star() {
        return Err(invalid("theta", "theta may not exceed p_star"));
    }
    let b = stampacchia_exponent(theta, omega.r(), p);
    if !(b > 1.0) {
        return Err(FssError::ThetaTooSmall { b });
    }
    let ca = c_alpha(alpha, p);
    let reverse = 1.0 / s_theta;
    let q = p - 1.0 + alpha;
    let bound = ca
        * (omega.norm_r() / reverse).powf(1.0 / q)
        * 2f64.powf(b * (p - 1.0) / ((b - 1.0) * q))
        * kernel
            .discrete_volume()
            .powf((b - 1.0) * (p - 1.0) / (theta * q));
    let linf = u.max_abs();
    Ok(BoundReport {
        c_alpha: ca,
        b,
        bound,
        linf,
        holds: linf <= bound,
    })
}

/// Level-set data for the Stampacchia argument applied to `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetFamily {
    /// `(k, |{u > k}|)` on an increasing grid of levels starting at `k0`.
    pub samples: Vec<(f64, f64)>,
    pub k0: f64,
    /// `(|omega|_r / (S' k0^alpha))^(theta/(p-1))`.
    pub constant: f64,
    pub theta: f64,
    pub b: f64,
}

/// Measure of the super-level set `{u > k}`.
pub fn level_set_measure(u: &Field, k: f64) -> f64 {
    u.cell_measure() * u.values().iter().filter(|&&x| x > k).count() as f64
}

/// Samples `g(k) = |{u > k}|` on `count` uniform levels above `k0` plus the
/// halving points of the Stampacchia argument, with the constants for which
/// `g(h) <= C (h-k)^-theta g(k)^b` holds.
#[allow(clippy::too_many_arguments)]
pub fn level_set_family(
    u: &Field,
    omega: &WeightField,
    alpha: f64,
    kernel: &Kernel,
    theta: f64,
    s_theta: f64,
    k0: f64,
    count: usize,
) -> Result<LevelSetFamily> {
    if !(k0 > 0.0) {
        return Err(invalid("k0", "must be positive"));
    }
    let p = kernel.params().p();
    let b = stampacchia_exponent(theta, omega.r(), p);
    if !(b > 1.0) {
        return Err(FssError::ThetaTooSmall { b });
    }
    let reverse = 1.0 / s_theta;
    let constant = (omega.norm_r() / (reverse * k0.powf(alpha))).powf(theta / (p - 1.0));
    let d = stampacchia_d(level_set_measure(u, k0), constant, theta, b);
    let samples = stampacchia_levels(k0, d, u.max().max(k0) * 1.1, count)
        .into_iter()
        .map(|k| (k, level_set_measure(u, k)))
        .collect();
    Ok(LevelSetFamily {
        samples,
        k0,
        constant,
        theta,
        b,
    })
}

/// Level `k0` minimizing `k0 + k0^(-alpha/(p-1)) A` in the sup-norm bound.
pub fn optimal_k0(omega: &WeightField, alpha: f64, kernel: &Kernel, theta: f64, s_theta: f64) -> f64 {
    let p = kernel.params().p();
    let b = stampacchia_exponent(theta, omega.r(), p);
    let a = (omega.norm_r() * s_theta).powf(1.0 / (p - 1.0))
        * 2f64.powf(b / (b - 1.0))
        * kernel.discrete_volume().powf((b - 1.0) / theta);
    (alpha * a / (p - 1.0)).powf((p - 1.0) / (p - 1.0 + alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, build_kernel, BoxDomain, FracParams, Grid};

    fn setup(h: f64, s: f64, p: f64) -> (Grid, Kernel) {
        let g = build_grid(&BoxDomain::interval(0.0, 1.0), h, 0.5).unwrap();
        let params = FracParams::new(s, p, 1).unwrap();
        let k = build_kernel(&g, &params, true).unwrap();
        (g, k)
    }

    #[test]
    fn truncation() {
        let (g, _) = setup(0.1, 0.5, 2.0);
        let om = WeightField::new(&g, vec![5.0; 9], 2.0).unwrap();
        let t = truncate_weight(&om, 4).unwrap();
        assert!(t.values().iter().all(|&w| w == 4.0));
        assert_eq!(truncate_weight(&om, 5).unwrap(), om);
        assert_eq!(truncate_weight(&om, 9).unwrap(), om);
    }

    #[test]
    fn t_ignores_sign_of_w() {
        let (g, k) = setup(0.1, 0.5, 1.5);
        let om = WeightField::new(&g, (0..9).map(|i| 1.0 + i as f64).collect(), 2.0).unwrap();
        let prob = RegularizedProblem::new(&om, 4, 0.7).unwrap();
        let w = Field::from_values(&g, (0..9).map(|i| 0.1 * i as f64).collect()).unwrap();
        let opts = SolveOptions::default();
        let a = fixed_point_t(&prob, &k, &w, &opts).unwrap();
        let b = fixed_point_t(&prob, &k, &w.scaled(-1.0), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schedules() {
        let s = Schedule::Geometric { base: 3, max_exponent: 3 };
        assert_eq!(s.levels().unwrap(), vec![1, 3, 9, 27]);
        assert!(Schedule::Explicit(vec![2, 2]).levels().is_err());
        assert!(Schedule::Explicit(vec![]).levels().is_err());
    }

    #[test]
    fn alpha_above_one_needs_compact_support() {
        let (g, k) = setup(0.1, 0.5, 2.0);
        let om = WeightField::new(&g, vec![1.0; 9], 2.0).unwrap();
        let err = validate_alpha(&om, 1.5, &k).unwrap_err();
        assert!(err.to_string().contains("alpha > 1"));
        let mut vals = vec![1.0; 9];
        vals[0] = 0.0;
        vals[8] = 0.0;
        let om2 = WeightField::new(&g, vals, 2.0).unwrap();
        assert!(validate_alpha(&om2, 1.5, &k).is_ok());
    }

    #[test]
    fn constants() {
        assert!((c_alpha(1.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((stampacchia_exponent(4.0, 3.0, 2.0) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn theta_at_boundary_of_validity() {
        let (g, k) = setup(0.1, 0.5, 2.0);
        let om = WeightField::new(&g, vec![1.0; 9], 3.0).unwrap();
        let u = Field::constant(&g, 1.0);
        // theta = p r' gives b = 1
        let err = linfty_bound_report(&u, &om, 1.0, &k, 3.0, 1.0).unwrap_err();
        assert!(matches!(err, FssError::ThetaTooSmall { .. }));
    }

    #[test]
    fn weak_residual_rejects_nonpositive() {
        let (g, k) = setup(0.1, 0.5, 2.0);
        let om = WeightField::new(&g, vec![1.0; 9], 2.0).unwrap();
        let mut vals = vec![1.0; 9];
        vals[3] = 0.0;
        let u = Field::from_values(&g, vals).unwrap();
        let err = weak_residual(&u, &om, 0.5, &k, 10, 1).unwrap_err();
        assert!(err.to_string().contains("not an interior-positive field"));
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn single_node_chain_matches_scalar_equation() {
        for &(p, alpha) in &[(2.0, 0.5), (1.5, 1.0), (3.0, 0.3)] {
            let (g, k) = setup(0.5, 0.5, p);
            assert_eq!(k.num_nodes(), 1);
            let om = WeightField::new(&g, vec![3.0], 2.0).unwrap();
            let kk = 2.0 * k.exterior(0);
            let m = k.cell_measure();
            let sched = Schedule::Geometric { base: 2, max_exponent: 30 };
            let res = run_chain(&om, alpha, &k, &sched, &ChainOptions::default()).unwrap();
            for l in &res.levels {
                let n = l.n as f64;
                let w = 3f64.min(n);
                let exact = bisect(
                    |u| kk * u.powf(p - 1.0) - m * w / (u + 1.0 / n).powf(alpha),
                    0.0,
                    10.0,
                );
                assert!((l.field.values()[0] - exact).abs() < 1e-9, "p={p} n={n}");
            }
            let limit = (m * 3.0 / kk).powf(1.0 / (p - 1.0 + alpha));
            assert!((res.u_alpha.values()[0] - limit).abs() < 1e-9 * limit.max(1.0));
            let c = res.checks();
            // single node: the barrier coincides with u_1
            assert!(c.pointwise >= -1e-9 && c.barrier >= -1e-9 && c.limit >= -1e-9);
        }
    }

    #[test]
    fn level_set_measure_counts_nodes() {
        let (g, _) = setup(0.25, 0.5, 2.0);
        let u = Field::from_values(&g, vec![0.5, 2.0, 1.0]).unwrap();
        assert_eq!(level_set_measure(&u, 0.75), 0.5);
        assert_eq!(level_set_measure(&u, 2.0), 0.0);
    }
}
