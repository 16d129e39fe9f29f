//! Minimization of the strictly convex energies behind every solve, and the
//! discrete embedding constants.
//!
//! All energies have the form
//!
//! ```text
//! E(v) = (1/p) [v]^p - sum_i c_i G(v_i)
//! ```
//!
//! with `G` concave, so `E` is strictly convex. Directions are damped Newton
//! steps when the objective supplies a curvature model (dense Cholesky, fine at
//! the grid sizes used here) and limited-memory BFGS otherwise, always with a
//! backtracking Armijo line search. The energy is only `C^1` when `p < 2`; the
//! curvature model floors `|t|^(p-2)` near `t = 0` and stays positive definite.
//! Energy differences along a step are
//! evaluated term by term (`expm1`/`ln_1p`) so the sufficient-decrease test
//! stays meaningful down to gradients near machine precision.

use rayon::prelude::*;

use crate::domain::Kernel;
use crate::error::{invalid, FssError, Result};
use crate::ops::{
    check_field, check_weight, duality_map, pow_abs_diff, seminorm_and_operator, seminorm_delta,
    seminorm_raw, Field, WeightField,
};
use crate::rng::trial_rng;

/// Options for every minimization.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Tolerance on the max-norm of the energy gradient. Newton solves also
    /// stop once the full step is below rounding.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Step shrink factor of the backtracking search.
    pub backtrack: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Starting point; `None` starts from zero.
    pub initial: Option<Field>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 10_000,
            backtrack: 0.5,
            armijo: 1e-4,
            memory: 10,
            initial: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(invalid("grad_tol", "must be positive"));
        }
        if self.max_iter < 1 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(invalid("backtrack", "must lie in (0, 1)"));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(invalid("armijo", "must lie in (0, 0.5)"));
        }
        Ok(())
    }

    pub fn warm(&self, init: &Field) -> Self {
        Self {
            initial: Some(init.clone()),
            ..self.clone()
        }
    }

    pub fn cold(&self) -> Self {
        Self {
            initial: None,
            ..self.clone()
        }
    }
}

/// A smooth objective for [`minimize`].
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Value and gradient. The value is `+inf` outside the domain.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);

    /// `f(x + t d) - f(x)`; `+inf` when the new point is outside the domain.
    fn delta(&self, x: &[f64], d: &[f64], t: f64) -> f64 {
        let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        self.eval(&y).0 - self.eval(x).0
    }

    /// Inverse diagonal scaling for the initial quasi-Newton matrix.
    fn preconditioner(&self) -> Option<Vec<f64>> {
        None
    }

    /// Symmetric positive definite curvature model at `x`, row-major.
    fn curvature(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Secant-type model, tried when a Newton step has to be damped.
    fn majorant(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Largest dimension for which dense Newton directions are tried.
const NEWTON_MAX_DIM: usize = 2048;

fn newton_direction(h: Vec<f64>, grad: &[f64]) -> Option<Vec<f64>> {
    let n = grad.len();
    let chol = nalgebra::DMatrix::from_vec(n, n, h).cholesky()?;
    let d = chol.solve(&nalgebra::DVector::from_iterator(n, grad.iter().map(|g| -g)));
    d.iter().all(|v| v.is_finite()).then(|| d.as_slice().to_vec())
}

/// Result of [`minimize`].
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Objective after every accepted step, accumulated from step differences.
    pub trace: Vec<f64>,
    /// Stopped because the Newton step fell below rounding, not on `grad_tol`.
    pub rounding_stop: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Limited-memory BFGS with backtracking Armijo search.
pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: Vec<f64>, opts: &SolveOptions) -> Result<Minimum> {
    opts.validate()?;
    let n = obj.dim();
    assert_eq!(x0.len(), n, "initial point has wrong length");
    let precond = obj.preconditioner();

    let mut x = x0;
    let (mut value, mut grad) = obj.eval(&x);
    if !value.is_finite() {
        return Err(invalid("initial", "starting point is outside the energy domain"));
    }
    let mut trace = vec![value];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut gnorm = max_norm(&grad);

    let mut iter = 0;
    let mut rounding_stop = false;
    while gnorm > opts.grad_tol {
        if iter >= opts.max_iter {
            return Err(FssError::NonConvergence {
                iterations: iter,
                grad_norm: gnorm,
                last_iterate: x,
            });
        }
        iter += 1;

        let newton = if n <= NEWTON_MAX_DIM {
            obj.curvature(&x).and_then(|h| newton_direction(h, &grad))
        } else {
            None
        };
        let is_newton = newton.is_some();
        if let Some(d) = &newton {
            // Newton step below rounding: the gradient is at its noise floor,
            // which for p < 2 can sit above grad_tol.
            if max_norm(d) <= 8.0 * f64::EPSILON * max_norm(&x) {
                rounding_stop = true;
                break;
            }
        }
        let mut d = match newton {
            Some(d) => d,
            None => two_loop(&grad, &s_hist, &y_hist, &rho_hist, precond.as_deref()),
        };
        let mut slope = dot(&grad, &d);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = steepest(&grad, precond.as_deref());
            slope = dot(&grad, &d);
        }

        let mut step = if is_newton || !s_hist.is_empty() {
            1.0
        } else {
            // First step of a fresh history: unit move in max-norm.
            (1.0 / max_norm(&d)).min(1.0)
        };
        let search = |d: &[f64], slope: f64, mut step: f64| {
            for _ in 0..80 {
                let change = obj.delta(&x, d, step);
                if change.is_finite() && change <= opts.armijo * step * slope {
                    return Some((step, change));
                }
                step *= opts.backtrack;
            }
            None
        };
        let mut accepted = search(&d, slope, step);
        if is_newton {
            let alt = obj.majorant(&x).and_then(|h| newton_direction(h, &grad));
            if let Some(d2) = alt {
                let slope2 = dot(&grad, &d2);
                if slope2 < 0.0 {
                    if let Some((t2, c2)) = search(&d2, slope2, 1.0) {
                        if accepted.is_none_or(|(_, c)| c2 < c) {
                            accepted = Some((t2, c2));
                            d = d2;
                        }
                    }
                }
            }
        }
        let Some((accepted_step, change)) = accepted else {
            if !s_hist.is_empty() {
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                continue;
            }
            return Err(FssError::NonConvergence {
                iterations: iter,
                grad_norm: gnorm,
                last_iterate: x,
            });
        };

        step = accepted_step;
        if std::env::var("DBG").is_ok() && (iter % 500 == 0 || iter<40) { let k = x.iter().zip(&grad).enumerate().max_by(|a,b| a.1.1.abs().total_cmp(&b.1.1.abs())).unwrap().0; eprintln!("it {iter} step {step} g {gnorm:e} at {k} x {:?} d {:e}", &x[k.saturating_sub(1)..(k+2).min(x.len())], d[k]); }
        let s: Vec<f64> = d.iter().map(|di| step * di).collect();
        let x_new: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
        let (_, grad_new) = obj.eval(&x_new);
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }
        x = x_new;
        grad = grad_new;
        value += change;
        trace.push(value);
        gnorm = max_norm(&grad);
    }

    Ok(Minimum {
        x,
        value,
        grad_norm: gnorm,
        iterations: iter,
        trace,
        rounding_stop,
    })
}

fn steepest(grad: &[f64], precond: Option<&[f64]>) -> Vec<f64> {
    match precond {
        Some(h) => grad.iter().zip(h).map(|(g, h)| -g * h).collect(),
        None => grad.iter().map(|g| -g).collect(),
    }
}

fn two_loop(
    grad: &[f64],
    s_hist: &[Vec<f64>],
    y_hist: &[Vec<f64>],
    rho: &[f64],
    precond: Option<&[f64]>,
) -> Vec<f64> {
    let k = s_hist.len();
    let mut q = grad.to_vec();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    let mut r = match precond {
        Some(h) => q.iter().zip(h).map(|(a, b)| a * b).collect::<Vec<_>>(),
        None => q,
    };
    if k > 0 {
        let (s, y) = (&s_hist[k - 1], &y_hist[k - 1]);
        let hy: f64 = match precond {
            Some(h) => y.iter().zip(h).map(|(a, b)| a * a * b).sum(),
            None => dot(y, y),
        };
        let gamma = dot(s, y) / hy;
        r.iter_mut().for_each(|v| *v *= gamma);
    }
    for i in 0..k {
        let beta = rho[i] * dot(&y_hist[i], &r);
        for (rj, sj) in r.iter_mut().zip(&s_hist[i]) {
            *rj += (alpha[i] - beta) * sj;
        }
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

/// Concave source primitive `G` in `E(v) = (1/p)[v]^p - sum c_i G(v_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// `G(t) = t`.
    Linear,
    /// `G(t) = H(t + shift) - H(shift)` for `t >= 0`, continued linearly with
    /// slope `shift^-alpha` for `t < 0`.
    Regularized { shift: f64, alpha: f64 },
    /// `G = H` on `t > 0`, undefined elsewhere.
    Singular { alpha: f64 },
}

/// Antiderivative of `x^-alpha`: `x^(1-alpha)/(1-alpha)`, or `ln x` at `alpha = 1`.
fn primitive(x: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        x.ln()
    } else {
        x.powf(1.0 - alpha) / (1.0 - alpha)
    }
}

/// `H(x + dx) - H(x)` for `x > 0`, `x + dx > 0`.
fn primitive_diff(x: f64, dx: f64, alpha: f64) -> f64 {
    let r = dx / x;
    if alpha == 1.0 {
        r.ln_1p()
    } else if r > -0.5 {
        x.powf(1.0 - alpha) * ((1.0 - alpha) * r.ln_1p()).exp_m1() / (1.0 - alpha)
    } else {
        primitive(x + dx, alpha) - primitive(x, alpha)
    }
}

impl Source {
    /// `G(t)`; `-inf` outside the domain.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Source::Linear => t,
            Source::Regularized { shift, alpha } => {
                if t >= 0.0 {
                    primitive_diff(shift, t, alpha)
                } else {
                    shift.powf(-alpha) * t
                }
            }
            Source::Singular { alpha } => {
                if t > 0.0 {
                    primitive(t, alpha)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `-G''(t)`, nonnegative.
    pub fn curvature(&self, t: f64) -> f64 {
        match *self {
            Source::Linear => 0.0,
            Source::Regularized { shift, alpha } => {
                if t >= 0.0 {
                    alpha * (t + shift).powf(-alpha - 1.0)
                } else {
                    0.0
                }
            }
            Source::Singular { alpha } => alpha * t.powf(-alpha - 1.0),
        }
    }

    /// `G'(t)`.
    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            Source::Linear => 1.0,
            Source::Regularized { shift, alpha } => (t.max(0.0) + shift).powf(-alpha),
            Source::Singular { alpha } => t.powf(-alpha),
        }
    }

    /// `G(t + dt) - G(t)`; `-inf` when `t + dt` leaves the domain.
    pub fn diff(&self, t: f64, dt: f64) -> f64 {
        match *self {
            Source::Linear => dt,
            Source::Regularized { shift, alpha } => {
                let u = t + dt;
                let slope = shift.powf(-alpha);
                match (t >= 0.0, u >= 0.0) {
                    (true, true) => primitive_diff(t + shift, dt, alpha),
                    (false, false) => slope * dt,
                    (true, false) => -primitive_diff(shift, t, alpha) + slope * u,
                    (false, true) => -slope * t + primitive_diff(shift, u, alpha),
                }
            }
            Source::Singular { alpha } => {
                if t + dt > 0.0 {
                    primitive_diff(t, dt, alpha)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// `E(v) = (1/p)[v]^p - sum_i c_i G(v_i)`.
pub struct ConvexEnergy<'a> {
    kernel: &'a Kernel,
    coeffs: Vec<f64>,
    source: Source,
}

impl<'a> ConvexEnergy<'a> {
    /// `coeffs` already include the cell measure.
    pub fn new(kernel: &'a Kernel, coeffs: Vec<f64>, source: Source) -> Self {
        assert_eq!(coeffs.len(), kernel.num_nodes());
        Self {
            kernel,
            coeffs,
            source,
        }
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Gradient `A v - c G'(v)`.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        self.eval(v).1
    }
}

impl ConvexEnergy<'_> {
    fn model(&self, x: &[f64], secant: bool) -> Vec<f64> {
        let mut h = seminorm_curvature(self.kernel, x, secant);
        let n = x.len();
        for (i, (&c, &xi)) in self.coeffs.iter().zip(x).enumerate() {
            if c != 0.0 {
                h[i * n + i] += c * self.source.curvature(xi);
            }
        }
        h
    }
}

impl Objective for ConvexEnergy<'_> {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let p = self.kernel.params().p();
        let (semi, mut grad) = seminorm_and_operator(self.kernel, x);
        let mut source = 0.0;
        for ((g, &c), &xi) in grad.iter_mut().zip(&self.coeffs).zip(x) {
            if c != 0.0 {
                source += c * self.source.value(xi);
                *g -= c * self.source.deriv(xi);
            }
        }
        let value = semi / p - source;
        (if value.is_nan() { f64::INFINITY } else { value }, grad)
    }

    fn delta(&self, x: &[f64], d: &[f64], t: f64) -> f64 {
        let mut source = 0.0;
        for ((&c, &xi), &di) in self.coeffs.iter().zip(x).zip(d) {
            if c != 0.0 {
                let g = self.source.diff(xi, t * di);
                if g == f64::NEG_INFINITY {
                    return f64::INFINITY;
                }
                source += c * g;
            }
        }
        let p = self.kernel.params().p();
        seminorm_delta(self.kernel, x, d, t) / p - source
    }

    fn curvature(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.model(x, false))
    }

    fn majorant(&self, x: &[f64]) -> Option<Vec<f64>> {
        (self.kernel.params().p() < 2.0).then(|| self.model(x, true))
    }

    fn preconditioner(&self) -> Option<Vec<f64>> {
        Some(
            (0..self.kernel.num_nodes())
                .map(|i| 1.0 / self.kernel.total_weight(i))
                .collect(),
        )
    }
}

/// Hessian of `(1/p)[v]^p` with `|t|^(p-2)` evaluated at `max(|t|, eps)`.
/// For `p < 2` `eps` is at rounding level of the field scale; for `p > 2` it
/// only keeps the matrix definite. With `secant` the factor `p - 1` is
/// dropped, which gives the weights `J(t)/t` (a quadratic majorant when p < 2).
pub(crate) fn seminorm_curvature(kernel: &Kernel, x: &[f64], secant: bool) -> Vec<f64> {
    let n = x.len();
    let p = kernel.params().p();
    let scale = max_norm(x).max(1e-8);
    let eps = if p < 2.0 {
        4.0 * f64::EPSILON * scale
    } else {
        1e-8 * scale
    };
    let factor = if secant { 1.0 } else { p - 1.0 };
    let c = |t: f64| 2.0 * factor * t.abs().max(eps).powf(p - 2.0);
    let mut h = vec![0.0; n * n];
    h.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let w = kernel.row(i);
        let mut diag = kernel.exterior(i) * c(x[i]);
        for j in 0..n {
            if j != i && w[j] != 0.0 {
                let v = w[j] * c(x[i] - x[j]);
                row[j] = -v;
                diag += v;
            }
        }
        row[i] = diag;
    });
    h
}

fn start_point(kernel: &Kernel, opts: &SolveOptions) -> Result<Vec<f64>> {
    match &opts.initial {
        Some(f) => {
            check_field(kernel, f)?;
            Ok(f.values().to_vec())
        }
        None => Ok(vec![0.0; kernel.num_nodes()]),
    }
}

/// Minimizes `(1/p)[v]^p - sum m f v` and returns the full minimization record.
pub fn minimize_nonsingular(f: &Field, kernel: &Kernel, opts: &SolveOptions) -> Result<Minimum> {
    check_field(kernel, f)?;
    let m = kernel.cell_measure();
    let energy = ConvexEnergy::new(
        kernel,
        f.values().iter().map(|x| m * x).collect(),
        Source::Linear,
    );
    minimize(&energy, start_point(kernel, opts)?, opts)
}

/// Weak solution of `(-Delta_p)^s u = f` with zero exterior values.
pub fn solve_nonsingular(f: &Field, kernel: &Kernel, opts: &SolveOptions) -> Result<Field> {
    let min = minimize_nonsingular(f, kernel, opts)?;
    Field::on_kernel(kernel, min.x)
}

/// Torsion-like barrier `psi` with datum `min(omega, 1)`.
pub fn solve_psi(omega: &WeightField, kernel: &Kernel, opts: &SolveOptions) -> Result<Field> {
    check_weight(kernel, omega)?;
    let datum = omega.values().iter().map(|w| w.min(1.0)).collect();
    let f = Field::on_kernel(kernel, datum)?;
    solve_nonsingular(&f, kernel, opts)
}

/// Best discrete constant in `|v|_theta^p <= S [v]^p`.
#[derive(Debug, Clone)]
pub struct EmbeddingConstant {
    pub theta: f64,
    pub value: f64,
    /// Nonnegative extremizer normalized to `|v|_theta = 1`.
    pub extremizer: Field,
    pub seed: u64,
}

impl EmbeddingConstant {
    /// `|v|_theta^p / [v]^p` for an arbitrary field.
    pub fn quotient(v: &Field, kernel: &Kernel, theta: f64) -> Result<f64> {
        let semi = crate::ops::seminorm_p(v, kernel)?;
        let nrm = crate::ops::norm_r(v, theta)?;
        Ok(nrm.powf(kernel.params().p()) / semi)
    }
}

/// `ln [v]^p - (p/theta) ln sum m |v|^theta` on the positive cone.
struct LogQuotient<'a> {
    kernel: &'a Kernel,
    theta: f64,
}

impl Objective for LogQuotient<'_> {
    fn dim(&self) -> usize {
        self.kernel.num_nodes()
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        if x.iter().any(|&v| !(v > 0.0)) {
            return (f64::INFINITY, vec![0.0; x.len()]);
        }
        let p = self.kernel.params().p();
        let m = self.kernel.cell_measure();
        let (semi, op) = seminorm_and_operator(self.kernel, x);
        let mass: f64 = x.iter().map(|v| m * v.powf(self.theta)).sum();
        let value = semi.ln() - p / self.theta * mass.ln();
        let grad = op
            .iter()
            .zip(x)
            .map(|(a, &v)| p * a / semi - p * m * duality_map(v, self.theta) / mass)
            .collect();
        (value, grad)
    }

    fn delta(&self, x: &[f64], d: &[f64], t: f64) -> f64 {
        if x.iter().zip(d).any(|(&v, &dv)| !(v + t * dv > 0.0)) {
            return f64::INFINITY;
        }
        let p = self.kernel.params().p();
        let m = self.kernel.cell_measure();
        let semi = seminorm_raw(self.kernel, x);
        let dsemi = seminorm_delta(self.kernel, x, d, t);
        let mass: f64 = x.iter().map(|v| m * v.powf(self.theta)).sum();
        let dmass: f64 = x
            .iter()
            .zip(d)
            .map(|(&v, &dv)| m * pow_abs_diff(v, t * dv, self.theta))
            .sum();
        (dsemi / semi).ln_1p() - p / self.theta * (dmass / mass).ln_1p()
    }

    // Seminorm part of the Hessian only: positive definite, and the step is
    // a nonlinear inverse iteration.
    fn curvature(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.model(x, false))
    }

    fn majorant(&self, x: &[f64]) -> Option<Vec<f64>> {
        (self.kernel.params().p() < 2.0).then(|| self.model(x, true))
    }
}

impl LogQuotient<'_> {
    fn model(&self, x: &[f64], secant: bool) -> Vec<f64> {
        let scale = self.kernel.params().p() / seminorm_raw(self.kernel, x);
        let mut h = seminorm_curvature(self.kernel, x, secant);
        h.iter_mut().for_each(|v| *v *= scale);
        h
    }
}

/// Maximizes `|v|_theta^p / [v]^p` by multi-start descent on the log quotient.
pub fn embedding_constant(
    theta: f64,
    kernel: &Kernel,
    opts: &SolveOptions,
) -> Result<EmbeddingConstant> {
    embedding_constant_seeded(theta, kernel, opts, 8, 0x5eed)
}

/// [`embedding_constant`] with an explicit number of starts and base seed.
pub fn embedding_constant_seeded(
    theta: f64,
    kernel: &Kernel,
    opts: &SolveOptions,
    starts: usize,
    seed: u64,
) -> Result<EmbeddingConstant> {
    let params = kernel.params();
    if !(theta >= 1.0) {
        return Err(invalid("theta", format!("need theta >= 1, got {theta}")));
    }
    if theta > params.p_star() {
        return Err(invalid(
            "theta",
            format!("need theta <= p_star = {}, got {theta}", params.p_star()),
        ));
    }
    let n = kernel.num_nodes();
    let objective = LogQuotient { kernel, theta };
    let local = SolveOptions {
        grad_tol: opts.grad_tol.max(1e-12),
        ..opts.clone()
    };

    let runs: Vec<(u64, Result<Minimum>)> = (0..starts.max(1) as u64)
        .into_par_iter()
        .map(|k| {
            let x0 = if k == 0 {
                vec![1.0; n]
            } else {
                let mut rng = trial_rng(seed, k);
                positive_field_raw(n, &mut rng)
            };
            (k, minimize(&objective, x0, &local))
        })
        .collect();

    let mut best: Option<(f64, u64, Vec<f64>)> = None;
    let mut last_err = None;
    for (k, run) in runs {
        match run {
            Ok(min) => {
                let better = match &best {
                    None => true,
                    Some((v, s, _)) => min.value < *v || (min.value == *v && k < *s),
                };
                if better {
                    best = Some((min.value, k, min.x));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((_, k, x)) = best else {
        return Err(last_err.expect("at least one start"));
    };
    let field = Field::on_kernel(kernel, x)?;
    let nrm = crate::ops::norm_r(&field, theta)?;
    let extremizer = field.scaled(1.0 / nrm);
    let value = EmbeddingConstant::quotient(&extremizer, kernel, theta)?;
    Ok(EmbeddingConstant {
        theta,
        value,
        extremizer,
        seed: k,
    })
}

fn positive_field_raw(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.1..=1.0)).collect()
}
