//! Randomized checks of the elementary inequalities behind the analysis.
//!
//! Constants that are only known to exist are fitted from the observed ratios;
//! what is checked is that the fits stay bounded and positive.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::LevelSetFamily;
use crate::domain::Kernel;
use crate::error::{invalid, FssError, Result};
use crate::ops::{duality_map, pairing, seminorm_p};
use crate::rng::{trial_field, trial_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub trials: usize,
    /// Smallest normalized slack with the fitted constants.
    pub worst_slack: f64,
    /// Inputs at the worst case.
    pub witness: Vec<f64>,
    pub fitted: BTreeMap<String, f64>,
    pub passed: bool,
}

impl LemmaReport {
    fn new(lemma: &str, trials: usize) -> Self {
        Self {
            lemma: lemma.to_string(),
            trials,
            worst_slack: f64::INFINITY,
            witness: Vec::new(),
            fitted: BTreeMap::new(),
            passed: false,
        }
    }

    fn observe(&mut self, slack: f64, witness: impl FnOnce() -> Vec<f64>) {
        if slack < self.worst_slack {
            self.worst_slack = slack;
            self.witness = witness();
        }
    }
}

fn vec_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `|X|^(p-2) X`.
fn vec_duality(x: &[f64], p: f64) -> Vec<f64> {
    let n = vec_norm(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    let s = n.powf(p - 2.0);
    x.iter().map(|v| s * v).collect()
}

/// `(|J(X) - J(Y)|, (J(X) - J(Y)).(X - Y), |X - Y|, |X| + |Y|)`.
fn vector_terms(x: &[f64], y: &[f64], p: f64) -> (f64, f64, f64, f64) {
    let jx = vec_duality(x, p);
    let jy = vec_duality(y, p);
    let dj: Vec<f64> = jx.iter().zip(&jy).map(|(a, b)| a - b).collect();
    let dxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let inner = dj.iter().zip(&dxy).map(|(a, b)| a * b).sum();
    (vec_norm(&dj), inner, vec_norm(&dxy), vec_norm(x) + vec_norm(y))
}

/// Ratios `LHS/RHS` of both vector inequalities.
fn vector_ratios(x: &[f64], y: &[f64], p: f64) -> (f64, f64) {
    let (dj, inner, d, sum) = vector_terms(x, y, p);
    if p < 2.0 {
        (dj / d.powf(p - 1.0), inner * sum.powf(2.0 - p) / (d * d))
    } else {
        (dj / (sum.powf(p - 2.0) * d), inner / d.powf(p))
    }
}

fn random_pair(seed: u64, trial: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = trial_rng(seed, trial);
    let dim = 1 + (trial % 3) as usize;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            if vec_norm(&v) > 1e-6 {
                return v;
            }
        }
    };
    let x = draw(&mut rng);
    let y = if trial % 5 == 4 {
        // nearby pair
        let eps = 10f64.powf(rng.random_range(-6.0..-1.0));
        x.iter().map(|v| v + eps * rng.random_range(-1.0..=1.0)).collect()
    } else {
        draw(&mut rng)
    };
    if x == y {
        let y = x.iter().map(|v| v * 0.5).collect();
        return (x, y);
    }
    (x, y)
}

/// Fits `c_p` (upper inequality) and `C_p` (monotonicity inequality) for the
/// duality map `|X|^(p-2) X` on random vectors of dimension 1 to 3.
pub fn check_vector_inequalities(p: f64, trials: usize, seed: u64) -> Result<LemmaReport> {
    if !(p > 1.0) {
        return Err(invalid("p", format!("need p > 1, got {p}")));
    }
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![1.0, 0.0], vec![0.0, 1.0])];
    pairs.extend((0..trials as u64).map(|t| random_pair(seed, t)));
    let ratios: Vec<(f64, f64)> = pairs.par_iter().map(|(x, y)| vector_ratios(x, y, p)).collect();

    let c_upper = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
    let c_lower = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let mut upper_sorted: Vec<f64> = ratios.iter().map(|r| r.0).collect();
    upper_sorted.sort_by(f64::total_cmp);
    let median = upper_sorted[upper_sorted.len() / 2];

    let mut report = LemmaReport::new("vector-inequalities", trials);
    for ((x, y), &(ru, rl)) in pairs.iter().zip(&ratios) {
        let slack = (1.0 - ru / c_upper).min(rl / c_lower - 1.0);
        report.observe(slack, || x.iter().chain(y).copied().collect());
    }
    report.fitted.insert("c_p".into(), c_upper);
    report.fitted.insert("C_p".into(), c_lower);
    report.fitted.insert("c_p_median".into(), median);
    report.passed = c_upper.is_finite()
        && c_upper <= 10.0 * median
        && c_lower > 0.0
        && report.worst_slack >= -1e-12;
    Ok(report)
}

/// Fits the constant of strong monotonicity of the discrete operator.
pub fn check_strong_monotonicity(kernel: &Kernel, trials: usize, seed: u64) -> Result<LemmaReport> {
    let p = kernel.params().p();
    let grid = kernel.grid();
    let rows: Vec<(f64, f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let v1 = trial_field(grid, seed, 2 * t);
            let v2 = trial_field(grid, seed, 2 * t + 1);
            let w = v1.sub(&v2);
            let lhs = pairing(&v1, &w, kernel)? - pairing(&v2, &w, kernel)?;
            let dw = seminorm_p(&w, kernel)?;
            let rhs = if p < 2.0 {
                let s = seminorm_p(&v1, kernel)? + seminorm_p(&v2, kernel)?;
                dw.powf(2.0 / p) / s.powf((2.0 - p) / p)
            } else {
                dw
            };
            Ok((t as f64, lhs, rhs))
        })
        .collect::<Result<_>>()?;
    let fitted = rows
        .iter()
        .map(|&(_, l, r)| l / r)
        .fold(f64::INFINITY, f64::min);
    let mut report = LemmaReport::new("strong-monotonicity", trials);
    for &(t, l, r) in &rows {
        report.observe((l - fitted * r) / l.abs().max(f64::MIN_POSITIVE), || vec![t]);
    }
    report.fitted.insert("C".into(), fitted);
    report.passed = fitted > 0.0 && fitted.is_finite() && report.worst_slack >= -1e-12;
    Ok(report)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
        )
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40).ok_or(FssError::Quadrature { a, b, tol })
}

/// `int_0^1 |a + t(b - a)|^(p-2) dt`, split at the zero of the integrand's
/// base. For `p < 2` each piece is mapped by `t = t0 + L s^(1/(p-1))`, which
/// removes the endpoint singularity.
pub fn q_integral(a: f64, b: f64, p: f64, tol: f64) -> Result<f64> {
    let base = |t: f64| (a + t * (b - a)).abs();
    if p >= 2.0 {
        return adaptive_simpson(&|t| base(t).powf(p - 2.0), 0.0, 1.0, tol);
    }
    if a == b {
        return Ok(if a == 0.0 { f64::INFINITY } else { a.abs().powf(p - 2.0) });
    }
    let t0 = -a / (b - a);
    let gamma = 1.0 / (p - 1.0);
    // piece from t0 to `end`, written in the variable s in [0, 1]
    let piece = |end: f64| -> Result<f64> {
        let len = end - t0;
        let f = move |s: f64| {
            if s == 0.0 {
                // limit of the transformed integrand
                return (len.abs() * (b - a).abs()).powf(p - 2.0) * len.abs() * gamma;
            }
            let t = t0 + len * s.powf(gamma);
            base(t).powf(p - 2.0) * len.abs() * gamma * s.powf(gamma - 1.0)
        };
        adaptive_simpson(&f, 0.0, 1.0, tol / 2.0)
    };
    if t0 <= 0.0 {
        Ok(piece(1.0)? - if t0 < 0.0 { piece(0.0)? } else { 0.0 })
    } else if t0 >= 1.0 {
        Ok(piece(0.0)? - if t0 > 1.0 { piece(1.0)? } else { 0.0 })
    } else {
        Ok(piece(0.0)? + piece(1.0)?)
    }
}

/// Checks `J(b) - J(a) = (p-1)(b-a) int_0^1 |a+t(b-a)|^(p-2) dt` on random
/// scalars, and `<A v1 - A v2, (v1 - v2)_+> >= 0` on random field pairs.
pub fn check_q_identity(kernel: &Kernel, trials: usize, seed: u64) -> Result<LemmaReport> {
    let p = kernel.params().p();
    let scalar: Vec<(f64, f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let a: f64 = rng.random_range(-2.0..=2.0);
            let b: f64 = rng.random_range(-2.0..=2.0);
            let lhs = duality_map(b, p) - duality_map(a, p);
            let rhs = if a == b {
                0.0
            } else {
                (p - 1.0) * (b - a) * q_integral(a, b, p, 1e-12)?
            };
            Ok((a, b, (lhs - rhs).abs() / lhs.abs().max(1.0)))
        })
        .collect::<Result<_>>()?;
    let grid = kernel.grid();
    let fields: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let v1 = trial_field(grid, seed ^ 0x51, 2 * t);
            let v2 = trial_field(grid, seed ^ 0x51, 2 * t + 1);
            let w = v1.sub(&v2).positive_part();
            let a = pairing(&v1, &w, kernel)?;
            let b = pairing(&v2, &w, kernel)?;
            Ok((t as f64, (a - b) / (1.0 + a.abs() + b.abs())))
        })
        .collect::<Result<_>>()?;

    let mut report = LemmaReport::new("q-identity", trials);
    let identity_error = scalar.iter().map(|r| r.2).fold(0.0, f64::max);
    for &(t, v) in &fields {
        report.observe(v, || vec![t]);
    }
    for &(a, b, e) in &scalar {
        report.observe(-e, || vec![a, b]);
    }
    report.fitted.insert("identity_error".into(), identity_error);
    report.passed = identity_error <= 1e-10 && report.worst_slack >= -1e-10;
    Ok(report)
}

/// `d` with `d^theta = C g(k0)^(b-1) 2^(theta b/(b-1))`.
pub fn stampacchia_d(g0: f64, c: f64, theta: f64, b: f64) -> f64 {
    (c * g0.powf(b - 1.0) * 2f64.powf(theta * b / (b - 1.0))).powf(1.0 / theta)
}

/// `k_n = k0 + d - d/2^n`, never below `k0`.
pub fn halving_point(k0: f64, d: f64, n: i32) -> f64 {
    (k0 + d - d / 2f64.powi(n)).max(k0)
}

/// Sample levels for a Stampacchia check: a uniform grid on `[k0, k_max]`
/// together with the points `k_n = k0 + d - d/2^n` and `k0 + d`.
pub fn stampacchia_levels(k0: f64, d: f64, k_max: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    let top = k_max.max(k0 + d);
    let mut ks: Vec<f64> = (0..count)
        .map(|j| k0 + (top - k0) * j as f64 / (count - 1) as f64)
        .collect();
    ks.extend((0..60).map(|n| halving_point(k0, d, n)));
    ks.push(k0 + d);
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks
}

/// Checks the hypothesis `g(h) <= C (h-k)^-theta g(k)^b` on all sample pairs,
/// then that `g` vanishes from `k0 + d` on and that the halving sequence
/// obeys `g(k_n) <= g(k0) 2^(-n theta/(b-1))`.
pub fn check_stampacchia(
    samples: &[(f64, f64)],
    k0: f64,
    c: f64,
    theta: f64,
    b: f64,
) -> Result<LemmaReport> {
    if !(b > 1.0) {
        return Err(invalid("b", format!("need b > 1, got {b}")));
    }
    if !(theta > 0.0 && c > 0.0) {
        return Err(invalid("C", "need C > 0 and theta > 0"));
    }
    if samples.is_empty() || samples[0].0 != k0 {
        return Err(FssError::NotStampacchia("first sample must sit at k0".into()));
    }
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(FssError::NotStampacchia("levels must increase".into()));
        }
        if w[1].1 > w[0].1 || w[1].1 < 0.0 {
            return Err(FssError::NotStampacchia(format!(
                "g must be nonnegative and nonincreasing (g({}) = {} > g({}) = {})",
                w[1].0, w[1].1, w[0].0, w[0].1
            )));
        }
    }
    for (i, &(k, gk)) in samples.iter().enumerate() {
        for &(h, gh) in &samples[i + 1..] {
            let bound = c * (h - k).powf(-theta) * gk.powf(b);
            if gh > bound * (1.0 + 1e-12) {
                return Err(FssError::NotStampacchia(format!(
                    "g({h}) = {gh} exceeds C (h-k)^-theta g({k})^b = {bound}"
                )));
            }
        }
    }
    let g0 = samples[0].1;
    let d = stampacchia_d(g0, c, theta, b);
    let mut report = LemmaReport::new("stampacchia", samples.len());
    report.worst_slack = 0.0;
    for &(k, g) in samples {
        if k >= k0 + d && g > 0.0 {
            report.observe(-g, || vec![k, g]);
        }
    }
    // g at k is bounded by the last sample at or below k
    let g_at = |k: f64| -> f64 {
        samples
            .iter()
            .take_while(|s| s.0 <= k)
            .last()
            .map(|s| s.1)
            .unwrap_or(g0)
    };
    let rate = theta / (b - 1.0);
    for n in 0..60 {
        let kn = halving_point(k0, d, n);
        let bound = g0 * 2f64.powf(-(n as f64) * rate);
        let g = g_at(kn);
        if g > bound * (1.0 + 1e-12) {
            report.observe((bound - g) / g0.max(f64::MIN_POSITIVE), || vec![kn, g]);
        }
    }
    report.fitted.insert("d".into(), d);
    report.passed = report.worst_slack >= 0.0;
    Ok(report)
}

/// [`check_stampacchia`] on the level-set family of a computed field.
pub fn check_level_sets(family: &LevelSetFamily) -> Result<LemmaReport> {
    check_stampacchia(&family.samples, family.k0, family.constant, family.theta, family.b)
}
