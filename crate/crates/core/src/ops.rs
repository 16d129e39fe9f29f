//! Nonlocal operators on nodal fields: the discrete Gagliardo seminorm, the
//! fractional p-Laplacian and its duality pairing, weighted norms and the
//! log-integral functional.
//!
//! With `d_i` the exterior coefficient of node `i` (collar pairs plus tail),
//!
//! ```text
//! [u]^p      = sum_{i != j} w_ij |u_i - u_j|^p + 2 sum_i d_i |u_i|^p
//! <A u, v>   = sum_{i != j} w_ij J(u_i - u_j)(v_i - v_j) + 2 sum_i d_i J(u_i) v_i
//! (A u)_i    = 2 sum_j w_ij J(u_i - u_j) + 2 d_i J(u_i)
//! ```
//!
//! where `J(t) = |t|^(p-2) t` and the ordered double sum counts every
//! unordered pair twice.

use rayon::prelude::*;

use crate::domain::{Grid, Kernel};
use crate::error::{invalid, FssError, Result};

/// Rows are summed in parallel above this size. Per-row sums are sequential
/// and the final reduction runs in row order, so results do not depend on it.
const PAR_THRESHOLD: usize = 64;

/// Values at interior nodes; collar values are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    grid_id: u64,
    cell_measure: f64,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            values: vec![c; grid.num_interior()],
            grid_id: grid.id(),
            cell_measure: grid.cell_measure(),
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        check_len(grid.num_interior(), values.len())?;
        check_finite(&values)?;
        Ok(Self {
            values,
            grid_id: grid.id(),
            cell_measure: grid.cell_measure(),
        })
    }

    /// Field on the kernel's grid.
    pub fn on_kernel(kernel: &Kernel, values: Vec<f64>) -> Result<Self> {
        check_len(kernel.num_nodes(), values.len())?;
        check_finite(&values)?;
        Ok(Self {
            values,
            grid_id: kernel.grid_id(),
            cell_measure: kernel.cell_measure(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn cell_measure(&self) -> f64 {
        self.cell_measure
    }

    /// Same grid, new values (length is assumed to match).
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            grid_id: self.grid_id,
            cell_measure: self.cell_measure,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&x| f(x)).collect())
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.map(|x| k * x)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn positive_part(&self) -> Self {
        self.map(|x| x.max(0.0))
    }

    pub fn add(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid_id, other.grid_id);
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_i |a_i - b_i|`.
    pub fn max_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Nonnegative weight on interior nodes with cached norms.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    values: Vec<f64>,
    r: f64,
    grid_id: u64,
    cell_measure: f64,
    norm1: f64,
    norm_r: f64,
}

impl WeightField {
    pub fn new(grid: &Grid, values: Vec<f64>, r: f64) -> Result<Self> {
        check_len(grid.num_interior(), values.len())?;
        Self::build(values, r, grid.id(), grid.cell_measure())
    }

    fn build(values: Vec<f64>, r: f64, grid_id: u64, cell_measure: f64) -> Result<Self> {
        if !(r >= 1.0) {
            return Err(invalid("r", format!("need r >= 1, got {r}")));
        }
        if let Some((i, &w)) = values
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(invalid("omega", format!("node {i} has invalid weight {w}")));
        }
        let norm1 = weighted_sum(&values, cell_measure);
        if !(norm1 > 0.0) {
            return Err(invalid("omega", "weight vanishes identically"));
        }
        let norm_r = norm_r_slice(&values, cell_measure, r);
        Ok(Self {
            values,
            r,
            grid_id,
            cell_measure,
            norm1,
            norm_r,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn cell_measure(&self) -> f64 {
        self.cell_measure
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `sum m_i omega_i`.
    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    /// `(sum m_i omega_i^r)^(1/r)` for the weight's own exponent.
    pub fn norm_r(&self) -> f64 {
        self.norm_r
    }

    pub fn norm(&self, r: f64) -> Result<f64> {
        norm_r(self, r)
    }

    /// Same weight with a different integrability exponent.
    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::build(self.values.clone(), r, self.grid_id, self.cell_measure)
    }

    /// Nodewise `min(omega, cap)`. The cap must leave the weight nonzero.
    pub fn capped(&self, cap: f64) -> Result<Self> {
        let values = self.values.iter().map(|&w| w.min(cap)).collect();
        Self::build(values, self.r, self.grid_id, self.cell_measure)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        let values = self.values.iter().map(|&w| k * w).collect();
        Self::build(values, self.r, self.grid_id, self.cell_measure)
    }
}

/// Anything with nodal values and a uniform cell measure.
pub trait Nodal {
    fn nodal_values(&self) -> &[f64];
    fn measure(&self) -> f64;
}

impl Nodal for Field {
    fn nodal_values(&self) -> &[f64] {
        &self.values
    }
    fn measure(&self) -> f64 {
        self.cell_measure
    }
}

impl Nodal for WeightField {
    fn nodal_values(&self) -> &[f64] {
        &self.values
    }
    fn measure(&self) -> f64 {
        self.cell_measure
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(FssError::GridMismatch { expected, found });
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(invalid("field", format!("node {i} is not finite ({v})")));
    }
    Ok(())
}

pub(crate) fn check_field(kernel: &Kernel, u: &Field) -> Result<()> {
    if u.grid_id != kernel.grid_id() || u.len() != kernel.num_nodes() {
        return Err(FssError::GridMismatch {
            expected: kernel.num_nodes(),
            found: u.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_weight(kernel: &Kernel, w: &WeightField) -> Result<()> {
    if w.grid_id != kernel.grid_id() || w.len() != kernel.num_nodes() {
        return Err(FssError::GridMismatch {
            expected: kernel.num_nodes(),
            found: w.len(),
        });
    }
    Ok(())
}

fn weighted_sum(values: &[f64], m: f64) -> f64 {
    values.iter().map(|w| m * w).sum()
}

/// `|t|^p` with the common exponents special-cased.
#[inline]
pub(crate) fn pow_abs(t: f64, p: f64) -> f64 {
    let a = t.abs();
    if p == 2.0 {
        a * a
    } else if p == 3.0 {
        a * a * a
    } else {
        a.powf(p)
    }
}

/// `J(t) = |t|^(p-2) t`, continuous at zero with `J(0) = 0`.
#[inline]
pub fn duality_map(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t
    } else if t == 0.0 {
        0.0
    } else if p == 3.0 {
        t.abs() * t
    } else {
        t.abs().powf(p - 2.0) * t
    }
}

/// `|a + b|^p - |a|^p` without cancellation when `b` is small relative to `a`.
#[inline]
pub(crate) fn pow_abs_diff(a: f64, b: f64, p: f64) -> f64 {
    if a == 0.0 {
        return pow_abs(b, p);
    }
    let r = b / a;
    if r > -0.5 {
        pow_abs(a, p) * (p * r.ln_1p()).exp_m1()
    } else {
        pow_abs(a + b, p) - pow_abs(a, p)
    }
}

fn row_reduce<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if n < PAR_THRESHOLD {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

fn row_seminorm(kernel: &Kernel, u: &[f64], i: usize, p: f64) -> f64 {
    let ui = u[i];
    let pairs: f64 = kernel
        .row(i)
        .iter()
        .zip(u)
        .map(|(&w, &uj)| w * pow_abs(ui - uj, p))
        .sum();
    pairs + 2.0 * kernel.exterior(i) * pow_abs(ui, p)
}

/// `[u]^p` on raw values.
pub(crate) fn seminorm_raw(kernel: &Kernel, u: &[f64]) -> f64 {
    let p = kernel.params().p();
    row_reduce(u.len(), |i| row_seminorm(kernel, u, i, p))
        .into_iter()
        .sum()
}

/// `A u` on raw values.
pub(crate) fn operator_raw(kernel: &Kernel, u: &[f64]) -> Vec<f64> {
    let p = kernel.params().p();
    row_reduce(u.len(), |i| {
        let ui = u[i];
        let pairs: f64 = kernel
            .row(i)
            .iter()
            .zip(u)
            .map(|(&w, &uj)| w * duality_map(ui - uj, p))
            .sum();
        2.0 * pairs + 2.0 * kernel.exterior(i) * duality_map(ui, p)
    })
}

/// `[u]^p` together with `A u` in one sweep.
pub(crate) fn seminorm_and_operator(kernel: &Kernel, u: &[f64]) -> (f64, Vec<f64>) {
    let p = kernel.params().p();
    let rows: Vec<(f64, f64)> = {
        let f = |i: usize| {
            let ui = u[i];
            let mut energy = 0.0;
            let mut grad = 0.0;
            for (&w, &uj) in kernel.row(i).iter().zip(u) {
                let t = ui - uj;
                let (e, g) = pow_and_map(t, p);
                energy += w * e;
                grad += w * g;
            }
            let (e, g) = pow_and_map(ui, p);
            let d = kernel.exterior(i);
            (energy + 2.0 * d * e, 2.0 * grad + 2.0 * d * g)
        };
        if u.len() < PAR_THRESHOLD {
            (0..u.len()).map(f).collect()
        } else {
            (0..u.len()).into_par_iter().map(f).collect()
        }
    };
    let energy = rows.iter().map(|r| r.0).sum();
    (energy, rows.into_iter().map(|r| r.1).collect())
}

#[inline]
fn pow_and_map(t: f64, p: f64) -> (f64, f64) {
    if p == 2.0 {
        (t * t, t)
    } else if t == 0.0 {
        (0.0, 0.0)
    } else {
        let a = t.abs();
        let ap = if p == 3.0 { a * a * a } else { a.powf(p) };
        (ap, ap / t)
    }
}

/// `[u + t d]^p - [u]^p`, accurate when the step is small.
pub(crate) fn seminorm_delta(kernel: &Kernel, u: &[f64], d: &[f64], t: f64) -> f64 {
    let p = kernel.params().p();
    row_reduce(u.len(), |i| {
        let (ui, di) = (u[i], d[i]);
        let pairs: f64 = kernel
            .row(i)
            .iter()
            .zip(u.iter().zip(d))
            .map(|(&w, (&uj, &dj))| {
                if w == 0.0 {
                    0.0
                } else {
                    w * pow_abs_diff(ui - uj, t * (di - dj), p)
                }
            })
            .sum();
        pairs + 2.0 * kernel.exterior(i) * pow_abs_diff(ui, t * di, p)
    })
    .into_iter()
    .sum()
}

/// Discrete Gagliardo seminorm to the power p.
pub fn seminorm_p(u: &Field, kernel: &Kernel) -> Result<f64> {
    check_field(kernel, u)?;
    Ok(seminorm_raw(kernel, u.values()))
}

/// Duality pairing `<(-Delta_p)^s u, v>` summed pair by pair.
pub fn pairing(u: &Field, v: &Field, kernel: &Kernel) -> Result<f64> {
    check_field(kernel, u)?;
    check_field(kernel, v)?;
    let p = kernel.params().p();
    let (uu, vv) = (u.values(), v.values());
    let rows = row_reduce(uu.len(), |i| {
        let (ui, vi) = (uu[i], vv[i]);
        let pairs: f64 = kernel
            .row(i)
            .iter()
            .zip(uu.iter().zip(vv))
            .map(|(&w, (&uj, &vj))| w * duality_map(ui - uj, p) * (vi - vj))
            .sum();
        pairs + 2.0 * kernel.exterior(i) * duality_map(ui, p) * vi
    });
    Ok(rows.into_iter().sum())
}

/// Nodal residual vector `g = grad (1/p)[u]^p`, so that `g . v = <A u, v>`.
pub fn apply_operator(u: &Field, kernel: &Kernel) -> Result<Vec<f64>> {
    check_field(kernel, u)?;
    Ok(operator_raw(kernel, u.values()))
}

/// Weighted power mean `((1/|omega|_1) sum m omega |v|^q)^(1/q)`.
pub fn weighted_qmean(v: &Field, omega: &WeightField, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(invalid("q", format!("need q > 0, got {q}")));
    }
    if v.len() != omega.len() {
        return Err(FssError::GridMismatch {
            expected: omega.len(),
            found: v.len(),
        });
    }
    let m = omega.cell_measure();
    let mean: f64 = v
        .values()
        .iter()
        .zip(omega.values())
        .map(|(&x, &w)| m * w * x.abs().powf(q))
        .sum::<f64>()
        / omega.norm1();
    Ok(mean.powf(1.0 / q))
}

/// `sum m omega log|v|`, or `-inf` when `v` vanishes where `omega > 0`.
pub fn log_functional(v: &Field, omega: &WeightField) -> f64 {
    let m = omega.cell_measure();
    let mut total = 0.0;
    for (&x, &w) in v.values().iter().zip(omega.values()) {
        if w > 0.0 {
            if x == 0.0 {
                return f64::NEG_INFINITY;
            }
            total += m * w * x.abs().ln();
        }
    }
    total
}

fn norm_r_slice(values: &[f64], m: f64, r: f64) -> f64 {
    if r.is_infinite() {
        values.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    } else if r == 1.0 {
        values.iter().map(|x| m * x.abs()).sum()
    } else {
        values
            .iter()
            .map(|x| m * x.abs().powf(r))
            .sum::<f64>()
            .powf(1.0 / r)
    }
}

/// Discrete `L^r` norm with cell measures; `r = inf` gives the max of `|values|`.
pub fn norm_r<T: Nodal + ?Sized>(x: &T, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(invalid("r", format!("need r >= 1, got {r}")));
    }
    Ok(norm_r_slice(x.nodal_values(), x.measure(), r))
}

/// Constant `C_h` with `|u|_p^p <= C_h [u]^p` for every field.
///
/// Dropping the interior pairs leaves `[u]^p >= 2 sum d_i |u_i|^p`, so
/// `C_h = max_i m / (2 d_i)`.
pub fn poincare_constant(kernel: &Kernel) -> f64 {
    let m = kernel.cell_measure();
    kernel
        .exteriors()
        .iter()
        .map(|&d| m / (2.0 * d))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, build_kernel, BoxDomain, FracParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(p: f64, s: f64) -> (Grid, Kernel) {
        let g = build_grid(&BoxDomain::interval(0.0, 1.0), 1.0 / 16.0, 0.5).unwrap();
        let params = FracParams::new(s, p, 1).unwrap();
        let k = build_kernel(&g, &params, true).unwrap();
        (g, k)
    }

    fn random(g: &Grid, rng: &mut ChaCha8Rng) -> Field {
        let v = (0..g.num_interior())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Field::from_values(g, v).unwrap()
    }

    #[test]
    fn zero_field_has_zero_seminorm() {
        let (g, k) = setup(2.0, 0.5);
        assert_eq!(seminorm_p(&Field::zeros(&g), &k).unwrap(), 0.0);
        assert!(apply_operator(&Field::zeros(&g), &k)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn single_node_seminorm_is_twice_total_weight() {
        let g = build_grid(&BoxDomain::interval(0.0, 1.0), 0.5, 1.0).unwrap();
        let params = FracParams::new(0.5, 2.0, 1).unwrap();
        let k = build_kernel(&g, &params, false).unwrap();
        let total: f64 = g
            .collar_nodes()
            .map(|y| 0.25 / (y[0] - 0.5).abs().powf(2.0))
            .sum();
        let u = Field::constant(&g, 1.0);
        let s = seminorm_p(&u, &k).unwrap();
        assert!((s - 2.0 * total).abs() <= 1e-14 * s);
    }

    #[test]
    fn homogeneity() {
        for &p in &[1.5, 2.0, 3.0] {
            let (g, k) = setup(p, 0.4);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let u = random(&g, &mut rng);
            let v = random(&g, &mut rng);
            let a = seminorm_p(&u, &k).unwrap();
            let b = seminorm_p(&u.scaled(2.0), &k).unwrap();
            assert!((b / a - 2f64.powf(p)).abs() < 1e-12 * 2f64.powf(p));
            let c = -1.7;
            let lhs = pairing(&u.scaled(c), &v, &k).unwrap();
            let rhs = c.abs().powf(p - 2.0) * c * pairing(&u, &v, &k).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
        }
    }

    #[test]
    fn pairing_with_self_and_zero() {
        let (g, k) = setup(1.5, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random(&g, &mut rng);
        let s = seminorm_p(&u, &k).unwrap();
        assert!((pairing(&u, &u, &k).unwrap() - s).abs() < 1e-12 * s);
        assert_eq!(pairing(&Field::zeros(&g), &u, &k).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_grid_rejected() {
        let (_, k) = setup(2.0, 0.5);
        let other = build_grid(&BoxDomain::interval(0.0, 1.0), 0.25, 0.5).unwrap();
        assert!(matches!(
            seminorm_p(&Field::zeros(&other), &k),
            Err(FssError::GridMismatch { .. })
        ));
        assert!(Field::from_values(&other, vec![0.0; 2]).is_err());
    }

    #[test]
    fn qmean_of_constant() {
        let (g, _) = setup(2.0, 0.5);
        let om = WeightField::new(&g, (0..15).map(|i| 1.0 + i as f64).collect(), 2.0).unwrap();
        let v = Field::constant(&g, 2.5);
        for &q in &[0.01, 0.5, 1.0, 3.0] {
            assert!((weighted_qmean(&v, &om, q).unwrap() - 2.5).abs() < 1e-13);
        }
        assert!(weighted_qmean(&v, &om, 0.0).is_err());
    }

    #[test]
    fn log_functional_cases() {
        let (g, _) = setup(2.0, 0.5);
        let om = WeightField::new(&g, vec![2.0; 15], 2.0).unwrap();
        assert_eq!(log_functional(&Field::constant(&g, 1.0), &om), 0.0);
        let l = log_functional(&Field::constant(&g, 3.0), &om);
        assert!((l - om.norm1() * 3f64.ln()).abs() < 1e-13);
        let mut vals = vec![1.0; 15];
        vals[4] = 0.0;
        let v = Field::from_values(&g, vals).unwrap();
        assert_eq!(log_functional(&v, &om), f64::NEG_INFINITY);
    }

    #[test]
    fn qmean_decreases_to_zero_when_weight_sees_a_zero() {
        let (g, _) = setup(2.0, 0.5);
        let om = WeightField::new(&g, vec![1.0; 15], 2.0).unwrap();
        let mut vals = vec![1.0; 15];
        vals[7] = 0.0;
        let v = Field::from_values(&g, vals).unwrap();
        let qs = [1.0, 0.1, 0.01, 0.001];
        let means: Vec<f64> = qs.iter().map(|&q| weighted_qmean(&v, &om, q).unwrap()).collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]));
        assert!(means[3] < 1e-10);
    }

    #[test]
    fn norms() {
        let (g, _) = setup(2.0, 0.5);
        let u = Field::constant(&g, 1.0);
        assert!((norm_r(&u, 1.0).unwrap() - 15.0 / 16.0).abs() < 1e-15);
        let g3 = build_grid(&BoxDomain::interval(0.0, 1.0), 0.25, 0.5).unwrap();
        let v = Field::from_values(&g3, vec![1.0, -3.0, 2.0]).unwrap();
        assert_eq!(norm_r(&v, f64::INFINITY).unwrap(), 3.0);
        assert!(norm_r(&v, 0.5).is_err());
    }

    #[test]
    fn weight_field_invariants() {
        let (g, _) = setup(2.0, 0.5);
        assert!(WeightField::new(&g, vec![0.0; 15], 2.0).is_err());
        let mut vals = vec![1.0; 15];
        vals[0] = -1.0;
        assert!(WeightField::new(&g, vals, 2.0).is_err());
        let w = WeightField::new(&g, vec![4.0; 15], 2.0).unwrap();
        assert!((w.norm_r() - (15.0 / 16.0 * 16.0f64).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn delta_matches_direct_difference() {
        for &p in &[1.5, 2.0, 3.0] {
            let (g, k) = setup(p, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let u = random(&g, &mut rng);
            let d = random(&g, &mut rng);
            for &t in &[1.0, 0.1, 1e-3] {
                let direct = seminorm_raw(&k, &u.add(&d.scaled(t)).values) - seminorm_raw(&k, &u.values);
                let delta = seminorm_delta(&k, &u.values, &d.values, t);
                assert!((direct - delta).abs() < 1e-10 * direct.abs().max(1e-3), "p={p} t={t}");
            }
        }
    }

    #[test]
    fn combined_sweep_matches_separate() {
        let (g, k) = setup(1.5, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random(&g, &mut rng);
        let (e, gr) = seminorm_and_operator(&k, u.values());
        let e2 = seminorm_raw(&k, u.values());
        let g2 = operator_raw(&k, u.values());
        assert!((e - e2).abs() < 1e-13 * e);
        for (a, b) in gr.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()));
        }
    }
}
