//! Discrete geometry: interior nodes of a box domain, the zero-valued collar
//! around it, and the pairwise Gagliardo kernel weights.
//!
//! Nodes live on the lattice `lo + k h`. A node is interior when it lies
//! strictly inside the box; every other lattice node inside the collar box
//! (the domain box enlarged by `collar_width` on every side) is a collar node.
//! Nodes on the boundary of the domain belong to the collar.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FssError, Result};

/// Relative tolerance used when deciding whether a lattice point sits on a box face.
const FACE_TOL: f64 = 1e-9;

/// Axis-aligned box in one or two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lo.len();
        if !(n == 1 || n == 2) || self.hi.len() != n {
            return Err(invalid("box", "dimension must be 1 or 2"));
        }
        for (a, b) in self.lo.iter().zip(&self.hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(invalid("box", format!("need lo < hi, got [{a}, {b}]")));
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// Fractional order `s` and integrability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    s: f64,
    p: f64,
    dim: usize,
}

impl FracParams {
    pub fn new(s: f64, p: f64, dim: usize) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(invalid("s", format!("need 0 < s < 1, got {s}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(invalid("p", format!("need 1 < p < inf, got {p}")));
        }
        if !(dim == 1 || dim == 2) {
            return Err(invalid("dim", format!("need N in {{1, 2}}, got {dim}")));
        }
        Ok(Self { s, p, dim })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// Critical exponent `Np/(N - sp)`; `+inf` when `sp >= N`.
    pub fn p_star(&self) -> f64 {
        let n = self.dim as f64;
        if n > self.sp() {
            n * self.p / (n - self.sp())
        } else {
            f64::INFINITY
        }
    }

    /// Kernel exponent `N + sp`.
    pub fn kernel_exponent(&self) -> f64 {
        self.dim as f64 + self.sp()
    }
}

/// Hölder conjugate `x/(x-1)`, with `1' = inf` and `inf' = 1`.
pub fn conjugate(x: f64) -> f64 {
    if x == 1.0 {
        f64::INFINITY
    } else if x.is_infinite() {
        1.0
    } else {
        x / (x - 1.0)
    }
}

/// Integrability threshold `r_alpha` on the weight for `0 < alpha <= 1`.
pub fn r_alpha(alpha: f64, params: &FracParams) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("need 0 < alpha <= 1, got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(1.0);
    }
    if params.sp() < params.dim() as f64 {
        Ok(conjugate(params.p_star() / (1.0 - alpha)))
    } else {
        Ok(1.0 / alpha)
    }
}

/// Uniform Cartesian grid over a box plus its exterior collar.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: BoxDomain,
    h: f64,
    collar_width: f64,
    /// Interior node counts per axis.
    shape: Vec<usize>,
    interior: Vec<f64>,
    collar: Vec<f64>,
    id: u64,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn collar_width(&self) -> f64 {
        self.collar_width
    }

    /// Interior node counts per axis; the flat ordering is row-major over this shape.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len() / self.dim()
    }

    pub fn num_collar(&self) -> usize {
        self.collar.len() / self.dim()
    }

    pub fn interior_node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.interior[i * d..(i + 1) * d]
    }

    pub fn collar_node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.collar[i * d..(i + 1) * d]
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.interior.chunks_exact(self.dim())
    }

    pub fn collar_nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.collar.chunks_exact(self.dim())
    }

    /// Node by global index: interior nodes first, then collar nodes.
    pub fn node(&self, k: usize) -> &[f64] {
        let m = self.num_interior();
        if k < m {
            self.interior_node(k)
        } else {
            self.collar_node(k - m)
        }
    }

    /// Cell measure `h^N`, identical for every node.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Discrete measure of the domain, `M h^N`.
    pub fn discrete_volume(&self) -> f64 {
        self.num_interior() as f64 * self.cell_measure()
    }

    /// Fingerprint of the grid inputs; fields carry it to catch mismatches.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Distance from an interior node to the boundary of the domain box.
    pub fn boundary_distance(&self, i: usize) -> f64 {
        let x = self.interior_node(i);
        x.iter()
            .zip(self.domain.lo.iter().zip(&self.domain.hi))
            .map(|(&xi, (&a, &b))| (xi - a).min(b - xi))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from an interior node to the boundary of the collar box.
    pub fn collar_box_distance(&self, i: usize) -> f64 {
        self.boundary_distance(i) + self.collar_width
    }
}

fn fingerprint(domain: &BoxDomain, h: f64, collar_width: f64) -> u64 {
    // FNV-1a over the bit patterns of the defining inputs.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: u64| {
        for byte in x.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
    };
    feed(domain.dim() as u64);
    for v in domain.lo.iter().chain(&domain.hi) {
        feed(v.to_bits());
    }
    feed(h.to_bits());
    feed(collar_width.to_bits());
    hash
}

/// Builds the interior and collar node lists.
pub fn build_grid(domain: &BoxDomain, h: f64, collar_width: f64) -> Result<Grid> {
    domain.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("h", format!("need h > 0, got {h}")));
    }
    if !(collar_width >= h * (1.0 - FACE_TOL)) {
        return Err(invalid(
            "collar_width",
            format!("need collar_width >= h, got {collar_width} < {h}"),
        ));
    }
    let dim = domain.dim();

    // Per-axis lattice offsets k: interior when 0 < k h < L, collar when inside
    // [-collar_width, L + collar_width] and not interior.
    let mut axis_interior = Vec::with_capacity(dim);
    let mut axis_all = Vec::with_capacity(dim);
    for a in 0..dim {
        let len = domain.hi[a] - domain.lo[a];
        let k_max = ((len + collar_width) / h + FACE_TOL).floor() as i64;
        let k_min = -((collar_width / h + FACE_TOL).floor() as i64);
        let all: Vec<i64> = (k_min..=k_max).collect();
        let inner: Vec<i64> = all
            .iter()
            .copied()
            .filter(|&k| k >= 1 && (k as f64) * h < len * (1.0 - FACE_TOL))
            .collect();
        axis_interior.push(inner);
        axis_all.push(all);
    }
    if axis_interior.iter().any(|v| v.is_empty()) {
        return Err(FssError::DegenerateGrid(format!(
            "no interior node fits with h = {h}"
        )));
    }

    let coord = |a: usize, k: i64| domain.lo[a] + (k as f64) * h;
    let is_inner = |a: usize, k: i64| axis_interior[a].binary_search(&k).is_ok();

    let mut interior = Vec::new();
    let mut collar = Vec::new();
    let shape: Vec<usize> = axis_interior.iter().map(|v| v.len()).collect();
    match dim {
        1 => {
            for &k in &axis_all[0] {
                if is_inner(0, k) {
                    interior.push(coord(0, k));
                } else {
                    collar.push(coord(0, k));
                }
            }
        }
        _ => {
            for &kx in &axis_all[0] {
                for &ky in &axis_all[1] {
                    let target = if is_inner(0, kx) && is_inner(1, ky) {
                        &mut interior
                    } else {
                        &mut collar
                    };
                    target.push(coord(0, kx));
                    target.push(coord(1, ky));
                }
            }
        }
    }

    Ok(Grid {
        domain: domain.clone(),
        h,
        collar_width,
        shape,
        interior,
        collar,
        id: fingerprint(domain, h, collar_width),
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Midpoint-rule weight `m_i m_j / |x_i - x_j|^(N+sp)` for two distinct nodes.
pub fn pair_weight(a: &[f64], b: &[f64], cell_measure: f64, params: &FracParams) -> f64 {
    cell_measure * cell_measure / distance(a, b).powf(params.kernel_exponent())
}

/// Measure of the unit sphere `S^(N-1)`: 2 for N = 1, 2 pi for N = 2.
fn sphere_measure(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI,
    }
}

/// Closed-form integral of `|x - y|^-(N+sp)` over the exterior of the ball of radius `r`.
pub fn tail_integral(radius: f64, params: &FracParams) -> f64 {
    sphere_measure(params.dim()) * radius.powf(-params.sp()) / params.sp()
}

/// Symmetric pairwise weights on a grid.
///
/// Interior-interior weights are stored densely. Pairs with a collar node only
/// ever see `|u_i - 0|^p`, so they are folded into one exterior coefficient per
/// interior node together with the analytic tail.
#[derive(Debug, Clone)]
pub struct Kernel {
    grid_id: u64,
    params: FracParams,
    n: usize,
    cell_measure: f64,
    weights: Vec<f64>,
    collar_sums: Vec<f64>,
    tail: Vec<f64>,
    exterior: Vec<f64>,
    h: f64,
    boundary: Vec<f64>,
    grid: Grid,
}

impl Kernel {
    /// The grid this kernel was assembled on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &FracParams {
        &self.params
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn cell_measure(&self) -> f64 {
        self.cell_measure
    }

    /// Grid spacing of the underlying grid.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Discrete measure of the domain.
    pub fn discrete_volume(&self) -> f64 {
        self.n as f64 * self.cell_measure
    }

    /// Distance from interior node `i` to the domain boundary.
    pub fn boundary_distance(&self, i: usize) -> f64 {
        self.boundary[i]
    }

    /// Interior-interior weight; zero on the diagonal.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Row `i` of the interior-interior table.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// `sum_j w_ij` over collar nodes `j`.
    pub fn collar_sum(&self, i: usize) -> f64 {
        self.collar_sums[i]
    }

    /// Tail density `tau_i`; zero when the tail is disabled.
    pub fn tail(&self, i: usize) -> f64 {
        self.tail[i]
    }

    pub fn tails(&self) -> &[f64] {
        &self.tail
    }

    /// Exterior coefficient `d_i = sum_collar w_ij + m tau_i`.
    #[inline]
    pub fn exterior(&self, i: usize) -> f64 {
        self.exterior[i]
    }

    pub fn exteriors(&self) -> &[f64] {
        &self.exterior
    }

    /// Total weight seen by node `i`: every other node plus the tail.
    pub fn total_weight(&self, i: usize) -> f64 {
        self.row(i).iter().sum::<f64>() + self.exterior[i]
    }

    /// Weight between two nodes by global index (interior first, then collar).
    /// Collar-collar pairs never enter the energy; they are reported anyway.
    pub fn weight_between(&self, grid: &Grid, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let m = grid.num_interior();
        if a < m && b < m {
            self.weight(a, b)
        } else {
            pair_weight(grid.node(a), grid.node(b), self.cell_measure, &self.params)
        }
    }
}

/// Assembles the kernel; rows are computed in parallel, each in a fixed order.
pub fn build_kernel(grid: &Grid, params: &FracParams, tail_enabled: bool) -> Result<Kernel> {
    if params.dim() != grid.dim() {
        return Err(invalid(
            "params",
            format!("dimension {} does not match grid dimension {}", params.dim(), grid.dim()),
        ));
    }
    let n = grid.num_interior();
    let m = grid.cell_measure();

    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = grid.interior_node(i);
            let row: Vec<f64> = (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        pair_weight(xi, grid.interior_node(j), m, params)
                    }
                })
                .collect();
            let collar: f64 = grid.collar_nodes().map(|y| pair_weight(xi, y, m, params)).sum();
            (row, collar)
        })
        .collect();

    let mut weights = Vec::with_capacity(n * n);
    let mut collar_sums = Vec::with_capacity(n);
    for (row, c) in rows {
        weights.extend_from_slice(&row);
        collar_sums.push(c);
    }
    // Mirror the upper triangle so w_ij == w_ji bit for bit.
    for i in 0..n {
        for j in 0..i {
            weights[i * n + j] = weights[j * n + i];
        }
    }

    let tail: Vec<f64> = (0..n)
        .map(|i| {
            if tail_enabled {
                tail_integral(grid.collar_box_distance(i), params)
            } else {
                0.0
            }
        })
        .collect();
    let exterior = collar_sums
        .iter()
        .zip(&tail)
        .map(|(c, t)| c + m * t)
        .collect();

    Ok(Kernel {
        grid_id: grid.id(),
        params: *params,
        n,
        cell_measure: m,
        weights,
        collar_sums,
        tail,
        exterior,
        h: grid.h(),
        boundary: (0..n).map(|i| grid.boundary_distance(i)).collect(),
        grid: grid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval(h: f64, collar: f64) -> Grid {
        build_grid(&BoxDomain::interval(0.0, 1.0), h, collar).unwrap()
    }

    #[test]
    fn uniform_1d_grid() {
        let g = unit_interval(0.25, 1.0);
        let xs: Vec<f64> = g.interior_nodes().map(|x| x[0]).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75]);
        let left = g.collar_nodes().filter(|x| x[0] <= 0.0).count();
        let right = g.collar_nodes().filter(|x| x[0] >= 1.0).count();
        assert_eq!(left, 5);
        assert_eq!(right, 5);
        assert_eq!(g.cell_measure(), 0.25);
    }

    #[test]
    fn single_node_2d_grid() {
        let g = build_grid(&BoxDomain::rectangle([0.0, 0.0], [1.0, 1.0]), 0.5, 0.5).unwrap();
        assert_eq!(g.num_interior(), 1);
        assert_eq!(g.interior_node(0), &[0.5, 0.5]);
        // 5x5 lattice on [-0.5, 1.5]^2 minus the centre.
        assert_eq!(g.num_collar(), 24);
    }

    #[test]
    fn degenerate_grid() {
        let err = build_grid(&BoxDomain::interval(0.0, 1.0), 2.0, 2.0).unwrap_err();
        assert!(err.to_string().contains("degenerate grid"));
    }

    #[test]
    fn collar_must_cover_one_cell() {
        assert!(build_grid(&BoxDomain::interval(0.0, 1.0), 0.25, 0.1).is_err());
    }

    #[test]
    fn collar_nodes_outside_domain() {
        let g = build_grid(&BoxDomain::rectangle([0.0, 0.0], [1.0, 2.0]), 0.25, 0.5).unwrap();
        for x in g.interior_nodes() {
            assert!(x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 2.0);
        }
        for x in g.collar_nodes() {
            let inside = x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 2.0;
            assert!(!inside);
            assert!(x[0] >= -0.5 - 1e-12 && x[0] <= 1.5 + 1e-12);
            assert!(x[1] >= -0.5 - 1e-12 && x[1] <= 2.5 + 1e-12);
        }
        assert_eq!(g.shape(), &[3, 7]);
        // lexicographic ordering
        let pts: Vec<(f64, f64)> = g.interior_nodes().map(|x| (x[0], x[1])).collect();
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pts, sorted);
    }

    #[test]
    fn weight_for_adjacent_nodes() {
        let g = unit_interval(0.25, 1.0);
        let params = FracParams::new(0.5, 2.0, 1).unwrap();
        let k = build_kernel(&g, &params, false).unwrap();
        assert!((k.weight(0, 1) - 1.0).abs() < 1e-15);
        assert!(k.tails().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn tail_unit_radius() {
        let params = FracParams::new(0.5, 2.0, 1).unwrap();
        assert!((tail_integral(1.0, &params) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tail_uses_collar_box_distance() {
        let g = unit_interval(0.25, 1.0);
        let params = FracParams::new(0.5, 2.0, 1).unwrap();
        let k = build_kernel(&g, &params, true).unwrap();
        // node 0.5 is 1.5 away from the collar box boundary at -1 and 2
        let expected = 2.0 * 1.5f64.powf(-1.0) / 1.0;
        assert!((k.tail(1) - expected).abs() < 1e-14);
    }

    #[test]
    fn r_alpha_cases() {
        let p1 = FracParams::new(0.5, 2.0, 2).unwrap();
        assert_eq!(r_alpha(1.0, &p1).unwrap(), 1.0);
        assert!((r_alpha(0.5, &p1).unwrap() - 8.0 / 7.0).abs() < 1e-15);
        let p2 = FracParams::new(0.9, 2.0, 1).unwrap();
        assert!((r_alpha(0.5, &p2).unwrap() - 2.0).abs() < 1e-15);
        assert!(r_alpha(0.0, &p1).is_err());
        assert!(r_alpha(1.5, &p1).is_err());
    }

    #[test]
    fn frac_params_ranges() {
        assert!(FracParams::new(1.2, 2.0, 1).is_err());
        assert!(FracParams::new(0.5, 1.0, 1).is_err());
        let p = FracParams::new(0.25, 2.0, 1).unwrap();
        assert!((p.p_star() - 4.0).abs() < 1e-15);
        assert!(p.p_star() > p.p());
        assert!(FracParams::new(0.5, 2.0, 1).unwrap().p_star().is_infinite());
    }

    #[test]
    fn weight_between_matches_table() {
        let g = unit_interval(0.25, 0.5);
        let params = FracParams::new(0.3, 1.5, 1).unwrap();
        let k = build_kernel(&g, &params, false).unwrap();
        let m = g.num_interior();
        let mut collar_total = 0.0;
        for c in 0..g.num_collar() {
            collar_total += k.weight_between(&g, 0, m + c);
        }
        assert!((collar_total - k.collar_sum(0)).abs() <= 1e-14 * collar_total);
        assert_eq!(k.weight_between(&g, 0, 2), k.weight(2, 0));
    }
}
