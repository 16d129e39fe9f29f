#![allow(dead_code)]

use fss_core::chain::{ChainOptions, Schedule};
use fss_core::config::{compact_bump, parse_config, RunConfig};
use fss_core::domain::{build_grid, build_kernel, BoxDomain, FracParams, Grid, Kernel};
use fss_core::ops::WeightField;

pub struct Setup {
    pub grid: Grid,
    pub kernel: Kernel,
}

pub fn interval(n_interior: usize, s: f64, p: f64) -> Setup {
    let h = 1.0 / (n_interior + 1) as f64;
    let grid = build_grid(&BoxDomain::interval(0.0, 1.0), h, 0.5).unwrap();
    assert_eq!(grid.num_interior(), n_interior);
    let kernel = build_kernel(&grid, &FracParams::new(s, p, 1).unwrap(), true).unwrap();
    Setup { grid, kernel }
}

pub fn square(n_side: usize, s: f64, p: f64) -> Setup {
    let h = 1.0 / (n_side + 1) as f64;
    let grid = build_grid(&BoxDomain::rectangle([0.0, 0.0], [1.0, 1.0]), h, 0.25).unwrap();
    assert_eq!(grid.num_interior(), n_side * n_side);
    let kernel = build_kernel(&grid, &FracParams::new(s, p, 2).unwrap(), true).unwrap();
    Setup { grid, kernel }
}

/// Interval `[0, 1]` with `h = 1/2`: one interior node at `1/2`.
pub fn single_node(s: f64, p: f64) -> Setup {
    let grid = build_grid(&BoxDomain::interval(0.0, 1.0), 0.5, 1.0).unwrap();
    assert_eq!(grid.num_interior(), 1);
    let kernel = build_kernel(&grid, &FracParams::new(s, p, 1).unwrap(), true).unwrap();
    Setup { grid, kernel }
}

/// Smooth bump of height 3 and radius 0.35 centred in the unit box.
pub fn bump_weight(grid: &Grid, r: f64) -> WeightField {
    let centre = vec![0.5; grid.dim()];
    let values = grid
        .interior_nodes()
        .map(|x| compact_bump(x, &centre, 0.35, 3.0))
        .collect();
    WeightField::new(grid, values, r).unwrap()
}

pub fn constant_weight(grid: &Grid, c: f64, r: f64) -> WeightField {
    WeightField::new(grid, vec![c; grid.num_interior()], r).unwrap()
}

pub fn chain_opts() -> ChainOptions {
    ChainOptions::default()
}

pub fn schedule() -> Schedule {
    Schedule::default()
}

/// Root of an increasing `f` on `[lo, hi]` by bisection to the last bit.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) <= 0.0 && f(hi) >= 0.0, "bracket");
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bracket `[0, hi]` with `f(hi) >= 0` for increasing `f`.
pub fn bisect_positive(f: impl Fn(f64) -> f64) -> f64 {
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    bisect(f, 0.0, hi)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn config_json(body: &str) -> RunConfig {
    let cfg = parse_config(body).unwrap();
    cfg.validate().unwrap();
    cfg
}
