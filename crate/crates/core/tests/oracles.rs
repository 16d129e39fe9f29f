mod common;

use common::*;
use fss_core::chain::run_chain;
use fss_core::constants::{estimate_mu_direct, lambda_alpha};
use fss_core::ops::{apply_operator, pairing, seminorm_p, Field};
use fss_core::rng::trial_field;
use fss_core::solver::{solve_nonsingular, solve_psi, SolveOptions};
use nalgebra::{DMatrix, DVector};

#[test]
fn single_node_chain_matches_bisection() {
    for &(s, p, alpha) in &[(0.3, 1.5, 0.5), (0.5, 2.0, 1.0), (0.8, 3.0, 0.5), (0.5, 3.0, 1.0)] {
        let st = single_node(s, p);
        let k2 = 2.0 * st.kernel.exterior(0);
        let m = st.kernel.cell_measure();
        let omega = constant_weight(&st.grid, 2.0, 4.0);
        let chain = run_chain(&omega, alpha, &st.kernel, &schedule(), &chain_opts()).unwrap();
        for lvl in &chain.levels {
            let n = lvl.n as f64;
            let w = 2.0f64.min(n);
            let oracle = bisect_positive(|u| k2 * u.powf(p - 1.0) * (u + 1.0 / n).powf(alpha) - m * w);
            let got = lvl.field.values()[0];
            assert!(rel(got, oracle) <= 1e-9, "s={s} p={p} a={alpha} n={n}: {got} vs {oracle}");
        }
        let limit = bisect_positive(|u| k2 * u.powf(p - 1.0 + alpha) - 2.0 * m);
        assert!(rel(chain.u_alpha.values()[0], limit) <= 1e-9);
    }
}

#[test]
fn single_node_psi_and_constants() {
    let st = single_node(0.5, 1.5);
    let k2 = 2.0 * st.kernel.exterior(0);
    let m = st.kernel.cell_measure();
    let omega = constant_weight(&st.grid, 0.4, 4.0);
    let psi = solve_psi(&omega, &st.kernel, &SolveOptions::default()).unwrap();
    let oracle = bisect_positive(|u| k2 * u.sqrt() - m * 0.4);
    assert!(rel(psi.values()[0], oracle) <= 1e-9);

    // alpha = 1: V = 1 on one node, so mu = [V]^p = K2
    let mu = estimate_mu_direct(&omega, &st.kernel, &schedule(), &chain_opts()).unwrap();
    assert!(rel(mu.mu, k2) <= 1e-9, "{} vs {k2}", mu.mu);
    assert!(rel(mu.v.values()[0], 1.0) <= 1e-12);

    let alpha = 0.5;
    let chain = run_chain(&omega, alpha, &st.kernel, &schedule(), &chain_opts()).unwrap();
    let sol = lambda_alpha(&chain, &omega, &st.kernel).unwrap();
    let u = bisect_positive(|u| k2 * u.powf(0.5 + alpha) - m * 0.4);
    let semi = k2 * u.powf(1.5);
    let lambda = semi.powf((1.0 - alpha - 1.5) / (1.0 - alpha));
    assert!(rel(sol.lambda(), lambda) <= 1e-9, "{} vs {lambda}", sol.lambda());
}

fn dense_operator(kernel: &fss_core::domain::Kernel) -> DMatrix<f64> {
    let n = kernel.num_nodes();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * kernel.total_weight(i)
        } else {
            -2.0 * kernel.weight(i, j)
        }
    })
}

#[test]
fn linear_case_matches_dense_solve() {
    for &(n, s) in &[(8, 0.3), (31, 0.5), (64, 0.8)] {
        let st = interval(n, s, 2.0);
        let f = trial_field(&st.grid, 7, n as u64);
        let u = solve_nonsingular(&f, &st.kernel, &SolveOptions::default()).unwrap();
        let m = st.kernel.cell_measure();
        let a = dense_operator(&st.kernel);
        let b = DVector::from_iterator(n, f.values().iter().map(|x| m * x));
        let exact = a.lu().solve(&b).unwrap();
        let err = max_rel(u.values(), exact.as_slice());
        assert!(err <= 1e-9, "n={n} s={s}: {err:e}");
    }
}

#[test]
fn total_weight_splits_into_pairs_and_exterior() {
    let st = interval(12, 0.4, 2.5);
    for i in 0..12 {
        let pairs: f64 = (0..12).filter(|&j| j != i).map(|j| st.kernel.weight(i, j)).sum();
        assert!(rel(st.kernel.total_weight(i), pairs + st.kernel.exterior(i)) <= 1e-13);
    }
}

#[test]
fn operator_matches_finite_differences() {
    for &p in &[2.0, 2.5, 3.0, 4.0] {
        let st = interval(20, 0.5, p);
        for t in 0..10 {
            let u = trial_field(&st.grid, 3, t);
            let au = apply_operator(&u, &st.kernel).unwrap();
            let e = |v: &[f64]| {
                seminorm_p(&Field::from_values(&st.grid, v.to_vec()).unwrap(), &st.kernel).unwrap() / p
            };
            let scale = au.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..20 {
                let h = 1e-5;
                let mut up = u.values().to_vec();
                let mut dn = u.values().to_vec();
                up[i] += h;
                dn[i] -= h;
                let fd = (e(&up) - e(&dn)) / (2.0 * h);
                assert!((fd - au[i]).abs() <= 1e-5 * scale, "p={p} i={i}: {fd} vs {}", au[i]);
            }
        }
    }
}

#[test]
fn pairing_is_operator_dot_field() {
    for &p in &[1.5, 2.0, 3.0] {
        let st = interval(25, 0.3, p);
        for t in 0..20 {
            let u = trial_field(&st.grid, 11, 2 * t);
            let v = trial_field(&st.grid, 11, 2 * t + 1);
            let au = apply_operator(&u, &st.kernel).unwrap();
            let dot: f64 = au.iter().zip(v.values()).map(|(a, b)| a * b).sum();
            let pr = pairing(&u, &v, &st.kernel).unwrap();
            let scale: f64 = au.iter().zip(v.values()).map(|(a, b)| (a * b).abs()).sum();
            assert!((pr - dot).abs() <= 1e-12 * scale);
            let self_pair = pairing(&u, &u, &st.kernel).unwrap();
            assert!(rel(self_pair, seminorm_p(&u, &st.kernel).unwrap()) <= 1e-12);
        }
    }
}
