mod common;

use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use tpca_core::diagnostics::{hessian_top_eig, u_moments};
use tpca_core::linalg::{dot, norm_sq, Mat};
use tpca_core::model::estimate_sigma_sq;
use tpca_core::objective::{f_eval, g_eval, g_r_eval, g_r_grad, g_r_hess, x_dagger_scaled};
use tpca_core::{RngSeed, SpikedInstance, Tensor3};

#[test]
fn trilinear_matches_triple_sum() {
    for s in 0..5 {
        let t = random_tensor(s, 3);
        let (x, y, z) = (gaussian_vec(10 + s, 3), gaussian_vec(20 + s, 3), gaussian_vec(30 + s, 3));
        let got = t.trilinear(&x, &y, &z).unwrap();
        assert!(scalar_rel(got, naive_trilinear(&t, &x, &y, &z)) < 1e-13);
    }
}

#[test]
fn rank_one_trilinear_is_cubed_projection() {
    let v = unit_vec(1, 9);
    let t = Tensor3::rank_one(&v, 2.5).unwrap();
    for s in 0..5 {
        let x = gaussian_vec(s, 9);
        let expect = 2.5 * dot(&v, &x).powi(3);
        assert!(scalar_rel(naive_trilinear(&t, &x, &x, &x), expect) < 1e-12);
        assert!(scalar_rel(f_eval(&t, &x).unwrap(), expect) < 1e-12);
    }
}

#[test]
fn sym_contract_vec_matches_loop() {
    for s in 0..5 {
        let t = random_tensor(40 + s, 4);
        let x = gaussian_vec(50 + s, 4);
        assert!(rel_err(&t.sym_contract_vec(&x).unwrap(), &naive_sym_vec(&t, &x)) < 1e-13);
    }
}

#[test]
fn sym_contract_matrix_matches_loop() {
    for s in 0..5 {
        let t = random_tensor(60 + s, 4);
        let x = gaussian_vec(70 + s, 4);
        let got = mat_rows(&t.sym_contract_matrix(&x).unwrap());
        let expect = naive_sym_matrix(&t, &x);
        assert!(max_abs_diff(&got, &expect) < 1e-13 * max_abs(&expect));
    }
}

#[test]
fn diag_sum_matches_loop() {
    for s in 0..5 {
        let t = random_tensor(80 + s, 5);
        assert!(rel_err(&t.mode_diag_sum(), &naive_diag_sum(&t)) < 1e-14);
    }
}

#[test]
fn gram_matvec_matches_materialized_flattening() {
    for s in 0..5 {
        let t = random_tensor(90 + s, 4);
        let w = gaussian_vec(100 + s, 4);
        assert!(rel_err(&t.flatten_gram_matvec(&w).unwrap(), &materialized_gram(&t, &w)) < 1e-13);
    }
}

#[test]
fn combine_is_associative_for_injection() {
    let t = random_tensor(1, 5);
    let bbar = random_tensor(2, 5);
    let bp = random_tensor(3, 5);
    let a = t.combine(&bbar, 1.0, -1.0).unwrap().combine(&bp, 1.0, 1.0).unwrap();
    let b = t.combine(&bp.combine(&bbar, 1.0, -1.0).unwrap(), 1.0, 1.0).unwrap();
    for (x, y) in a.entries().iter().zip(b.entries()) {
        assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
    }
}

#[test]
fn gaussian_sample_moments() {
    let t = Tensor3::sample_gaussian(50, 1.0, RngSeed::new(5)).unwrap();
    let k = t.entries().len() as f64;
    let mean = t.entries().iter().sum::<f64>() / k;
    assert!(mean.abs() <= 4.0 / k.sqrt() * 4.0);

    let t = Tensor3::sample_gaussian(50, 9.0, RngSeed::new(6)).unwrap();
    let mean = t.entries().iter().sum::<f64>() / k;
    let var = t.entries().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    assert!(scalar_rel(var, 9.0) < 0.05);
}

#[test]
fn frobenius_and_variance_estimates() {
    let v = unit_vec(2, 40);
    let spike = Tensor3::rank_one(&v, 10.0).unwrap();
    assert!(scalar_rel(spike.frobenius_sq(), 100.0) < 1e-12);
    assert!(scalar_rel(estimate_sigma_sq(&spike), 100.0 / 64000.0) < 1e-12);

    let noise = Tensor3::sample_gaussian(40, 1.0, RngSeed::new(7)).unwrap();
    assert!(scalar_rel(noise.frobenius_sq(), 64000.0) < 0.05);
    let inst = SpikedInstance::generate(40, 0.0, 1.0, RngSeed::new(8), None).unwrap();
    assert!(scalar_rel(estimate_sigma_sq(&inst.tensor), 1.0) < 0.05);
    let tau = 40f64.powf(0.75);
    let inst = SpikedInstance::generate(40, tau, 2.0, RngSeed::new(9), None).unwrap();
    assert!(scalar_rel(estimate_sigma_sq(&inst.tensor), 4.0) < 0.06);
}

#[test]
fn mean_variance_estimate_over_trials() {
    let n = 32;
    let total: f64 = (0..200)
        .map(|s| {
            let inst = SpikedInstance::generate(n, 0.0, 1.5, RngSeed::new(1000 + s), None).unwrap();
            estimate_sigma_sq(&inst.tensor)
        })
        .sum();
    assert!(scalar_rel(total / 200.0, 2.25) < 0.01);
}

#[test]
fn smoothed_value_matches_monte_carlo() {
    let n = 6;
    let t = random_tensor(11, n);
    let x = gaussian_vec(12, n);
    let tt = 0.7;
    let (mc, se) = smoothed_mc(|p| naive_trilinear(&t, p, p, p), &x, tt, 200_000, 13);
    let closed = g_eval(&t, &x, tt).unwrap();
    assert!((closed - mc).abs() <= 4.0 * se, "closed {closed}, mc {mc} ± {se}");
}

#[test]
fn penalized_value_matches_monte_carlo() {
    let n = 6;
    let t = random_tensor(14, n);
    let x = gaussian_vec(15, n);
    let (tt, tau_hat) = (0.5, 3.0);
    let f_r = |p: &[f64]| naive_trilinear(&t, p, p, p) - 0.75 * tau_hat * norm_sq(p).powi(2);
    let (mc, se) = smoothed_mc(f_r, &x, tt, 200_000, 16);
    let closed = g_r_eval(&t, &x, tt, tau_hat).unwrap();
    assert!((closed - mc).abs() <= 4.0 * se, "closed {closed}, mc {mc} ± {se}");
}

#[test]
fn gradient_matches_finite_differences() {
    let n = 8;
    let t = random_tensor(17, n);
    let x = gaussian_vec(18, n);
    let fd = fd_gradient(|p| g_r_eval(&t, p, 0.3, 2.0).unwrap(), &x, 1e-5);
    assert!(rel_err(&g_r_grad(&t, &x, 0.3, 2.0).unwrap(), &fd) <= 1e-6);
}

#[test]
fn hessian_matches_finite_differences() {
    let n = 6;
    let t = random_tensor(19, n);
    let x = gaussian_vec(20, n);
    let fd = fd_hessian(|p| g_r_eval(&t, p, 0.4, 1.5).unwrap(), &x, 1e-4);
    let h = mat_rows(&g_r_hess(&t, &x, 0.4, 1.5).unwrap());
    assert!(mat_rel_err(&h, &fd) <= 1e-5, "rel err {}", mat_rel_err(&h, &fd));
}

#[test]
fn penalty_gradient_vanishes_at_scaled_dagger() {
    let n = 16;
    let t = random_tensor(21, n);
    let tau_hat = 2.0;
    let xd = x_dagger_scaled(&t, tau_hat).unwrap();
    let tt = 1e3;
    // the t^2 part of the gradient: z - 3 τ̂ (n + 2) x
    let z = t.mode_diag_sum();
    let part: Vec<f64> = z
        .iter()
        .zip(&xd)
        .map(|(a, b)| a - 3.0 * tau_hat * (n as f64 + 2.0) * b)
        .collect();
    assert!(norm_sq(&part).sqrt() <= 1e-8 * norm_sq(&z).sqrt());
    let g = g_r_grad(&t, &xd, tt, tau_hat).unwrap();
    assert!(norm_sq(&g).sqrt() <= 1e-8 * tt * tt * norm_sq(&z).sqrt());
}

#[test]
fn top_eig_matches_dense_eigendecomposition() {
    for s in 0..5 {
        let n = 8;
        let a = gaussian_vec(200 + s, n * n);
        let h = Mat::from_fn(n, |i, j| 0.5 * (a[i * n + j] + a[j * n + i]));
        let (lambda, b) = hessian_top_eig(&h, 1_000_000, 1e-11).unwrap();
        let dense = DMatrix::from_row_slice(n, n, h.as_slice());
        let eig = SymmetricEigen::new(dense);
        let (imax, &lmax) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        assert!((lambda - lmax).abs() < 1e-8, "{lambda} vs {lmax}");
        let col: Vec<f64> = eig.eigenvectors.column(imax).iter().copied().collect();
        assert!(dot(&col, &b).abs() > 1.0 - 1e-8);
    }
}

#[test]
fn u_norm_formula_by_exact_enumeration() {
    // u is linear in the entries: u_j = Σ_e c_{j,e} A_e, so E|u|^2 = m Σ c^2.
    let n = 2;
    let mut total = 0.0;
    for e in 0..n * n * n {
        let mut entries = vec![0.0; n * n * n];
        entries[e] = 1.0;
        let basis = Tensor3::from_entries(n, entries).unwrap();
        total += norm_sq(&basis.mode_diag_sum());
    }
    assert_eq!(total, 24.0);
    let [r, _] = u_moments(n, 1.0, 20_000, RngSeed::new(3)).unwrap();
    assert_eq!(r.theoretical, 24.0);
    assert!(scalar_rel(r.empirical, 24.0) < 0.05);
}
