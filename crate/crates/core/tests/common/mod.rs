#![allow(dead_code)]

use tpca_core::linalg::{dot, norm, Mat};
use tpca_core::rng::{fill_normal, unit_sphere};
use tpca_core::{RngSeed, Tensor3};

pub fn gaussian_vec(seed: u64, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    fill_normal(&mut RngSeed::new(seed).with_stream(77).rng(), 1.0, &mut x);
    x
}

pub fn unit_vec(seed: u64, n: usize) -> Vec<f64> {
    unit_sphere(&mut RngSeed::new(seed).with_stream(78).rng(), n)
}

pub fn random_tensor(seed: u64, n: usize) -> Tensor3 {
    Tensor3::sample_gaussian(n, 1.0, RngSeed::new(seed).with_stream(79)).unwrap()
}

/// Unit vector orthogonal to the unit vector `v`.
pub fn orthogonal_unit(seed: u64, v: &[f64]) -> Vec<f64> {
    let mut w = unit_vec(seed, v.len());
    let c = dot(&w, v);
    w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
    let len = norm(&w);
    w.iter().map(|a| a / len).collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / norm(b).max(1e-300)
}

pub fn scalar_rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn naive_trilinear(t: &Tensor3, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let n = t.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                s += t.get(i, j, k) * x[i] * y[j] * z[k];
            }
        }
    }
    s
}

pub fn naive_sym_vec(t: &Tensor3, x: &[f64]) -> Vec<f64> {
    let n = t.dim();
    (0..n)
        .map(|l| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += (t.get(i, j, l) + t.get(i, l, j) + t.get(l, i, j)) * x[i] * x[j];
                }
            }
            s
        })
        .collect()
}

pub fn naive_sym_matrix(t: &Tensor3, x: &[f64]) -> Vec<Vec<f64>> {
    let n = t.dim();
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            for i in 0..n {
                m[j][k] += x[i] * (t.get(i, j, k) + t.get(j, i, k) + t.get(j, k, i));
            }
        }
    }
    let mut s = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            s[j][k] = 0.5 * (m[j][k] + m[k][j]);
        }
    }
    s
}

pub fn naive_diag_sum(t: &Tensor3) -> Vec<f64> {
    let n = t.dim();
    (0..n)
        .map(|j| (0..n).map(|i| t.get(i, i, j) + t.get(i, j, i) + t.get(j, i, i)).sum())
        .collect()
}

/// `(M Mᵀ) w` with the `n × n²` flattening built explicitly.
pub fn materialized_gram(t: &Tensor3, w: &[f64]) -> Vec<f64> {
    let n = t.dim();
    let flat: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(n * n);
            for j in 0..n {
                for k in 0..n {
                    row.push(t.get(i, j, k));
                }
            }
            row
        })
        .collect();
    let y: Vec<f64> = (0..n * n).map(|c| (0..n).map(|i| flat[i][c] * w[i]).sum()).collect();
    flat.iter().map(|row| dot(row, &y)).collect()
}

pub fn mat_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.dim()).map(|i| m.row(i).to_vec()).collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a gradient map, symmetrized.
pub fn fd_jacobian(g: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[j] += h;
            m[j] -= h;
            let (gp, gm) = (g(&p), g(&m));
            gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        })
        .collect();
    (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (cols[j][i] + cols[i][j])).collect())
        .collect()
}

/// Central second differences of a scalar function.
pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let at = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut p = x.to_vec();
        p[di] += si * h;
        p[dj] += sj * h;
        f(&p)
    };
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0)
                        + at(i, -1.0, j, -1.0))
                        / (4.0 * h * h)
                })
                .collect()
        })
        .collect()
}

/// Relative Frobenius error of `a` against `b`.
pub fn mat_rel_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let fa: Vec<f64> = a.iter().flatten().copied().collect();
    let fb: Vec<f64> = b.iter().flatten().copied().collect();
    rel_err(&fa, &fb)
}

/// Mean and standard error of `samples`.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Monte-Carlo estimate of `E_y f(x + t y)`, `y ~ N(0, I)`: (mean, standard error).
pub fn smoothed_mc(f: impl Fn(&[f64]) -> f64, x: &[f64], t: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = RngSeed::new(seed).with_stream(80).rng();
    let mut y = vec![0.0; x.len()];
    let mut p = vec![0.0; x.len()];
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            fill_normal(&mut rng, 1.0, &mut y);
            for i in 0..x.len() {
                p[i] = x[i] + t * y[i];
            }
            f(&p)
        })
        .collect();
    mean_se(&values)
}
