//! Dense third-order tensors and the contraction kernels built on them.
//!
//! Entries are stored row-major with `k` fastest: entry `(i, j, k)` lives at
//! `(i * n + j) * n + k`. No symmetry is assumed or imposed; `T_ijk`, `T_jik`
//! and `T_kij` are independent values.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Mat};
use crate::rng::{fill_normal, RngSeed};

/// Dimensions above this log a memory warning.
pub const WARN_DIM: usize = 320;
/// Default hard cap on the dimension (n^3 doubles = 1 GiB at 512).
pub const DEFAULT_MAX_DIM: usize = 512;

static MAX_DIM: AtomicUsize = AtomicUsize::new(DEFAULT_MAX_DIM);

/// Current dimension cap applied by every tensor constructor.
pub fn max_dim() -> usize {
    MAX_DIM.load(Ordering::Relaxed)
}

/// Raises (or lowers) the dimension cap for the whole process.
pub fn set_max_dim(cap: usize) {
    MAX_DIM.store(cap.max(1), Ordering::Relaxed);
}

/// Checks `n` against the desk-scale limits.
pub fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("tensor dimension must be positive"));
    }
    let cap = max_dim();
    if n > cap {
        return Err(Error::ResourceGuard(format!(
            "dimension {n} exceeds the cap of {cap} ({} MiB of entries)",
            (n as u128).pow(3) * 8 / (1 << 20)
        )));
    }
    if n > WARN_DIM {
        log::warn!(
            "tensor dimension {n} needs {} MiB",
            (n as u128).pow(3) * 8 / (1 << 20)
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    n: usize,
    entries: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Result<Self> {
        check_size(n)?;
        Ok(Self {
            n,
            entries: vec![0.0; n * n * n],
        })
    }

    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        check_size(n)?;
        check_dim(n * n * n, entries.len())?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor entries must be finite"));
        }
        Ok(Self { n, entries })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut entries = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    entries.push(f(i, j, k));
                }
            }
        }
        Self::from_entries(n, entries)
    }

    /// iid `N(0, variance)` entries drawn from `seed`.
    pub fn sample_gaussian(n: usize, variance: f64, seed: RngSeed) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!(
                "variance must be positive, got {variance}"
            )));
        }
        let mut t = Self::zeros(n)?;
        t.refill_gaussian(variance.sqrt(), seed);
        Ok(t)
    }

    /// Overwrites all entries with `N(0, std_dev^2)` draws from `seed`,
    /// reusing the allocation. Produces the same entries as
    /// [`Tensor3::sample_gaussian`] with `variance = std_dev^2`.
    pub fn refill_gaussian(&mut self, std_dev: f64, seed: RngSeed) {
        let mut rng = seed.rng();
        fill_normal(&mut rng, std_dev, &mut self.entries);
    }

    /// `scale * v ⊗ v ⊗ v`
    pub fn rank_one(v: &[f64], scale: f64) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) || !scale.is_finite() {
            return Err(Error::invalid("rank-one factors must be finite"));
        }
        let n = v.len();
        check_size(n)?;
        let mut entries = Vec::with_capacity(n * n * n);
        for &vi in v {
            for &vj in v {
                let sij = scale * vi * vj;
                entries.extend(v.iter().map(|&vk| sij * vk));
            }
        }
        Ok(Self { n, entries })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries[(i * self.n + j) * self.n + k]
    }

    /// The contiguous fiber `T(i, j, :)`.
    fn fiber(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.n + j) * self.n;
        &self.entries[start..start + self.n]
    }

    /// Entrywise `a * self + b * other`.
    pub fn combine(&self, other: &Tensor3, a: f64, b: f64) -> Result<Tensor3> {
        check_dim(self.n, other.n)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Tensor3 { n: self.n, entries })
    }

    /// `T(x, y, z) = Σ T_ijk x_i y_j z_k`
    pub fn trilinear(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
        check_dim(self.n, x.len())?;
        check_dim(self.n, y.len())?;
        check_dim(self.n, z.len())?;
        let mut total = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let mut row = 0.0;
            for (j, &yj) in y.iter().enumerate() {
                row += yj * dot(self.fiber(i, j), z);
            }
            total += xi * row;
        }
        Ok(total)
    }

    /// `T(x, x, :) + T(x, :, x) + T(:, x, x)`.
    ///
    /// This is the gradient of `x ↦ T(x, x, x)` and the unnormalized tensor
    /// power update.
    pub fn sym_contract_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, x.len())?;
        let n = self.n;
        let mut out = vec![0.0; n];
        let mut first = vec![0.0; n];
        for i in 0..n {
            let xi = x[i];
            for j in 0..n {
                let xj = x[j];
                let fiber = self.fiber(i, j);
                let d = dot(fiber, x);
                // T(x, :, x)_j and T(:, x, x)_i
                out[j] += xi * d;
                out[i] += xj * d;
                // T(x, x, :)
                let a = xi * xj;
                for (f, t) in first.iter_mut().zip(fiber) {
                    *f += a * t;
                }
            }
        }
        for (o, f) in out.iter_mut().zip(&first) {
            *o += f;
        }
        Ok(out)
    }

    /// `P_sym[T(x, :, :) + T(:, x, :) + T(:, :, x)]`, i.e. half the Hessian
    /// of `x ↦ T(x, x, x)`. The result is exactly symmetric.
    pub fn sym_contract_matrix(&self, x: &[f64]) -> Result<Mat> {
        check_dim(self.n, x.len())?;
        let n = self.n;
        let mut m = Mat::zeros(n);
        for p in 0..n {
            for q in 0..n {
                let fiber = self.fiber(p, q);
                // T(:, :, x)_{pq}
                m[(p, q)] += dot(fiber, x);
                // T(x, :, :)_{q,·} gets x_p * T(p, q, ·)
                let xp = x[p];
                for (k, t) in fiber.iter().enumerate() {
                    m[(q, k)] += xp * t;
                }
                // T(:, x, :)_{p,·} gets x_q * T(p, q, ·)
                let xq = x[q];
                for (k, t) in fiber.iter().enumerate() {
                    m[(p, k)] += xq * t;
                }
            }
        }
        m.symmetrize();
        Ok(m)
    }

    /// `z_j = Σ_i (T_iij + T_iji + T_jii)`.
    pub fn mode_diag_sum(&self) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| self.get(i, i, j) + self.get(i, j, i) + self.get(j, i, i))
                    .sum()
            })
            .collect()
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }

    /// `(M M^T) w` for the n×n² unfolding `M_{i,(j,k)} = T_ijk`, computed in
    /// two passes without forming `M M^T`.
    pub fn flatten_gram_matvec(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, w.len())?;
        let n = self.n;
        let nn = n * n;
        // y = M^T w, indexed by (j, k)
        let mut y = vec![0.0; nn];
        for (i, &wi) in w.iter().enumerate() {
            let slab = &self.entries[i * nn..(i + 1) * nn];
            for (yjk, t) in y.iter_mut().zip(slab) {
                *yjk += wi * t;
            }
        }
        Ok((0..n)
            .map(|i| dot(&self.entries[i * nn..(i + 1) * nn], &y))
            .collect())
    }
}
