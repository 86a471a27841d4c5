//! Power iteration with noise injection.
//!
//! Draw `B^0, ..., B^{m-1}` with iid `N(0, m)` entries, let `B̄` be their
//! mean and use `T^p = T - B̄ + B^p` at step `p`. The `T^p` are jointly
//! distributed like `τ v⊗3` plus independent `N(0, m)` noise tensors.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{homotopy_start, power_step, AlgorithmTag, RecoveryTrace, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::distance;
use crate::rng::RngSeed;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionOptions {
    /// Regenerate each `B^p` from its sub-seed when needed instead of
    /// holding all `m` tensors.
    pub streaming: bool,
    /// Largest `m n^3` stored when `streaming` is off.
    pub budget_entries: usize,
    pub tol: f64,
}

impl Default for InjectionOptions {
    fn default() -> Self {
        Self {
            streaming: true,
            budget_entries: 1 << 28,
            tol: DEFAULT_TOL,
        }
    }
}

/// The injected sequence `T^0, ..., T^{m-1}` for one tensor and seed.
#[derive(Debug, Clone)]
pub struct InjectionSequence {
    base: Tensor3,
    stored: Option<Vec<Tensor3>>,
    m: usize,
    seed: RngSeed,
}

impl InjectionSequence {
    pub fn new(t: &Tensor3, m: usize, seed: RngSeed, opts: &InjectionOptions) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("injection needs m >= 2, got {m}")));
        }
        let n = t.dim();
        let total = m.saturating_mul(n * n * n);
        if !opts.streaming && total > opts.budget_entries {
            return Err(Error::ResourceGuard(format!(
                "storing {m} injected tensors needs {total} entries, budget is {}",
                opts.budget_entries
            )));
        }
        let std_dev = (m as f64).sqrt();
        let mut sum = Tensor3::zeros(n)?;
        let mut stored = (!opts.streaming).then(Vec::new);
        let mut scratch = Tensor3::zeros(n)?;
        for p in 0..m {
            scratch.refill_gaussian(std_dev, Self::draw_seed(seed, p));
            for (s, b) in sum.entries_mut().iter_mut().zip(scratch.entries()) {
                *s += b;
            }
            if let Some(list) = stored.as_mut() {
                list.push(scratch.clone());
            }
        }
        let inv_m = 1.0 / m as f64;
        // base = T - B̄, reusing the sum buffer
        for (s, x) in sum.entries_mut().iter_mut().zip(t.entries()) {
            *s = x - *s * inv_m;
        }
        Ok(Self {
            base: sum,
            stored,
            m,
            seed,
        })
    }

    fn draw_seed(seed: RngSeed, p: usize) -> RngSeed {
        seed.child(p as u64)
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes `T^p` into `out` (which must have the right dimension).
    pub fn fill(&self, p: usize, out: &mut Tensor3) -> Result<()> {
        if p >= self.m {
            return Err(Error::invalid(format!("injection index {p} >= m = {}", self.m)));
        }
        crate::error::check_dim(self.base.dim(), out.dim())?;
        match &self.stored {
            Some(list) => out.entries_mut().copy_from_slice(list[p].entries()),
            None => out.refill_gaussian((self.m as f64).sqrt(), Self::draw_seed(self.seed, p)),
        }
        for (o, b) in out.entries_mut().iter_mut().zip(self.base.entries()) {
            *o += b;
        }
        Ok(())
    }

    pub fn tensor(&self, p: usize) -> Result<Tensor3> {
        let mut out = Tensor3::zeros(self.base.dim())?;
        self.fill(p, &mut out)?;
        Ok(out)
    }
}

/// Homotopy-initialized power iteration on the injected sequence. Starts
/// from `z(T^0) / |z(T^0)|`, step `k` uses `T^{k+1}`, and the result is
/// `x^{m-1}` after exactly `m - 1` steps.
pub fn noise_injected_pca(
    t: &Tensor3,
    m: usize,
    seed: RngSeed,
    opts: &InjectionOptions,
) -> Result<RecoveryTrace> {
    let start = Instant::now();
    let seq = InjectionSequence::new(t, m, seed, opts)?;
    let mut current = seq.tensor(0)?;
    let mut iterates = vec![homotopy_start(&current, seed.with_stream(1))?];
    for p in 1..m {
        seq.fill(p, &mut current)?;
        let next = power_step(&current, iterates.last().unwrap())?;
        iterates.push(next);
    }
    let k = iterates.len();
    let converged = distance(&iterates[k - 1], &iterates[k - 2]) <= opts.tol;
    Ok(RecoveryTrace {
        algorithm: AlgorithmTag::NoiseInject,
        iterates,
        correlations: None,
        converged,
        iterations_used: m - 1,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
