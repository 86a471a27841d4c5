//! Recovery procedures for the spiked tensor model.
//!
//! * [`homotopy_pca`]: power iteration started at the infinitely smoothed
//!   maximizer `z / |z|`.
//! * [`noise_injected_pca`]: the same, with fresh-looking noise injected at
//!   every step so iterates are independent of the noise they meet.
//! * [`homotopy_full`]: continuation on the penalized smoothed objective,
//!   following local maximizers as the smoothing radius shrinks to zero.
//! * [`power_random`] and [`flatten_method`]: baselines.

mod ascent;
mod flatten;
mod homotopy;
mod injection;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use ascent::{local_maximize_gr, AscentOptions, AscentOutcome};
pub use flatten::flatten_method;
pub use homotopy::{
    homotopy_full, homotopy_stages, HomotopySchedule, StageOutcome, StallPolicy,
};
pub use injection::{noise_injected_pca, InjectionOptions, InjectionSequence};

use crate::error::{Error, Result};
use crate::linalg::{distance, normalized};
use crate::model::score;
use crate::objective::{f_eval, x_dagger_unit};
use crate::rng::{unit_sphere, RngSeed};
use crate::tensor::Tensor3;

/// Contractions at or below this norm cannot be normalized.
pub const DEGENERATE_NORM: f64 = 1e-14;

/// Default convergence tolerance on `|x^{k+1} - x^k|`.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Number of probes used by [`estimate_tau_hat`].
pub const TAU_HAT_PROBES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmTag {
    Homotopy,
    NoiseInject,
    Power,
    Flatten,
    FullHomotopy,
}

impl AlgorithmTag {
    pub const ALL: [AlgorithmTag; 5] = [
        AlgorithmTag::Homotopy,
        AlgorithmTag::NoiseInject,
        AlgorithmTag::Power,
        AlgorithmTag::Flatten,
        AlgorithmTag::FullHomotopy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmTag::Homotopy => "homotopy",
            AlgorithmTag::NoiseInject => "noise-inject",
            AlgorithmTag::Power => "power",
            AlgorithmTag::Flatten => "flatten",
            AlgorithmTag::FullHomotopy => "full-homotopy",
        }
    }

    /// Algorithms that run a fixed number of steps instead of iterating to
    /// convergence.
    pub fn is_fixed_length(self) -> bool {
        matches!(self, AlgorithmTag::NoiseInject | AlgorithmTag::FullHomotopy)
    }
}

impl fmt::Display for AlgorithmTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmTag::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm tag {s:?}")))
    }
}

/// The iterate sequence of one recovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTrace {
    pub algorithm: AlgorithmTag,
    /// `x^0, x^1, ...`; every entry has unit norm.
    pub iterates: Vec<Vec<f64>>,
    /// `<x^k, v>` per iterate, filled in by [`RecoveryTrace::with_truth`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations_used: usize,
    pub wall_time: f64,
}

impl RecoveryTrace {
    pub fn last(&self) -> &[f64] {
        self.iterates.last().expect("trace has at least one iterate")
    }

    pub fn with_truth(mut self, v: &[f64]) -> Result<Self> {
        let corr = self
            .iterates
            .iter()
            .map(|x| score(x, v).map(|s| s.correlation))
            .collect::<Result<Vec<_>>>()?;
        self.correlations = Some(corr);
        Ok(self)
    }

    pub fn final_correlation(&self) -> Option<f64> {
        self.correlations.as_ref().and_then(|c| c.last().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Start used when the diagonal-sum vector is exactly zero.
    pub fallback_seed: RngSeed,
}

impl PowerOptions {
    pub fn new(max_iter: usize, tol: f64) -> Self {
        Self {
            max_iter,
            tol,
            fallback_seed: RngSeed::new(0),
        }
    }

    /// `max(8, ceil(3 log2 log2 n))` iterations with tolerance `1e-8`.
    pub fn for_dim(n: usize) -> Self {
        Self::new(default_max_iter(n), DEFAULT_TOL)
    }
}

pub fn default_max_iter(n: usize) -> usize {
    let ll = (n.max(4) as f64).log2().log2();
    8usize.max((3.0 * ll).ceil() as usize)
}

/// One tensor power step, `normalize(T(x,x,:) + T(x,:,x) + T(:,x,x))`.
pub fn power_step(t: &Tensor3, x: &[f64]) -> Result<Vec<f64>> {
    let y = t.sym_contract_vec(x)?;
    normalized(&y, DEGENERATE_NORM)
        .ok_or_else(|| Error::Degenerate("power step contracted to (near) zero".into()))
}

struct Iteration {
    iterates: Vec<Vec<f64>>,
    converged: bool,
    iterations_used: usize,
}

/// Runs `step` from `x0` until two consecutive iterates are within `tol`
/// or `max_iter` steps were taken.
fn iterate_until_stable(
    x0: Vec<f64>,
    max_iter: usize,
    tol: f64,
    mut step: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Iteration> {
    let mut iterates = vec![x0];
    let mut converged = false;
    for _ in 0..max_iter {
        let prev = iterates.last().unwrap();
        let next = step(prev)?;
        let moved = distance(&next, prev);
        iterates.push(next);
        if moved <= tol {
            converged = true;
            break;
        }
    }
    Ok(Iteration {
        iterations_used: iterates.len() - 1,
        iterates,
        converged,
    })
}

fn check_power_options(opts: &PowerOptions) -> Result<()> {
    if !(opts.tol >= 0.0) {
        return Err(Error::invalid(format!("tolerance must be >= 0, got {}", opts.tol)));
    }
    Ok(())
}

/// `z / |z|`, falling back to a random unit start when `z = 0`.
pub(crate) fn homotopy_start(t: &Tensor3, fallback: RngSeed) -> Result<Vec<f64>> {
    match x_dagger_unit(t) {
        Ok(x) => Ok(x),
        Err(Error::Degenerate(_)) => {
            log::warn!("diagonal-sum vector is zero; starting from a random unit vector");
            Ok(unit_sphere(&mut fallback.rng(), t.dim()))
        }
        Err(e) => Err(e),
    }
}

/// Power iteration initialized at `z / |z|`.
pub fn homotopy_pca(t: &Tensor3, opts: PowerOptions) -> Result<RecoveryTrace> {
    check_power_options(&opts)?;
    let start = Instant::now();
    let x0 = homotopy_start(t, opts.fallback_seed)?;
    let run = iterate_until_stable(x0, opts.max_iter, opts.tol, |x| power_step(t, x))?;
    Ok(RecoveryTrace {
        algorithm: AlgorithmTag::Homotopy,
        iterates: run.iterates,
        correlations: None,
        converged: run.converged,
        iterations_used: run.iterations_used,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Power iteration from a uniformly random unit vector.
pub fn power_random(t: &Tensor3, seed: RngSeed, opts: PowerOptions) -> Result<RecoveryTrace> {
    check_power_options(&opts)?;
    let start = Instant::now();
    let x0 = unit_sphere(&mut seed.rng(), t.dim());
    let run = iterate_until_stable(x0, opts.max_iter, opts.tol, |x| power_step(t, x))?;
    Ok(RecoveryTrace {
        algorithm: AlgorithmTag::Power,
        iterates: run.iterates,
        correlations: None,
        converged: run.converged,
        iterations_used: run.iterations_used,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Penalty coefficient for the penalized objective when `τ` is unknown:
/// the largest `T(x, x, x)` over power-iteration probes (one from `z/|z|`,
/// the rest random), floored at 1.
pub fn estimate_tau_hat(t: &Tensor3, seed: RngSeed) -> Result<f64> {
    let opts = PowerOptions::for_dim(t.dim());
    let mut best = 1.0f64;
    for probe in 0..TAU_HAT_PROBES {
        let run = if probe == 0 {
            homotopy_pca(t, opts)
        } else {
            power_random(t, seed.child(probe as u64), opts)
        };
        match run {
            Ok(trace) => best = best.max(f_eval(t, trace.last())?),
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}
