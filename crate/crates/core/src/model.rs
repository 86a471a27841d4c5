//! The spiked tensor model `T = τ v⊗v⊗v + σ A` and recovery scoring.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::io::Sidecar;
use crate::linalg::{dot, norm, normalized};
use crate::rng::{unit_sphere, RngSeed};
use crate::tensor::Tensor3;

/// Stream of an instance seed used for the random signal direction.
pub const SIGNAL_STREAM: u64 = 0;
/// Stream of an instance seed used for the noise tensor.
pub const NOISE_STREAM: u64 = 1;

/// Correlation a recovered vector must reach to count as a success.
pub const SUCCESS_CORRELATION: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct SpikedInstance {
    pub n: usize,
    pub tau: f64,
    pub sigma: f64,
    pub v: Vec<f64>,
    pub seed: RngSeed,
    pub tensor: Tensor3,
}

impl SpikedInstance {
    /// Draws an instance. Without `v`, the signal is uniform on the sphere
    /// from the seed's signal stream; the noise always comes from the
    /// separate noise stream, so fixing `v` does not change the noise.
    pub fn generate(
        n: usize,
        tau: f64,
        sigma: f64,
        seed: RngSeed,
        v: Option<&[f64]>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("n must be at least 2, got {n}")));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be >= 0, got {tau}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
        }
        let v = match v {
            Some(v) => {
                check_dim(n, v.len())?;
                normalized(v, 0.0).ok_or_else(|| Error::invalid("signal vector is zero"))?
            }
            None => unit_sphere(&mut seed.with_stream(SIGNAL_STREAM).rng(), n),
        };
        let noise = Tensor3::sample_gaussian(n, 1.0, seed.with_stream(NOISE_STREAM))?;
        let tensor = Tensor3::rank_one(&v, tau)?.combine(&noise, 1.0, sigma)?;
        Ok(Self {
            n,
            tau,
            sigma,
            v,
            seed,
            tensor,
        })
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            n: self.n,
            tau: self.tau,
            sigma: self.sigma,
            seed: self.seed.seed,
            v: self.v.clone(),
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<Score> {
        score(x, &self.v)
    }
}

/// `||T||_F^2 / n^3`, the plug-in estimate of the noise variance.
pub fn estimate_sigma_sq(t: &Tensor3) -> f64 {
    t.frobenius_sq() / (t.dim() as f64).powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub correlation: f64,
    pub success: bool,
}

/// Signed correlation `<x, v> / (|x| |v|)`. The sign is kept: a vector
/// pointing at `-v` is a failure.
pub fn score(x: &[f64], v: &[f64]) -> Result<Score> {
    check_dim(v.len(), x.len())?;
    let (nx, nv) = (norm(x), norm(v));
    if nx == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cannot score a zero vector"));
    }
    let correlation = (dot(x, v) / (nx * nv)).clamp(-1.0, 1.0);
    Ok(Score {
        correlation,
        success: correlation >= SUCCESS_CORRELATION,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_signal_is_pure_noise() {
        let seed = RngSeed::new(99);
        let inst = SpikedInstance::generate(3, 0.0, 1.0, seed, None).unwrap();
        let noise = Tensor3::sample_gaussian(3, 1.0, seed.with_stream(NOISE_STREAM)).unwrap();
        assert_eq!(inst.tensor, noise);
        assert!((norm(&inst.v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planted_basis_signal() {
        let seed = RngSeed::new(4);
        let inst = SpikedInstance::generate(3, 7.0, 1.0, seed, Some(&[0.0, 1.0, 0.0])).unwrap();
        let noise = Tensor3::sample_gaussian(3, 1.0, seed.with_stream(NOISE_STREAM)).unwrap();
        assert_eq!(inst.tensor.get(1, 1, 1), 7.0 + noise.get(1, 1, 1));
        assert_eq!(inst.tensor.get(0, 1, 1), noise.get(0, 1, 1));
    }

    #[test]
    fn regeneration_is_bit_exact() {
        let a = SpikedInstance::generate(5, 3.0, 1.5, RngSeed::new(17), None).unwrap();
        let b = SpikedInstance::generate(5, 3.0, 1.5, RngSeed::new(17), None).unwrap();
        assert_eq!(a.tensor, b.tensor);
        assert_eq!(a.v, b.v);
    }

    #[test]
    fn generate_validates_arguments() {
        let s = RngSeed::new(0);
        assert!(SpikedInstance::generate(1, 1.0, 1.0, s, None).is_err());
        assert!(SpikedInstance::generate(3, -1.0, 1.0, s, None).is_err());
        assert!(SpikedInstance::generate(3, 1.0, 0.0, s, None).is_err());
        assert!(SpikedInstance::generate(3, 1.0, 1.0, s, Some(&[0.0; 3])).is_err());
        assert!(SpikedInstance::generate(3, 1.0, 1.0, s, Some(&[1.0; 2])).is_err());
    }

    #[test]
    fn sigma_estimate_of_pure_spike() {
        let mut v = vec![0.0; 40];
        v[3] = 1.0;
        let t = Tensor3::rank_one(&v, 10.0).unwrap();
        assert!((estimate_sigma_sq(&t) - 100.0 / 64000.0).abs() < 1e-15);
    }

    #[test]
    fn score_examples() {
        let v = [0.0, 1.0, 0.0];
        let s = score(&v, &v).unwrap();
        assert_eq!(s.correlation, 1.0);
        assert!(s.success);

        let s = score(&[1.0, 0.0, 0.0], &v).unwrap();
        assert_eq!(s.correlation, 0.0);
        assert!(!s.success);

        let x = [0.6, 0.8, 0.0];
        let s = score(&x, &v).unwrap();
        assert!((s.correlation - 0.8).abs() < 1e-15);
        assert!(s.success);

        let neg = score(&[0.0, -1.0, 0.0], &v).unwrap();
        assert_eq!(neg.correlation, -1.0);
        assert!(!neg.success);

        assert!(score(&[0.0; 3], &v).is_err());
    }
}
