//! Reproducible random streams.
//!
//! Every random quantity in the crate is drawn from a [`RngSeed`], a
//! `(seed, stream)` pair backed by ChaCha8. Distinct streams of one seed are
//! independent, and [`RngSeed::child`] derives fresh seeds for nested work
//! (grid cell, trial, injected tensor), so parallel runs never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub const fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub const fn with_stream(self, stream: u64) -> Self {
        Self {
            seed: self.seed,
            stream,
        }
    }

    /// A new seed derived from this one and `index`. The stream is reset to 0.
    pub fn child(self, index: u64) -> Self {
        let a = mix64(self.seed ^ 0x6A09_E667_F3BC_C908);
        let b = mix64(self.stream.wrapping_add(0x9E37_79B9_7F4A_7C15));
        let c = mix64(index.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(1));
        Self::new(mix64(a ^ b.rotate_left(17) ^ c.rotate_left(41)))
    }

    pub fn rng(self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed::new(seed)
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn standard_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_normal(rng: &mut StreamRng, std_dev: f64, out: &mut [f64]) {
    for slot in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *slot = std_dev * z;
    }
}

/// Uniform point on the unit sphere S^{n-1} (normalized Gaussian).
pub fn unit_sphere(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; n];
        fill_normal(rng, 1.0, &mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}
