//! Fixtures shared by the benchmarks.

use tpca_core::{RngSeed, SpikedInstance};

/// Dimensions swept by the kernel benchmarks.
pub const DIMS: [usize; 3] = [32, 64, 128];

/// A spiked instance at `tau = alpha n^{3/4}` with a fixed seed.
pub fn instance(n: usize, alpha: f64) -> SpikedInstance {
    let tau = alpha * (n as f64).powf(0.75);
    SpikedInstance::generate(n, tau, 1.0, RngSeed::new(n as u64), None).expect("valid instance")
}
