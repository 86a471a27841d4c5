//! Tensor PCA in the spiked model `T = τ v⊗v⊗v + σ A`.
//!
//! Recovery by homotopy-initialized power iteration, its noise-injection
//! variant and full homotopy continuation on a penalized smoothed
//! objective, with power-method and flattening baselines, numerical
//! diagnostics and an experiment harness.

pub mod algorithms;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod rng;
pub mod tensor;

pub use algorithms::{AlgorithmTag, HomotopySchedule, RecoveryTrace};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use model::{Score, SpikedInstance};
pub use objective::{PenalizedObjective, SmoothedEval};
pub use rng::RngSeed;
pub use tensor::Tensor3;
