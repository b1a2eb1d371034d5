//! Neural networks with random weights (NNRW) for classification.
//!
//! Two hidden-layer designs are supported:
//!
//! - **baseline**: `M` hidden units, each `g(a_i · x + b_i)` with its own
//!   random weight vector;
//! - **efficient**: `P` random primary units `p_i = a_i · x + b_i` feeding
//!   `M` secondary units `g(p_i + p_j)` chosen by a τ-stride
//!   [`pairing::PairingPlan`]. Inference costs `N·P + M·Q` multiply-accumulates
//!   instead of `(N + Q)·M`.
//!
//! Output weights are solved in closed form ([`solver`]); [`harness`] runs
//! multi-trial benchmark sweeps and writes plot-ready CSV reports.

pub mod costing;
pub mod data;
pub mod error;
pub mod format;
pub mod harness;
pub mod model;
pub mod pairing;
pub mod solver;

pub use data::{Dataset, Delimiter, LabelColumn, Normalization};
pub use error::{Error, Result};
pub use model::{Activation, DesignTag, Distribution, ModelDesign, Network, PrimaryLayer};
pub use pairing::PairingPlan;
pub use solver::{DesignSpec, ModelConfig, OutputWeights, SolveMethod, SolverSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG stream for primary weights and biases.
pub const WEIGHT_STREAM: u64 = 0;
/// RNG stream for train/test partitions.
pub const SPLIT_STREAM: u64 = 1;

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
