//! Selective token-weighted knowledge distillation on tabular n-gram models.
//!
//! The crate is organised bottom-up:
//!
//! - [`prob`]: categorical primitives (softmax, top-k, Hellinger, sampling)
//! - [`divergence`]: FKL, RKL, skew KL and skew reverse KL with analytic
//!   logit gradients, plus sequence and mixed-batch losses
//! - [`verifier`]: per-token weights from Hellinger, greedy Top-k or Spec-k
//!   verification, and the token acceptance rate
//! - [`model`]: exactly differentiable n-gram teachers and students
//! - [`trainer`]: the selective training loop and its trace
//! - [`analysis`]: gradient checking, convergence, acceptance-rate,
//!   landscape and speculative-decoding studies
//! - [`config`] and [`cli`]: experiment files and the command-line front end
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod divergence;
pub mod error;
pub mod model;
pub mod prob;
pub mod rng;
pub mod trainer;
pub mod verifier;

pub use divergence::{DivergenceKind, TokenLoss};
pub use error::{Error, Result};
pub use model::{NGramModel, Optimizer, OptimizerConfig, Origin, Sequence};
pub use prob::{LogitVector, ProbVector, TokenId};
pub use trainer::{Objective, Schedule, TrainingConfig, TrainingTrace};
pub use verifier::{VerificationOutcome, VerifierConfig, VerifierMode};
