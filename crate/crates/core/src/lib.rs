//! Zero-shot classification by nearest projected class prototype.
//!
//! Class semantic vectors (word embeddings or attribute vectors) and
//! instance feature vectors are embedded in a common space by a small
//! trainable projection network. Training runs in two stages: an inductive
//! stage fitted on labeled seen-class instances, followed by a transductive
//! stage that additionally exploits unlabeled test instances through a
//! pseudo-labeled triplet loss, a prediction-skewness (hubness) loss and an
//! unseen-class unbiasing loss. Inference picks the class whose projected
//! prototype is nearest.
//!
//! Modules:
//! - [`store`]: embedding and semantic tables, CSV interchange, synthetic benchmark
//! - [`encoder`]: frozen permutation-invariant point-set encoder used by the benchmark
//! - [`net`]: the projection network, analytic gradients, Adam
//! - [`losses`]: objective terms and anchor selection rules
//! - [`trainer`]: inductive and transductive training loops
//! - [`eval`]: ZSL / GZSL inference, accuracy, harmonic mean, hubness diagnostics

pub mod encoder;
pub mod error;
pub mod eval;
pub mod losses;
pub mod net;
pub mod store;
pub mod trainer;

pub use error::{Result, ZslError};
