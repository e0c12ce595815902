//! Hierarchical two-head language classification.
//!
//! A shared trunk feeds a family head and a language head; family logits
//! are added to the logits of their member languages so the language
//! decision attends to the model's own family prediction. Training uses a
//! prior-weighted joint cross-entropy, ADADELTA updates and
//! generalization-loss early stopping with rollback. Baselines (cosine
//! scoring, logistic regression), linear preprocessing (WCCN, LDA, PCA) and
//! NIST-style detection costs complete the evaluation side.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the command
//! line and experiment drivers live in the `staircase` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backends;
pub mod data;
pub mod error;
pub mod haus;
pub mod metrics;
pub mod net;
pub mod objective;
pub mod optim;
pub mod seeds;
pub mod taxonomy;

pub use data::{Dataset, Sample, SynthSpec};
pub use error::{Error, Result};
pub use haus::{Architecture, Coupling, HausModel, HausOutput, Targets};
pub use objective::{PriorMode, WeightTable};
pub use optim::{TrainConfig, TrainHistory, Weighting};
pub use taxonomy::Taxonomy;
