//! Dual-kernel marked Hawkes model of user return behavior.
//!
//! Each user returns to a platform according to a Hawkes process whose
//! trigger kernel has a fast, moreishness-driven component and a slow,
//! utility-driven one. The crate covers exact likelihood evaluation, trace
//! simulation, maximum-likelihood recovery of the two user embeddings,
//! utility-based ranking, and the synthetic experiments built on top of them.

pub mod error;
pub mod estimate;
pub mod experiment;
pub mod io;
pub mod model;
pub mod rank;
pub mod seed;
pub mod simulate;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use estimate::{fit, FitConfig, FitReport, ParamErrors};
pub use model::{log_likelihood, log_likelihood_gradient, EpochTrace, ItemCatalog, ModelParams, SessionRecord};
pub use rank::{rank_items, set_utility, RankResult};
pub use simulate::{simulate_epoch, simulate_epochs, SimConfig};
