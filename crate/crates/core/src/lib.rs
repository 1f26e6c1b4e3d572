//! Training-time preparation for future machine unlearning.
//!
//! The crate trains small differentiable models (an MLP classifier and a
//! fixed-context character language model) either normally, with one of
//! several memorisation-reducing baselines, or with the dual-loop
//! unlearning-readiness trainer; runs gradient-ascent unlearning and
//! recovery fine-tuning; and measures forgetting speed, utility retention,
//! and resistance to relearning.
//!
//! All numeric code is generic over [`Scalar`]; the aliases at the crate root
//! fix it to `f64`, which the gradient checks and reproducibility
//! guarantees assume.

pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod prepare;
pub mod rng;
pub mod scalar;
pub mod unlearn;
pub mod vector;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use vector::Vector;

pub type Vec64 = vector::Vector<f64>;
pub type Params64 = models::ParamState<f64>;
pub type Batch64 = models::Batch<f64>;
pub type Dataset64 = data::LabeledDataset<f64>;
pub type Partition64 = data::RiskPartition<f64>;
pub type MetaHyper64 = prepare::MetaHyper<f64>;
pub type TrainerKind64 = prepare::TrainerKind<f64>;
pub type Trajectory64 = unlearn::Trajectory<f64>;
