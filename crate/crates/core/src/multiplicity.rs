//! Estimating how many devices collided on a preamble.
//!
//! The observable is the vector of per-AP receive energies after matched
//! filtering. Two estimators are provided:
//!
//! * a feed-forward neural classifier over the descending-sorted energy
//!   profile ([`MlpModel`]), trained full-batch with scaled conjugate
//!   gradient ([`scg`]),
//! * a threshold energy detector ([`TedModel`]) that compares the average
//!   normalized energy against per-class thresholds.
//!
//! Both treat multiplicities 0..=t_max as classes; slots with more devices
//! than t_max on one preamble are rare enough to be excluded from training.

mod confusion;
mod dataset;
mod mlp;
pub mod scg;
mod ted;
mod train;

pub use confusion::ConfusionMatrix;
pub use dataset::{gen_dataset, Dataset, Split};
pub use mlp::{
    build_input, fit_normalizer, loss_and_grad, loss_only, normalized_split, FeatureVector,
    MlpModel, Normalizer, NormalizerKind,
};
pub use ted::{fit_ted, TedModel};
pub use train::{train_scg, EpochRecord, StopReason, TrainConfig, TrainHistory};
