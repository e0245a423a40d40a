//! Training, evaluation, experiment protocols and the bag-of-words
//! baseline.

mod baseline;
mod data;
mod experiment;
mod fit;
mod metrics;
mod preset;

#[cfg(test)]
mod tests;

use thiserror::Error;

use crate::blocks::BlockError;
use crate::tensor::TensorError;

pub use baseline::{run_baseline, svm_objective, svm_train, LinearSvm, SparseVec, SvmConfig, Tfidf, DEFAULT_C};
pub use data::{
    common_dim, few_shot_mix, few_shot_sample, injected_count, join_examples, pad_batch, truncate, Example, Splits,
};
pub use experiment::{
    few_shot_sweep, run_experiment, ExperimentData, ExperimentSpec, Protocol, RunRecord, SetSizes, Timing, TrainSpec,
    FEW_SHOT_GRID,
};
pub use fit::{argmax, evaluate, logits, predict, train, EpochRecord, TrainConfig, TrainOutcome};
pub use metrics::{f1, positive_scores, Confusion, MetricsReport};
pub use preset::{Preset, PresetId, PRESETS};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("id {id:?} missing from the {origin}")]
    MissingId { id: String, origin: &'static str },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("protocol {0} needs target-language data")]
    MissingTarget(String),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
