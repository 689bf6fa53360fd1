//! Training, grid search, evaluation protocol and analysis reports.

mod analysis;
mod dataset;
mod gradcheck;
mod metrics;
mod runner;

pub use analysis::{
    consistency_report, context_width_report, cue_report, ConsistencyReport, Cue, CueInstance, Provenance, WidthBucket,
    WidthItem,
};
pub use dataset::{class_weights, Dataset, PairInstance, SentenceInstance};
pub use gradcheck::{gradcheck_document, gradient_check, GRADCHECK_FLOOR, GRADCHECK_STEP};
pub use metrics::{evaluate_events, evaluate_relations, EvalReport, EventKey, GoldPair, PairKey, Prf, Setting};
pub use runner::{
    detect_events, evaluate_model, grid_cells, grid_search, predict_pair, select_best, train, EpochRecord, GridResult,
    Phase, RunSettings, TrainConfig, TrainOutcome,
};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::encoder::EncoderError;
use crate::graph::GraphError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training split has no sentences")]
    EmptyTrainingSet,
    #[error("training split has no relation instances for the joint phase")]
    NoPairs,
    #[error("grid has no cells")]
    EmptyGrid,
    #[error("prediction for unknown pair {0:?}")]
    UnknownPair(PairKey),
    #[error("no prediction for gold pair {0:?} in the gold-mention setting")]
    MissingPrediction(PairKey),
    #[error("label {0} is not part of the label scheme")]
    LabelOutsideScheme(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T> = std::result::Result<T, TrainError>;
