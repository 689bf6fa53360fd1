//! Syntax-guided graph transformer for joint event detection and temporal
//! relation extraction.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors, a reverse-mode tape, Adam.
//! - [`corpus`]: CoNLL-U and annotation ingestion, vocabularies, statistics,
//!   and a templated synthetic corpus generator.
//! - [`graph`]: one- or two-sentence dependency graphs and the triple sets
//!   (neighbor triples, dependency path, path-node context) both attentions
//!   consume.
//! - [`encoder`]: per-token context vectors (embedding or precomputed vector
//!   concatenated with a POS one-hot).
//! - [`model`]: node initialization, graph self-attention, syntax-guided
//!   attention, fusion, the residual/LayerNorm stack and both heads.
//! - [`train`]: two-phase training, grid search, evaluation and the
//!   consistency, context-width and cue analyses.

// `!(x > 0.0)` is used on purpose to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod encoder;
pub mod graph;
pub mod model;
pub mod tensor;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor: {0}")]
    Tensor(#[from] tensor::TensorError),
    #[error("corpus: {0}")]
    Corpus(#[from] corpus::CorpusError),
    #[error("graph: {0}")]
    Graph(#[from] graph::GraphError),
    #[error("encoder: {0}")]
    Encoder(#[from] encoder::EncoderError),
    #[error("model: {0}")]
    Model(#[from] model::ModelError),
    #[error("train: {0}")]
    Train(#[from] train::TrainError),
}

pub type Result<T> = std::result::Result<T, Error>;
