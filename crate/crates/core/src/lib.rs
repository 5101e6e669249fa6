//! Generative clustering of documents from a matrix of language-model
//! log-probabilities `log p(y_j | x_i)`.
//!
//! Documents are compared through the texts a model generates from them: the
//! distance between a document and a cluster is a regularized importance
//! sampling estimate of the KL divergence between their text distributions.
//! The crate covers preprocessing ([`preprocess`]), flat clustering
//! ([`engine`]), hierarchical clustering and prefix-code indexing
//! ([`hierarchy`]), evaluation ([`metrics`]) and an exactly summable synthetic
//! test bed ([`synth`]).

pub mod baseline;
pub mod cli;
pub mod engine;
pub mod error;
pub mod hierarchy;
pub mod io;
pub mod logmath;
pub mod matrix;
pub mod metrics;
pub mod params;
pub mod preprocess;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::{LogProbMatrix, RealMatrix, WeightMatrix};
pub use params::{Init, Params, ProposalEstimator};
