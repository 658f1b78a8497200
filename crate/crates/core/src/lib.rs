//! Reward-model toolkit for spatial-aesthetics image quality assessment.
//!
//! The pipeline runs from raw multi-rater annotations to MOS labels
//! ([`annotation`]), from rating-word logits to 1-5 scores per aesthetic
//! dimension ([`scorer`]), from pairwise human preferences to Bradley–Terry
//! fusion weights ([`fusion`]), and evaluates everything against MOS and
//! preference labels ([`evaluation`]). [`application`] holds the downstream
//! consumers of fused scores: Best-of-N reranking and GRPO advantages.

pub mod annotation;
pub mod application;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod io;
pub mod model;
pub mod scorer;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{
    validate_dataset, AnnotationRecord, Dimension, FusionWeights, MosRecord, PartialScores,
    PreferenceLabel, PreferencePair, RatingDistribution, RatingLevel, ScoreVector,
    ValidationReport,
};
