use thiserror::Error;

use crate::model::Dimension;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no ratings for image/dimension {image_id}/{dimension}")]
    EmptyGroup { image_id: String, dimension: Dimension },

    #[error("score {score} out of range [1,5] for {image_id}/{dimension} (annotator {annotator_id})")]
    ScoreOutOfRange {
        image_id: String,
        dimension: Dimension,
        annotator_id: String,
        score: i64,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("batch {batch_id}: need {needed} gold-labelled records for audit, found {available}")]
    MissingGold {
        batch_id: String,
        needed: usize,
        available: usize,
    },

    #[error("non-finite logit at position {index}: {value}")]
    NonFiniteLogit { index: usize, value: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("no offline logits for {image_id}/{dimension}")]
    MissingLogits { image_id: String, dimension: Dimension },

    #[error("backend failed for {image_id}/{dimension} after {attempts} attempt(s): {message}")]
    Backend {
        image_id: String,
        dimension: Dimension,
        attempts: u32,
        message: String,
    },

    #[error("score vector is missing dimension {0}")]
    MissingDimension(Dimension),

    #[error("score {value} for {dimension} outside [1,5]")]
    ScoreVectorRange { dimension: Dimension, value: f64 },

    #[error("no usable preference pairs ({0})")]
    NoPairs(String),

    #[error("all score differences are zero; weights are unidentifiable")]
    DegeneratePairs,

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no fused score for image {image_id} (pair {pair_id})")]
    MissingScore { pair_id: String, image_id: String },

    #[error("conflicting score vectors for image {0}")]
    ConflictingScores(String),

    #[error("predictions without matching MOS: {0:?}")]
    UnmatchedPredictions(Vec<String>),

    #[error("empty candidate set for prompt {0}")]
    EmptyCandidates(String),

    #[error("duplicate candidate id {candidate_id} in prompt {prompt_id}")]
    DuplicateCandidate {
        prompt_id: String,
        candidate_id: String,
    },

    #[error("invalid GRPO step: {0}")]
    InvalidStep(String),

    #[error("pair {0} compares an image with itself")]
    SelfPair(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
