//! Rating-word scoring: query construction, logit normalisation and the
//! expected value on the 1-5 scale.

mod backend;
mod logits;
mod prompts;

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

pub use backend::{
    BackendConfig, BackendMode, BackendReply, BackendRequest, ImageRef, ImageSource, LogitRecord,
    LogitSource, OfflineLogits, RemoteBackend,
};
pub use logits::{expected_score, normalize_logits, normalize_probabilities};
pub use prompts::{build_query, PromptTemplate, PromptType, IMAGE_TOKEN, RATING_SLOT};

use crate::error::Result;
use crate::model::{Dimension, PartialScores};

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: String,
    pub dimension: Dimension,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    image_id: String,
    dimension: Dimension,
    backend_id: String,
    prompt_type: PromptType,
}

/// Scores images against a logit source, caching per
/// (image, dimension, backend, prompt type).
pub struct Scorer<S> {
    source: S,
    prompt_type: PromptType,
    cache: RwLock<HashMap<CacheKey, f64>>,
}

impl<S: LogitSource> Scorer<S> {
    pub fn new(source: S, prompt_type: PromptType) -> Self {
        Self {
            source,
            prompt_type,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    pub fn prompt_type(&self) -> PromptType {
        self.prompt_type
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().expect("score cache poisoned").len()
    }

    pub fn score_dimension(&self, image: &ImageRef, dimension: Dimension) -> Result<f64> {
        let key = CacheKey {
            image_id: image.image_id.clone(),
            dimension,
            backend_id: self.source.backend_id().to_string(),
            prompt_type: self.prompt_type,
        };
        if let Some(score) = self.cache.read().expect("score cache poisoned").get(&key) {
            return Ok(*score);
        }
        let template = build_query(dimension, self.prompt_type);
        let score = expected_score(&self.source.distribution(image, &template)?);
        self.cache
            .write()
            .expect("score cache poisoned")
            .insert(key, score);
        Ok(score)
    }

    /// Scores only the requested dimensions; the rest stay empty.
    pub fn score_image(&self, image: &ImageRef, dimensions: &[Dimension]) -> Result<PartialScores> {
        let mut scores = PartialScores::default();
        for &dimension in dimensions {
            scores.set(dimension, self.score_dimension(image, dimension)?);
        }
        Ok(scores)
    }
}
