//! Sources of rating-word logits.
//!
//! The contract with any backend is five scalars per (image, dimension),
//! excellent first, given either as raw logits or as probabilities.

use std::collections::HashMap;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::logits::{normalize_logits, normalize_probabilities};
use super::prompts::{PromptTemplate, PromptType};
use crate::error::{Error, Result};
use crate::model::{Dimension, RatingDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub image_id: String,
    pub dimension: Dimension,
    pub logits: [f64; 5],
    #[serde(default = "default_backend_id")]
    pub backend_id: String,
}

fn default_backend_id() -> String {
    "offline".into()
}

/// How the image reaches the backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    /// Only the identifier is known (enough for offline lookup).
    None,
    /// Path or URL the backend can resolve itself.
    Reference(String),
    /// Base64-encoded image bytes.
    Inline(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    pub source: ImageSource,
}

impl ImageRef {
    pub fn id(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            source: ImageSource::None,
        }
    }

    pub fn reference(image_id: impl Into<String>, reference: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            source: ImageSource::Reference(reference.into()),
        }
    }

    pub fn inline(image_id: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            image_id: image_id.into(),
            source: ImageSource::Inline(base64::engine::general_purpose::STANDARD.encode(bytes)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    FileOffline,
    RemoteService,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub endpoint: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub prompt_type: PromptType,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::FileOffline,
            endpoint: None,
            timeout: Duration::from_secs(30),
            max_retries: 2,
            prompt_type: PromptType::Type4,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.endpoint) {
            (BackendMode::RemoteService, None) => Err(Error::InvalidConfig(
                "remote backend requires an endpoint".into(),
            )),
            (BackendMode::FileOffline, Some(_)) => Err(Error::InvalidConfig(
                "offline backend does not take an endpoint".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Request body sent to a remote backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_base64: Option<String>,
    pub dimension: Dimension,
    pub query_text: String,
}

impl BackendRequest {
    pub fn new(image: &ImageRef, template: &PromptTemplate) -> Self {
        let (image_ref, image_base64) = match &image.source {
            ImageSource::None => (None, None),
            ImageSource::Reference(r) => (Some(r.clone()), None),
            ImageSource::Inline(b) => (None, Some(b.clone())),
        };
        Self {
            image_id: image.image_id.clone(),
            image_ref,
            image_base64,
            dimension: template.dimension,
            query_text: template.query_text.clone(),
        }
    }
}

/// Backend answer: raw logits, or probabilities that get renormalised.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<[f64; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<[f64; 5]>,
}

impl BackendReply {
    pub fn distribution(&self) -> Result<RatingDistribution> {
        match (&self.logits, &self.probs) {
            (Some(l), _) => normalize_logits(l),
            (None, Some(p)) => normalize_probabilities(p),
            (None, None) => Err(Error::InvalidDistribution(
                "reply carries neither logits nor probs".into(),
            )),
        }
    }
}

pub trait LogitSource: Send + Sync {
    /// Identifier that distinguishes cached results from different backends.
    fn backend_id(&self) -> &str;

    fn distribution(&self, image: &ImageRef, template: &PromptTemplate) -> Result<RatingDistribution>;
}

/// Logits read from a file, keyed by (image, dimension).
#[derive(Debug, Clone, Default)]
pub struct OfflineLogits {
    backend_id: String,
    records: HashMap<(String, Dimension), [f64; 5]>,
}

impl OfflineLogits {
    /// Later records for the same (image, dimension) replace earlier ones.
    pub fn new(records: impl IntoIterator<Item = LogitRecord>) -> Self {
        let mut ids: Vec<String> = Vec::new();
        let mut map = HashMap::new();
        for r in records {
            if !ids.contains(&r.backend_id) {
                ids.push(r.backend_id.clone());
            }
            map.insert((r.image_id, r.dimension), r.logits);
        }
        let backend_id = match ids.len() {
            0 => default_backend_id(),
            1 => ids.remove(0),
            _ => format!("offline[{}]", ids.join(",")),
        };
        Self {
            backend_id,
            records: map,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn image_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.keys().map(|(i, _)| i.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn dimensions_for(&self, image_id: &str) -> Vec<Dimension> {
        Dimension::ALL
            .into_iter()
            .filter(|d| self.records.contains_key(&(image_id.to_string(), *d)))
            .collect()
    }
}

impl LogitSource for OfflineLogits {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn distribution(&self, image: &ImageRef, template: &PromptTemplate) -> Result<RatingDistribution> {
        let logits = self
            .records
            .get(&(image.image_id.clone(), template.dimension))
            .ok_or_else(|| Error::MissingLogits {
                image_id: image.image_id.clone(),
                dimension: template.dimension,
            })?;
        normalize_logits(logits)
    }
}

/// JSON-over-HTTP backend with per-request timeout and bounded retries.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    max_retries: u32,
    retry_delay: Duration,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| Error::InvalidConfig("remote backend requires an endpoint".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(Self {
            endpoint,
            max_retries: config.max_retries,
            retry_delay: Duration::from_millis(50),
            agent,
        })
    }

    pub fn with_retry_delay(mut self, delay: Duration) -> Self {
        self.retry_delay = delay;
        self
    }

    fn call(&self, request: &BackendRequest) -> std::result::Result<BackendReply, String> {
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| e.to_string())?;
        response
            .into_body()
            .read_json::<BackendReply>()
            .map_err(|e| e.to_string())
    }
}

impl LogitSource for RemoteBackend {
    fn backend_id(&self) -> &str {
        &self.endpoint
    }

    fn distribution(&self, image: &ImageRef, template: &PromptTemplate) -> Result<RatingDistribution> {
        let request = BackendRequest::new(image, template);
        let attempts = self.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry_delay);
            }
            match self.call(&request) {
                Ok(reply) => return reply.distribution(),
                Err(e) => last_error = e,
            }
        }
        Err(Error::Backend {
            image_id: image.image_id.clone(),
            dimension: template.dimension,
            attempts,
            message: last_error,
        })
    }
}

impl<T: LogitSource + ?Sized> LogitSource for Box<T> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn distribution(&self, image: &ImageRef, template: &PromptTemplate) -> Result<RatingDistribution> {
        (**self).distribution(image, template)
    }
}
