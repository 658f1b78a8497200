//! Append-only event log for the annotation service.
//!
//! `data_dir/events.jsonl` holds one event per line. State is the fold of
//! all events over the pair pool in `data_dir/pairs.jsonl`, so restarting on
//! the same directory reproduces the state exactly. Writes go through one
//! writer lock; readers clone an immutable snapshot.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use spatial_reward::fusion::{fit_weights, FitConfig, WeightsFile};
use spatial_reward::{
    AnnotationRecord, Dimension, Error as CoreError, PreferenceLabel, PreferencePair, ScoreVector,
};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const LOGITS_FILE: &str = "logits.jsonl";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown pair {0:?}")]
    UnknownPair(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Fit(#[from] CoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// A comparison the service can serve. Score vectors are optional; pairs
/// without them are labelled but not used for fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub pair_id: String,
    pub image_a_id: String,
    pub image_b_id: String,
    /// File name under `data_dir/images`; defaults to the image id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_a_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_a: Option<ScoreVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_b: Option<ScoreVector>,
}

impl PairSpec {
    pub fn image_a_file(&self) -> &str {
        self.image_a_ref.as_deref().unwrap_or(&self.image_a_id)
    }

    pub fn image_b_file(&self) -> &str {
        self.image_b_ref.as_deref().unwrap_or(&self.image_b_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSubmission {
    pub pair_id: String,
    pub annotator_id: String,
    /// Relative to the order the pair was shown in.
    pub label: PreferenceLabel,
    /// Unix milliseconds; filled in by the service when absent.
    #[serde(default)]
    pub submitted_at: Option<u64>,
    /// Echo of the serving order. Absent means the label is already in
    /// canonical A/B order.
    #[serde(default)]
    pub presented_swapped: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEvent {
    pub pair_id: String,
    pub annotator_id: String,
    /// Canonical: A and B as listed in the pair pool.
    pub label: PreferenceLabel,
    pub presented_swapped: bool,
    pub submitted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Preference(PreferenceEvent),
    Annotation {
        record: AnnotationRecord,
        submitted_at: u64,
    },
    Fit {
        weights: WeightsFile,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitStatus {
    Recorded,
    Updated,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub status: SubmitStatus,
    pub label: PreferenceLabel,
    pub labeled_by_annotator: usize,
}

/// Immutable view of the service state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub pairs: Arc<Vec<PairSpec>>,
    index: Arc<HashMap<String, usize>>,
    /// Latest label per (pair_id, annotator_id).
    pub preferences: BTreeMap<(String, String), PreferenceEvent>,
    /// Latest rating per (image_id, dimension, annotator_id).
    pub annotations: BTreeMap<(String, Dimension, String), AnnotationRecord>,
    pub weights: Option<WeightsFile>,
    pub event_count: usize,
}

impl Snapshot {
    fn new(mut pairs: Vec<PairSpec>, weights: Option<WeightsFile>) -> Result<Self, StoreError> {
        pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        if let Some(w) = pairs.windows(2).find(|w| w[0].pair_id == w[1].pair_id) {
            return Err(StoreError::Invalid(format!("duplicate pair_id {:?}", w[0].pair_id)));
        }
        let index = pairs.iter().enumerate().map(|(i, p)| (p.pair_id.clone(), i)).collect();
        Ok(Self {
            pairs: Arc::new(pairs),
            index: Arc::new(index),
            weights,
            ..Self::default()
        })
    }

    fn apply(&mut self, event: &Event) {
        match event {
            Event::Preference(p) => {
                self.preferences
                    .insert((p.pair_id.clone(), p.annotator_id.clone()), p.clone());
            }
            Event::Annotation { record, .. } => {
                let key = (record.image_id.clone(), record.dimension, record.annotator_id.clone());
                self.annotations.insert(key, record.clone());
            }
            Event::Fit { weights } => self.weights = Some(weights.clone()),
        }
        self.event_count += 1;
    }

    pub fn pair(&self, pair_id: &str) -> Option<&PairSpec> {
        self.index.get(pair_id).map(|&i| &self.pairs[i])
    }

    pub fn labeled_by(&self, annotator_id: &str) -> usize {
        self.preferences.keys().filter(|(_, a)| a == annotator_id).count()
    }

    /// Least-labelled pair the annotator has not labelled yet; ties by pair_id.
    pub fn next_pair(&self, annotator_id: &str) -> Option<&PairSpec> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for (pair_id, _) in self.preferences.keys() {
            *counts.entry(pair_id.as_str()).or_default() += 1;
        }
        self.pairs
            .iter()
            .filter(|p| {
                !self
                    .preferences
                    .contains_key(&(p.pair_id.clone(), annotator_id.to_string()))
            })
            .min_by_key(|p| (counts.get(p.pair_id.as_str()).copied().unwrap_or(0), &p.pair_id))
    }

    /// Canonical preference records with score vectors, in (pair, annotator) order.
    pub fn training_pairs(&self) -> Vec<PreferencePair> {
        self.preferences
            .values()
            .filter_map(|p| {
                let spec = self.pair(&p.pair_id)?;
                Some(PreferencePair {
                    pair_id: p.pair_id.clone(),
                    image_a_id: spec.image_a_id.clone(),
                    image_b_id: spec.image_b_id.clone(),
                    scores_a: spec.scores_a?,
                    scores_b: spec.scores_b?,
                    label: p.label,
                    annotator_id: p.annotator_id.clone(),
                })
            })
            .collect()
    }
}

/// Serving order for a pair: a fixed pseudo-random function of
/// (pair, annotator) so a refresh shows the same layout.
pub fn presentation_swapped(pair_id: &str, annotator_id: &str) -> bool {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in pair_id.bytes().chain([0]).chain(annotator_id.bytes()) {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (hash >> 32) & 1 == 1
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct Store {
    events_path: PathBuf,
    weights_path: PathBuf,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<File>,
}

impl Store {
    /// Loads the pair pool and initial weights, then replays the event log.
    pub fn open(data_dir: &Path, weights_path: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(data_dir)?;
        let pairs = read_pool(&data_dir.join(PAIRS_FILE))?;
        let weights = match fs::read_to_string(weights_path) {
            Ok(text) => Some(serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: weights_path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let events_path = data_dir.join(EVENTS_FILE);
        let mut snapshot = Snapshot::new(pairs, weights)?;
        for event in replay(&events_path)? {
            snapshot.apply(&event);
        }
        let writer = OpenOptions::new().create(true).append(true).open(&events_path)?;
        Ok(Self {
            events_path,
            weights_path: weights_path.to_path_buf(),
            snapshot: RwLock::new(Arc::new(snapshot)),
            writer: Mutex::new(writer),
        })
    }

    pub fn events_path(&self) -> &Path {
        &self.events_path
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    /// Runs `decide` under the writer lock; the event it returns, if any, is
    /// made durable before the new snapshot is published.
    fn transact<T>(
        &self,
        decide: impl FnOnce(&Snapshot) -> Result<(Option<Event>, T), StoreError>,
    ) -> Result<T, StoreError> {
        let mut file = self.writer.lock().expect("writer lock poisoned");
        let current = self.snapshot();
        let (event, out) = decide(&current)?;
        if let Some(event) = event {
            let mut line = serde_json::to_vec(&event).map_err(|e| StoreError::Invalid(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
            let mut next = (*current).clone();
            next.apply(&event);
            *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(next);
        }
        Ok(out)
    }

    pub fn submit_preference(&self, sub: PreferenceSubmission) -> Result<SubmitOutcome, StoreError> {
        if sub.annotator_id.trim().is_empty() {
            return Err(StoreError::Invalid("annotator_id must not be empty".into()));
        }
        self.transact(|snap| {
            if snap.pair(&sub.pair_id).is_none() {
                return Err(StoreError::UnknownPair(sub.pair_id.clone()));
            }
            let served = presentation_swapped(&sub.pair_id, &sub.annotator_id);
            if sub.presented_swapped.is_some_and(|s| s != served) {
                return Err(StoreError::Invalid(format!(
                    "pair {:?} was not served in that order to {:?}",
                    sub.pair_id, sub.annotator_id
                )));
            }
            let swapped = sub.presented_swapped.unwrap_or(false);
            let label = if swapped { sub.label.swapped() } else { sub.label };
            let key = (sub.pair_id.clone(), sub.annotator_id.clone());
            let before = snap.labeled_by(&sub.annotator_id);
            let (status, count) = match snap.preferences.get(&key) {
                Some(prev) if prev.label == label => (SubmitStatus::Unchanged, before),
                Some(_) => (SubmitStatus::Updated, before),
                None => (SubmitStatus::Recorded, before + 1),
            };
            let event = (status != SubmitStatus::Unchanged).then(|| {
                Event::Preference(PreferenceEvent {
                    pair_id: sub.pair_id.clone(),
                    annotator_id: sub.annotator_id.clone(),
                    label,
                    presented_swapped: swapped,
                    submitted_at: sub.submitted_at.unwrap_or_else(now_millis),
                })
            });
            Ok((event, SubmitOutcome { status, label, labeled_by_annotator: count }))
        })
    }

    pub fn submit_annotation(
        &self,
        record: AnnotationRecord,
        submitted_at: Option<u64>,
    ) -> Result<SubmitStatus, StoreError> {
        if !record.is_in_range() {
            return Err(StoreError::Invalid(format!("score {} outside 1..=5", record.score)));
        }
        self.transact(|snap| {
            let key = (record.image_id.clone(), record.dimension, record.annotator_id.clone());
            let status = match snap.annotations.get(&key) {
                Some(prev) if *prev == record => SubmitStatus::Unchanged,
                Some(_) => SubmitStatus::Updated,
                None => SubmitStatus::Recorded,
            };
            let event = (status != SubmitStatus::Unchanged).then(|| Event::Annotation {
                record: record.clone(),
                submitted_at: submitted_at.unwrap_or_else(now_millis),
            });
            Ok((event, status))
        })
    }

    /// Fits on every labelled pair with scores, records the result and
    /// rewrites the weights file.
    pub fn fit(&self, config: &FitConfig) -> Result<WeightsFile, StoreError> {
        let weights = self.transact(|snap| {
            let result = fit_weights(&snap.training_pairs(), config)?;
            let weights = WeightsFile::from_fit(&result, config.tie_mode);
            Ok((Some(Event::Fit { weights: weights.clone() }), weights))
        })?;
        write_weights(&self.weights_path, &weights)?;
        Ok(weights)
    }
}

fn write_weights(path: &Path, weights: &WeightsFile) -> Result<(), StoreError> {
    let mut bytes =
        serde_json::to_vec_pretty(weights).map_err(|e| StoreError::Invalid(e.to_string()))?;
    bytes.push(b'\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_pool(path: &Path) -> Result<Vec<PairSpec>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let spec: PairSpec = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if spec.image_a_id == spec.image_b_id {
            return Err(StoreError::Invalid(format!("pair {:?} compares an image with itself", spec.pair_id)));
        }
        pairs.push(spec);
    }
    Ok(pairs)
}

/// Reads every complete event. A final line without its newline is a write
/// torn by a crash: it is cut off so the next append starts on a clean line.
pub fn replay(path: &Path) -> Result<Vec<Event>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < text.len() {
        eprintln!(
            "warning: dropping {} byte(s) of incomplete trailing event in {}",
            text.len() - complete,
            path.display()
        );
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(complete as u64)?;
    }
    let mut events = Vec::new();
    for (i, line) in text[..complete].lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(events)
}
