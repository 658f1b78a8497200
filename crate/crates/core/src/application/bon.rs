use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::fuse;
use crate::model::{FusionWeights, ScoreVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub candidate_id: String,
    pub scores: ScoreVector,
}

/// One line of a candidate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLine {
    pub prompt_id: String,
    pub candidate_id: String,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub prompt_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(prompt_id: impl Into<String>, candidates: Vec<Candidate>) -> Result<Self> {
        let set = Self {
            prompt_id: prompt_id.into(),
            candidates,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn n(&self) -> usize {
        self.candidates.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::EmptyCandidates(self.prompt_id.clone()));
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.candidate_id.as_str()) {
                return Err(Error::DuplicateCandidate {
                    prompt_id: self.prompt_id.clone(),
                    candidate_id: c.candidate_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Groups candidate lines by prompt, in order of first appearance.
pub fn group_candidates(lines: Vec<CandidateLine>) -> Result<Vec<CandidateSet>> {
    let mut sets: Vec<CandidateSet> = Vec::new();
    for line in lines {
        let candidate = Candidate {
            candidate_id: line.candidate_id,
            scores: line.scores,
        };
        match sets.iter_mut().find(|s| s.prompt_id == line.prompt_id) {
            Some(set) => set.candidates.push(candidate),
            None => sets.push(CandidateSet {
                prompt_id: line.prompt_id,
                candidates: vec![candidate],
            }),
        }
    }
    for set in &sets {
        set.validate()?;
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate_id: String,
    pub fused: f64,
}

/// Candidates by fused score, best first. Equal scores keep input order.
pub fn best_of_n(set: &CandidateSet, weights: &FusionWeights) -> Result<Vec<RankedCandidate>> {
    set.validate()?;
    let mut ranked: Vec<RankedCandidate> = set
        .candidates
        .iter()
        .map(|c| RankedCandidate {
            candidate_id: c.candidate_id.clone(),
            fused: fuse(&c.scores, weights),
        })
        .collect();
    ranked.sort_by(|a, b| b.fused.total_cmp(&a.fused));
    Ok(ranked)
}

/// Wire form of a ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonOutput {
    pub prompt_id: String,
    pub ranked: Vec<String>,
    pub fused: Vec<f64>,
}

impl BonOutput {
    pub fn new(prompt_id: &str, ranked: Vec<RankedCandidate>) -> Self {
        let (ids, fused) = ranked.into_iter().map(|r| (r.candidate_id, r.fused)).unzip();
        Self {
            prompt_id: prompt_id.to_string(),
            ranked: ids,
            fused,
        }
    }
}
