//! Consumers of fused scores: Best-of-N reranking and GRPO rewards.

mod bon;
mod grpo;

use serde::{Deserialize, Serialize};

pub use bon::{
    best_of_n, group_candidates, BonOutput, Candidate, CandidateLine, CandidateSet,
    RankedCandidate,
};
pub use grpo::{
    clipped_term, grpo_advantages, grpo_advantages_with, grpo_surrogate, k3, rescale_reward,
    AdvantageNorm, GrpoStep, RewardGroup, DEFAULT_EPSILON_STAB,
};

/// Streaming mean and population standard deviation (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardStats {
    count: u64,
    mean: f64,
    m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub mean: f64,
    pub popstd: f64,
    pub count: u64,
}

impl RewardStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, reward: f64) {
        self.count += 1;
        let delta = reward - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (reward - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `None` until the first reward arrives.
    pub fn summary(&self) -> Option<RewardSummary> {
        (self.count > 0).then(|| RewardSummary {
            mean: self.mean,
            popstd: (self.m2.max(0.0) / self.count as f64).sqrt(),
            count: self.count,
        })
    }
}

impl Extend<f64> for RewardStats {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for r in iter {
            self.push(r);
        }
    }
}

pub fn reward_stats(rewards: &[f64]) -> Option<RewardSummary> {
    let mut stats = RewardStats::new();
    stats.extend(rewards.iter().copied());
    stats.summary()
}
