//! Reward-side GRPO math: group-relative advantages and the clipped surrogate
//! objective with a per-token KL penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON_STAB: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardGroup {
    pub group_id: String,
    pub rewards: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon_stab: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON_STAB
}

impl RewardGroup {
    pub fn new(group_id: impl Into<String>, rewards: Vec<f64>) -> Result<Self> {
        let group = Self {
            group_id: group_id.into(),
            rewards,
            epsilon_stab: DEFAULT_EPSILON_STAB,
        };
        group.validate()?;
        Ok(group)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rewards.is_empty() {
            return Err(Error::InvalidStep(format!("group {} has no rewards", self.group_id)));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidStep(format!("group {} has a non-finite reward", self.group_id)));
        }
        if !(self.epsilon_stab >= 0.0) {
            return Err(Error::InvalidStep("epsilon_stab must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageNorm {
    /// `(r - mean) / (std + eps)`.
    #[default]
    GroupStd,
    /// `r - mean`.
    MeanOnly,
}

/// Mean that is exact when every value is equal.
fn shifted_mean(values: &[f64]) -> f64 {
    let pivot = values[0];
    pivot + values.iter().map(|v| v - pivot).sum::<f64>() / values.len() as f64
}

pub fn grpo_advantages(group: &RewardGroup) -> Result<Vec<f64>> {
    grpo_advantages_with(group, AdvantageNorm::GroupStd)
}

pub fn grpo_advantages_with(group: &RewardGroup, norm: AdvantageNorm) -> Result<Vec<f64>> {
    group.validate()?;
    let r = &group.rewards;
    let mean = shifted_mean(r);
    let centred: Vec<f64> = r.iter().map(|x| x - mean).collect();
    Ok(match norm {
        AdvantageNorm::MeanOnly => centred,
        AdvantageNorm::GroupStd => {
            let std = (centred.iter().map(|c| c * c).sum::<f64>() / r.len() as f64).sqrt();
            centred.iter().map(|c| c / (std + group.epsilon_stab)).collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoStep {
    /// Per output, per token `pi_theta / pi_theta_old`.
    pub ratios: Vec<Vec<f64>>,
    /// One advantage per output, shared by all of its tokens.
    pub advantages: Vec<f64>,
    #[serde(default = "default_clip")]
    pub clip_eps: f64,
    #[serde(default)]
    pub kl_beta: f64,
    /// Per output, per token `ln(pi_ref / pi_theta)`. May be empty when
    /// `kl_beta` is zero.
    #[serde(default)]
    pub ref_log_ratio: Vec<Vec<f64>>,
}

fn default_clip() -> f64 {
    0.2
}

impl GrpoStep {
    pub fn validate(&self) -> Result<()> {
        let g = self.ratios.len();
        if g == 0 {
            return Err(Error::InvalidStep("empty group".into()));
        }
        if self.advantages.len() != g {
            return Err(Error::InvalidStep(format!(
                "{} advantages for {g} outputs",
                self.advantages.len()
            )));
        }
        if !(self.clip_eps >= 0.0 && self.clip_eps.is_finite()) {
            return Err(Error::InvalidStep(format!("clip_eps {} invalid", self.clip_eps)));
        }
        if !self.kl_beta.is_finite() {
            return Err(Error::InvalidStep("kl_beta must be finite".into()));
        }
        let with_kl = !self.ref_log_ratio.is_empty();
        if self.kl_beta != 0.0 && !with_kl {
            return Err(Error::InvalidStep("kl_beta set but ref_log_ratio missing".into()));
        }
        if with_kl && self.ref_log_ratio.len() != g {
            return Err(Error::InvalidStep("ref_log_ratio does not match ratios".into()));
        }
        for (i, tokens) in self.ratios.iter().enumerate() {
            if tokens.is_empty() {
                return Err(Error::InvalidStep(format!("output {i} has no tokens")));
            }
            if let Some(r) = tokens.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
                return Err(Error::InvalidStep(format!("output {i}: ratio {r} is not positive")));
            }
            if with_kl && self.ref_log_ratio[i].len() != tokens.len() {
                return Err(Error::InvalidStep(format!("output {i}: token counts differ")));
            }
            if !self.advantages[i].is_finite() {
                return Err(Error::InvalidStep(format!("output {i}: non-finite advantage")));
            }
        }
        Ok(())
    }
}

/// `e^l - l - 1`, the non-negative KL estimator from a log ratio.
pub fn k3(log_ratio: f64) -> f64 {
    log_ratio.exp_m1() - log_ratio
}

/// Per-token objective term before the KL penalty.
pub fn clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Objective value (to be maximised).
///
/// Token terms are averaged per output (exact when all terms of an output are
/// equal), then averaged over outputs.
pub fn grpo_surrogate(step: &GrpoStep) -> Result<f64> {
    step.validate()?;
    let mut total = 0.0;
    for (i, tokens) in step.ratios.iter().enumerate() {
        let adv = step.advantages[i];
        let terms: Vec<f64> = tokens
            .iter()
            .enumerate()
            .map(|(t, &ratio)| {
                let kl = if step.kl_beta != 0.0 {
                    step.kl_beta * k3(step.ref_log_ratio[i][t])
                } else {
                    0.0
                };
                clipped_term(ratio, adv, step.clip_eps) - kl
            })
            .collect();
        total += shifted_mean(&terms);
    }
    Ok(total / step.ratios.len() as f64)
}

/// Linear map from the 1-5 rating scale to [0, 1].
pub fn rescale_reward(score: f64) -> f64 {
    (score - 1.0) / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equal_rewards_give_zero_advantages() {
        let a = grpo_advantages(&RewardGroup::new("g", vec![0.8, 0.8, 0.8]).unwrap()).unwrap();
        assert_eq!(a, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn three_point_hand_case() {
        // mean 0.8, population std 0.163299
        let a = grpo_advantages(&RewardGroup::new("g", vec![0.6, 0.8, 1.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(a[0], -1.2247, epsilon = 1e-3);
        assert_abs_diff_eq!(a[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2], 1.2247, epsilon = 1e-3);
    }

    #[test]
    fn singleton_group() {
        let a = grpo_advantages(&RewardGroup::new("g", vec![0.3]).unwrap()).unwrap();
        assert_eq!(a, vec![0.0]);
        assert!(RewardGroup::new("g", vec![]).is_err());
    }

    #[test]
    fn mean_only_variant() {
        let g = RewardGroup::new("g", vec![1.0, 3.0]).unwrap();
        assert_eq!(grpo_advantages_with(&g, AdvantageNorm::MeanOnly).unwrap(), vec![-1.0, 1.0]);
    }

    fn step(ratios: Vec<Vec<f64>>, advantages: Vec<f64>) -> GrpoStep {
        GrpoStep {
            ratios,
            advantages,
            clip_eps: 0.2,
            kl_beta: 0.0,
            ref_log_ratio: vec![],
        }
    }

    #[test]
    fn unit_ratios_give_mean_advantage() {
        let adv = vec![0.1, -0.7, 1.3];
        let s = step(vec![vec![1.0; 3], vec![1.0; 7], vec![1.0; 1]], adv.clone());
        assert_eq!(grpo_surrogate(&s).unwrap(), adv.iter().sum::<f64>() / 3.0);
    }

    #[test]
    fn zero_advantage_gives_zero() {
        let s = step(vec![vec![0.5, 1.7], vec![2.0]], vec![0.0, 0.0]);
        assert_eq!(grpo_surrogate(&s).unwrap(), 0.0);
    }

    #[test]
    fn clip_hand_case() {
        let s = step(vec![vec![1.5]], vec![1.0]);
        assert_abs_diff_eq!(grpo_surrogate(&s).unwrap(), 1.2, epsilon = 1e-15);
        // negative advantage keeps the unclipped, more pessimistic term
        let s = step(vec![vec![1.5]], vec![-1.0]);
        assert_abs_diff_eq!(grpo_surrogate(&s).unwrap(), -1.5, epsilon = 1e-15);
    }

    #[test]
    fn kl_penalty() {
        let s = GrpoStep {
            ratios: vec![vec![1.0]],
            advantages: vec![0.0],
            clip_eps: 0.2,
            kl_beta: 0.5,
            ref_log_ratio: vec![vec![1.0]],
        };
        let expected = -0.5 * (1f64.exp() - 2.0);
        assert_abs_diff_eq!(grpo_surrogate(&s).unwrap(), expected, epsilon = 1e-12);
        assert_eq!(k3(0.0), 0.0);
    }

    #[test]
    fn invalid_steps() {
        assert!(grpo_surrogate(&step(vec![vec![0.0]], vec![1.0])).is_err());
        assert!(grpo_surrogate(&step(vec![vec![-1.0]], vec![1.0])).is_err());
        assert!(grpo_surrogate(&step(vec![vec![1.0]], vec![1.0, 2.0])).is_err());
        assert!(grpo_surrogate(&step(vec![vec![]], vec![1.0])).is_err());
        let mut s = step(vec![vec![1.0]], vec![1.0]);
        s.kl_beta = 0.1;
        assert!(grpo_surrogate(&s).is_err());
    }

    #[test]
    fn rescale() {
        assert_eq!(rescale_reward(1.0), 0.0);
        assert_eq!(rescale_reward(5.0), 1.0);
        assert_eq!(rescale_reward(3.0), 0.5);
    }
}
