//! Full-batch gradient descent with Armijo backtracking for the BT objective.

use serde::{Deserialize, Serialize};

use super::loss::{dot, BtObjective, TieMode};
use crate::error::{Error, Result};
use crate::model::{FusionWeights, PreferencePair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backtracking {
    /// Step tried on the first iteration.
    pub initial_step: f64,
    /// Multiplier applied on each rejected trial, in (0, 1).
    pub shrink: f64,
    /// Sufficient-decrease constant, in (0, 1).
    pub armijo: f64,
    /// Multiplier applied to the last accepted step to seed the next search.
    pub grow: f64,
    pub max_backtracks: u32,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            grow: 1.1,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub init: [f64; 4],
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_rule: Backtracking,
    pub l2: f64,
    pub tie_mode: TieMode,
    /// The optimiser is deterministic; the seed is carried for the record.
    pub rng_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            init: [0.0; 4],
            max_iters: 10_000,
            grad_tol: 1e-8,
            step_rule: Backtracking::default(),
            l2: 0.0,
            tie_mode: TieMode::SoftHalf,
            rng_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.step_rule;
        let bad = if self.max_iters < 1 {
            Some("max_iters must be >= 1")
        } else if !(self.grad_tol > 0.0) {
            Some("grad_tol must be > 0")
        } else if !(s.initial_step > 0.0) || !(s.shrink > 0.0 && s.shrink < 1.0) {
            Some("step rule needs initial_step > 0 and shrink in (0,1)")
        } else if !(s.armijo > 0.0 && s.armijo < 1.0) || !(s.grow >= 1.0) {
            Some("step rule needs armijo in (0,1) and grow >= 1")
        } else if self.init.iter().any(|x| !x.is_finite()) {
            Some("init must be finite")
        } else {
            None
        };
        match bad {
            Some(msg) => Err(Error::InvalidConfig(msg.into())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: FusionWeights,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pair_count_used: usize,
    /// Loss at the start point followed by the loss after every accepted step.
    pub loss_history: Vec<f64>,
}

pub fn fit_weights(pairs: &[PreferencePair], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let objective = BtObjective::new(pairs, config.tie_mode, config.l2)?;
    if objective.is_degenerate() {
        return Err(Error::DegeneratePairs);
    }

    let rule = config.step_rule;
    let mut w = config.init;
    let (mut loss, mut grad) = objective.loss_and_gradient(&w);
    let mut step = rule.initial_step;
    let mut history = vec![loss];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        if grad.iter().all(|g| g.abs() < config.grad_tol) {
            converged = true;
            break;
        }
        if iterations >= config.max_iters {
            break;
        }
        let slope = dot(&grad, &grad);
        let mut t = step;
        let mut accepted = None;
        for _ in 0..=rule.max_backtracks {
            let candidate = [
                w[0] - t * grad[0],
                w[1] - t * grad[1],
                w[2] - t * grad[2],
                w[3] - t * grad[3],
            ];
            // the gradient rides along so an accepted step needs no extra pass
            let (candidate_loss, candidate_grad) = objective.loss_and_gradient(&candidate);
            if candidate_loss <= loss - rule.armijo * t * slope {
                accepted = Some((candidate, candidate_loss, candidate_grad));
                break;
            }
            t *= rule.shrink;
        }
        // no step gives sufficient decrease at floating-point resolution
        let Some((next_w, next_loss, next_grad)) = accepted else {
            break;
        };
        w = next_w;
        loss = next_loss;
        grad = next_grad;
        history.push(loss);
        step = t * rule.grow;
        iterations += 1;
    }

    Ok(FitResult {
        weights: FusionWeights::new(w),
        final_loss: loss,
        iterations,
        converged,
        pair_count_used: objective.len(),
        loss_history: history,
    })
}
