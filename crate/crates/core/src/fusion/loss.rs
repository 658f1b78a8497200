//! Bradley–Terry negative log-likelihood over score-vector differences.

use serde::{Deserialize, Serialize};

use super::FitConfig;
use crate::error::{Error, Result};
use crate::model::{PreferenceLabel, PreferencePair};

/// How tie labels enter the likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// Target probability 0.5.
    #[default]
    SoftHalf,
    /// Ties are excluded.
    Drop,
}

impl std::str::FromStr for TieMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "soft_half" | "softhalf" | "soft" => Ok(TieMode::SoftHalf),
            "drop" => Ok(TieMode::Drop),
            other => Err(format!("unknown tie mode {other:?}")),
        }
    }
}

impl std::fmt::Display for TieMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TieMode::SoftHalf => "soft_half",
            TieMode::Drop => "drop",
        })
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Preference data reduced to (Δx, target) rows after tie handling.
#[derive(Debug, Clone)]
pub struct BtObjective {
    deltas: Vec<[f64; 4]>,
    targets: Vec<f64>,
    l2: f64,
}

impl BtObjective {
    pub fn new(pairs: &[PreferencePair], tie_mode: TieMode, l2: f64) -> Result<Self> {
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::InvalidConfig(format!("l2 must be >= 0, got {l2}")));
        }
        let mut deltas = Vec::with_capacity(pairs.len());
        let mut targets = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let y = match (pair.label, tie_mode) {
                (PreferenceLabel::APreferred, _) => 1.0,
                (PreferenceLabel::BPreferred, _) => 0.0,
                (PreferenceLabel::Tie, TieMode::SoftHalf) => 0.5,
                (PreferenceLabel::Tie, TieMode::Drop) => continue,
            };
            deltas.push(pair.delta());
            targets.push(y);
        }
        if deltas.is_empty() {
            let reason = if pairs.is_empty() {
                "empty pair set"
            } else {
                "every pair is a tie and ties are dropped"
            };
            return Err(Error::NoPairs(reason.into()));
        }
        Ok(Self { deltas, targets, l2 })
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.deltas.iter().all(|d| d.iter().all(|x| *x == 0.0))
    }

    pub fn loss(&self, w: &[f64; 4]) -> f64 {
        let data = tree_sum(&self.deltas, &self.targets, &|d, y| {
            let z = dot(d, w);
            [y * softplus(-z) + (1.0 - y) * softplus(z)]
        })[0];
        data / self.len() as f64 + self.l2 * dot(w, w)
    }

    pub fn gradient(&self, w: &[f64; 4]) -> [f64; 4] {
        let sum = tree_sum(&self.deltas, &self.targets, &|d, y| {
            let r = sigmoid(dot(d, w)) - y;
            [r * d[0], r * d[1], r * d[2], r * d[3]]
        });
        self.finish_gradient(sum, w)
    }

    /// Loss and gradient in one pass; bit-identical to calling both.
    pub fn loss_and_gradient(&self, w: &[f64; 4]) -> (f64, [f64; 4]) {
        let sum = tree_sum(&self.deltas, &self.targets, &|d, y| {
            let z = dot(d, w);
            // one exponential serves softplus(z), softplus(-z) and sigmoid(z)
            let e = (-z.abs()).exp();
            let tail = e.ln_1p();
            let loss = y * ((-z).max(0.0) + tail) + (1.0 - y) * (z.max(0.0) + tail);
            let p = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
            let r = p - y;
            [loss, r * d[0], r * d[1], r * d[2], r * d[3]]
        });
        let loss = sum[0] / self.len() as f64 + self.l2 * dot(w, w);
        (loss, self.finish_gradient([sum[1], sum[2], sum[3], sum[4]], w))
    }

    fn finish_gradient(&self, sum: [f64; 4], w: &[f64; 4]) -> [f64; 4] {
        let n = self.len() as f64;
        let mut g = [0.0; 4];
        for k in 0..4 {
            g[k] = sum[k] / n + 2.0 * self.l2 * w[k];
        }
        g
    }
}

pub(crate) fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Pairwise summation of per-row terms, halving the rows at each level so the
/// result depends only on the row count.
fn tree_sum<const N: usize, F>(deltas: &[[f64; 4]], targets: &[f64], term: &F) -> [f64; N]
where
    F: Fn(&[f64; 4], f64) -> [f64; N],
{
    const LEAF: usize = 32;
    if deltas.len() <= LEAF {
        let mut acc = [0.0; N];
        for (d, &y) in deltas.iter().zip(targets) {
            let t = term(d, y);
            for k in 0..N {
                acc[k] += t[k];
            }
        }
        return acc;
    }
    let mid = deltas.len() / 2;
    let a = tree_sum(&deltas[..mid], &targets[..mid], term);
    let b = tree_sum(&deltas[mid..], &targets[mid..], term);
    std::array::from_fn(|k| a[k] + b[k])
}

/// Mean BT negative log-likelihood plus `l2 * |w|^2`.
pub fn bt_loss(w: &[f64; 4], pairs: &[PreferencePair], config: &FitConfig) -> Result<f64> {
    Ok(BtObjective::new(pairs, config.tie_mode, config.l2)?.loss(w))
}

/// Analytic gradient of [`bt_loss`].
pub fn bt_gradient(w: &[f64; 4], pairs: &[PreferencePair], config: &FitConfig) -> Result<[f64; 4]> {
    Ok(BtObjective::new(pairs, config.tie_mode, config.l2)?.gradient(w))
}
