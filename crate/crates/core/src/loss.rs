//! Class-balanced focal loss.
//!
//! For a sample with true class `t` and predicted probability `p_t`:
//!
//! ```text
//! L = alpha_t * (1 - p_t)^gamma * (-ln p_t)
//! ```
//!
//! with `alpha_i = N_max / N_i` derived from training-split class counts.
//! Cross-entropy mode drops both the class weight and the modulating factor.

use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::softmax;

/// Floor applied to `p_t` before taking its logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-class sample tallies, indexed by [`ClassLabel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts(pub [usize; NUM_CLASSES]);

impl ClassCounts {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a ClassLabel>) -> Self {
        let mut counts = [0; NUM_CLASSES];
        for l in labels {
            counts[l.index()] += 1;
        }
        ClassCounts(counts)
    }

    pub fn get(&self, label: ClassLabel) -> usize {
        self.0[label.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

/// `alpha_i = N_max / N_i`. The most frequent class gets exactly 1.
pub fn class_weights(counts: &ClassCounts) -> Result<[f64; NUM_CLASSES]> {
    if let Some(label) = ClassLabel::ALL.into_iter().find(|&l| counts.get(l) == 0) {
        return Err(Error::ZeroClassCount(label));
    }
    let max = counts.max() as f64;
    Ok(counts.0.map(|n| max / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    AdaptiveFocal,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub alpha: [f64; NUM_CLASSES],
    pub mode: LossMode,
}

impl LossConfig {
    /// Focal loss with frequency-ratio weights from `counts`.
    pub fn adaptive(counts: &ClassCounts, gamma: f64) -> Result<Self> {
        LossConfig::new(gamma, class_weights(counts)?, LossMode::AdaptiveFocal)
    }

    pub fn cross_entropy() -> Self {
        LossConfig {
            gamma: 0.0,
            alpha: [1.0; NUM_CLASSES],
            mode: LossMode::CrossEntropy,
        }
    }

    /// Unnormalized constructor; `alpha` only has to be finite and positive.
    pub fn new(gamma: f64, alpha: [f64; NUM_CLASSES], mode: LossMode) -> Result<Self> {
        let cfg = LossConfig { gamma, alpha, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if self.alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be finite and > 0, got {:?}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// A single-sample loss value and whether `p_t` had to be floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss {
    pub value: f64,
    pub clamped: bool,
}

/// Recovers the class from a one-hot target vector.
pub fn one_hot_class(y: &[f64]) -> Result<ClassLabel> {
    if y.len() != NUM_CLASSES {
        return Err(Error::dims("one-hot target", NUM_CLASSES, y.len()));
    }
    let hot: Vec<usize> = (0..NUM_CLASSES).filter(|&i| y[i] == 1.0).collect();
    if hot.len() != 1 || y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NotOneHot);
    }
    ClassLabel::from_index(hot[0])
}

pub fn focal_loss(probs: &[f64], target: ClassLabel, cfg: &LossConfig) -> Result<SampleLoss> {
    if probs.len() != NUM_CLASSES {
        return Err(Error::dims(
            "focal_loss probabilities",
            NUM_CLASSES,
            probs.len(),
        ));
    }
    let p = probs[target.index()];
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::NonFinite(format!(
            "probability {p} for the true class"
        )));
    }
    let clamped = p < PROB_FLOOR;
    let nll = -p.max(PROB_FLOOR).ln();
    let value = match cfg.mode {
        LossMode::CrossEntropy => nll,
        LossMode::AdaptiveFocal => cfg.alpha[target.index()] * (1.0 - p).powf(cfg.gamma) * nll,
    };
    Ok(SampleLoss { value, clamped })
}

/// Loss from a one-hot target, the literal form of the per-sample sum.
pub fn focal_loss_one_hot(probs: &[f64], y: &[f64], cfg: &LossConfig) -> Result<SampleLoss> {
    focal_loss(probs, one_hot_class(y)?, cfg)
}

/// `dL/dlogits` for `L = focal_loss(softmax(logits), target)`.
///
/// Writing `G = p_t * dL/dp_t`, the softmax Jacobian gives
/// `dL/dz_j = G * (delta_tj - p_j)`.
pub fn focal_loss_grad(logits: &[f64], target: ClassLabel, cfg: &LossConfig) -> Result<Vec<f64>> {
    if logits.len() != NUM_CLASSES {
        return Err(Error::dims(
            "focal_loss_grad logits",
            NUM_CLASSES,
            logits.len(),
        ));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let probs = softmax(logits);
    Ok(focal_grad_from_probs(&probs, target, cfg))
}

pub(crate) fn focal_grad_from_probs(
    probs: &[f64],
    target: ClassLabel,
    cfg: &LossConfig,
) -> Vec<f64> {
    let t = target.index();
    let p = probs[t];
    let clamped = p < PROB_FLOOR;
    let g = match cfg.mode {
        LossMode::CrossEntropy => {
            if clamped {
                0.0
            } else {
                -1.0
            }
        }
        LossMode::AdaptiveFocal => {
            let q = 1.0 - p;
            let gamma = cfg.gamma;
            // d/dp of the modulating factor; zero when gamma = 0 or q = 0
            let focus = if gamma == 0.0 || q == 0.0 {
                0.0
            } else {
                gamma * q.powf(gamma - 1.0) * p * p.max(PROB_FLOOR).ln()
            };
            let log_term = if clamped { 0.0 } else { q.powf(gamma) };
            cfg.alpha[t] * (focus - log_term)
        }
    };
    probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| g * (if j == t { 1.0 } else { 0.0 } - pj))
        .collect()
}

/// Mean per-sample loss over a batch.
pub fn batch_loss(probs: &[Vec<f64>], targets: &[ClassLabel], cfg: &LossConfig) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if probs.len() != targets.len() {
        return Err(Error::dims(
            "batch_loss targets",
            probs.len(),
            targets.len(),
        ));
    }
    let mut sum = 0.0;
    for (p, &t) in probs.iter().zip(targets) {
        sum += focal_loss(p, t, cfg)?.value;
    }
    Ok(sum / probs.len() as f64)
}
