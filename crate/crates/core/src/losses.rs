//! Scalar training objectives with analytic gradients.
//!
//! * [`balanced_score_loss`]: class-balanced score-map loss. Positives pay
//!   `-beta * ln(Y)`; negatives pay `(1 - beta) * Y`, i.e. confidence on
//!   background is penalised linearly. With `literal_negative_term` the
//!   negative summand is instead `-(1 - beta) * (1 - Y)`, which differs by a
//!   per-pixel constant and has the same gradient.
//! * [`weak_score_loss`]: the same loss restricted to kept negatives.
//! * [`domain_loss`]: batch-mean binary cross-entropy of the domain classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{PixelPartition, PixelState, ScoreMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// `beta = 1 - |Pos| / (|Pos| + |Neg considered|)` per image.
    PerImageBalanced,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta_mode: BetaMode,
    /// Log arguments are clamped to `[epsilon_log, 1 - epsilon_log]`.
    pub epsilon_log: f64,
    pub literal_negative_term: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta_mode: BetaMode::PerImageBalanced,
            epsilon_log: 1e-6,
            literal_negative_term: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if let BetaMode::Fixed(b) = self.beta_mode {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Config(format!("beta must be in [0, 1], got {b}")));
            }
        }
        if !(self.epsilon_log > 0.0 && self.epsilon_log <= 1e-3) {
            return Err(Error::Config(format!(
                "epsilon_log must be in (0, 1e-3], got {}",
                self.epsilon_log
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLoss {
    pub loss: f64,
    pub positive_term: f64,
    pub negative_term: f64,
    pub beta: f64,
    /// d loss / d prediction, per pixel.
    pub grad: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Positive,
    Negative,
    Skip,
}

fn score_loss_with_roles(
    pred: &ScoreMap,
    gt: &ScoreMap,
    cfg: &LossConfig,
    role: impl Fn(usize) -> Role,
) -> Result<ScoreLoss> {
    cfg.validate()?;
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let roles: Vec<Role> = (0..pred.len()).map(&role).collect();
    let n_pos = roles.iter().filter(|&&r| r == Role::Positive).count();
    let n_neg = roles.iter().filter(|&&r| r == Role::Negative).count();
    let beta = match cfg.beta_mode {
        BetaMode::Fixed(b) => b,
        BetaMode::PerImageBalanced if n_pos + n_neg == 0 => 0.5,
        BetaMode::PerImageBalanced => 1.0 - n_pos as f64 / (n_pos + n_neg) as f64,
    };
    let eps = cfg.epsilon_log;
    let mut grad = vec![0.0; pred.len()];
    let mut positive_term = 0.0;
    let mut negative_term = 0.0;
    for (i, r) in roles.iter().enumerate() {
        let y_hat = pred.data()[i];
        let y_star = gt.data()[i];
        match r {
            Role::Positive => {
                let clamped = y_hat.clamp(eps, 1.0 - eps);
                positive_term -= beta * y_star * clamped.ln();
                if y_hat > eps && y_hat < 1.0 - eps {
                    grad[i] = -beta * y_star / y_hat;
                }
            }
            Role::Negative => {
                let w = (1.0 - beta) * (1.0 - y_star);
                if cfg.literal_negative_term {
                    negative_term -= w * (1.0 - y_hat);
                } else {
                    negative_term += w * y_hat;
                }
                grad[i] = w;
            }
            Role::Skip => {}
        }
    }
    Ok(ScoreLoss {
        loss: positive_term + negative_term,
        positive_term,
        negative_term,
        beta,
        grad,
    })
}

fn check_binary(gt: &ScoreMap) -> Result<()> {
    if !gt.is_binary() {
        return Err(Error::Data("ground-truth score map must be 0/1".into()));
    }
    Ok(())
}

/// Positives are `gt == 1`, negatives `gt == 0`.
pub fn balanced_score_loss(pred: &ScoreMap, gt: &ScoreMap, cfg: &LossConfig) -> Result<ScoreLoss> {
    check_binary(gt)?;
    score_loss_with_roles(pred, gt, cfg, |i| {
        if gt.data()[i] == 1.0 {
            Role::Positive
        } else {
            Role::Negative
        }
    })
}

/// Like [`balanced_score_loss`] but negatives only count where the partition
/// says `NegativeKept`; `Ignored` pixels contribute neither loss nor gradient.
pub fn weak_score_loss(
    pred: &ScoreMap,
    gt: &ScoreMap,
    partition: &PixelPartition,
    cfg: &LossConfig,
) -> Result<ScoreLoss> {
    check_binary(gt)?;
    if partition.width() != gt.width() || partition.height() != gt.height() {
        return Err(Error::Dimension(format!(
            "partition is {}x{}, ground truth is {}x{}",
            partition.width(),
            partition.height(),
            gt.width(),
            gt.height()
        )));
    }
    let states = partition.states();
    score_loss_with_roles(pred, gt, cfg, |i| match (states[i], gt.data()[i] == 1.0) {
        (PixelState::Ignored, _) => Role::Skip,
        (_, true) => Role::Positive,
        (PixelState::NegativeKept, false) => Role::Negative,
        (PixelState::Positive, false) => Role::Skip,
    })
}

/// Keeps the `floor(eta * |candidates|)` lowest-confidence candidates as
/// negatives (ties by ascending pixel index) and ignores the rest.
/// Non-candidates are marked positive.
pub fn select_negatives(pred: &ScoreMap, candidates: &[bool], eta: f64) -> Result<PixelPartition> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config(format!("eta must be in (0, 1], got {eta}")));
    }
    if candidates.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "candidate mask has {} pixels, score map {}",
            candidates.len(),
            pred.len()
        )));
    }
    let mut order: Vec<usize> = (0..pred.len()).filter(|&i| candidates[i]).collect();
    let k = (eta * order.len() as f64).floor() as usize;
    order.sort_by(|&a, &b| pred.data()[a].total_cmp(&pred.data()[b]).then(a.cmp(&b)));
    let mut states: Vec<PixelState> = candidates
        .iter()
        .map(|&c| if c { PixelState::Ignored } else { PixelState::Positive })
        .collect();
    for &i in &order[..k] {
        states[i] = PixelState::NegativeKept;
    }
    PixelPartition::new(pred.width(), pred.height(), states)
}

/// Probabilities are clamped to `[DOMAIN_EPS, 1 - DOMAIN_EPS]`.
pub const DOMAIN_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over the batch; `labels` are 0 (source) or 1
/// (target). Returns the loss and d loss / d p.
pub fn domain_loss(p: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    if p.is_empty() {
        return Err(Error::Data("domain loss over an empty batch".into()));
    }
    if p.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} labels",
            p.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("domain label {bad} is not 0 or 1")));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(labels) {
        let y = f64::from(yi);
        let c = pi.clamp(DOMAIN_EPS, 1.0 - DOMAIN_EPS);
        loss -= y * c.ln() + (1.0 - y) * (1.0 - c).ln();
        let interior = pi > DOMAIN_EPS && pi < 1.0 - DOMAIN_EPS;
        grad.push(if interior { (-y / pi + (1.0 - y) / (1.0 - pi)) / n } else { 0.0 });
    }
    Ok((loss / n, grad))
}
