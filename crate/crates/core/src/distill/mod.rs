//! Distillation objective: hard-label BCE, temperature-scaled logit KL and
//! feature matching, combined under a two-phase schedule, plus a small
//! teacher/student trainer to exercise it end to end.

mod calibration;
mod toy;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{log_sigmoid, sigmoid, softplus, Real};

pub use calibration::{brier_score, expected_calibration_error, DEFAULT_ECE_BINS};
pub use toy::{train_toy, Mlp, Projection, ToyConfig, ToyData, TrainReport};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("step {step} outside [0, {total})")]
    StepOutOfRange { step: usize, total: usize },
    #[error("feature pair {pair}: student has {student} values, teacher {teacher}")]
    FeatureShape { pair: usize, student: usize, teacher: usize },
    #[error("batch: {0}")]
    Batch(String),
    #[error("loss diverged at step {step}")]
    Diverged { step: usize },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub alpha_hard: f64,
    pub alpha_logit: f64,
    pub alpha_feat: f64,
    pub tau: f64,
    pub phase1_steps: usize,
    pub total_steps: usize,
    /// `(teacher_layer, student_layer)` indices of matched hidden layers.
    pub feature_layer_pairs: Vec<(usize, usize)>,
    /// Multiply the KL term by `tau^2` so its gradient scale does not shrink
    /// with the temperature.
    pub tau_squared: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha_hard: 0.3,
            alpha_logit: 0.6,
            alpha_feat: 0.1,
            tau: 4.0,
            phase1_steps: 3000,
            total_steps: 4000,
            feature_layer_pairs: vec![(0, 0), (1, 0), (2, 1), (3, 1)],
            tau_squared: true,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        let alphas = [self.alpha_hard, self.alpha_logit, self.alpha_feat];
        if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(DistillError::Config(format!("loss weights must be >= 0, got {alphas:?}")));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(DistillError::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.phase1_steps > self.total_steps {
            return Err(DistillError::Config(format!(
                "phase1_steps {} exceeds total_steps {}",
                self.phase1_steps, self.total_steps
            )));
        }
        Ok(())
    }

    /// Hard labels only, for every step.
    pub fn hard_only(&self) -> Self {
        DistillConfig { phase1_steps: 0, ..self.clone() }
    }

    pub fn phase(&self, step: usize) -> Result<Phase, DistillError> {
        if step >= self.total_steps {
            return Err(DistillError::StepOutOfRange { step, total: self.total_steps });
        }
        Ok(if step < self.phase1_steps { Phase::Composite } else { Phase::HardOnly })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Composite,
    HardOnly,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::Composite => 1,
            Phase::HardOnly => 2,
        }
    }
}

/// Binary cross-entropy on a logit: `(loss, d loss / d z)`.
///
/// Uses `max(z, 0) - z y + ln(1 + e^{-|z|})`, finite for every finite `z`.
pub fn bce_loss<T: Real>(z: T, y: T) -> (T, T) {
    (softplus(z) - z * y, sigmoid(z) - y)
}

/// Bernoulli `KL(p_T || p_S)` with `p = σ(z / τ)`, optionally scaled by
/// `τ²`: `(loss, d loss / d z_S)`.
pub fn kd_loss<T: Real>(z_student: T, z_teacher: T, tau: T, tau_squared: bool) -> (T, T) {
    let (s, t) = (z_student / tau, z_teacher / tau);
    let p_t = sigmoid(t);
    let kl = p_t * (log_sigmoid(t) - log_sigmoid(s)) + (T::one() - p_t) * (log_sigmoid(-t) - log_sigmoid(-s));
    // rounding can leave a tiny negative value when the distributions agree
    let kl = kl.max(T::zero());
    let dkl = (sigmoid(s) - p_t) / tau;
    if tau_squared {
        let t2 = tau * tau;
        (kl * t2, dkl * t2)
    } else {
        (kl, dkl)
    }
}

/// Mean over pairs of the per-pair mean squared error, with the gradient
/// for each student vector.
pub fn feat_loss<T: Real>(student: &[Vec<T>], teacher: &[Vec<T>]) -> Result<(T, Vec<Vec<T>>), DistillError> {
    if student.len() != teacher.len() {
        return Err(DistillError::Batch(format!("{} student vs {} teacher feature pairs", student.len(), teacher.len())));
    }
    if student.is_empty() {
        return Ok((T::zero(), Vec::new()));
    }
    let pairs = T::from_usize_lossy(student.len());
    let mut loss = T::zero();
    let mut grads = Vec::with_capacity(student.len());
    for (pair, (s, t)) in student.iter().zip(teacher).enumerate() {
        if s.len() != t.len() || s.is_empty() {
            return Err(DistillError::FeatureShape { pair, student: s.len(), teacher: t.len() });
        }
        let n = T::from_usize_lossy(s.len());
        let sq: T = s.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum();
        loss = loss + sq / n;
        grads.push(s.iter().zip(t).map(|(&a, &b)| T::lit(2.0) * (a - b) / n / pairs).collect());
    }
    Ok((loss / pairs, grads))
}

/// One training example as seen by the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillSample<T> {
    pub student_logit: T,
    pub teacher_logit: T,
    pub hard_label: T,
    /// One vector per matched layer pair, teacher side already projected.
    pub student_features: Vec<Vec<T>>,
    pub teacher_features: Vec<Vec<T>>,
}

/// Raw terms, weighted total and gradients, averaged over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    pub l_bce: T,
    pub l_kd: T,
    pub l_feat: T,
    pub total: T,
    pub phase: Phase,
    /// d total / d student logit, per sample.
    pub grad_logits: Vec<T>,
    /// d total / d student features, per sample and pair.
    pub grad_features: Vec<Vec<Vec<T>>>,
}

/// Combines the three terms for `step` of the schedule.
///
/// Phase 1 weights them by the configured alphas; phase 2 keeps BCE alone
/// at weight one. All raw terms are reported in both phases.
pub fn composite_loss<T: Real>(
    batch: &[DistillSample<T>],
    config: &DistillConfig,
    step: usize,
) -> Result<LossBreakdown<T>, DistillError> {
    config.validate()?;
    let phase = config.phase(step)?;
    if batch.is_empty() {
        return Err(DistillError::Batch("empty batch".into()));
    }
    let (a_hard, a_logit, a_feat) = match phase {
        Phase::Composite => (T::lit(config.alpha_hard), T::lit(config.alpha_logit), T::lit(config.alpha_feat)),
        Phase::HardOnly => (T::one(), T::zero(), T::zero()),
    };
    let m = T::from_usize_lossy(batch.len());
    let tau = T::lit(config.tau);
    let (mut l_bce, mut l_kd, mut l_feat) = (T::zero(), T::zero(), T::zero());
    let mut grad_logits = Vec::with_capacity(batch.len());
    let mut grad_features = Vec::with_capacity(batch.len());
    for s in batch {
        let (b, gb) = bce_loss(s.student_logit, s.hard_label);
        let (k, gk) = kd_loss(s.student_logit, s.teacher_logit, tau, config.tau_squared);
        let (f, gf) = feat_loss(&s.student_features, &s.teacher_features)?;
        l_bce = l_bce + b;
        l_kd = l_kd + k;
        l_feat = l_feat + f;
        grad_logits.push((a_hard * gb + a_logit * gk) / m);
        grad_features.push(gf.into_iter().map(|g| g.into_iter().map(|v| a_feat * v / m).collect()).collect());
    }
    let (l_bce, l_kd, l_feat) = (l_bce / m, l_kd / m, l_feat / m);
    Ok(LossBreakdown {
        l_bce,
        l_kd,
        l_feat,
        total: a_hard * l_bce + a_logit * l_kd + a_feat * l_feat,
        phase,
        grad_logits,
        grad_features,
    })
}

/// One line of `distill_log.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub l_bce: f64,
    pub l_kd: f64,
    pub l_feat: f64,
    pub total: f64,
    pub phase: u8,
}

impl StepLog {
    pub fn of<T: Real>(step: usize, b: &LossBreakdown<T>) -> Self {
        StepLog {
            step,
            l_bce: b.l_bce.to_f64_lossy(),
            l_kd: b.l_kd.to_f64_lossy(),
            l_feat: b.l_feat.to_f64_lossy(),
            total: b.total.to_f64_lossy(),
            phase: b.phase.number(),
        }
    }
}

pub fn write_log(path: impl AsRef<Path>, log: &[StepLog]) -> Result<(), DistillError> {
    let path = path.as_ref();
    let err = |e: std::io::Error| DistillError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(err)?);
    for l in log {
        writeln!(w, "{}", serde_json::to_string(l).expect("log line serializes")).map_err(err)?;
    }
    w.flush().map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(z: f64, zt: f64, y: f64, s: Vec<Vec<f64>>, t: Vec<Vec<f64>>) -> DistillSample<f64> {
        DistillSample { student_logit: z, teacher_logit: zt, hard_label: y, student_features: s, teacher_features: t }
    }

    #[test]
    fn bce_values() {
        let (l, g) = bce_loss(0.0, 1.0);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, -0.5);
        assert_eq!(bce_loss(0.0, 0.0).1, 0.5);
        assert!(bce_loss(800.0_f64, 1.0).0 < 1e-300);
        assert!((bce_loss(-800.0_f64, 1.0).0 - 800.0).abs() < 1e-9);
    }

    #[test]
    fn kd_values() {
        let (l, g) = kd_loss(1.3, 1.3, 4.0, true);
        assert_eq!((l, g), (0.0, 0.0));
        // p_T = σ(1), p_S = 1/2
        let p: f64 = 1.0 / (1.0 + (-1.0_f64).exp());
        let kl = p * (2.0 * p).ln() + (1.0 - p) * (2.0 * (1.0 - p)).ln();
        let (l, g) = kd_loss(0.0, 4.0, 4.0, true);
        assert!((l - 16.0 * kl).abs() < 1e-12);
        assert!((l - 1.7751051).abs() < 1e-6);
        assert!((g - 4.0 * (0.5 - p)).abs() < 1e-15);
        let (l1, _) = kd_loss(0.0, 4.0, 4.0, false);
        assert!((l1 - kl).abs() < 1e-15);
    }

    #[test]
    fn feat_values() {
        let (l, g) = feat_loss(&[vec![1.0, 0.0]], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g, vec![vec![1.0, 0.0]]);
        let (l2, _) = feat_loss(&[vec![2.0, 0.0]], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(l2, 4.0 * l);
        assert!(feat_loss(&[vec![1.0]], &[vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn weights_and_phase_switch() {
        let cfg = DistillConfig::default();
        assert_eq!((cfg.alpha_hard, cfg.alpha_logit, cfg.alpha_feat, cfg.tau), (0.3, 0.6, 0.1, 4.0));
        let batch = [sample(0.4, -1.2, 1.0, vec![vec![0.5, 1.0]], vec![vec![0.0, -0.5]])];
        let early = composite_loss(&batch, &cfg, 2999).unwrap();
        let late = composite_loss(&batch, &cfg, 3000).unwrap();
        assert_eq!(early.phase, Phase::Composite);
        assert_eq!(late.phase, Phase::HardOnly);
        assert_eq!(early.total, 0.3 * early.l_bce + 0.6 * early.l_kd + 0.1 * early.l_feat);
        assert_eq!(late.total, late.l_bce);
        assert_eq!((early.l_bce, early.l_kd, early.l_feat), (late.l_bce, late.l_kd, late.l_feat));
        assert!(late.grad_features[0][0].iter().all(|&g| g == 0.0));
        assert!(composite_loss(&batch, &cfg, 4000).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DistillConfig { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(DistillConfig { alpha_feat: -0.1, ..Default::default() }.validate().is_err());
        assert!(DistillConfig { phase1_steps: 5000, ..Default::default() }.validate().is_err());
    }
}
