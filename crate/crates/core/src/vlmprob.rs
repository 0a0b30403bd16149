//! Turning autoregressive answers into calibrated-looking scores: the
//! two-token softmax over answer log-probabilities, the temperature
//! ensemble, and a diagnostic for compressed probability ranges.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use num_traits::Num;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{sigmoid, Real};
use crate::scorer::{ScoreTrace, TraceEntry};

#[derive(Debug, Error, PartialEq)]
pub enum VlmError {
    #[error("non-finite log-probability ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("probability {index} outside [0, 1]")]
    OutOfRange { index: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Log-probabilities of the two answer tokens at the first generated position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerLogits<T> {
    pub ell_a: T,
    pub ell_b: T,
}

/// `exp(ℓ_A) / (exp(ℓ_A) + exp(ℓ_B))`, evaluated as `σ(ℓ_A - ℓ_B)`.
pub fn answer_token_probability<T: Real>(ell_a: T, ell_b: T) -> Result<T, VlmError> {
    if !(ell_a.is_finite() && ell_b.is_finite()) {
        return Err(VlmError::NonFinite(ell_a.to_f64_lossy(), ell_b.to_f64_lossy()));
    }
    let d = ell_a - ell_b;
    // the upper half is the complement of the lower one, so that
    // p(A, B) + p(B, A) rounds to exactly one
    Ok(if d > T::zero() { T::one() - sigmoid(-d) } else { sigmoid(d) })
}

impl<T: Real> AnswerLogits<T> {
    pub fn probability(&self) -> Result<T, VlmError> {
        answer_token_probability(self.ell_a, self.ell_b)
    }
}

/// The direct two-term softmax; overflows for large log-probabilities.
pub fn naive_answer_probability<T: Real>(ell_a: T, ell_b: T) -> T {
    let (a, b) = (ell_a.exp(), ell_b.exp());
    a / (a + b)
}

/// Mean of the probabilities sampled at temperatures 0.0, 0.3 and 0.7.
///
/// Generic over any numeric type, so rational inputs average exactly.
pub fn temperature_ensemble<N>(triple: [N; 3]) -> Result<N, VlmError>
where
    N: Num + Clone + PartialOrd,
{
    for (index, p) in triple.iter().enumerate() {
        if *p < N::zero() || *p > N::one() {
            return Err(VlmError::OutOfRange { index });
        }
    }
    let three = N::one() + N::one() + N::one();
    let [a, b, c] = triple;
    Ok((a + b + c) / three)
}

/// Probabilities read at sampling temperatures 0.0, 0.3 and 0.7.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureTriple<N> {
    pub p_00: N,
    pub p_03: N,
    pub p_07: N,
}

impl<N: Num + Clone + PartialOrd> TemperatureTriple<N> {
    pub fn mean(&self) -> Result<N, VlmError> {
        temperature_ensemble([self.p_00.clone(), self.p_03.clone(), self.p_07.clone()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionDiagnostic {
    pub positive_peak_mean: f64,
    pub negative_mean: f64,
    pub dynamic_range: f64,
    pub negatives_below_0_003: f64,
    pub positives_below_0_6: f64,
}

/// Summarizes how far apart positive peaks and negative scores sit.
pub fn compression_diagnostic(pos_peaks: &[f64], neg_scores: &[f64]) -> Result<CompressionDiagnostic, VlmError> {
    if pos_peaks.is_empty() {
        return Err(VlmError::Empty("positive peak list"));
    }
    if neg_scores.is_empty() {
        return Err(VlmError::Empty("negative score list"));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let below = |xs: &[f64], h: f64| xs.iter().filter(|&&x| x < h).count() as f64 / xs.len() as f64;
    let (pos, neg) = (mean(pos_peaks), mean(neg_scores));
    Ok(CompressionDiagnostic {
        positive_peak_mean: pos,
        negative_mean: neg,
        dynamic_range: pos - neg,
        negatives_below_0_003: below(neg_scores, 0.003),
        positives_below_0_6: below(pos_peaks, 0.6),
    })
}

/// One line of `logits.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub clip_id: String,
    /// Prediction time; required when a clip has several lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(flatten)]
    pub value: LogitValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogitValue {
    Logits { ell_a: f64, ell_b: f64 },
    Ensemble { p: [f64; 3] },
}

impl LogitRecord {
    pub fn probability(&self) -> Result<f64, VlmError> {
        match self.value {
            LogitValue::Logits { ell_a, ell_b } => answer_token_probability(ell_a, ell_b),
            LogitValue::Ensemble { p } => temperature_ensemble(p),
        }
    }
}

/// Converts `logits.jsonl` into score traces, one per clip in first-seen order.
pub fn read_logits(path: impl AsRef<Path>) -> Result<Vec<ScoreTrace>, VlmError> {
    let path = path.as_ref();
    let err = |message: String| VlmError::Io { path: path.display().to_string(), message };
    let reader = BufReader::new(File::open(path).map_err(|e| err(e.to_string()))?);
    let mut order: Vec<String> = Vec::new();
    let mut by_clip: BTreeMap<String, Vec<(Option<f64>, f64)>> = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogitRecord = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?;
        let p = rec.probability().map_err(|e| err(format!("line {}: {e}", n + 1)))?;
        if !by_clip.contains_key(&rec.clip_id) {
            order.push(rec.clip_id.clone());
        }
        by_clip.entry(rec.clip_id).or_default().push((rec.t, p));
    }
    order
        .into_iter()
        .map(|clip| {
            let rows = &by_clip[&clip];
            if rows.len() > 1 && rows.iter().any(|(t, _)| t.is_none()) {
                return Err(err(format!("clip {clip}: several lines need a `t` on each")));
            }
            let entries = rows.iter().map(|&(t, score)| TraceEntry { t: t.unwrap_or(0.0), score }).collect();
            ScoreTrace::from_entries(clip, entries).map_err(|e| err(e.to_string()))
        })
        .collect()
}
