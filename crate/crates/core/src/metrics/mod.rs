//! Clip-level risk metrics: ranking (AP, AUC), thresholded classification
//! (F1, FPR), lead-time constrained AP and early-warning recall.

mod outcome;
mod ranking;
mod report;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::manifest::{Group, Manifest};
use crate::num::Real;
use crate::scorer::ScoreTrace;

pub use outcome::{ClipOutcome, OutcomeMode, TIME_EPS};
pub use ranking::{average_precision, roc_auc};
pub use report::{Counts, EarlyWarning, GroupMetrics, KaggleBlock, ManifestInfo, MetricsReport, Protocol};

/// Lead times for AP@TTA, in seconds.
pub const LEAD_TIMES_S: [f64; 3] = [0.5, 1.0, 1.5];

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("AP undefined: no positive clips")]
    ApUndefined,
    #[error("AUC undefined: {positives} positive and {negatives} negative clips")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite score {0}")]
    InvalidScore(f64),
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("no trace for {} clip(s): {}", .0.len(), .0.join(", "))]
    MissingTraces(Vec<String>),
    #[error("clip {clip_id}: no score for lead {lead_s} s")]
    MissingLead { clip_id: String, lead_s: f64 },
    #[error("clip {clip_id}: {reason}")]
    Inconsistent { clip_id: String, reason: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn check_threshold(threshold: f64) -> Result<(), MetricError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidThreshold(threshold))
    }
}

/// Confusion matrix of peak score against threshold.
pub fn confusion<T: Real>(outcomes: &[ClipOutcome<T>], threshold: f64) -> Counts {
    let h = T::lit(threshold);
    let mut c = Counts::default();
    for o in outcomes {
        match (o.is_positive(), o.peak_score >= h) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c.positives = c.tp + c.fn_;
    c.negatives = c.fp + c.tn;
    c
}

/// `(F1, FPR)` with a clip predicted positive iff its peak reaches the
/// threshold. F1 is `None` without positives, FPR without negatives.
pub fn f1_fpr_at_threshold<T: Real>(
    outcomes: &[ClipOutcome<T>],
    threshold: f64,
) -> Result<(Option<f64>, Option<f64>), MetricError> {
    check_threshold(threshold)?;
    let c = confusion(outcomes, threshold);
    Ok((c.f1(), c.fpr()))
}

/// AP where positives are scored by their eligible peak at `lead_s` and
/// negatives by their full-trace peak.
pub fn ap_at_tta<T: Real>(outcomes: &[ClipOutcome<T>], lead_s: f64) -> Result<T, MetricError> {
    let scored = outcomes
        .iter()
        .map(|o| {
            if o.is_positive() {
                o.eligible_peak(lead_s)
                    .map(|s| (s, true))
                    .ok_or_else(|| MetricError::MissingLead { clip_id: o.clip_id.clone(), lead_s })
            } else {
                Ok((o.peak_score, false))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    average_precision(&scored)
}

/// Early warning recall and mean time to alert over positives.
pub fn ewr_mtta<T: Real>(outcomes: &[ClipOutcome<T>], threshold: f64) -> Result<EarlyWarning, MetricError> {
    check_threshold(threshold)?;
    let mut w = EarlyWarning::default();
    let mut lead_sum = 0.0;
    for o in outcomes.iter().filter(|o| o.is_positive()) {
        w.positives += 1;
        if o.detected(threshold) {
            w.detected += 1;
            lead_sum += o.event_time_s.unwrap_or(0.0) - o.first_alert_time_s(threshold).unwrap_or(0.0);
        }
    }
    if w.positives > 0 {
        w.ewr = Some(w.detected as f64 / w.positives as f64);
    }
    if w.detected > 0 {
        w.mtta_s = Some(lead_sum / w.detected as f64);
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub threshold: f64,
    pub leads_s: Vec<f64>,
    /// Echoed into the report.
    pub fps: f64,
    pub stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { threshold: 0.75, leads_s: LEAD_TIMES_S.to_vec(), fps: 8.0, stride: 1 }
    }
}

/// Builds sliding-window outcomes for every manifest clip.
pub fn outcomes_from_traces(
    manifest: &Manifest,
    traces: &[ScoreTrace],
    leads_s: &[f64],
) -> Result<Vec<ClipOutcome<f64>>, MetricError> {
    let by_id: HashMap<&str, &ScoreTrace> = traces.iter().map(|t| (t.clip_id.as_str(), t)).collect();
    let missing: Vec<String> =
        manifest.clips.iter().filter(|c| !by_id.contains_key(c.clip_id.as_str())).map(|c| c.clip_id.clone()).collect();
    if !missing.is_empty() {
        return Err(MetricError::MissingTraces(missing));
    }
    Ok(manifest.clips.iter().map(|c| ClipOutcome::from_trace(c, by_id[c.clip_id.as_str()], leads_s)).collect())
}

/// Full report for a manifest and its traces.
pub fn evaluate(manifest: &Manifest, traces: &[ScoreTrace], config: &EvalConfig) -> Result<MetricsReport, MetricError> {
    let outcomes = outcomes_from_traces(manifest, traces, &config.leads_s)?;
    let mut report = evaluate_outcomes(&outcomes, config, OutcomeMode::Sliding)?;
    report.manifest = Some(ManifestInfo::of(manifest));
    Ok(report)
}

/// Report over precomputed outcomes.
///
/// Per-group rows cover the long-tail groups present, in reporting order;
/// the overall row pools every clip.
pub fn evaluate_outcomes<T: Real>(
    outcomes: &[ClipOutcome<T>],
    config: &EvalConfig,
    mode: OutcomeMode,
) -> Result<MetricsReport, MetricError> {
    check_threshold(config.threshold)?;
    for o in outcomes {
        o.validate(mode)?;
    }
    let groups = Group::LONGTAIL
        .iter()
        .filter_map(|&g| {
            let subset: Vec<ClipOutcome<T>> = outcomes.iter().filter(|o| o.group == g).cloned().collect();
            (!subset.is_empty()).then(|| (g.key().to_string(), GroupMetrics::compute(&subset, config.threshold, mode)))
        })
        .collect();
    Ok(MetricsReport {
        threshold: config.threshold,
        protocol: Protocol { window_frames: crate::scorer::WINDOW_FRAMES, fps: config.fps, stride: config.stride, mode },
        manifest: None,
        groups,
        overall: GroupMetrics::compute(outcomes, config.threshold, mode),
        kaggle: KaggleBlock::compute(outcomes, &config.leads_s, config.threshold, mode),
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> MetricError + '_ {
    move |e| MetricError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Reads outcomes stored one JSON object per line.
pub fn read_outcomes(path: impl AsRef<Path>) -> Result<Vec<ClipOutcome<f64>>, MetricError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let o = serde_json::from_str(&line).map_err(|e| MetricError::Io {
            path: path.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(o);
    }
    Ok(out)
}

pub fn write_outcomes(path: impl AsRef<Path>, outcomes: &[ClipOutcome<f64>]) -> Result<(), MetricError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for o in outcomes {
        let line = serde_json::to_string(o).expect("outcome serializes");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Label;

    fn outcome(id: &str, positive: bool, peak: f64, alert: Option<f64>) -> ClipOutcome<f64> {
        ClipOutcome {
            clip_id: id.into(),
            label: if positive { Label::Positive } else { Label::Negative },
            group: Group::Animal,
            peak_score: peak,
            event_time_s: positive.then_some(6.0),
            alert_profile: alert.map(|t| vec![(t, peak)]).unwrap_or_default(),
            eligible_peaks: vec![],
        }
    }

    #[test]
    fn confusion_arithmetic() {
        let o = [
            outcome("tp", true, 0.9, Some(5.0)),
            outcome("fn", true, 0.5, Some(5.0)),
            outcome("fp", false, 0.8, Some(5.0)),
            outcome("tn", false, 0.1, Some(5.0)),
        ];
        assert_eq!(f1_fpr_at_threshold(&o, 0.75).unwrap(), (Some(0.5), Some(0.5)));
        assert!(f1_fpr_at_threshold(&o, 1.0).is_err());
        assert_eq!(f1_fpr_at_threshold(&o[2..], 0.75).unwrap(), (None, Some(0.5)));
        assert_eq!(f1_fpr_at_threshold(&o[..2], 0.75).unwrap().1, None);
    }

    #[test]
    fn ewr_mtta_arithmetic() {
        let o = [
            outcome("a", true, 0.9, Some(5.0)),
            outcome("b", true, 0.9, Some(4.0)),
            outcome("c", true, 0.9, Some(6.0)),
        ];
        let w = ewr_mtta(&o, 0.75).unwrap();
        assert_eq!(w.ewr, Some(2.0 / 3.0));
        assert_eq!(w.mtta_s, Some(1.5));
        let none = ewr_mtta(&o[2..], 0.75).unwrap();
        assert_eq!((none.ewr, none.mtta_s), (Some(0.0), None));
        let empty = ewr_mtta::<f64>(&[], 0.75).unwrap();
        assert_eq!((empty.ewr, empty.mtta_s), (None, None));
    }

    #[test]
    fn missing_traces_listed() {
        let m = Manifest::new("m", "1", vec![]).unwrap();
        assert!(evaluate(&m, &[], &EvalConfig::default()).is_ok());
    }
}
