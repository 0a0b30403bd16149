use serde::{Deserialize, Serialize};

use crate::manifest::{ClipRecord, Group, Label};
use crate::num::Real;
use crate::scorer::ScoreTrace;

use super::MetricError;

/// Tolerance used when comparing prediction times with `event - lead`.
pub const TIME_EPS: f64 = 1e-9;

/// How the per-lead scores of an outcome were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    /// Maximum over all sliding windows ending at least `lead` before the event.
    #[default]
    Sliding,
    /// One fixed window per lead time; per-lead scores need not be monotone.
    SingleWindow,
}

impl OutcomeMode {
    pub fn key(self) -> &'static str {
        match self {
            OutcomeMode::Sliding => "sliding",
            OutcomeMode::SingleWindow => "single_window",
        }
    }
}

/// Everything the metrics need to know about one scored clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipOutcome<T> {
    pub clip_id: String,
    pub label: Label,
    #[serde(default = "default_group")]
    pub group: Group,
    pub peak_score: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_time_s: Option<f64>,
    /// Running maximum of the trace: `(t, score)` at each strict increase.
    /// Lets alert times be recomputed for any threshold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alert_profile: Vec<(f64, T)>,
    /// `(lead_s, score)`, ascending in lead.
    #[serde(default)]
    pub eligible_peaks: Vec<(f64, T)>,
}

fn default_group() -> Group {
    Group::None
}

impl<T: Real> ClipOutcome<T> {
    /// Summarizes a sliding-window trace.
    ///
    /// For positives the score at lead `τ` is the maximum over windows with
    /// prediction time `≤ event - τ`, or 0 when none qualifies. Negatives
    /// use the full-trace peak at every lead.
    pub fn from_trace(record: &ClipRecord, trace: &ScoreTrace, leads: &[f64]) -> Self {
        let mut profile: Vec<(f64, T)> = Vec::new();
        for e in &trace.entries {
            let s = T::lit(e.score);
            if profile.last().is_none_or(|&(_, m)| s > m) {
                profile.push((e.t, s));
            }
        }
        let peak = profile.last().map_or(T::zero(), |&(_, m)| m);
        let mut leads = leads.to_vec();
        leads.sort_by(f64::total_cmp);
        let eligible_peaks = leads
            .iter()
            .map(|&lead| {
                let score = match (record.label, record.event_time_s) {
                    (Label::Positive, Some(event)) => running_max_at(&profile, event - lead),
                    _ => peak,
                };
                (lead, score)
            })
            .collect();
        ClipOutcome {
            clip_id: record.clip_id.clone(),
            label: record.label,
            group: record.group,
            peak_score: peak,
            event_time_s: record.event_time_s,
            alert_profile: profile,
            eligible_peaks,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label.is_positive()
    }

    /// First prediction time whose score reaches `threshold`.
    pub fn first_alert_time_s(&self, threshold: f64) -> Option<f64> {
        let h = T::lit(threshold);
        self.alert_profile.iter().find(|&&(_, m)| m >= h).map(|&(t, _)| t)
    }

    /// Alerted strictly before the event.
    pub fn detected(&self, threshold: f64) -> bool {
        match (self.event_time_s, self.first_alert_time_s(threshold)) {
            (Some(event), Some(alert)) => alert < event,
            _ => false,
        }
    }

    pub fn eligible_peak(&self, lead_s: f64) -> Option<T> {
        self.eligible_peaks.iter().find(|(l, _)| (l - lead_s).abs() < TIME_EPS).map(|&(_, s)| s)
    }

    pub fn validate(&self, mode: OutcomeMode) -> Result<(), MetricError> {
        let bad = |reason: String| Err(MetricError::Inconsistent { clip_id: self.clip_id.clone(), reason });
        let in_unit = |s: T| s >= T::zero() && s <= T::one();
        if !in_unit(self.peak_score) {
            return bad(format!("peak score {} outside [0, 1]", self.peak_score));
        }
        if self.is_positive() != self.event_time_s.is_some() {
            return bad("event time must be present exactly for positives".into());
        }
        for &(lead, s) in &self.eligible_peaks {
            if !in_unit(s) || s > self.peak_score {
                return bad(format!("score {s} at lead {lead} s exceeds peak {}", self.peak_score));
            }
        }
        if self.eligible_peaks.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("leads must be strictly ascending".into());
        }
        if mode == OutcomeMode::Sliding && self.eligible_peaks.windows(2).any(|w| w[1].1 > w[0].1) {
            return bad("sliding-window scores must not increase with lead".into());
        }
        if self.alert_profile.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
            return bad("alert profile must increase in time and score".into());
        }
        if let Some(&(_, m)) = self.alert_profile.last() {
            if m != self.peak_score {
                return bad("alert profile does not end at the peak".into());
            }
        }
        Ok(())
    }
}

fn running_max_at<T: Real>(profile: &[(f64, T)], cutoff: f64) -> T {
    profile.iter().take_while(|(t, _)| *t <= cutoff + TIME_EPS).last().map_or(T::zero(), |&(_, m)| m)
}
