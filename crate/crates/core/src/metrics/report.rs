use std::path::Path;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::manifest::Manifest;
use crate::num::Real;

use super::{average_precision, confusion, ewr_mtta, roc_auc, ap_at_tta, ClipOutcome, MetricError, OutcomeMode};

/// Rounds to six decimal places, the precision of `report.json`.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

mod six {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_finite() => s.serialize_f64(round6(*x)),
            _ => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<f64>::deserialize(d)
    }
}

mod six_plain {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(round6(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub positives: usize,
    pub negatives: usize,
    #[serde(default)]
    pub detected: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    /// `2TP / (2TP + FP + FN)`; `None` without positives.
    pub fn f1(&self) -> Option<f64> {
        (self.positives > 0).then(|| 2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64)
    }

    /// `FP / (FP + TN)`; `None` without negatives.
    pub fn fpr(&self) -> Option<f64> {
        (self.negatives > 0).then(|| self.fp as f64 / self.negatives as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EarlyWarning {
    pub ewr: Option<f64>,
    pub mtta_s: Option<f64>,
    pub positives: usize,
    pub detected: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupMetrics {
    #[serde(with = "six")]
    pub auc: Option<f64>,
    #[serde(with = "six")]
    pub f1: Option<f64>,
    #[serde(with = "six")]
    pub ewr: Option<f64>,
    #[serde(with = "six")]
    pub mtta_s: Option<f64>,
    #[serde(with = "six")]
    pub fpr: Option<f64>,
    #[serde(with = "six")]
    pub ap: Option<f64>,
    pub counts: Counts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl GroupMetrics {
    /// Undefined metrics become `None` with a diagnostic.
    pub fn compute<T: Real>(outcomes: &[ClipOutcome<T>], threshold: f64, mode: OutcomeMode) -> Self {
        let mut diagnostics = Vec::new();
        let mut keep = |name: &str, r: Result<T, MetricError>| match r {
            Ok(v) => Some(v.to_f64_lossy()),
            Err(e) => {
                diagnostics.push(format!("{name}: {e}"));
                None
            }
        };
        let peaks: Vec<(T, bool)> = outcomes.iter().map(|o| (o.peak_score, o.is_positive())).collect();
        let auc = keep("auc", roc_auc(&peaks));
        let ap = keep("ap", average_precision(&peaks));
        let mut counts = confusion(outcomes, threshold);
        let (ewr, mtta_s) = match mode {
            OutcomeMode::Sliding => {
                let w = ewr_mtta(outcomes, threshold).unwrap_or_default();
                counts.detected = w.detected;
                if w.positives > 0 && w.detected == 0 {
                    diagnostics.push("mtta_s: no detected positives".into());
                }
                (w.ewr, w.mtta_s)
            }
            OutcomeMode::SingleWindow => {
                diagnostics.push("ewr, mtta_s: alert times unavailable in single-window mode".into());
                (None, None)
            }
        };
        if counts.positives == 0 {
            diagnostics.push("f1: no positive clips".into());
        }
        if counts.negatives == 0 {
            diagnostics.push("fpr: no negative clips".into());
        }
        GroupMetrics { auc, f1: counts.f1(), ewr, mtta_s, fpr: counts.fpr(), ap, counts, diagnostics }
    }
}

/// Lead-time constrained AP block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KaggleBlock {
    pub mode: OutcomeMode,
    pub ap_at: Vec<(f64, Option<f64>)>,
    pub map: Option<f64>,
    pub fpr: Option<f64>,
}

impl KaggleBlock {
    pub fn compute<T: Real>(outcomes: &[ClipOutcome<T>], leads_s: &[f64], threshold: f64, mode: OutcomeMode) -> Self {
        let ap_at: Vec<(f64, Option<f64>)> =
            leads_s.iter().map(|&l| (l, ap_at_tta(outcomes, l).ok().map(T::to_f64_lossy))).collect();
        let map = if ap_at.is_empty() {
            None
        } else {
            ap_at.iter().map(|(_, v)| *v).sum::<Option<f64>>().map(|s| s / ap_at.len() as f64)
        };
        KaggleBlock { mode, ap_at, map, fpr: confusion(outcomes, threshold).fpr() }
    }

    pub fn ap(&self, lead_s: f64) -> Option<f64> {
        self.ap_at.iter().find(|(l, _)| (l - lead_s).abs() < 1e-9).and_then(|(_, v)| *v)
    }
}

fn lead_key(lead: f64) -> String {
    format!("ap@{lead:.1}")
}

impl Serialize for KaggleBlock {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.ap_at.len() + 3))?;
        m.serialize_entry("mode", &self.mode)?;
        for (lead, v) in &self.ap_at {
            m.serialize_entry(&lead_key(*lead), &v.map(round6))?;
        }
        m.serialize_entry("map", &self.map.map(round6))?;
        m.serialize_entry("fpr", &self.fpr.map(round6))?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for KaggleBlock {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
        let mut block = KaggleBlock::default();
        for (k, v) in map {
            match k.as_str() {
                "mode" => block.mode = serde_json::from_value(v).map_err(D::Error::custom)?,
                "map" => block.map = v.as_f64(),
                "fpr" => block.fpr = v.as_f64(),
                _ => {
                    let lead = k
                        .strip_prefix("ap@")
                        .and_then(|l| l.parse().ok())
                        .ok_or_else(|| D::Error::custom(format!("unexpected kaggle field `{k}`")))?;
                    block.ap_at.push((lead, v.as_f64()));
                }
            }
        }
        Ok(block)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub window_frames: usize,
    pub fps: f64,
    pub stride: usize,
    pub mode: OutcomeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub name: String,
    pub version: String,
    pub digest: String,
    pub clips: usize,
}

impl ManifestInfo {
    pub fn of(m: &Manifest) -> Self {
        ManifestInfo { name: m.name.clone(), version: m.version.clone(), digest: m.digest(), clips: m.len() }
    }
}

mod ordered_groups {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[(String, GroupMetrics)], s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(v.len()))?;
        for (k, g) in v {
            m.serialize_entry(k, g)?;
        }
        m.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(String, GroupMetrics)>, D::Error> {
        let map = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
        map.into_iter()
            .map(|(k, v)| serde_json::from_value(v).map(|g| (k, g)).map_err(D::Error::custom))
            .collect()
    }
}

/// Per-group and pooled metrics; serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(with = "six_plain")]
    pub threshold: f64,
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
    #[serde(with = "ordered_groups")]
    pub groups: Vec<(String, GroupMetrics)>,
    pub overall: GroupMetrics,
    pub kaggle: KaggleBlock,
}

impl MetricsReport {
    pub fn group(&self, key: &str) -> Option<&GroupMetrics> {
        self.groups.iter().find(|(k, _)| k == key).map(|(_, g)| g)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetricError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty() + "\n")
            .map_err(|e| MetricError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let path = path.as_ref();
        let io = |message: String| MetricError::Io { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| io(e.to_string()))
    }
}
