//! Benchmark clip manifests and the active-mining review queue.
//!
//! A manifest is JSONL: an optional header line `{"manifest": {"name", "version"}}`
//! followed by one [`ClipRecord`] per line. Unknown keys on a record are kept
//! in [`ClipRecord::extra`] and written back out unchanged.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Side length of the preprocessed frame that boxes and heatmaps live in.
pub const FRAME_SIZE: f64 = 256.0;
/// Long-tail clips are standardized to this duration.
pub const LONGTAIL_DURATION_S: f64 = 9.0;
/// Long-tail positives place the event here.
pub const LONGTAIL_EVENT_S: f64 = 6.0;
/// Required footage after the event in a long-tail clip.
pub const LONGTAIL_POST_EVENT_S: f64 = 3.0;
/// Default threshold for surfacing clips to human review.
pub const DEFAULT_MINING_THRESHOLD: f64 = 0.75;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("clip {clip_id}: {rule}")]
    Invalid { clip_id: String, rule: String },
    #[error("duplicate clip_id {0}")]
    Duplicate(String),
    #[error("queue entry {clip_id}: {message}")]
    Queue { clip_id: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Animal,
    Pedestrian,
    Intersection,
    PassOvertake,
    Cyclist,
    Motorcyclist,
    Infrastructure,
    Rain,
    Snow,
    Fog,
    None,
}

impl Group {
    /// The ten long-tail groups in reporting order.
    pub const LONGTAIL: [Group; 10] = [
        Group::Animal,
        Group::Pedestrian,
        Group::Intersection,
        Group::PassOvertake,
        Group::Cyclist,
        Group::Motorcyclist,
        Group::Infrastructure,
        Group::Rain,
        Group::Snow,
        Group::Fog,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Group::Animal => "animal",
            Group::Pedestrian => "pedestrian",
            Group::Intersection => "intersection",
            Group::PassOvertake => "pass_overtake",
            Group::Cyclist => "cyclist",
            Group::Motorcyclist => "motorcyclist",
            Group::Infrastructure => "infrastructure",
            Group::Rain => "rain",
            Group::Snow => "snow",
            Group::Fog => "fog",
            Group::None => "none",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Group::Animal => "Animal",
            Group::Pedestrian => "Pedestrian",
            Group::Intersection => "Intersection",
            Group::PassOvertake => "Pass/Overtake",
            Group::Cyclist => "Cyclist",
            Group::Motorcyclist => "Motorcyclist",
            Group::Infrastructure => "Infrastructure",
            Group::Rain => "Rain",
            Group::Snow => "Snow",
            Group::Fog => "Fog",
            Group::None => "None",
        }
    }

    pub fn from_key(key: &str) -> Option<Group> {
        Group::LONGTAIL
            .into_iter()
            .chain(std::iter::once(Group::None))
            .find(|g| g.key() == key)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Longtail,
    Kaggle,
    External,
    Synthetic,
}

/// Ground-truth box in 256x256 preprocessed-frame pixel coordinates.
///
/// Serialized as `[frame_index, x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u32, f64, f64, f64, f64)", into = "(u32, f64, f64, f64, f64)")]
pub struct GtBox {
    pub frame_index: u32,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<(u32, f64, f64, f64, f64)> for GtBox {
    fn from((frame_index, x0, y0, x1, y1): (u32, f64, f64, f64, f64)) -> Self {
        GtBox { frame_index, x0, y0, x1, y1 }
    }
}

impl From<GtBox> for (u32, f64, f64, f64, f64) {
    fn from(b: GtBox) -> Self {
        (b.frame_index, b.x0, b.y0, b.x1, b.y1)
    }
}

impl GtBox {
    pub fn new(frame_index: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        GtBox { frame_index, x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        0.0 <= self.x0 && self.x0 < self.x1 && self.x1 <= FRAME_SIZE && 0.0 <= self.y0 && self.y0 < self.y1 && self.y1 <= FRAME_SIZE
    }

    /// Inclusive containment of a pixel at `(row, col)`.
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let (r, c) = (row as f64, col as f64);
        self.x0 <= c && c <= self.x1 && self.y0 <= r && r <= self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub group: Group,
    pub label: Label,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_time_s: Option<f64>,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_boxes: Option<Vec<GtBox>>,
    pub source: Source,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ClipRecord {
    /// Checks the per-record invariants that hold for every source.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let fail = |rule: String| Err(ManifestError::Invalid { clip_id: self.clip_id.clone(), rule });
        if self.clip_id.is_empty() {
            return fail("clip_id must be non-empty".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps must be > 0, got {}", self.fps));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return fail(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        match (self.label, self.event_time_s) {
            (Label::Positive, None) => return fail("positive clip requires event_time_s".into()),
            (Label::Positive, Some(t)) if !(t > 0.0 && t <= self.duration_s) => {
                return fail(format!("event_time_s {t} outside (0, duration_s={}]", self.duration_s))
            }
            (Label::Negative, Some(_)) => return fail("negative clip must not carry event_time_s".into()),
            _ => {}
        }
        if let Some(boxes) = &self.gt_boxes {
            if let Some(b) = boxes.iter().find(|b| !b.is_valid()) {
                return fail(format!(
                    "gt_box [{}, {}, {}, {}] outside 0 <= x0 < x1 <= 256, 0 <= y0 < y1 <= 256",
                    b.x0, b.y0, b.x1, b.y1
                ));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    name: String,
    version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub clips: Vec<ClipRecord>,
}

impl Manifest {
    pub fn new(name: impl Into<String>, version: impl Into<String>, clips: Vec<ClipRecord>) -> Result<Self, ManifestError> {
        let m = Manifest { name: name.into(), version: version.into(), clips };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::with_capacity(self.clips.len());
        for clip in &self.clips {
            clip.validate()?;
            if !seen.insert(clip.clip_id.as_str()) {
                return Err(ManifestError::Duplicate(clip.clip_id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn get(&self, clip_id: &str) -> Option<&ClipRecord> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }

    /// Clip count per group, in group order.
    pub fn group_counts(&self) -> BTreeMap<Group, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.clips {
            *counts.entry(c.group).or_insert(0) += 1;
        }
        counts
    }

    /// Stable digest of the clip ids, used to check that reports are comparable.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut ids: Vec<&str> = self.clips.iter().map(|c| c.clip_id.as_str()).collect();
        ids.sort_unstable();
        let mut h = Sha256::new();
        for id in ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads a manifest, validating every record.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let default_name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let m = read_manifest(BufReader::new(file), &default_name)?;
    if m.is_empty() {
        log::warn!("{}: manifest has no clips", path.display());
    }
    Ok(m)
}

pub fn read_manifest(reader: impl BufRead, default_name: &str) -> Result<Manifest, ManifestError> {
    let mut name = default_name.to_string();
    let mut version = "0".to_string();
    let mut clips = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| ManifestError::Parse { line: lineno, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| ManifestError::Parse { line: lineno, message: e.to_string() })?;
        if let Some(h) = value.get("manifest") {
            if !clips.is_empty() {
                return Err(ManifestError::Parse { line: lineno, message: "manifest header after records".into() });
            }
            let h: ManifestHeader = serde_json::from_value(h.clone())
                .map_err(|e| ManifestError::Parse { line: lineno, message: e.to_string() })?;
            name = h.name;
            version = h.version;
            continue;
        }
        let clip: ClipRecord =
            serde_json::from_value(value).map_err(|e| ManifestError::Parse { line: lineno, message: e.to_string() })?;
        clip.validate()?;
        if !seen.insert(clip.clip_id.clone()) {
            return Err(ManifestError::Duplicate(clip.clip_id));
        }
        clips.push(clip);
    }
    Ok(Manifest { name, version, clips })
}

pub fn write_manifest(manifest: &Manifest, mut w: impl Write) -> std::io::Result<()> {
    let header = serde_json::json!({ "manifest": ManifestHeader { name: manifest.name.clone(), version: manifest.version.clone() } });
    writeln!(w, "{header}")?;
    for clip in &manifest.clips {
        serde_json::to_writer(&mut w, clip)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_manifest(manifest, &mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub clip_id: String,
    pub rule: &'static str,
    pub message: String,
}

/// Lists every long-tail clip that breaks the 9 s / event-at-6 s / 3 s
/// post-event standardization. Non-long-tail clips are ignored.
pub fn validate_longtail_standard(manifest: &Manifest) -> Vec<Violation> {
    let mut out = Vec::new();
    for clip in manifest.clips.iter().filter(|c| c.source == Source::Longtail) {
        let mut push = |rule, message| out.push(Violation { clip_id: clip.clip_id.clone(), rule, message });
        if (clip.duration_s - LONGTAIL_DURATION_S).abs() > TIME_EPS {
            push("duration", format!("duration {} s != {} s", clip.duration_s, LONGTAIL_DURATION_S));
        }
        if let Some(event) = clip.event_time_s {
            if (event - LONGTAIL_EVENT_S).abs() > TIME_EPS {
                push("event_time", format!("event at {event} s != {LONGTAIL_EVENT_S} s"));
            }
            let post = clip.duration_s - event;
            if post < LONGTAIL_POST_EVENT_S - TIME_EPS {
                push("post_event", format!("post-event footage {post} s < {LONGTAIL_POST_EVENT_S} s"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Pending,
    ConfirmedPositive,
    ConfirmedNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueueEntry {
    pub clip_id: String,
    pub peak_score: f64,
    pub disposition: Disposition,
    pub hard_negative: bool,
}

impl ReviewQueueEntry {
    pub fn validate(&self, mining_threshold: f64) -> Result<(), ManifestError> {
        let bad = |message: &str| Err(ManifestError::Queue { clip_id: self.clip_id.clone(), message: message.into() });
        if !(0.0..=1.0).contains(&self.peak_score) {
            return bad("peak_score outside [0, 1]");
        }
        if self.hard_negative && (self.disposition != Disposition::ConfirmedNegative || self.peak_score < mining_threshold) {
            return bad("hard_negative requires confirmed_negative and peak_score >= mining threshold");
        }
        Ok(())
    }
}

/// Builds the review queue: one pending entry per clip whose peak reaches
/// `threshold`, highest peak first. Empty traces are skipped.
pub fn mine_review_queue<'a, I>(traces: I, threshold: f64) -> Result<Vec<ReviewQueueEntry>, ManifestError>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ManifestError::Queue { clip_id: String::new(), message: format!("threshold {threshold} outside (0, 1)") });
    }
    let mut queue = Vec::new();
    for (clip_id, scores) in traces {
        let Some(peak) = scores.iter().copied().reduce(f64::max) else {
            log::warn!("clip {clip_id}: empty trace skipped");
            continue;
        };
        if peak >= threshold {
            queue.push(ReviewQueueEntry {
                clip_id: clip_id.to_string(),
                peak_score: peak,
                disposition: Disposition::Pending,
                hard_negative: false,
            });
        }
    }
    queue.sort_by(|a, b| b.peak_score.total_cmp(&a.peak_score).then_with(|| a.clip_id.cmp(&b.clip_id)));
    Ok(queue)
}

/// Records a reviewer's verdict on a pending entry.
pub fn mark_disposition(
    entry: &ReviewQueueEntry,
    disposition: Disposition,
    mining_threshold: f64,
) -> Result<ReviewQueueEntry, ManifestError> {
    if entry.disposition != Disposition::Pending {
        return Err(ManifestError::Queue { clip_id: entry.clip_id.clone(), message: "already reviewed".into() });
    }
    if disposition == Disposition::Pending {
        return Err(ManifestError::Queue { clip_id: entry.clip_id.clone(), message: "cannot mark as pending".into() });
    }
    Ok(ReviewQueueEntry {
        clip_id: entry.clip_id.clone(),
        peak_score: entry.peak_score,
        disposition,
        hard_negative: disposition == Disposition::ConfirmedNegative && entry.peak_score >= mining_threshold,
    })
}

pub fn read_queue(path: impl AsRef<Path>) -> Result<Vec<ReviewQueueEntry>, ManifestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ManifestError::Parse { line: idx + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_queue(queue: &[ReviewQueueEntry], path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for e in queue {
        serde_json::to_writer(&mut w, e).map_err(|e| ManifestError::Parse { line: 0, message: e.to_string() })?;
        writeln!(w).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
