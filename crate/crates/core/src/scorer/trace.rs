//! Score traces and their on-disk forms.
//!
//! Two layouts are supported:
//!
//! * `trace.jsonl` for a single clip: a header line
//!   `{"clip_id", "fps", "stride", "incomplete"}` followed by one
//!   `{"t": seconds, "score": p}` per window.
//! * trace bundles for many clips, one clip per line, either
//!   `{"clip_id", "entries": [[t, p], ...]}` or the compact regular-grid form
//!   `{"clip_id", "t0", "dt", "scores": [p, ...]}`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("clip {clip_id}: {message}")]
    Invalid { clip_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: f64,
    pub score: f64,
}

/// Time-ordered window scores for one clip.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTrace {
    pub clip_id: String,
    pub entries: Vec<TraceEntry>,
}

impl ScoreTrace {
    pub fn new(clip_id: impl Into<String>) -> Self {
        ScoreTrace { clip_id: clip_id.into(), entries: Vec::new() }
    }

    pub fn from_entries(clip_id: impl Into<String>, entries: Vec<TraceEntry>) -> Result<Self, TraceError> {
        let mut t = ScoreTrace::new(clip_id);
        for e in entries {
            t.push(e.t, e.score)?;
        }
        Ok(t)
    }

    /// Appends an entry, enforcing score range and strictly increasing time.
    pub fn push(&mut self, t: f64, score: f64) -> Result<(), TraceError> {
        let invalid = |message: String| TraceError::Invalid { clip_id: self.clip_id.clone(), message };
        if !(0.0..=1.0).contains(&score) {
            return Err(invalid(format!("score {score} at t={t} outside [0, 1]")));
        }
        if !t.is_finite() {
            return Err(invalid(format!("non-finite time {t}")));
        }
        if let Some(last) = self.entries.last() {
            if t <= last.t {
                return Err(invalid(format!("time {t} not after {}", last.t)));
            }
        }
        self.entries.push(TraceEntry { t, score });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn peak(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.score).reduce(f64::max)
    }

    /// Time of the first entry reaching `threshold`.
    pub fn first_crossing(&self, threshold: f64) -> Option<f64> {
        self.entries.iter().find(|e| e.score >= threshold).map(|e| e.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub clip_id: String,
    pub fps: f64,
    pub stride: u32,
    #[serde(default)]
    pub incomplete: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io { path: path.to_path_buf(), source }
}

pub fn write_trace(path: impl AsRef<Path>, header: &TraceHeader, trace: &ScoreTrace) -> Result<(), TraceError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        serde_json::to_writer(&mut *w, header)?;
        writeln!(w)?;
        for e in &trace.entries {
            serde_json::to_writer(&mut *w, e)?;
            writeln!(w)?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(path))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<(TraceHeader, ScoreTrace), TraceError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let parse = |line: usize, message: String| TraceError::Parse { path: path.to_path_buf(), line, message };
    let mut header: Option<TraceHeader> = None;
    let mut trace = ScoreTrace::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let h: TraceHeader = serde_json::from_str(&line).map_err(|e| parse(idx + 1, e.to_string()))?;
                trace.clip_id = h.clip_id.clone();
                header = Some(h);
            }
            Some(_) => {
                let e: TraceEntry = serde_json::from_str(&line).map_err(|e| parse(idx + 1, e.to_string()))?;
                trace.push(e.t, e.score)?;
            }
        }
    }
    let header = header.ok_or_else(|| parse(1, "missing trace header".into()))?;
    Ok((header, trace))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum BundleLine {
    Entries { clip_id: String, entries: Vec<(f64, f64)> },
    Grid { clip_id: String, t0: f64, dt: f64, scores: Vec<f64> },
}

impl BundleLine {
    fn into_trace(self) -> Result<ScoreTrace, TraceError> {
        match self {
            BundleLine::Entries { clip_id, entries } => {
                ScoreTrace::from_entries(clip_id, entries.into_iter().map(|(t, score)| TraceEntry { t, score }).collect())
            }
            BundleLine::Grid { clip_id, t0, dt, scores } => {
                let mut tr = ScoreTrace::new(clip_id);
                for (k, s) in scores.into_iter().enumerate() {
                    tr.push(t0 + k as f64 * dt, s)?;
                }
                Ok(tr)
            }
        }
    }
}

pub fn read_bundle_from(reader: impl BufRead, path: &Path) -> Result<Vec<ScoreTrace>, TraceError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let b: BundleLine = serde_json::from_str(&line)
            .map_err(|e| TraceError::Parse { path: path.to_path_buf(), line: idx + 1, message: e.to_string() })?;
        out.push(b.into_trace()?);
    }
    Ok(out)
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<Vec<ScoreTrace>, TraceError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_bundle_from(BufReader::new(file), path)
}

pub fn write_bundle(path: impl AsRef<Path>, traces: &[ScoreTrace]) -> Result<(), TraceError> {
    let path = path.as_ref();
    let w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_bundle_to(w, traces).map_err(io_err(path))
}

/// One line per clip: `{"clip_id": ..., "entries": [[t, score], ...]}`.
pub fn write_bundle_to(mut w: impl Write, traces: &[ScoreTrace]) -> std::io::Result<()> {
    for t in traces {
        let line = BundleLine::Entries {
            clip_id: t.clip_id.clone(),
            entries: t.entries.iter().map(|e| (e.t, e.score)).collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()
}

/// Loads traces from a bundle file, a single `trace.jsonl`, or a directory
/// of either.
pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<ScoreTrace>, TraceError> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(load_traces(&f)?);
        }
        return Ok(out);
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(io_err(path))?;
    let is_single = serde_json::from_str::<serde_json::Value>(&first)
        .map(|v| v.get("stride").is_some() && v.get("fps").is_some())
        .unwrap_or(false);
    if is_single {
        Ok(vec![read_trace(path)?.1])
    } else {
        let chained = std::io::Cursor::new(first.into_bytes()).chain(reader);
        read_bundle_from(BufReader::new(chained), path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_enforces_order_and_range() {
        let mut t = ScoreTrace::new("c");
        t.push(1.875, 0.2).unwrap();
        assert!(t.push(1.875, 0.3).is_err());
        assert!(t.push(2.0, 1.5).is_err());
        t.push(2.0, 0.9).unwrap();
        assert_eq!(t.peak(), Some(0.9));
        assert_eq!(t.first_crossing(0.75), Some(2.0));
        assert_eq!(ScoreTrace::new("e").peak(), None);
    }

    #[test]
    fn file_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut tr = ScoreTrace::new("clip-1");
        for k in 0..57 {
            tr.push((15 + k) as f64 / 8.0, (k as f64 / 56.0).powi(3)).unwrap();
        }
        let header = TraceHeader { clip_id: "clip-1".into(), fps: 8.0, stride: 1, incomplete: false };
        let single = dir.path().join("clip-1.jsonl");
        write_trace(&single, &header, &tr).unwrap();
        let (h, back) = read_trace(&single).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, tr);
        assert_eq!(load_traces(&single).unwrap(), vec![tr.clone()]);

        let bundle = dir.path().join("bundle.jsonl");
        write_bundle(&bundle, &[tr.clone(), ScoreTrace::new("empty")]).unwrap();
        let all = load_traces(&bundle).unwrap();
        assert_eq!(all[0], tr);
        assert!(all[1].is_empty());
    }

    #[test]
    fn compact_grid_bundle() {
        let text = r#"{"clip_id":"g","t0":1.875,"dt":0.125,"scores":[0.1,0.5,0.9]}"#;
        let traces = read_bundle_from(text.as_bytes(), Path::new("mem")).unwrap();
        let times: Vec<f64> = traces[0].entries.iter().map(|e| e.t).collect();
        assert_eq!(times, vec![1.875, 2.0, 2.125]);
    }
}
