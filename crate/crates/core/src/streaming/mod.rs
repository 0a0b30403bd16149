//! Streaming inference: preprocess each incoming frame once, keep the last
//! 16 in a rolling buffer, score a window every `stride` frames, and raise
//! an alert the first time a score reaches the threshold.

mod frames;
mod latency;

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resample::resize_bilinear;
use crate::scorer::{ClipContext, Frame, ScoreTrace, Scorer, Window, FRAME_SIDE, WINDOW_FRAMES};

pub use frames::{read_frame_file, write_ppm, FrameIter, FrameSource, RawFrame, SyntheticFrames};
pub use latency::{LatencyReport, Stats, WindowLatency};

/// Default evaluation frame rate.
pub const DEFAULT_FPS: f64 = 8.0;
/// Default operating threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.75;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("frame: {0}")]
    Frame(String),
    #[error("io: {0}")]
    Io(String),
    #[error("options: {0}")]
    Options(String),
}

/// Per-channel normalization applied after scaling to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { mean: [0.0; 3], std: [1.0; 3] }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), StreamError> {
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(StreamError::Options(format!("invalid normalization {self:?}")));
        }
        Ok(())
    }
}

/// Resizes to 256x256 (bilinear, half-pixel centers), scales to `[0, 1]` and
/// applies `(x - mean) / std` per channel.
pub fn preprocess_frame(raw: &RawFrame, config: &PreprocessConfig) -> Result<Frame, StreamError> {
    if raw.width == 0 || raw.height == 0 {
        return Err(StreamError::Frame(format!("zero-sized frame {}x{}", raw.width, raw.height)));
    }
    if raw.data.len() != raw.width * raw.height * 3 {
        return Err(StreamError::Frame(format!("{}x{}x3 frame with {} bytes", raw.width, raw.height, raw.data.len())));
    }
    let src: Vec<f32> = raw.data.iter().map(|&b| b as f32).collect();
    let mut out = resize_bilinear(&src, raw.width, raw.height, 3, FRAME_SIDE, FRAME_SIDE);
    for px in out.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = (px[c] / 255.0 - config.mean[c]) / config.std[c];
        }
    }
    Ok(out.into())
}

/// Fixed-capacity queue of the most recent preprocessed frames.
#[derive(Debug, Clone, Default)]
pub struct RollingBuffer {
    frames: VecDeque<Frame>,
    /// Index of the frame at the front of the queue.
    oldest: u64,
}

impl RollingBuffer {
    pub const CAPACITY: usize = WINDOW_FRAMES;

    pub fn new() -> Self {
        RollingBuffer { frames: VecDeque::with_capacity(Self::CAPACITY), oldest: 0 }
    }

    /// Appends the next frame, evicting frame `k - 16` once full.
    pub fn push(&mut self, frame: Frame) {
        if self.frames.len() == Self::CAPACITY {
            self.frames.pop_front();
            self.oldest += 1;
        }
        self.frames.push_back(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == Self::CAPACITY
    }

    pub fn start_frame_index(&self) -> u64 {
        self.oldest
    }

    /// The buffered frames as a window; `None` during warm-up.
    pub fn window(&self, clip_id: &Arc<str>, fps: f64) -> Option<Window> {
        self.is_full().then(|| Window {
            clip_id: clip_id.clone(),
            frames: self.frames.iter().cloned().collect(),
            start_frame_index: self.oldest,
            fps,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub clip_id: String,
    pub alert_time_s: f64,
    pub score: f64,
    pub threshold: f64,
}

/// Threshold alerting with first-alert latching and optional re-arm.
#[derive(Debug, Clone)]
pub struct AlertEngine {
    threshold: f64,
    rearm_after_s: Option<f64>,
    last_alert_s: Option<f64>,
}

impl AlertEngine {
    pub fn new(threshold: f64, rearm_after_s: Option<f64>) -> Self {
        AlertEngine { threshold, rearm_after_s, last_alert_s: None }
    }

    pub fn observe(&mut self, clip_id: &str, t: f64, score: f64) -> Option<AlertEvent> {
        if score < self.threshold {
            return None;
        }
        let armed = match (self.last_alert_s, self.rearm_after_s) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(last), Some(refractory)) => t - last >= refractory,
        };
        if !armed {
            return None;
        }
        self.last_alert_s = Some(t);
        Some(AlertEvent { clip_id: clip_id.to_string(), alert_time_s: t, score, threshold: self.threshold })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOptions {
    pub threshold: f64,
    pub stride: usize,
    pub preprocess: PreprocessConfig,
    /// Re-arm the alert engine this many seconds after an alert.
    pub rearm_after_s: Option<f64>,
    /// Keep every window's latency sample in the report.
    pub keep_per_window: bool,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            threshold: DEFAULT_THRESHOLD,
            stride: 1,
            preprocess: PreprocessConfig::default(),
            rearm_after_s: None,
            keep_per_window: false,
        }
    }
}

impl StreamOptions {
    pub fn validate(&self) -> Result<(), StreamError> {
        if self.stride == 0 {
            return Err(StreamError::Options("stride must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(StreamError::Options(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if let Some(r) = self.rearm_after_s {
            if !(r >= 0.0) {
                return Err(StreamError::Options(format!("re-arm period {r} < 0")));
            }
        }
        self.preprocess.validate()
    }
}

/// Result of streaming one clip.
#[derive(Debug, Clone)]
pub struct StreamRun {
    pub clip_id: String,
    pub fps: f64,
    pub stride: usize,
    pub trace: ScoreTrace,
    pub alerts: Vec<AlertEvent>,
    pub latency: LatencyReport,
    /// Set when the scorer failed; the trace then holds the windows scored
    /// before the failure.
    pub failure: Option<String>,
}

impl StreamRun {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Streams a clip through `scorer`.
pub fn run_stream(source: FrameSource, scorer: &mut dyn Scorer, options: &StreamOptions) -> Result<StreamRun, StreamError> {
    run_stream_with(source, scorer, options, |_| {})
}

/// As [`run_stream`], handing every materialized window to `observe`
/// before it is scored.
pub fn run_stream_with(
    source: FrameSource,
    scorer: &mut dyn Scorer,
    options: &StreamOptions,
    mut observe: impl FnMut(&Window),
) -> Result<StreamRun, StreamError> {
    options.validate()?;
    let (clip_id, fps, event_time_s, frames) = source.into_parts();
    let clip: Arc<str> = clip_id.as_str().into();
    let mut run = StreamRun {
        clip_id: clip_id.clone(),
        fps,
        stride: options.stride,
        trace: ScoreTrace::new(clip_id.clone()),
        alerts: Vec::new(),
        latency: LatencyReport::default(),
        failure: None,
    };
    if let Err(e) = scorer.start_clip(&ClipContext { clip_id: clip_id.clone(), fps, event_time_s }) {
        run.failure = Some(e.to_string());
        return Ok(run);
    }

    let mut buffer = RollingBuffer::new();
    let mut alerts = AlertEngine::new(options.threshold, options.rearm_after_s);
    let mut samples = Vec::new();
    let mut frames_preprocessed = 0usize;
    let mut warmup_ms = 0.0;
    let mut pending_pre_ms = 0.0;

    for (index, raw) in frames.enumerate() {
        let raw = raw?;
        let started = Instant::now();
        let frame = preprocess_frame(&raw, &options.preprocess)?;
        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        frames_preprocessed += 1;
        buffer.push(frame);

        if index + 1 < WINDOW_FRAMES {
            warmup_ms += elapsed;
            continue;
        }
        pending_pre_ms += elapsed;
        if (index + 1 - WINDOW_FRAMES) % options.stride != 0 {
            continue;
        }
        let window = buffer.window(&clip, fps).expect("buffer full after warm-up");
        observe(&window);
        let started = Instant::now();
        let scored = scorer.score(&window);
        let inference_ms = started.elapsed().as_secs_f64() * 1e3;
        let t = window.prediction_time_s();
        match scored.map_err(|e| e.to_string()).and_then(|s| {
            run.trace.push(t, s).map(|_| s).map_err(|e| e.to_string())
        }) {
            Ok(score) => {
                if let Some(alert) = alerts.observe(&clip_id, t, score) {
                    run.alerts.push(alert);
                }
            }
            Err(e) => {
                run.failure = Some(format!("window at t={t} s: {e}"));
                break;
            }
        }
        samples.push(WindowLatency { preprocessing_ms: pending_pre_ms, inference_ms });
        pending_pre_ms = 0.0;
    }

    let mut latency = LatencyReport::from_windows(samples, frames_preprocessed, warmup_ms);
    if !options.keep_per_window {
        latency.per_window.clear();
    }
    run.latency = latency;
    Ok(run)
}

/// Preprocesses every frame of a clip up front.
pub fn preprocess_clip(raw: &[RawFrame], config: &PreprocessConfig) -> Result<Vec<Frame>, StreamError> {
    raw.iter().map(|f| preprocess_frame(f, config)).collect()
}

/// All windows of a fully preprocessed clip, by direct slicing.
pub fn batch_extract_windows(frames: &[Frame], clip_id: &str, fps: f64, stride: usize) -> Vec<Window> {
    if frames.len() < WINDOW_FRAMES || stride == 0 {
        return Vec::new();
    }
    let clip: Arc<str> = clip_id.into();
    (0..=frames.len() - WINDOW_FRAMES)
        .step_by(stride)
        .map(|start| Window {
            clip_id: clip.clone(),
            frames: frames[start..start + WINDOW_FRAMES].to_vec(),
            start_frame_index: start as u64,
            fps,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{ConstantScorer, EventTime, RampScorer};

    fn synthetic(n: usize) -> FrameSource {
        FrameSource::synthetic("clip", DEFAULT_FPS, SyntheticFrames { frames: n, width: 6, height: 4, seed: 3 }).unwrap()
    }

    #[test]
    fn identity_resolution_is_raw_over_255() {
        let data: Vec<u8> = (0..256 * 256 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let raw = RawFrame::new(256, 256, data.clone()).unwrap();
        let out = preprocess_frame(&raw, &PreprocessConfig::default()).unwrap();
        assert!(out.iter().zip(&data).all(|(&o, &r)| o == r as f32 / 255.0));
    }

    #[test]
    fn constant_frame_normalizes_to_constant() {
        let raw = RawFrame::filled(512, 512, 255).unwrap();
        let cfg = PreprocessConfig { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] };
        let out = preprocess_frame(&raw, &cfg).unwrap();
        for px in out.chunks_exact(3) {
            for c in 0..3 {
                assert_eq!(px[c], (1.0 - cfg.mean[c]) / cfg.std[c]);
            }
        }
    }

    #[test]
    fn checkerboard_center_is_half() {
        let w = 255u8;
        let raw = RawFrame::new(2, 2, vec![0, 0, 0, w, w, w, w, w, w, 0, 0, 0]).unwrap();
        let out = preprocess_frame(&raw, &PreprocessConfig::default()).unwrap();
        let at = |r: usize, c: usize| out[(r * 256 + c) * 3];
        for (r, c) in [(127, 127), (127, 128), (128, 127), (128, 128)] {
            assert!((at(r, c) - 0.5).abs() < 1e-4, "{}", at(r, c));
        }
    }

    #[test]
    fn nine_second_clip_gives_57_windows() {
        let mut scorer = ConstantScorer::new(0.1).unwrap();
        let run = run_stream(synthetic(72), &mut scorer, &StreamOptions::default()).unwrap();
        assert_eq!(run.trace.len(), 57);
        assert_eq!(run.trace.entries[0].t, 1.875);
        assert_eq!(run.trace.entries[56].t, 8.875);
        assert!(run.alerts.is_empty());
        assert_eq!(run.latency.frames_preprocessed, 72);
        assert_eq!(run.latency.windows, 57);
        assert!(run.is_complete());
    }

    #[test]
    fn ramp_alert_at_grid_crossing() {
        let mut scorer = RampScorer::new(EventTime::Fixed(6.0), 2.0).unwrap();
        let run = run_stream(synthetic(72), &mut scorer, &StreamOptions::default()).unwrap();
        assert_eq!(run.alerts.len(), 1);
        let alert = &run.alerts[0];
        assert_eq!(alert.alert_time_s, 5.5);
        assert_eq!(6.0 - alert.alert_time_s, 0.5);
        // no earlier score met the threshold
        assert!(run.trace.entries.iter().filter(|e| e.t < 5.5).all(|e| e.score < 0.75));
    }

    #[test]
    fn short_clip_never_fills() {
        let mut scorer = ConstantScorer::new(0.9).unwrap();
        let run = run_stream(synthetic(15), &mut scorer, &StreamOptions::default()).unwrap();
        assert!(run.trace.is_empty() && run.alerts.is_empty());
        assert_eq!(run.latency.frames_preprocessed, 15);
    }

    #[test]
    fn stride_spacing() {
        let mut scorer = ConstantScorer::new(0.2).unwrap();
        let opts = StreamOptions { stride: 8, ..Default::default() };
        let run = run_stream(synthetic(72), &mut scorer, &opts).unwrap();
        assert_eq!(run.trace.len(), 8);
        assert!(run.trace.entries.windows(2).all(|w| w[1].t - w[0].t == 1.0));
    }

    #[test]
    fn rearm_after_refractory() {
        let mut e = AlertEngine::new(0.5, Some(1.0));
        assert!(e.observe("c", 2.0, 0.9).is_some());
        assert!(e.observe("c", 2.5, 0.9).is_none());
        assert!(e.observe("c", 3.0, 0.9).is_some());
        let mut latched = AlertEngine::new(0.5, None);
        assert!(latched.observe("c", 2.0, 0.4).is_none());
        assert!(latched.observe("c", 2.1, 0.5).is_some());
        assert!(latched.observe("c", 9.0, 1.0).is_none());
    }

    #[test]
    fn invalid_options() {
        let mut s = ConstantScorer::new(0.2).unwrap();
        for opts in [
            StreamOptions { stride: 0, ..Default::default() },
            StreamOptions { threshold: 1.0, ..Default::default() },
            StreamOptions { preprocess: PreprocessConfig { mean: [0.0; 3], std: [1.0, 0.0, 1.0] }, ..Default::default() },
        ] {
            assert!(run_stream(synthetic(20), &mut s, &opts).is_err());
        }
    }

    #[test]
    fn batch_window_counts() {
        let frames = preprocess_clip(&SyntheticFrames { frames: 72, width: 3, height: 3, seed: 0 }.all(), &PreprocessConfig::default()).unwrap();
        assert_eq!(batch_extract_windows(&frames[..16], "c", 8.0, 1).len(), 1);
        assert_eq!(batch_extract_windows(&frames[..15], "c", 8.0, 1).len(), 0);
        assert_eq!(batch_extract_windows(&frames, "c", 8.0, 1).len(), 57);
        let starts: Vec<u64> = batch_extract_windows(&frames, "c", 8.0, 8).iter().map(|w| w.start_frame_index).collect();
        assert_eq!(starts, vec![0, 8, 16, 24, 32, 40, 48, 56]);
    }

    #[test]
    fn rolling_buffer_evicts_oldest() {
        let mut b = RollingBuffer::new();
        let clip: Arc<str> = "c".into();
        for k in 0..20u32 {
            b.push(vec![k as f32].into());
            assert_eq!(b.len(), (k as usize + 1).min(16));
        }
        let w = b.window(&clip, 8.0).unwrap();
        assert_eq!(w.start_frame_index, 4);
        assert_eq!(w.frames[0][0], 4.0);
        assert_eq!(w.frames[15][0], 19.0);
    }
}
