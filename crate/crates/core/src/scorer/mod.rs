//! Pluggable risk scorers.
//!
//! A scorer maps one 16-frame [`Window`] to a collision probability. Real
//! models live behind [`SubprocessScorer`]; the built-ins cover replay of
//! recorded traces and synthetic generators for tests and demos.

mod builtin;
mod spec;
mod subprocess;
pub mod protocol;
pub mod trace;

use std::sync::Arc;

use thiserror::Error;

pub use builtin::{ConstantScorer, EventTime, NoisyRampScorer, RampScorer, ReplayScorer};
pub use spec::{ScorerSpec, SpecError};
pub use subprocess::SubprocessScorer;
pub use trace::{load_traces, read_bundle, write_bundle, write_bundle_to, ScoreTrace, TraceEntry, TraceError};

/// Frames per scored window.
pub const WINDOW_FRAMES: usize = 16;
/// Preprocessed frame side length.
pub const FRAME_SIDE: usize = 256;
/// Values per preprocessed frame (`256 x 256 x 3`).
pub const FRAME_LEN: usize = FRAME_SIDE * FRAME_SIDE * 3;

/// One preprocessed frame, `256 x 256 x 3` interleaved, normalized.
pub type Frame = Arc<[f32]>;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("backend: {0}")]
    Backend(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("clip {clip_id}: no replay entry at t={time_s} s (nearest {nearest})")]
    ReplayMiss { clip_id: String, time_s: f64, nearest: String },
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
}

/// A block of 16 consecutive preprocessed frames.
#[derive(Debug, Clone)]
pub struct Window {
    pub clip_id: Arc<str>,
    pub frames: Vec<Frame>,
    pub start_frame_index: u64,
    pub fps: f64,
}

impl Window {
    pub fn new(clip_id: Arc<str>, frames: Vec<Frame>, start_frame_index: u64, fps: f64) -> Result<Self, ScorerError> {
        if frames.len() != WINDOW_FRAMES {
            return Err(ScorerError::InvalidWindow(format!("expected {WINDOW_FRAMES} frames, got {}", frames.len())));
        }
        if let Some(f) = frames.iter().find(|f| f.len() != FRAME_LEN) {
            return Err(ScorerError::InvalidWindow(format!("frame has {} values, expected {FRAME_LEN}", f.len())));
        }
        if !(fps > 0.0) {
            return Err(ScorerError::InvalidWindow(format!("fps {fps}")));
        }
        Ok(Window { clip_id, frames, start_frame_index, fps })
    }

    /// Index of the newest frame in the window.
    pub fn last_frame_index(&self) -> u64 {
        self.start_frame_index + WINDOW_FRAMES as u64 - 1
    }

    /// Timestamp at which this window's score becomes available.
    pub fn prediction_time_s(&self) -> f64 {
        prediction_time_s(self.start_frame_index, self.fps)
    }
}

pub fn prediction_time_s(start_frame_index: u64, fps: f64) -> f64 {
    (start_frame_index + WINDOW_FRAMES as u64 - 1) as f64 / fps
}

/// What a scorer may know about the clip it is about to score.
///
/// Only synthetic generators look at `event_time_s`; model backends ignore it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipContext {
    pub clip_id: String,
    pub fps: f64,
    pub event_time_s: Option<f64>,
}

pub trait Scorer: Send {
    fn name(&self) -> String;

    fn start_clip(&mut self, _clip: &ClipContext) -> Result<(), ScorerError> {
        Ok(())
    }

    fn score(&mut self, window: &Window) -> Result<f64, ScorerError>;

    /// Scores several windows; backends that can pipeline override this.
    fn score_many(&mut self, windows: &[Window]) -> Result<Vec<f64>, ScorerError> {
        windows.iter().map(|w| self.score(w)).collect()
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn start_clip(&mut self, clip: &ClipContext) -> Result<(), ScorerError> {
        (**self).start_clip(clip)
    }
    fn score(&mut self, window: &Window) -> Result<f64, ScorerError> {
        (**self).score(window)
    }
    fn score_many(&mut self, windows: &[Window]) -> Result<Vec<f64>, ScorerError> {
        (**self).score_many(windows)
    }
}

pub(crate) fn check_probability(p: f64) -> Result<f64, ScorerError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ScorerError::OutOfRange(p))
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn blank_window(clip: &str, start: u64, fps: f64) -> Window {
        let frame: Frame = vec![0.0_f32; FRAME_LEN].into();
        Window::new(clip.into(), vec![frame; WINDOW_FRAMES], start, fps).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::blank_window;
    use super::*;

    #[test]
    fn prediction_time_is_last_frame_over_fps() {
        assert_eq!(prediction_time_s(0, 8.0), 1.875);
        assert_eq!(blank_window("c", 56, 8.0).prediction_time_s(), 8.875);
    }

    #[test]
    fn window_shape_checked() {
        let frame: Frame = vec![0.0_f32; FRAME_LEN].into();
        assert!(Window::new("c".into(), vec![frame.clone(); 15], 0, 8.0).is_err());
        let small: Frame = vec![0.0_f32; 10].into();
        let mut frames = vec![frame; 15];
        frames.push(small);
        assert!(Window::new("c".into(), frames, 0, 8.0).is_err());
    }
}
