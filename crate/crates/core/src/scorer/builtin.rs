use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_probability, ClipContext, ScoreTrace, Scorer, ScorerError, Window};

const REPLAY_TOLERANCE_S: f64 = 1e-9;

/// Returns the same probability for every window.
#[derive(Debug, Clone)]
pub struct ConstantScorer {
    value: f64,
}

impl ConstantScorer {
    pub fn new(value: f64) -> Result<Self, ScorerError> {
        Ok(ConstantScorer { value: check_probability(value)? })
    }
}

impl Scorer for ConstantScorer {
    fn name(&self) -> String {
        format!("constant({})", self.value)
    }

    fn score(&mut self, _window: &Window) -> Result<f64, ScorerError> {
        Ok(self.value)
    }
}

/// Where a ramp takes its event time from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventTime {
    Fixed(f64),
    /// Use the clip's annotated event; clips without one score zero.
    FromClip,
}

/// Linear ramp from 0 at `event - rise` to 1 at `event`, flat after.
#[derive(Debug, Clone)]
pub struct RampScorer {
    event: EventTime,
    rise_s: f64,
    current_event: Option<f64>,
}

impl RampScorer {
    pub fn new(event: EventTime, rise_s: f64) -> Result<Self, ScorerError> {
        if !(rise_s > 0.0) {
            return Err(ScorerError::Backend(format!("ramp rise must be > 0, got {rise_s}")));
        }
        let current_event = match event {
            EventTime::Fixed(t) => Some(t),
            EventTime::FromClip => None,
        };
        Ok(RampScorer { event, rise_s, current_event })
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match self.current_event {
            Some(event) => ((t - (event - self.rise_s)) / self.rise_s).clamp(0.0, 1.0),
            None => 0.0,
        }
    }
}

impl Scorer for RampScorer {
    fn name(&self) -> String {
        match self.event {
            EventTime::Fixed(t) => format!("ramp(event={t}, rise={})", self.rise_s),
            EventTime::FromClip => format!("ramp(event=clip, rise={})", self.rise_s),
        }
    }

    fn start_clip(&mut self, clip: &ClipContext) -> Result<(), ScorerError> {
        if self.event == EventTime::FromClip {
            self.current_event = clip.event_time_s;
        }
        Ok(())
    }

    fn score(&mut self, window: &Window) -> Result<f64, ScorerError> {
        Ok(self.value_at(window.prediction_time_s()))
    }
}

/// Ramp plus Gaussian noise, clipped to `[0, 1]`.
///
/// The noise for a window depends only on `(seed, clip_id, start_frame_index)`,
/// so repeated calls and reordered evaluation give identical scores.
#[derive(Debug, Clone)]
pub struct NoisyRampScorer {
    ramp: RampScorer,
    seed: u64,
    noise: Normal<f64>,
    sigma: f64,
}

impl NoisyRampScorer {
    pub fn new(ramp: RampScorer, seed: u64, sigma: f64) -> Result<Self, ScorerError> {
        let noise = Normal::new(0.0, sigma).map_err(|e| ScorerError::Backend(format!("noise sigma {sigma}: {e}")))?;
        Ok(NoisyRampScorer { ramp, seed, noise, sigma })
    }
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Scorer for NoisyRampScorer {
    fn name(&self) -> String {
        format!("noisy-{}(seed={}, sigma={})", self.ramp.name(), self.seed, self.sigma)
    }

    fn start_clip(&mut self, clip: &ClipContext) -> Result<(), ScorerError> {
        self.ramp.start_clip(clip)
    }

    fn score(&mut self, window: &Window) -> Result<f64, ScorerError> {
        let key = fnv1a(&[&self.seed.to_le_bytes(), window.clip_id.as_bytes(), &window.start_frame_index.to_le_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let base = self.ramp.value_at(window.prediction_time_s());
        Ok((base + self.noise.sample(&mut rng)).clamp(0.0, 1.0))
    }
}

/// Plays back recorded traces, matching windows by clip and prediction time.
#[derive(Debug, Clone, Default)]
pub struct ReplayScorer {
    traces: HashMap<String, ScoreTrace>,
}

impl ReplayScorer {
    pub fn new(traces: impl IntoIterator<Item = ScoreTrace>) -> Self {
        ReplayScorer { traces: traces.into_iter().map(|t| (t.clip_id.clone(), t)).collect() }
    }

    pub fn lookup(&self, clip_id: &str, time_s: f64) -> Result<f64, ScorerError> {
        let Some(trace) = self.traces.get(clip_id) else {
            return Err(ScorerError::ReplayMiss { clip_id: clip_id.into(), time_s, nearest: "no trace for clip".into() });
        };
        let idx = trace.entries.partition_point(|e| e.t < time_s - REPLAY_TOLERANCE_S);
        if let Some(e) = trace.entries.get(idx) {
            if (e.t - time_s).abs() <= REPLAY_TOLERANCE_S {
                return Ok(e.score);
            }
        }
        let nearest = [idx.checked_sub(1), Some(idx)]
            .into_iter()
            .flatten()
            .filter_map(|i| trace.entries.get(i))
            .min_by(|a, b| (a.t - time_s).abs().total_cmp(&(b.t - time_s).abs()))
            .map(|e| format!("{} s", e.t))
            .unwrap_or_else(|| "trace is empty".into());
        Err(ScorerError::ReplayMiss { clip_id: clip_id.into(), time_s, nearest })
    }
}

impl Scorer for ReplayScorer {
    fn name(&self) -> String {
        format!("replay({} clips)", self.traces.len())
    }

    fn score(&mut self, window: &Window) -> Result<f64, ScorerError> {
        self.lookup(&window.clip_id, window.prediction_time_s())
    }
}
