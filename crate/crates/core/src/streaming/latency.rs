use serde::{Deserialize, Serialize};

/// Distribution summary of per-window timings, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Nearest-rank percentiles; all zeros for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Stats {
        if samples.is_empty() {
            return Stats::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |p: f64| {
            let k = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
            sorted[k.clamp(1, sorted.len()) - 1]
        };
        Stats {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50: rank(50.0),
            p99: rank(99.0),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowLatency {
    pub preprocessing_ms: f64,
    pub inference_ms: f64,
}

impl WindowLatency {
    pub fn total_ms(&self) -> f64 {
        self.preprocessing_ms + self.inference_ms
    }
}

/// Preprocessing/inference decomposition for one stream.
///
/// A window's preprocessing time covers the frames that arrived since the
/// previous window. Filling the buffer before the first window is reported
/// separately as warm-up.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyReport {
    pub windows: usize,
    pub frames_preprocessed: usize,
    pub warmup_preprocessing_ms: f64,
    pub preprocessing_ms: Stats,
    pub inference_ms: Stats,
    pub total_ms: Stats,
    pub preprocessing_total_ms: f64,
    pub inference_total_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_window: Vec<WindowLatency>,
}

impl LatencyReport {
    pub fn from_windows(per_window: Vec<WindowLatency>, frames_preprocessed: usize, warmup_preprocessing_ms: f64) -> Self {
        let pre: Vec<f64> = per_window.iter().map(|w| w.preprocessing_ms).collect();
        let inf: Vec<f64> = per_window.iter().map(|w| w.inference_ms).collect();
        let tot: Vec<f64> = per_window.iter().map(WindowLatency::total_ms).collect();
        LatencyReport {
            windows: per_window.len(),
            frames_preprocessed,
            warmup_preprocessing_ms,
            preprocessing_ms: Stats::from_samples(&pre),
            inference_ms: Stats::from_samples(&inf),
            total_ms: Stats::from_samples(&tot),
            preprocessing_total_ms: pre.iter().sum(),
            inference_total_ms: inf.iter().sum(),
            per_window,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = Stats::from_samples(&xs);
        assert_eq!((s.p50, s.p99, s.min, s.max), (50.0, 99.0, 1.0, 100.0));
        assert_eq!(s.mean, 50.5);
        assert_eq!(Stats::from_samples(&[]), Stats::default());
        assert_eq!(Stats::from_samples(&[3.0]).p99, 3.0);
    }

    #[test]
    fn totals_decompose() {
        let w = vec![
            WindowLatency { preprocessing_ms: 0.5, inference_ms: 2.0 },
            WindowLatency { preprocessing_ms: 0.25, inference_ms: 4.0 },
        ];
        let r = LatencyReport::from_windows(w, 17, 3.0);
        assert_eq!(r.preprocessing_total_ms + r.inference_total_ms, 6.75);
        assert_eq!(r.total_ms.max, 4.25);
    }
}
