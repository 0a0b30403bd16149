//! Attention post-processing: temporal weighting of per-layer attention
//! maps, layer averaging, upsampling to frame resolution and min-max
//! normalization, plus Pointing Game evaluation of the resulting peaks.

mod io;
mod pga;
mod raw;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::resample::resize_bilinear;

pub use io::{read_attention, read_attention_file, read_peaks, write_attention, write_attention_file, write_peaks, write_pgm, HeatmapSidecar, PeakRecord};
pub use pga::{hit_fraction, pga_accuracy, pointing_game, union_area, PgaResult};
pub use raw::{aggregate_raw, RawAttention, RawLayer};

/// Spatial side of an attention map.
pub const GRID: usize = 16;
/// Side of a composed heatmap.
pub const HEATMAP_SIDE: usize = 256;
pub const DEFAULT_TEMPERATURE: f64 = 2.0;
pub const DEFAULT_FRAMES_PER_TOKEN: usize = 2;
/// Late-layer defaults for the large and base encoders.
pub const VIT_L_LAYERS: std::ops::RangeInclusive<u32> = 12..=20;
pub const VIT_B_LAYERS: std::ops::RangeInclusive<u32> = 8..=12;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("temperature must be > 0, got {0}")]
    Temperature(f64),
    #[error("invalid attention: {0}")]
    Invalid(String),
    #[error("clip not PGA-annotated: {0}")]
    NotAnnotated(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Frame weights `w_t ∝ exp((t - c) / T)`.
///
/// The centering constant cancels in the normalization; the largest exponent
/// is pinned to zero so nothing overflows.
pub fn temporal_weights<T: Real>(num_frames: usize, temperature: T) -> Result<Vec<T>, HeatmapError> {
    if !(temperature > T::zero() && temperature.is_finite()) {
        return Err(HeatmapError::Temperature(temperature.to_f64_lossy()));
    }
    if num_frames == 0 {
        return Err(HeatmapError::Invalid("no frames to weight".into()));
    }
    let last = T::from_usize_lossy(num_frames - 1);
    let raw: Vec<T> = (0..num_frames).map(|t| ((T::from_usize_lossy(t) - last) / temperature).exp()).collect();
    let total: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Per-token weights from per-frame weights: each token gets the total
/// weight of the frames it spans, so the token weights still sum to one.
pub fn token_weights<T: Real>(frame_weights: &[T], frames_per_token: usize) -> Result<Vec<T>, HeatmapError> {
    if frames_per_token == 0 || frame_weights.len() % frames_per_token != 0 {
        return Err(HeatmapError::Invalid(format!(
            "{} frame weights do not split into tokens of {frames_per_token} frames",
            frame_weights.len()
        )));
    }
    Ok(frame_weights.chunks(frames_per_token).map(|c| c.iter().copied().sum()).collect())
}

/// Attention mass received by each spatial patch, per temporal token.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAttention<T> {
    pub layer_id: u32,
    pub t_tok: usize,
    /// `t_tok x 16 x 16`, row-major.
    pub data: Vec<T>,
}

impl<T: Real> LayerAttention<T> {
    pub fn new(layer_id: u32, t_tok: usize, data: Vec<T>) -> Result<Self, HeatmapError> {
        if t_tok == 0 || data.len() != t_tok * GRID * GRID {
            return Err(HeatmapError::Invalid(format!(
                "layer {layer_id}: {} values for {t_tok} x {GRID} x {GRID}",
                data.len()
            )));
        }
        if data.iter().any(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(HeatmapError::Invalid(format!("layer {layer_id}: negative or non-finite attention")));
        }
        Ok(LayerAttention { layer_id, t_tok, data })
    }

    pub fn token_map(&self, k: usize) -> &[T] {
        &self.data[k * GRID * GRID..(k + 1) * GRID * GRID]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack<T> {
    pub layers: Vec<LayerAttention<T>>,
    pub frames_per_token: usize,
}

impl<T: Real> AttentionStack<T> {
    pub fn new(layers: Vec<LayerAttention<T>>, frames_per_token: usize) -> Result<Self, HeatmapError> {
        let s = AttentionStack { layers, frames_per_token };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HeatmapError> {
        if self.frames_per_token == 0 {
            return Err(HeatmapError::Invalid("frames_per_token must be >= 1".into()));
        }
        if self.layers.windows(2).any(|w| w[1].layer_id <= w[0].layer_id) {
            return Err(HeatmapError::Invalid("layer ids must be strictly ascending".into()));
        }
        if let Some(first) = self.layers.first() {
            if self.layers.iter().any(|l| l.t_tok != first.t_tok) {
                return Err(HeatmapError::Invalid("layers disagree on temporal token count".into()));
            }
        }
        Ok(())
    }

    pub fn t_tok(&self) -> usize {
        self.layers.first().map_or(0, |l| l.t_tok)
    }

    pub fn layer_ids(&self) -> Vec<u32> {
        self.layers.iter().map(|l| l.layer_id).collect()
    }

    /// Keeps only the layers whose id is in `ids`.
    pub fn select(&self, ids: impl Fn(u32) -> bool) -> Self {
        AttentionStack {
            layers: self.layers.iter().filter(|l| ids(l.layer_id)).cloned().collect(),
            frames_per_token: self.frames_per_token,
        }
    }
}

/// A normalized 256x256 saliency map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap<T> {
    pub values: Vec<T>,
    /// `(row, col)` of the first maximum in row-major order.
    pub peak: (usize, usize),
}

impl<T: Real> Heatmap<T> {
    /// Min-max normalizes `values` (a 256x256 map); a constant map becomes
    /// all zeros. The peak is located on the input, before rounding in the
    /// normalization can merge near-equal values.
    pub fn from_values(mut values: Vec<T>) -> Result<Self, HeatmapError> {
        if values.len() != HEATMAP_SIDE * HEATMAP_SIDE {
            return Err(HeatmapError::Invalid(format!("heatmap has {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HeatmapError::Invalid("non-finite heatmap value".into()));
        }
        let (mut lo, mut hi, mut at) = (values[0], values[0], 0);
        for (i, &v) in values.iter().enumerate() {
            if v > hi {
                hi = v;
                at = i;
            }
            lo = lo.min(v);
        }
        let range = hi - lo;
        if range > T::zero() {
            values.iter_mut().for_each(|v| *v = (*v - lo) / range);
        } else {
            values.iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(Heatmap { values, peak: (at / HEATMAP_SIDE, at % HEATMAP_SIDE) })
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * HEATMAP_SIDE + col]
    }
}

/// The temporally weighted, layer-averaged 16x16 map before upsampling.
pub fn weighted_grid<T: Real>(stack: &AttentionStack<T>, temperature: T) -> Result<Vec<T>, HeatmapError> {
    stack.validate()?;
    if stack.layers.is_empty() {
        return Err(HeatmapError::Invalid("empty layer list".into()));
    }
    let frames = stack.t_tok() * stack.frames_per_token;
    let u = token_weights(&temporal_weights(frames, temperature)?, stack.frames_per_token)?;
    let mut grid = vec![T::zero(); GRID * GRID];
    for layer in &stack.layers {
        for (k, &uk) in u.iter().enumerate() {
            for (g, &a) in grid.iter_mut().zip(layer.token_map(k)) {
                *g = *g + uk * a;
            }
        }
    }
    let n = T::from_usize_lossy(stack.layers.len());
    grid.iter_mut().for_each(|g| *g = *g / n);
    Ok(grid)
}

/// Temporal weighting, layer mean, bilinear upsampling to 256x256 and
/// min-max normalization.
pub fn compose_heatmap<T: Real>(stack: &AttentionStack<T>, temperature: T) -> Result<Heatmap<T>, HeatmapError> {
    let grid = weighted_grid(stack, temperature)?;
    Heatmap::from_values(resize_bilinear(&grid, GRID, GRID, 1, HEATMAP_SIDE, HEATMAP_SIDE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta_stack(r: usize, c: usize, token: usize) -> AttentionStack<f64> {
        let mut data = vec![0.0; 8 * GRID * GRID];
        data[token * GRID * GRID + r * GRID + c] = 1.0;
        AttentionStack::new(vec![LayerAttention::new(12, 8, data).unwrap()], 2).unwrap()
    }

    #[test]
    fn weights_sum_and_ratio() {
        let w = temporal_weights(16, 2.0_f64).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for t in 0..15 {
            assert!((w[t + 1] / w[t] - 0.5_f64.exp()).abs() < 1e-12);
        }
        assert!((w[15] / w[7] - 4.0_f64.exp()).abs() < 1e-12);
        assert!(temporal_weights(16, 0.0_f64).is_err());
        assert!(temporal_weights(16, -1.0_f64).is_err());
    }

    #[test]
    fn token_weights_keep_unit_mass() {
        let w = temporal_weights(16, 2.0_f64).unwrap();
        let u = token_weights(&w, 2).unwrap();
        assert_eq!(u.len(), 8);
        assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(token_weights(&w, 3).is_err());
    }

    #[test]
    fn constant_stack_normalizes_to_zero() {
        let layer = LayerAttention::new(12, 8, vec![0.25; 8 * 256]).unwrap();
        let h = compose_heatmap(&AttentionStack::new(vec![layer], 2).unwrap(), 2.0).unwrap();
        assert!(h.values.iter().all(|&v| v == 0.0));
        assert_eq!(h.peak, (0, 0));
    }

    #[test]
    fn delta_peaks_in_patch_center_block() {
        let h = compose_heatmap(&delta_stack(4, 4, 7), 2.0).unwrap();
        // pixels 71 and 72 sit symmetrically around the patch center at 71.5
        for (r, c) in [(71, 71), (71, 72), (72, 71), (72, 72)] {
            assert_eq!(h.get(r, c), 1.0);
        }
        assert_eq!(h.peak, (71, 71));
        assert!(h.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(h.values.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
    }

    #[test]
    fn duplicate_layers_change_nothing() {
        let one = delta_stack(9, 3, 2);
        let mut two = one.clone();
        let mut dup = two.layers[0].clone();
        dup.layer_id = 13;
        two.layers.push(dup);
        let (a, b) = (compose_heatmap(&one, 2.0).unwrap(), compose_heatmap(&two, 2.0).unwrap());
        assert_eq!(a.peak, b.peak);
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_stacks() {
        assert!(LayerAttention::new(1, 8, vec![-1.0_f64; 8 * 256]).is_err());
        assert!(LayerAttention::new(1, 8, vec![0.0_f64; 7]).is_err());
        let l = LayerAttention::new(5, 8, vec![0.0_f64; 8 * 256]).unwrap();
        assert!(AttentionStack::new(vec![l.clone(), l], 2).is_err());
        let empty = AttentionStack::<f64> { layers: vec![], frames_per_token: 2 };
        assert!(compose_heatmap(&empty, 2.0).is_err());
    }

    #[test]
    fn layer_selection() {
        let layers = (10..=22).map(|id| LayerAttention::new(id, 1, vec![0.0_f32; 256]).unwrap()).collect();
        let s = AttentionStack::new(layers, 2).unwrap();
        assert_eq!(s.select(|id| VIT_L_LAYERS.contains(&id)).layer_ids(), (12..=20).collect::<Vec<_>>());
    }
}
