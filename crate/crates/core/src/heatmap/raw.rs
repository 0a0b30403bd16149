use crate::num::Real;

use super::{AttentionStack, HeatmapError, LayerAttention, GRID};

/// Row-stochastic self-attention of one layer: `heads x tokens x tokens`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLayer<T> {
    pub layer_id: u32,
    pub heads: usize,
    pub data: Vec<T>,
}

/// Full self-attention matrices with their token layout.
///
/// Tokens are `prefix_tokens` non-spatial tokens (class or register tokens)
/// followed by `t_tok x 16 x 16` patch tokens in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAttention<T> {
    pub layers: Vec<RawLayer<T>>,
    pub t_tok: usize,
    pub prefix_tokens: usize,
    pub frames_per_token: usize,
}

impl<T: Real> RawAttention<T> {
    pub fn tokens(&self) -> usize {
        self.prefix_tokens + self.t_tok * GRID * GRID
    }
}

/// Mean over heads and query tokens of the attention each key token
/// receives, regrouped into `t_tok x 16 x 16` per layer.
pub fn aggregate_raw<T: Real>(raw: &RawAttention<T>) -> Result<AttentionStack<T>, HeatmapError> {
    let n = raw.tokens();
    let tol = T::lit(1e-4);
    let mut layers = Vec::with_capacity(raw.layers.len());
    for layer in &raw.layers {
        if layer.heads == 0 || layer.data.len() != layer.heads * n * n {
            return Err(HeatmapError::Invalid(format!(
                "layer {}: {} values, expected {} heads x {n} x {n}",
                layer.layer_id,
                layer.data.len(),
                layer.heads
            )));
        }
        let mut received = vec![T::zero(); n];
        for (r, row) in layer.data.chunks_exact(n).enumerate() {
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(HeatmapError::Invalid(format!(
                    "layer {} head {} query {}: row sums to {sum}",
                    layer.layer_id,
                    r / n,
                    r % n
                )));
            }
            for (acc, &a) in received.iter_mut().zip(row) {
                *acc = *acc + a;
            }
        }
        let rows = T::from_usize_lossy(layer.heads * n);
        let patches = received[raw.prefix_tokens..].iter().map(|&v| v / rows).collect();
        layers.push(LayerAttention::new(layer.layer_id, raw.t_tok, patches)?);
    }
    AttentionStack::new(layers, raw.frames_per_token)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_with(t_tok: usize, prefix: usize, heads: usize, fill: impl Fn(usize, usize) -> f64) -> RawAttention<f64> {
        let n = prefix + t_tok * GRID * GRID;
        let mut data = Vec::with_capacity(heads * n * n);
        for _ in 0..heads {
            for q in 0..n {
                for k in 0..n {
                    data.push(fill(q, k));
                }
            }
        }
        RawAttention { layers: vec![RawLayer { layer_id: 3, heads, data }], t_tok, prefix_tokens: prefix, frames_per_token: 2 }
    }

    #[test]
    fn uniform_attention_gives_constant_stack() {
        let n = 1 + 256;
        let stack = aggregate_raw(&raw_with(1, 1, 2, |_, _| 1.0 / n as f64)).unwrap();
        let first = stack.layers[0].data[0];
        assert!(stack.layers[0].data.iter().all(|&v| (v - first).abs() < 1e-15));
        assert!((first - 1.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn delta_attention_lands_on_one_cell() {
        // every query attends only to patch token (t=1, r=2, c=5)
        let target = 256 + 2 * GRID + 5;
        let stack = aggregate_raw(&raw_with(2, 0, 1, |_, k| (k == target) as u8 as f64)).unwrap();
        let d = &stack.layers[0].data;
        assert_eq!(d[target], 1.0);
        assert_eq!(d.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn rejects_non_stochastic_rows_and_bad_shapes() {
        assert!(aggregate_raw(&raw_with(1, 0, 1, |_, _| 0.5)).is_err());
        let mut r = raw_with(1, 0, 1, |_, k| (k == 0) as u8 as f64);
        r.layers[0].data.pop();
        assert!(aggregate_raw(&r).is_err());
    }
}
