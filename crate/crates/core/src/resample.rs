//! Bilinear resampling with the half-pixel-center convention.
//!
//! Output pixel `o` samples source coordinate `(o + 0.5) * in / out - 0.5`,
//! clamped to the valid range at the borders (the `align_corners = false`
//! rule). The interpolation is written as `a + f * (b - a)` so constant
//! regions are reproduced exactly. Both the frame preprocessor and the
//! heatmap upsampler go through this one implementation, which makes the
//! streaming and batch paths bit-identical.

use crate::num::Real;

/// One output coordinate's source taps.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn taps<T: Real>(input: usize, output: usize) -> Vec<Tap<T>> {
    let scale = input as f64 / output as f64;
    let last = (input - 1) as f64;
    (0..output)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            if src <= 0.0 {
                Tap { lo: 0, hi: 0, frac: T::zero() }
            } else if src >= last {
                Tap { lo: input - 1, hi: input - 1, frac: T::zero() }
            } else {
                let lo = src.floor() as usize;
                Tap { lo, hi: lo + 1, frac: T::lit(src - lo as f64) }
            }
        })
        .collect()
}

/// Source coordinate sampled by output index `o`, before clamping.
pub fn source_coordinate(o: usize, input: usize, output: usize) -> f64 {
    (o as f64 + 0.5) * input as f64 / output as f64 - 0.5
}

/// Resize an interleaved `height x width x channels` image.
///
/// Panics if any dimension is zero or `src` has the wrong length; callers
/// validate frame shapes before getting here.
pub fn resize_bilinear<T: Real>(
    src: &[T],
    in_w: usize,
    in_h: usize,
    channels: usize,
    out_w: usize,
    out_h: usize,
) -> Vec<T> {
    assert!(in_w > 0 && in_h > 0 && channels > 0 && out_w > 0 && out_h > 0);
    assert_eq!(src.len(), in_w * in_h * channels, "source buffer size");

    let xt = taps::<T>(in_w, out_w);
    let yt = taps::<T>(in_h, out_h);
    let row_len = out_w * channels;

    // horizontal pass over every source row
    let mut rows = vec![T::zero(); in_h * row_len];
    for y in 0..in_h {
        let src_row = &src[y * in_w * channels..(y + 1) * in_w * channels];
        let dst = &mut rows[y * row_len..(y + 1) * row_len];
        for (x, tap) in xt.iter().enumerate() {
            for c in 0..channels {
                let a = src_row[tap.lo * channels + c];
                let b = src_row[tap.hi * channels + c];
                dst[x * channels + c] = a + tap.frac * (b - a);
            }
        }
    }

    // vertical pass
    let mut out = vec![T::zero(); out_h * row_len];
    for (y, tap) in yt.iter().enumerate() {
        let r0 = &rows[tap.lo * row_len..(tap.lo + 1) * row_len];
        let r1 = &rows[tap.hi * row_len..(tap.hi + 1) * row_len];
        let dst = &mut out[y * row_len..(y + 1) * row_len];
        for ((d, &a), &b) in dst.iter_mut().zip(r0).zip(r1) {
            *d = a + tap.frac * (b - a);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_size_is_exact() {
        let src: Vec<f32> = (0..4 * 3 * 2).map(|v| v as f32 * 1.7).collect();
        assert_eq!(resize_bilinear(&src, 4, 3, 2, 4, 3), src);
    }

    #[test]
    fn constant_image_stays_constant() {
        let src = vec![0.3_f64; 7 * 5];
        let out = resize_bilinear(&src, 7, 5, 1, 256, 256);
        assert!(out.iter().all(|&v| v == 0.3));
        let src = vec![255.0_f32; 512 * 512 * 3];
        let out = resize_bilinear(&src, 512, 512, 3, 256, 256);
        assert!(out.iter().all(|&v| v == 255.0));
    }

    #[test]
    fn checkerboard_center_matches_closed_form() {
        // 2x2 {0, 1} checkerboard; the four center pixels sample at
        // fractions a or 1 - a along each axis.
        let src = [0.0_f64, 1.0, 1.0, 0.0];
        let out = resize_bilinear(&src, 2, 2, 1, 256, 256);
        let a = source_coordinate(127, 2, 256);
        assert_eq!(a, 0.49609375);
        let same = 2.0 * a * (1.0 - a);
        let mixed = a * a + (1.0 - a) * (1.0 - a);
        for (r, c, expected) in [(127, 127, same), (127, 128, mixed), (128, 127, mixed), (128, 128, same)] {
            assert!((out[r * 256 + c] - expected).abs() < 1e-15);
            assert!((out[r * 256 + c] - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn borders_clamp() {
        let src = [0.0_f64, 10.0];
        let out = resize_bilinear(&src, 2, 1, 1, 8, 1);
        // first two outputs sit left of the first source center
        assert_eq!(out[0], 0.0);
        assert_eq!(out[7], 10.0);
        assert!(out.windows(2).all(|w| w[0] <= w[1]));
    }
}
