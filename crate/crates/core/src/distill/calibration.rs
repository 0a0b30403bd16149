use crate::num::Real;

pub const DEFAULT_ECE_BINS: usize = 10;

/// Mean squared difference between predicted probability and outcome.
pub fn brier_score<T: Real>(probs: &[T], labels: &[T]) -> Option<T> {
    if probs.is_empty() || probs.len() != labels.len() {
        return None;
    }
    let sum: T = probs.iter().zip(labels).map(|(&p, &y)| (p - y) * (p - y)).sum();
    Some(sum / T::from_usize_lossy(probs.len()))
}

/// Expected calibration error over equal-width probability bins.
pub fn expected_calibration_error<T: Real>(probs: &[T], labels: &[T], bins: usize) -> Option<T> {
    if probs.is_empty() || probs.len() != labels.len() || bins == 0 {
        return None;
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![T::zero(); bins];
    let mut acc = vec![T::zero(); bins];
    let nb = T::from_usize_lossy(bins);
    for (&p, &y) in probs.iter().zip(labels) {
        let b = (p * nb).floor().to_usize().unwrap_or(0).min(bins - 1);
        count[b] += 1;
        conf[b] = conf[b] + p;
        acc[b] = acc[b] + y;
    }
    let n = T::from_usize_lossy(probs.len());
    let ece = (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (acc[b] - conf[b]).abs() / n)
        .sum();
    Some(ece)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brier_examples() {
        assert_eq!(brier_score(&[1.0, 0.0], &[1.0, 0.0]), Some(0.0));
        assert_eq!(brier_score(&[0.5, 0.5], &[1.0, 0.0]), Some(0.25));
        assert_eq!(brier_score::<f64>(&[], &[]), None);
    }

    #[test]
    fn ece_examples() {
        // a bin with confidence 0.8 and accuracy 0.5
        let p = [0.8_f64, 0.8, 0.8, 0.8];
        let y = [1.0, 0.0, 1.0, 0.0];
        assert!((expected_calibration_error(&p, &y, 10).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(expected_calibration_error(&[1.0, 0.0], &[1.0, 0.0], 10), Some(0.0));
    }
}
