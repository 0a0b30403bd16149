use crate::num::Real;

use super::MetricError;

fn check_scores<T: Real>(scored: &[(T, bool)]) -> Result<(usize, usize), MetricError> {
    if let Some((s, _)) = scored.iter().find(|(s, _)| !s.is_finite()) {
        return Err(MetricError::InvalidScore(s.to_f64_lossy()));
    }
    let pos = scored.iter().filter(|(_, y)| *y).count();
    Ok((pos, scored.len() - pos))
}

fn sorted_desc<T: Real>(scored: &[(T, bool)]) -> Vec<(T, bool)> {
    let mut v = scored.to_vec();
    v.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
    v
}

/// Step-wise average precision.
///
/// Equal scores form one threshold: every positive in a tie group is
/// credited with the precision of the whole group.
pub fn average_precision<T: Real>(scored: &[(T, bool)]) -> Result<T, MetricError> {
    let (positives, _) = check_scores(scored)?;
    if positives == 0 {
        return Err(MetricError::ApUndefined);
    }
    let sorted = sorted_desc(scored);
    let (mut seen, mut tp, mut sum) = (0usize, 0usize, T::zero());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut group_pos = 0usize;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            group_pos += sorted[j].1 as usize;
            j += 1;
        }
        seen += j - i;
        tp += group_pos;
        if group_pos > 0 {
            sum = sum + T::from_usize_lossy(group_pos) * T::from_usize_lossy(tp) / T::from_usize_lossy(seen);
        }
        i = j;
    }
    Ok(sum / T::from_usize_lossy(positives))
}

/// Area under the ROC curve as the Mann-Whitney statistic, with ties
/// counted as one half (midranks).
pub fn roc_auc<T: Real>(scored: &[(T, bool)]) -> Result<T, MetricError> {
    let (positives, negatives) = check_scores(scored)?;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass { positives, negatives });
    }
    let mut sorted = sorted_desc(scored);
    sorted.reverse();
    // sum of 1-based midranks of the positives
    let mut rank_sum = T::zero();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut group_pos = 0usize;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            group_pos += sorted[j].1 as usize;
            j += 1;
        }
        let midrank = T::from_usize_lossy(i + j + 1) / T::lit(2.0);
        rank_sum = rank_sum + midrank * T::from_usize_lossy(group_pos);
        i = j;
    }
    let p = T::from_usize_lossy(positives);
    let u = rank_sum - p * (p + T::one()) / T::lit(2.0);
    Ok(u / (p * T::from_usize_lossy(negatives)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[(f64, bool)]) -> Vec<(f64, bool)> {
        v.to_vec()
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&s(&[(0.9, true), (0.1, false)])).unwrap(), 1.0);
        let ap = average_precision(&s(&[(0.9, true), (0.8, false), (0.7, true), (0.6, false)])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        let ap = average_precision(&s(&[(0.1, true), (0.5, false), (0.6, false), (0.7, false)])).unwrap();
        assert_eq!(ap, 0.25);
        assert!(matches!(average_precision(&s(&[(0.3, false)])), Err(MetricError::ApUndefined)));
    }

    #[test]
    fn ap_ties_share_precision() {
        // one threshold containing 1 positive and 1 negative: precision 1/2
        assert_eq!(average_precision(&s(&[(0.5, true), (0.5, false)])).unwrap(), 0.5);
        let ap = average_precision(&s(&[(0.9, true), (0.5, true), (0.5, false), (0.5, false)])).unwrap();
        assert!((ap - (1.0 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&s(&[(0.9, true), (0.1, false)])).unwrap(), 1.0);
        assert_eq!(roc_auc(&s(&[(0.4, true), (0.4, false), (0.4, true)])).unwrap(), 0.5);
        let auc = roc_auc(&s(&[(0.9, true), (0.4, true), (0.6, false), (0.1, false)])).unwrap();
        assert_eq!(auc, 0.75);
        assert!(roc_auc(&s(&[(0.9, true)])).is_err());
        assert!(roc_auc(&s(&[(f64::NAN, true), (0.1, false)])).is_err());
    }

    #[test]
    fn f32_agrees() {
        let v32 = [(0.9_f32, true), (0.8, false), (0.7, true), (0.6, false)];
        assert!((average_precision(&v32).unwrap() - 5.0 / 6.0).abs() < 1e-6);
        assert_eq!(roc_auc(&v32).unwrap(), 0.75);
    }
}
