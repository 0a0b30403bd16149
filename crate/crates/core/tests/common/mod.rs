#![allow(dead_code)]

use std::path::PathBuf;

use crashbench::manifest::{ClipRecord, Group, Label, Manifest, Source};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// Pairwise AUC: ties between a positive and a negative count one half.
pub fn auc_brute(scored: &[(f64, bool)]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for &(sp, yp) in scored {
        if !yp {
            continue;
        }
        for &(sn, yn) in scored {
            if yn {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                num += 1.0;
            } else if sp == sn {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Mean over positives of the precision at that positive's score.
pub fn ap_brute(scored: &[(f64, bool)]) -> f64 {
    let mut sum = 0.0;
    let mut positives = 0;
    for &(s, y) in scored {
        if !y {
            continue;
        }
        positives += 1;
        let above = scored.iter().filter(|(t, _)| *t >= s).count();
        let hits = scored.iter().filter(|(t, yt)| *t >= s && *yt).count();
        sum += hits as f64 / above as f64;
    }
    sum / positives as f64
}

pub fn clip(id: &str, label: Label, duration_s: f64, event: Option<f64>) -> ClipRecord {
    ClipRecord {
        clip_id: id.into(),
        group: Group::None,
        label,
        duration_s,
        event_time_s: event,
        fps: 8.0,
        gt_boxes: None,
        source: Source::Synthetic,
        extra: Default::default(),
    }
}

/// Alternating positives (event at 6 s) and negatives, 9 s each.
pub fn synthetic_manifest(n: usize) -> Manifest {
    let clips = (0..n)
        .map(|i| {
            if i % 2 == 0 {
                clip(&format!("syn-{i:03}"), Label::Positive, 9.0, Some(6.0))
            } else {
                clip(&format!("syn-{i:03}"), Label::Negative, 9.0, None)
            }
        })
        .collect();
    Manifest::new("synthetic", "1", clips).unwrap()
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_crashbench")
}
