use serde::{Deserialize, Serialize};

use crate::manifest::{ClipRecord, GtBox};

use super::{HeatmapError, HEATMAP_SIDE};

const FRAME_AREA: f64 = (HEATMAP_SIDE * HEATMAP_SIDE) as f64;

/// Whether the peak pixel lies inside any box, edges included.
pub fn pointing_game(peak: (usize, usize), boxes: &[GtBox]) -> Result<bool, HeatmapError> {
    if boxes.is_empty() {
        return Err(HeatmapError::NotAnnotated("no ground-truth boxes".into()));
    }
    Ok(boxes.iter().any(|b| b.contains(peak.0, peak.1)))
}

/// Area of the union of boxes, by coordinate compression.
pub fn union_area(boxes: &[GtBox]) -> f64 {
    let mut xs: Vec<f64> = boxes.iter().flat_map(|b| [b.x0, b.x1]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut area = 0.0;
    for slab in xs.windows(2) {
        let (l, r) = (slab[0], slab[1]);
        let mut spans: Vec<(f64, f64)> = boxes.iter().filter(|b| b.x0 <= l && r <= b.x1).map(|b| (b.y0, b.y1)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let mut current: Option<(f64, f64)> = None;
        for (lo, hi) in spans {
            match current {
                Some((a, b)) if lo <= b => current = Some((a, b.max(hi))),
                Some((a, b)) => {
                    covered += b - a;
                    current = Some((lo, hi));
                }
                None => current = Some((lo, hi)),
            }
        }
        if let Some((a, b)) = current {
            covered += b - a;
        }
        area += covered * (r - l);
    }
    area
}

/// Fraction of pixels whose index a box contains, i.e. the hit rate of a
/// uniformly random peak.
pub fn hit_fraction(boxes: &[GtBox]) -> f64 {
    let mut mask = vec![false; HEATMAP_SIDE * HEATMAP_SIDE];
    let last = (HEATMAP_SIDE - 1) as f64;
    for b in boxes {
        let (r0, r1) = (b.y0.max(0.0).ceil(), b.y1.min(last).floor());
        let (c0, c1) = (b.x0.max(0.0).ceil(), b.x1.min(last).floor());
        if r0 > r1 || c0 > c1 {
            continue;
        }
        for r in r0 as usize..=r1 as usize {
            mask[r * HEATMAP_SIDE + c0 as usize..=r * HEATMAP_SIDE + c1 as usize].fill(true);
        }
    }
    mask.iter().filter(|&&m| m).count() as f64 / FRAME_AREA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgaResult {
    pub clips: usize,
    pub hits: usize,
    pub pga: f64,
    /// Mean union-of-boxes area over the frame area.
    pub random_baseline: f64,
    pub delta: f64,
    /// Mean fraction of pixels inside a box; equals the baseline when box
    /// edges fall on pixel boundaries.
    pub random_hit_rate: f64,
}

/// Pointing Game accuracy over annotated clips and their heatmap peaks.
pub fn pga_accuracy<'a>(
    clips: impl IntoIterator<Item = (&'a ClipRecord, (usize, usize))>,
) -> Result<PgaResult, HeatmapError> {
    let (mut n, mut hits, mut area, mut rate) = (0usize, 0usize, 0.0, 0.0);
    for (record, peak) in clips {
        let boxes = record.gt_boxes.as_deref().unwrap_or_default();
        if boxes.is_empty() {
            return Err(HeatmapError::NotAnnotated(record.clip_id.clone()));
        }
        n += 1;
        hits += pointing_game(peak, boxes)? as usize;
        area += union_area(boxes) / FRAME_AREA;
        rate += hit_fraction(boxes);
    }
    if n == 0 {
        return Err(HeatmapError::Invalid("no annotated clips".into()));
    }
    let pga = hits as f64 / n as f64;
    let random_baseline = area / n as f64;
    Ok(PgaResult { clips: n, hits, pga, random_baseline, delta: pga - random_baseline, random_hit_rate: rate / n as f64 })
}
