//! Regenerates the stored fixtures under `fixtures/`.
//!
//! Every file is derived from fixed seeds, and the generator checks its own
//! output against the target table values before writing anything.
//!
//!     cargo run --release --example gen_fixtures

use std::fs;
use std::io::Write;
use std::path::Path;

use crashbench::heatmap::{hit_fraction, union_area, PeakRecord};
use crashbench::manifest::{save_manifest, ClipRecord, Group, GtBox, Label, Manifest, Source};
use crashbench::metrics::{average_precision, evaluate, roc_auc, ClipOutcome, EvalConfig, OutcomeMode};
use crashbench::report::{render_table, Format, Input, TableId, TableSpec};
use crashbench::scorer::ScoreTrace;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POSITIVES: [usize; 10] = [109, 79, 54, 30, 30, 25, 32, 37, 25, 14];
const NEGATIVES: [usize; 10] = [100, 80, 50, 30, 30, 30, 40, 40, 30, 23];
const GRID_T0: f64 = 1.875;
const GRID_DT: f64 = 0.125;
const GRID_LEN: usize = 57;
const EVENT_S: f64 = 6.0;
/// Grid index of the first prediction at or after the event.
const EVENT_K: usize = 33;

fn q4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn q4_up(x: f64) -> f64 {
    (x * 1e4).ceil() / 1e4
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    q4(rng.random_range(lo..hi))
}

fn render(f: Format, v: f64) -> String {
    f.render(v)
}

struct GroupPlan {
    detected: usize,
    mtta: f64,
    /// `None` leaves the group's F1 free.
    f1: Option<f64>,
    fn_: usize,
    fp: usize,
    confusable: usize,
}

struct ModelPlan {
    name: &'static str,
    seed: u64,
    groups: Vec<GroupPlan>,
    /// Extra near-threshold negatives may go only to groups without false
    /// negatives, so that per-group AUC stays untouched.
    extras_fn_free_only: bool,
    auc: f64,
    f1: f64,
    ewr: f64,
    mtta: f64,
    /// `(group, clip kind, index, peak)` overrides.
    overrides: Vec<(usize, Kind, usize, f64)>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Detected,
    Late,
    Missed,
    FalseAlarm,
    Confusable,
    Quiet,
}

fn longtail_manifest() -> Manifest {
    let mut clips = Vec::new();
    for (g, group) in Group::LONGTAIL.iter().enumerate() {
        for (label, n) in [(Label::Positive, POSITIVES[g]), (Label::Negative, NEGATIVES[g])] {
            for i in 0..n {
                let tag = if label.is_positive() { "pos" } else { "neg" };
                clips.push(ClipRecord {
                    clip_id: format!("lt-{}-{tag}-{i:03}", group.key()),
                    group: *group,
                    label,
                    duration_s: 9.0,
                    event_time_s: label.is_positive().then_some(EVENT_S),
                    fps: 8.0,
                    gt_boxes: None,
                    source: Source::Longtail,
                    extra: Default::default(),
                });
            }
        }
    }
    Manifest::new("longtail", "1", clips).expect("valid manifest")
}

/// Lead times in grid units (1 unit = 0.125 s) summing to `total`.
fn leads(rng: &mut ChaCha8Rng, n: usize, total: usize) -> Vec<usize> {
    let (lo, hi) = (1usize, 33usize);
    let mean = total as f64 / n as f64;
    let mut u: Vec<usize> = (0..n)
        .map(|_| (mean + rng.random_range(-0.6..0.6) * mean).round().clamp(lo as f64, hi as f64) as usize)
        .collect();
    let mut sum: usize = u.iter().sum();
    while sum != total {
        let i = rng.random_range(0..n);
        if sum < total && u[i] < hi {
            u[i] += 1;
            sum += 1;
        } else if sum > total && u[i] > lo {
            u[i] -= 1;
            sum -= 1;
        }
    }
    u
}

/// Scores that stay below 0.75 until grid index `cross`, then climb to `peak`.
fn rising_trace(rng: &mut ChaCha8Rng, cross: usize, peak: f64) -> Vec<f64> {
    let base = uniform(rng, 0.02, 0.2);
    (0..GRID_LEN)
        .map(|k| {
            if k < cross {
                let r = k as f64 / cross as f64;
                q4(base + (0.70 - base) * r * r)
            } else {
                let r = (k - cross + 1) as f64 / 8.0;
                if r >= 1.0 {
                    peak
                } else {
                    q4_up(0.75 + (peak - 0.75) * r).min(peak)
                }
            }
        })
        .collect()
}

/// A bump reaching `peak` exactly once, everything else lower.
fn bump_trace(rng: &mut ChaCha8Rng, peak: f64) -> Vec<f64> {
    let base = uniform(rng, 0.01, 0.1).min(peak);
    let at = rng.random_range(0..GRID_LEN);
    (0..GRID_LEN)
        .map(|k| {
            if k == at {
                return peak;
            }
            let d = (k as f64 - at as f64) / 6.0;
            q4(base + (peak - base) * (-d * d).exp()).min(peak)
        })
        .collect()
}

fn trace_of(clip_id: &str, scores: Vec<f64>) -> ScoreTrace {
    let entries = scores
        .into_iter()
        .enumerate()
        .map(|(k, score)| crashbench::scorer::TraceEntry { t: GRID_T0 + k as f64 * GRID_DT, score })
        .collect();
    ScoreTrace::from_entries(clip_id, entries).expect("valid trace")
}

/// Builds the traces of one model; `extra` near-threshold negatives are
/// spread round-robin over the eligible groups.
fn longtail_traces(manifest: &Manifest, plan: &ModelPlan, extra: usize) -> Vec<ScoreTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let eligible: Vec<usize> = (0..10).filter(|&g| !plan.extras_fn_free_only || plan.groups[g].fn_ == 0).collect();
    let mut extra_per = [0usize; 10];
    for i in 0..extra {
        extra_per[eligible[i % eligible.len()]] += 1;
    }
    let mut traces = Vec::with_capacity(manifest.len());
    for (g, group) in Group::LONGTAIL.iter().enumerate() {
        let gp = &plan.groups[g];
        let pos = POSITIVES[g];
        let late = pos - gp.detected - gp.fn_;
        let units = (gp.mtta * gp.detected as f64 * 8.0).round() as usize;
        let lead_units = if gp.detected > 0 { leads(&mut rng, gp.detected, units) } else { Vec::new() };
        let mut kinds: Vec<(Kind, usize)> = Vec::new();
        kinds.extend((0..gp.detected).map(|i| (Kind::Detected, i)));
        kinds.extend((0..late).map(|i| (Kind::Late, i)));
        kinds.extend((0..gp.fn_).map(|i| (Kind::Missed, i)));
        let conf = gp.confusable + extra_per[g];
        assert!(gp.fp + conf <= NEGATIVES[g], "{}: too many hard negatives in {}", plan.name, group.key());
        let mut neg_kinds: Vec<(Kind, usize)> = Vec::new();
        neg_kinds.extend((0..gp.fp).map(|i| (Kind::FalseAlarm, i)));
        neg_kinds.extend((0..conf).map(|i| (Kind::Confusable, i)));
        neg_kinds.extend((0..NEGATIVES[g] - gp.fp - conf).map(|i| (Kind::Quiet, i)));
        // spread kinds over clip ids so that ids carry no label of their own
        kinds.shuffle(&mut rng);
        neg_kinds.shuffle(&mut rng);
        for (idx, &(kind, i)) in kinds.iter().chain(&neg_kinds).enumerate() {
            let label = if idx < pos { "pos" } else { "neg" };
            let n = if idx < pos { idx } else { idx - pos };
            let clip_id = format!("lt-{}-{label}-{n:03}", group.key());
            let peak_override =
                plan.overrides.iter().find(|o| o.0 == g && o.1 == kind && o.2 == i).map(|o| o.3);
            let scores = match kind {
                Kind::Detected => {
                    let peak = peak_override.unwrap_or_else(|| uniform(&mut rng, 0.86, 0.999));
                    rising_trace(&mut rng, EVENT_K - lead_units[i], peak)
                }
                Kind::Late => {
                    let peak = peak_override.unwrap_or_else(|| uniform(&mut rng, 0.86, 0.999));
                    // the first late clip of each group crosses exactly at the event
                    let delay = if i == 0 { 0 } else { rng.random_range(0..9) };
                    rising_trace(&mut rng, EVENT_K + delay, peak)
                }
                Kind::Missed => {
                    let peak = uniform(&mut rng, 0.55, 0.74);
                    bump_trace(&mut rng, peak)
                }
                Kind::FalseAlarm => {
                    let peak = peak_override.unwrap_or_else(|| uniform(&mut rng, 0.755, 0.775));
                    bump_trace(&mut rng, peak)
                }
                Kind::Confusable => {
                    let peak = uniform(&mut rng, 0.745, 0.7499);
                    bump_trace(&mut rng, peak)
                }
                Kind::Quiet => {
                    let peak = uniform(&mut rng, 0.02, 0.45);
                    bump_trace(&mut rng, peak)
                }
            };
            traces.push(trace_of(&clip_id, scores));
        }
    }
    let order: std::collections::HashMap<&str, usize> =
        manifest.clips.iter().enumerate().map(|(i, c)| (c.clip_id.as_str(), i)).collect();
    traces.sort_by_key(|t| order[t.clip_id.as_str()]);
    traces
}

/// Picks `(fn, fp)` per group so that the pooled F1 renders as `overall`,
/// preferring totals near `want` and false alarms spread by group size.
fn solve_confusion(detected: &[usize], overall: f64, want: (usize, usize)) -> Vec<(usize, usize)> {
    use std::collections::BTreeMap;
    let mut states: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    states.insert((0, 0), Vec::new());
    for g in 0..10 {
        let mut next = BTreeMap::new();
        let options: Vec<(usize, usize)> = (0..=POSITIVES[g] - detected[g])
            .flat_map(|f| (0..=NEGATIVES[g] / 4).map(move |q| (f, q)))
            .collect();
        for ((f_sum, q_sum), path) in &states {
            for &(f, q) in &options {
                next.entry((f_sum + f, q_sum + q)).or_insert_with(|| {
                    let mut p = path.clone();
                    p.push((f, q));
                    p
                });
            }
        }
        states = next;
    }
    let total_pos: usize = POSITIVES.iter().sum();
    states
        .into_iter()
        .filter(|((f, q), _)| {
            let tp = total_pos - f;
            render(Format::Decimal3, 2.0 * tp as f64 / (2 * tp + f + q) as f64) == render(Format::Decimal3, overall)
        })
        .min_by_key(|((f, q), _)| f.abs_diff(want.0) * 10 + q.abs_diff(want.1))
        .map(|(_, p)| p)
        .expect("a pooled F1 matching the target")
}

fn v2_plan() -> ModelPlan {
    // (detected, mtta, f1, fn, fp, near-threshold negatives)
    let rows = [
        (86, 0.84, 0.938, 10, 3, 36),
        (74, 1.32, 0.981, 2, 1, 4),
        (52, 1.76, 0.973, 0, 3, 0),
        (30, 1.47, 0.938, 0, 4, 0),
        (28, 1.16, 0.923, 0, 5, 0),
        (24, 1.41, 0.980, 0, 1, 0),
        (29, 1.47, 1.000, 0, 0, 0),
        (35, 1.53, 0.961, 0, 3, 0),
        (25, 1.30, 1.000, 0, 0, 0),
        (14, 1.34, 1.000, 0, 0, 0),
    ];
    ModelPlan {
        name: "v2",
        seed: 20,
        groups: rows
            .iter()
            .map(|&(detected, mtta, f1, fn_, fp, confusable)| GroupPlan {
                detected,
                mtta,
                f1: Some(f1),
                fn_,
                fp,
                confusable,
            })
            .collect(),
        extras_fn_free_only: true,
        auc: 0.993,
        f1: 0.964,
        ewr: 0.913,
        mtta: 1.31,
        // motorcyclist: one false alarm ties one detection and outranks another
        overrides: vec![(5, Kind::FalseAlarm, 0, 0.80), (5, Kind::Detected, 0, 0.80), (5, Kind::Detected, 1, 0.78)],
    }
}

fn v1_plan() -> ModelPlan {
    let rows = [(72, 0.63), (75, 1.68), (51, 1.96), (29, 1.49), (28, 1.33), (23, 1.62), (22, 1.61), (35, 1.55), (23, 1.40), (14, 1.44)];
    let det: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let confusion = solve_confusion(&det, 0.875, (45, 66));
    ModelPlan {
        name: "v1",
        seed: 10,
        groups: rows
            .iter()
            .zip(confusion)
            .map(|(&(detected, mtta), (fn_, fp))| GroupPlan { detected, mtta, f1: None, fn_, fp, confusable: 0 })
            .collect(),
        extras_fn_free_only: false,
        auc: 0.949,
        f1: 0.875,
        ewr: 0.855,
        mtta: 1.43,
        overrides: vec![],
    }
}

/// Smallest number of extra near-threshold negatives whose pooled AUC
/// renders as the target, preferring the one closest to it.
fn tune_longtail(manifest: &Manifest, plan: &ModelPlan) -> Vec<ScoreTrace> {
    let config = EvalConfig::default();
    let mut best: Option<(f64, usize)> = None;
    for extra in 0..400 {
        let traces = longtail_traces(manifest, plan, extra);
        let report = evaluate(manifest, &traces, &config).expect("evaluates");
        let auc = report.overall.auc.unwrap();
        if render(Format::Decimal3, auc) == render(Format::Decimal3, plan.auc) {
            let gap = (auc - plan.auc).abs();
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, extra));
            }
        } else if auc < plan.auc {
            break;
        }
    }
    let (_, extra) = best.unwrap_or_else(|| panic!("{}: AUC {} unreachable", plan.name, plan.auc));
    let traces = longtail_traces(manifest, plan, extra);
    check_longtail(manifest, plan, &traces);
    println!("{}: {extra} extra near-threshold negatives", plan.name);
    traces
}

fn check_longtail(manifest: &Manifest, plan: &ModelPlan, traces: &[ScoreTrace]) {
    let report = evaluate(manifest, traces, &EvalConfig::default()).expect("evaluates");
    let o = &report.overall;
    let want = [
        (Format::Decimal3, o.auc, plan.auc),
        (Format::Decimal3, o.f1, plan.f1),
        (Format::Percent, o.ewr, plan.ewr),
        (Format::Seconds2, o.mtta_s, plan.mtta),
    ];
    for (f, got, target) in want {
        assert_eq!(render(f, got.unwrap()), render(f, target), "{} overall", plan.name);
    }
    for (g, (key, m)) in report.groups.iter().enumerate() {
        let gp = &plan.groups[g];
        let ewr = gp.detected as f64 / POSITIVES[g] as f64;
        assert_eq!(render(Format::Percent, m.ewr.unwrap()), render(Format::Percent, ewr), "{} {key} EWR", plan.name);
        assert_eq!(render(Format::Seconds2, m.mtta_s.unwrap()), render(Format::Seconds2, gp.mtta), "{} {key} TTA", plan.name);
        if let Some(f1) = gp.f1 {
            assert_eq!(render(Format::Decimal3, m.f1.unwrap()), render(Format::Decimal3, f1), "{} {key} F1", plan.name);
        }
    }
}

struct KagglePlan {
    name: &'static str,
    seed: u64,
    ap: [f64; 3],
    false_alarms: usize,
}

const KAGGLE_PER_CLASS: usize = 672;
const LEADS: [f64; 3] = [0.5, 1.0, 1.5];

fn ap_of(pos: &[f64], neg: &[f64]) -> f64 {
    let scored: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    average_precision(&scored).unwrap()
}

/// Positive scores with AP against `neg` within 2e-5 of `target`.
fn tune_positive_scores(rng: &mut ChaCha8Rng, neg: &[f64], target: f64) -> Vec<f64> {
    let mut pos: Vec<f64> = (0..KAGGLE_PER_CLASS).map(|_| q4(rng.random_range(0.9952..0.9999))).collect();
    let mut order: Vec<usize> = (0..KAGGLE_PER_CLASS).collect();
    order.shuffle(rng);
    let mut sorted_neg = neg.to_vec();
    sorted_neg.sort_by(|a, b| b.total_cmp(a));
    sorted_neg.dedup();
    for &i in &order {
        let high = pos[i];
        pos[i] = uniform(rng, 0.01, 0.99);
        if ap_of(&pos, neg) >= target {
            continue;
        }
        // walk the demoted score up through the gaps between negatives
        let mut best = (f64::INFINITY, high);
        for slot in std::iter::once(high).chain(sorted_neg.iter().map(|&n| n - 0.00005)) {
            if slot <= 0.0 {
                break;
            }
            pos[i] = slot;
            let gap = (ap_of(&pos, neg) - target).abs();
            if gap < best.0 {
                best = (gap, slot);
            }
        }
        pos[i] = best.1;
        assert!(best.0 < 2e-5, "AP target {target} missed by {}", best.0);
        return pos;
    }
    panic!("AP target {target} unreachable");
}

fn kaggle_outcomes(plan: &KagglePlan) -> Vec<ClipOutcome<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut neg: Vec<f64> = (0..KAGGLE_PER_CLASS)
        .map(|i| if i < plan.false_alarms { uniform(&mut rng, 0.75, 0.99) } else { uniform(&mut rng, 0.01, 0.7499) })
        .collect();
    neg.shuffle(&mut rng);
    let per_lead: Vec<Vec<f64>> = plan.ap.iter().map(|&t| tune_positive_scores(&mut rng, &neg, t)).collect();
    let mut out = Vec::with_capacity(2 * KAGGLE_PER_CLASS);
    for i in 0..KAGGLE_PER_CLASS {
        let scores: Vec<f64> = per_lead.iter().map(|s| s[i]).collect();
        let peak = scores.iter().copied().fold(0.0, f64::max);
        out.push(ClipOutcome {
            clip_id: format!("kg-pos-{i:04}"),
            label: Label::Positive,
            group: Group::None,
            peak_score: peak,
            event_time_s: Some(q4(rng.random_range(4.0..10.0)) as f64),
            alert_profile: Vec::new(),
            eligible_peaks: LEADS.iter().copied().zip(scores).collect(),
        });
    }
    for (i, &s) in neg.iter().enumerate() {
        out.push(ClipOutcome {
            clip_id: format!("kg-neg-{i:04}"),
            label: Label::Negative,
            group: Group::None,
            peak_score: s,
            event_time_s: None,
            alert_profile: Vec::new(),
            eligible_peaks: LEADS.iter().map(|&l| (l, s)).collect(),
        });
    }
    out
}

const PGA_CLIPS: usize = 1894;
const PGA_COVERAGE: f64 = 0.115;
const FRAME_PIXELS: f64 = 256.0 * 256.0;

/// Box with half-integer edges covering `w x h` whole pixels.
fn pixel_box(x: usize, y: usize, w: usize, h: usize) -> GtBox {
    GtBox::new(0, x as f64 + 0.5, y as f64 + 0.5, (x + w) as f64 + 0.5, (y + h) as f64 + 0.5)
}

fn pga_manifest() -> Manifest {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut dims: Vec<Vec<(usize, usize, usize, usize)>> = Vec::with_capacity(PGA_CLIPS);
    for i in 0..PGA_CLIPS {
        let mut boxes = Vec::new();
        let parts = if i % 7 == 0 { 2 } else { 1 };
        for _ in 0..parts {
            let w = rng.random_range(24..140usize);
            let h = rng.random_range(24..120usize);
            let x = rng.random_range(0..255 - w);
            let y = rng.random_range(0..255 - h);
            boxes.push((x, y, w, h));
        }
        dims.push(boxes);
    }
    let coverage = |dims: &[Vec<(usize, usize, usize, usize)>]| -> f64 {
        dims.iter()
            .map(|b| union_area(&b.iter().map(|&(x, y, w, h)| pixel_box(x, y, w, h)).collect::<Vec<_>>()))
            .sum::<f64>()
            / (PGA_CLIPS as f64 * FRAME_PIXELS)
    };
    // nudge single-box widths until the mean coverage sits on the target
    let mut k = 0;
    loop {
        let c = coverage(&dims);
        let err = c - PGA_COVERAGE;
        let i = k % PGA_CLIPS;
        k += 1;
        if dims[i].len() != 1 {
            continue;
        }
        let (x, y, w, h) = dims[i][0];
        let step = h as f64 / (PGA_CLIPS as f64 * FRAME_PIXELS);
        if err.abs() < step / 2.0 {
            break;
        }
        if err > 0.0 && w > 8 {
            dims[i][0] = (x, y, w - 1, h);
        } else if err < 0.0 && x + w + 1 < 255 {
            dims[i][0] = (x, y, w + 1, h);
        }
    }
    let clips = dims
        .iter()
        .enumerate()
        .map(|(i, b)| ClipRecord {
            clip_id: format!("pga-{i:04}"),
            group: Group::None,
            label: Label::Positive,
            duration_s: 9.0,
            event_time_s: Some(EVENT_S),
            fps: 8.0,
            gt_boxes: Some(b.iter().map(|&(x, y, w, h)| pixel_box(x, y, w, h)).collect()),
            source: Source::External,
            extra: Default::default(),
        })
        .collect();
    Manifest::new("pga", "1", clips).expect("valid manifest")
}

fn pga_peaks(manifest: &Manifest, hits: usize, seed: u64) -> Vec<PeakRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hit_flags: Vec<bool> = (0..manifest.len()).map(|i| i < hits).collect();
    hit_flags.shuffle(&mut rng);
    manifest
        .clips
        .iter()
        .zip(hit_flags)
        .map(|(clip, hit)| {
            let boxes = clip.gt_boxes.as_deref().unwrap();
            let inside = |r: usize, c: usize| boxes.iter().any(|b| b.contains(r, c));
            let peak = if hit {
                let b = boxes[rng.random_range(0..boxes.len())];
                let r = rng.random_range((b.y0 + 0.5) as usize..=(b.y1 - 0.5) as usize);
                let c = rng.random_range((b.x0 + 0.5) as usize..=(b.x1 - 0.5) as usize);
                (r, c)
            } else {
                loop {
                    let (r, c) = (rng.random_range(0..256), rng.random_range(0..256));
                    if !inside(r, c) {
                        break (r, c);
                    }
                }
            };
            PeakRecord { clip_id: clip.clip_id.clone(), peak }
        })
        .collect()
}

fn write_lines<T: serde::Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) {
    let mut f = std::io::BufWriter::new(fs::File::create(path).unwrap());
    for r in rows {
        serde_json::to_writer(&mut f, &r).unwrap();
        writeln!(f).unwrap();
    }
    f.flush().unwrap();
}

fn write_grid_traces(path: &Path, traces: &[ScoreTrace]) {
    write_lines(
        path,
        traces.iter().map(|t| {
            serde_json::json!({ "clip_id": t.clip_id, "t0": GRID_T0, "dt": GRID_DT, "scores": t.scores() })
        }),
    );
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for dir in ["longtail", "kaggle", "pga"] {
        fs::create_dir_all(root.join(dir)).unwrap();
    }

    let manifest = longtail_manifest();
    let mut reports = Vec::new();
    for plan in [v1_plan(), v2_plan()] {
        let traces = tune_longtail(&manifest, &plan);
        let grid: Vec<ScoreTrace> = traces;
        write_grid_traces(&root.join(format!("longtail/{}.traces.jsonl", plan.name)), &grid);
        reports.push((plan.name.to_string(), evaluate(&manifest, &grid, &EvalConfig::default()).unwrap()));
    }
    save_manifest(&manifest, root.join("longtail/manifest.jsonl")).unwrap();
    let models: Vec<(String, Input)> = reports.iter().map(|(n, r)| (n.clone(), Input::Metrics(r))).collect();
    print!("{}", render_table(&models, &TableSpec::standard(TableId::Longtail)).unwrap().text);

    let kaggle = [
        KagglePlan { name: "v1", seed: 11, ap: [0.935, 0.936, 0.904], false_alarms: 73 },
        KagglePlan { name: "v2", seed: 21, ap: [0.943, 0.957, 0.921], false_alarms: 31 },
        KagglePlan { name: "v2-base", seed: 31, ap: [0.945, 0.962, 0.915], false_alarms: 65 },
        KagglePlan { name: "v2-small", seed: 41, ap: [0.946, 0.947, 0.907], false_alarms: 82 },
    ];
    for plan in &kaggle {
        let outcomes = kaggle_outcomes(plan);
        for (k, &lead) in LEADS.iter().enumerate() {
            let scored: Vec<(f64, bool)> =
                outcomes.iter().map(|o| (o.eligible_peak(lead).unwrap(), o.is_positive())).collect();
            let ap = average_precision(&scored).unwrap();
            assert_eq!(render(Format::Decimal3, ap), render(Format::Decimal3, plan.ap[k]), "{} ap@{lead}", plan.name);
        }
        for o in &outcomes {
            o.validate(OutcomeMode::SingleWindow).unwrap();
        }
        write_lines(&root.join(format!("kaggle/{}.outcomes.jsonl", plan.name)), &outcomes);
        let peaks: Vec<(f64, bool)> = outcomes.iter().map(|o| (o.peak_score, o.is_positive())).collect();
        println!("kaggle {}: written (peak AUC {:.3})", plan.name, roc_auc(&peaks).unwrap());
    }

    let pga = pga_manifest();
    let mean_rate: f64 = pga.clips.iter().map(|c| hit_fraction(c.gt_boxes.as_deref().unwrap())).sum::<f64>() / PGA_CLIPS as f64;
    println!("pga: mean coverage {mean_rate:.6}");
    assert_eq!(render(Format::Percent, mean_rate), "11.5%");
    save_manifest(&pga, root.join("pga/manifest.jsonl")).unwrap();
    for (name, hits, seed) in [("v1", 943, 51), ("v2", 992, 52), ("v2-small", 1322, 53), ("v2-base", 1366, 54)] {
        let peaks = pga_peaks(&pga, hits, seed);
        write_lines(&root.join(format!("pga/{name}.peaks.jsonl")), &peaks);
    }
    println!("fixtures written to {}", root.display());
}
