//! Rendered values of the shipped fixtures, frozen cell by cell.

mod common;

use crashbench::heatmap::{pga_accuracy, read_peaks, PgaResult};
use crashbench::manifest::{load_manifest, validate_longtail_standard, Manifest};
use crashbench::metrics::{evaluate, read_outcomes, ClipOutcome, EvalConfig, KaggleBlock, MetricsReport, OutcomeMode};
use crashbench::report::{compare_models, render_table, Input, Rendered, TableId, TableSpec};
use crashbench::scorer::{load_traces, ScoreTrace};

fn longtail() -> Manifest {
    load_manifest(common::fixture("longtail/manifest.jsonl")).unwrap()
}

fn longtail_report(model: &str) -> MetricsReport {
    let traces: Vec<ScoreTrace> = load_traces(common::fixture(&format!("longtail/{model}.traces.jsonl"))).unwrap();
    evaluate(&longtail(), &traces, &EvalConfig::default()).unwrap()
}

fn kaggle_block(model: &str) -> KaggleBlock {
    let outcomes: Vec<ClipOutcome<f64>> = read_outcomes(common::fixture(&format!("kaggle/{model}.outcomes.jsonl"))).unwrap();
    KaggleBlock::compute(&outcomes, &[0.5, 1.0, 1.5], 0.75, OutcomeMode::SingleWindow)
}

fn cells(rendered: &Rendered, row: &str) -> Vec<String> {
    let (_, cells) = rendered.table.rows.iter().find(|(r, _)| r == row).unwrap_or_else(|| panic!("no row {row}"));
    cells.iter().map(|c| c.text.clone()).collect()
}

fn pga(model: &str) -> PgaResult {
    let manifest = load_manifest(common::fixture("pga/manifest.jsonl")).unwrap();
    let peaks = read_peaks(common::fixture(&format!("pga/{model}.peaks.jsonl"))).unwrap();
    pga_accuracy(peaks.iter().map(|p| (manifest.get(&p.clip_id).unwrap(), p.peak))).unwrap()
}

#[test]
fn longtail_manifest_meets_the_standard() {
    let m = longtail();
    assert_eq!(m.clips.len(), 888);
    assert!(validate_longtail_standard(&m).is_empty());
}

#[test]
fn v2_longtail_rows() {
    let report = longtail_report("v2");
    let t = render_table(&[("v2".into(), Input::Metrics(&report))], &TableSpec::standard(TableId::Longtail)).unwrap();
    let want = [
        ("Animal", ["0.964", "0.938", "78.9%", "0.84"]),
        ("Pedestrian", ["0.998", "0.981", "93.7%", "1.32"]),
        ("Intersection", ["1.000", "0.973", "96.3%", "1.76"]),
        ("Pass/Overtake", ["1.000", "0.938", "100.0%", "1.47"]),
        ("Cyclist", ["1.000", "0.923", "93.3%", "1.16"]),
        ("Motorcyclist", ["0.998", "0.980", "96.0%", "1.41"]),
        ("Infrastructure", ["1.000", "1.000", "90.6%", "1.47"]),
        ("Rain", ["1.000", "0.961", "94.6%", "1.53"]),
        ("Snow", ["1.000", "1.000", "100.0%", "1.30"]),
        ("Fog", ["1.000", "1.000", "100.0%", "1.34"]),
        ("Overall", ["0.993", "0.964", "91.3%", "1.31"]),
    ];
    for (row, expected) in want {
        assert_eq!(cells(&t, row), expected, "{row}");
    }
}

#[test]
fn v1_longtail_recall_and_overall() {
    let report = longtail_report("v1");
    let t = render_table(&[("v1".into(), Input::Metrics(&report))], &TableSpec::standard(TableId::Longtail)).unwrap();
    // per-group F1 and AUC are not pinned for this model
    let want = [
        ("Animal", "66.1%", "0.63"),
        ("Pedestrian", "94.9%", "1.68"),
        ("Intersection", "94.4%", "1.96"),
        ("Pass/Overtake", "96.7%", "1.49"),
        ("Cyclist", "93.3%", "1.33"),
        ("Motorcyclist", "92.0%", "1.62"),
        ("Infrastructure", "68.8%", "1.61"),
        ("Rain", "94.6%", "1.55"),
        ("Snow", "92.0%", "1.40"),
        ("Fog", "100.0%", "1.44"),
    ];
    for (row, ewr, tta) in want {
        assert_eq!(cells(&t, row)[2..], [ewr.to_string(), tta.to_string()], "{row}");
    }
    assert_eq!(cells(&t, "Overall"), ["0.949", "0.875", "85.5%", "1.43"]);
}

#[test]
fn v1_to_v2_deltas() {
    let (v1, v2) = (longtail_report("v1"), longtail_report("v2"));
    let table = compare_models(&[("v1".into(), &v1), ("v2".into(), &v2)]).unwrap();
    let animal = table.get("v2", "animal", "ewr").unwrap();
    assert_eq!(format!("{:+.1}", animal.delta.unwrap() * 100.0), "+12.8");
    assert!(!animal.regression);
    let overall = table.get("v2", "overall", "auc").unwrap();
    assert_eq!(format!("{:+.3}", overall.delta.unwrap()), "+0.044");
}

#[test]
fn kaggle_rows_for_every_model() {
    let want = [
        ("v1", ["0.935", "0.936", "0.904", "0.925", "10.9%"]),
        ("v2", ["0.943", "0.957", "0.921", "0.940", "4.6%"]),
        ("v2-base", ["0.945", "0.962", "0.915", "0.941", "9.7%"]),
        ("v2-small", ["0.946", "0.947", "0.907", "0.933", "12.2%"]),
    ];
    let mut reports = Vec::new();
    for (model, _) in want {
        let mut r = longtail_report("v2");
        r.kaggle = kaggle_block(model);
        reports.push((model.to_string(), r));
    }
    let models: Vec<(String, Input)> = reports.iter().map(|(n, r)| (n.clone(), Input::Metrics(r))).collect();
    let t = render_table(&models, &TableSpec::standard(TableId::Kaggle)).unwrap();
    for (model, expected) in want {
        assert_eq!(cells(&t, model), expected, "{model}");
    }
}

#[test]
fn pga_rows_for_every_model() {
    let want = [("v1", "49.8%", "+38.3pp"), ("v2", "52.4%", "+40.9pp"), ("v2-small", "69.8%", "+58.3pp"), ("v2-base", "72.1%", "+60.6pp")];
    let results: Vec<(String, PgaResult)> = want.iter().map(|(m, _, _)| (m.to_string(), pga(m))).collect();
    for (_, r) in &results {
        assert_eq!(r.clips, 1894);
        assert_eq!(format!("{:.1}", r.random_baseline * 100.0), "11.5");
    }
    let models: Vec<(String, Input)> = results.iter().map(|(n, r)| (n.clone(), Input::Pga(r))).collect();
    let t = render_table(&models, &TableSpec::standard(TableId::Pga)).unwrap();
    for (model, pga, delta) in want {
        assert_eq!(cells(&t, model), [pga, delta], "{model}");
    }
}
