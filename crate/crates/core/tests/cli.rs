//! The binary, driven as a subprocess.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crashbench::manifest::{read_queue, save_manifest, Label, Manifest};
use crashbench::metrics::MetricsReport;
use crashbench::scorer::{load_traces, ScoreTrace, Scorer, SubprocessScorer};
use crashbench::streaming::{batch_extract_windows, preprocess_clip, PreprocessConfig, SyntheticFrames};

fn run(args: &[&str]) -> Output {
    Command::new(common::bin()).args(args).env_remove("CRASHBENCH_SCORER").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_manifest(dir: &Path, m: &Manifest) -> String {
    let p = dir.join("manifest.jsonl");
    save_manifest(m, &p).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The hidden backend of this same binary, as a scorer command.
fn backend(extra: &str) -> String {
    format!("subprocess:{} backend {extra}", common::bin())
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = run(&["evaluate", "--manifest", s(&empty), "--scorer", "constant:0.5", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no clips"));

    let manifest = write_manifest(dir.path(), &common::synthetic_manifest(2));
    assert_eq!(code(&run(&["evaluate", "--manifest", &manifest, "--scorer", "constant:0.5", "--threshold", "1.5"])), 2);
    assert_eq!(code(&run(&["evaluate", "--manifest", &manifest, "--scorer", "bogus:1"])), 2);
    assert_eq!(code(&run(&["evaluate", "--manifest", &manifest])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn constant_scores_bracket_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &common::synthetic_manifest(4));
    let high = dir.path().join("high");
    let o = run(&["evaluate", "--manifest", &manifest, "--scorer", "constant:0.9", "--out", s(&high), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = MetricsReport::load(high.join("report.json")).unwrap();
    assert_eq!(r.overall.fpr, Some(1.0));

    let o = run(&[
        "stream", "--scorer", "constant:0", "--clip-id", "quiet", "--synthetic-frames", "72", "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("0 alerts"));
    assert_eq!(fs::read_to_string(dir.path().join("alerts.jsonl")).unwrap(), "");
}

#[test]
fn stream_emits_one_score_per_full_window() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "stream", "--scorer", "ramp", "--clip-id", "c", "--synthetic-frames", "72", "--event-time", "6", "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traces: Vec<ScoreTrace> = load_traces(dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(traces.len(), 1);
    assert_eq!(traces[0].entries.len(), 57);
    assert_eq!(traces[0].entries[0].t, 1.875);
    assert!(dir.path().join("latency.json").exists());
}

#[test]
fn subprocess_backend_failure_and_env() {
    let dir = tempfile::tempdir().unwrap();
    // short clips: every request carries a full-resolution window
    let clips = vec![
        common::clip("p", Label::Positive, 2.5, Some(2.0)),
        common::clip("n", Label::Negative, 2.5, None),
    ];
    let manifest = write_manifest(dir.path(), &Manifest::new("short", "1", clips).unwrap());
    let eval = |scorer: Option<&str>, out: &str, env: Option<&str>| {
        let out = dir.path().join(out);
        let mut cmd = Command::new(common::bin());
        cmd.args(["evaluate", "--manifest", &manifest, "--synthetic-size", "16", "--quiet", "--out", s(&out)]);
        cmd.env_remove("CRASHBENCH_SCORER");
        if let Some(sc) = scorer {
            cmd.args(["--scorer", sc]);
        }
        if let Some(e) = env {
            cmd.env("CRASHBENCH_SCORER", e);
        }
        let o = cmd.output().unwrap();
        let traces = fs::read(out.join("traces.jsonl")).ok();
        (code(&o), traces)
    };
    let (c1, in_order) = eval(Some(&backend("--mode mean")), "a", None);
    assert_eq!(c1, 0);
    assert!(in_order.is_some());

    let cmd = backend("--mode mean").trim_start_matches("subprocess:").to_string();
    let (c3, from_env) = eval(None, "c", Some(&cmd));
    assert_eq!(c3, 0);
    assert_eq!(from_env, in_order);

    let (c4, partial) = eval(Some(&backend("--mode mean --fail-at 3")), "d", None);
    assert_eq!(c4, 3);
    assert!(partial.is_some());
}

#[test]
fn pipelined_replies_may_arrive_out_of_order() {
    let raw = SyntheticFrames { frames: 20, width: 8, height: 8, seed: 1 }.all();
    let frames = preprocess_clip(&raw, &PreprocessConfig::default()).unwrap();
    let windows = batch_extract_windows(&frames, "c", 8.0, 1);
    let score = |extra: &str| {
        let command = format!("{} backend --mode mean {extra}", common::bin());
        SubprocessScorer::spawn(&command, true).unwrap().score_many(&windows).unwrap()
    };
    let in_order = score("");
    assert_eq!(in_order.len(), 5);
    // the backend holds replies until a batch is full, so the batch divides the window count
    assert_eq!(score("--shuffle 5"), in_order);
    let mut failing = SubprocessScorer::spawn(&format!("{} backend --mode mean --fail-at 3", common::bin()), true).unwrap();
    assert!(failing.score_many(&windows).is_err());
}

#[test]
fn replay_through_the_backend_reproduces_traces() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &common::synthetic_manifest(3));
    let first = dir.path().join("first");
    let o = run(&[
        "evaluate", "--manifest", &manifest, "--scorer", "noisy-ramp:seed=3", "--synthetic-size", "16", "--quiet",
        "--out", s(&first),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traces = first.join("traces.jsonl");
    let second = dir.path().join("second");
    let scorer = format!("subprocess-replay:{} backend --mode replay:{}", common::bin(), s(&traces));
    let o = run(&["evaluate", "--manifest", &manifest, "--scorer", &scorer, "--quiet", "--out", s(&second)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&traces).unwrap(), fs::read(second.join("traces.jsonl")).unwrap());
    assert_eq!(
        fs::read(first.join("report.json")).unwrap(),
        fs::read(second.join("report.json")).unwrap()
    );
}

#[test]
fn report_and_compare_on_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::fixture("longtail/manifest.jsonl");
    for model in ["v1", "v2"] {
        let o = run(&[
            "evaluate",
            "--manifest",
            s(&manifest),
            "--traces",
            s(&common::fixture(&format!("longtail/{model}.traces.jsonl"))),
            "--kaggle-outcomes",
            s(&common::fixture(&format!("kaggle/{model}.outcomes.jsonl"))),
            "--out",
            s(&dir.path().join(model)),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let v1 = format!("v1={}", s(&dir.path().join("v1/report.json")));
    let v2 = format!("v2={}", s(&dir.path().join("v2/report.json")));

    let o = run(&["report", "--in", &v1, "--in", &v2, "--table", "longtail", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let csv = stdout(&o);
    assert!(csv.lines().any(|l| l.starts_with("Overall,") && l.contains("0.949") && l.contains("0.993")), "{csv}");

    let o = run(&["report", "--in", &v1, "--in", &v2, "--table", "kaggle"]);
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("v2") && l.contains("0.940") && l.contains("4.6%")), "{text}");

    let o = run(&["report", "--in", &v1, "--compare", &v2]);
    assert_eq!(code(&o), 0);
    let deltas = stdout(&o);
    let animal = deltas.lines().find(|l| l.contains("Animal") && l.contains(" ewr ")).unwrap();
    assert!(animal.contains("+12.8pp") && !animal.ends_with('!'), "{animal}");

    assert_eq!(code(&run(&["report", "--in", &v1, "--table", "nope"])), 2);
}

#[test]
fn mine_then_mark() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("t.jsonl");
    fs::write(
        &traces,
        concat!(
            "{\"clip_id\":\"a\",\"t0\":1.875,\"dt\":0.125,\"scores\":[0.2,0.9]}\n",
            "{\"clip_id\":\"b\",\"t0\":1.875,\"dt\":0.125,\"scores\":[0.1,0.3]}\n",
            "{\"clip_id\":\"c\",\"t0\":1.875,\"dt\":0.125,\"scores\":[0.8,0.1]}\n",
        ),
    )
    .unwrap();
    let queue = dir.path().join("q.jsonl");
    let o = run(&["mine", "--traces", s(&traces), "--out", s(&queue)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let q = read_queue(&queue).unwrap();
    assert_eq!(q.iter().map(|e| e.clip_id.as_str()).collect::<Vec<_>>(), ["a", "c"]);

    let marked = dir.path().join("q2.jsonl");
    let o = run(&[
        "mine", "--queue", s(&queue), "--mark", "a=confirmed_negative", "--mark", "c=confirmed_positive", "--out",
        s(&marked),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("1 hard negatives"));
    let o = run(&["mine", "--queue", s(&queue), "--mark", "zz=confirmed_negative", "--out", s(&marked)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn pga_on_fixture_peaks() {
    let o = run(&[
        "pga",
        "--manifest",
        s(&common::fixture("pga/manifest.jsonl")),
        "--peaks",
        s(&common::fixture("pga/v2.peaks.jsonl")),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "PGA 52.4% over 1894 clips (992 hits); random baseline 11.5%; delta +40.9 pp");
}

#[test]
fn vlm_prob_writes_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let logits = dir.path().join("logits.jsonl");
    fs::write(
        &logits,
        concat!(
            "{\"clip_id\":\"x\",\"t\":2.0,\"ell_a\":-0.1,\"ell_b\":-2.4}\n",
            "{\"clip_id\":\"x\",\"t\":2.5,\"ell_a\":-3.0,\"ell_b\":-0.05}\n",
            "{\"clip_id\":\"y\",\"p\":[0.5,0.5,0.5]}\n",
        ),
    )
    .unwrap();
    let out = dir.path().join("traces.jsonl");
    let o = run(&["vlm-prob", "--in", s(&logits), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traces: Vec<ScoreTrace> = load_traces(&out).unwrap();
    assert_eq!(traces.len(), 2);
    let x = &traces[0];
    assert!(x.entries[0].score > 0.9 && x.entries[1].score < 0.1);
    assert_eq!(traces[1].entries[0].score, 0.5);
}

#[test]
fn distill_demo_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let go = |sub: &str| {
        let out = dir.path().join(sub);
        let o = run(&["distill-demo", "--seed", "5", "--steps", "400", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (stdout(&o), fs::read(out.join("distill_log.jsonl")).unwrap())
    };
    assert_eq!(go("a"), go("b"));
    assert_eq!(code(&run(&["distill-demo", "--steps", "0"])), 2);
}
