//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 backend or runtime
//! error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::distill::{train_toy, write_log, DistillConfig, ToyConfig};
use crate::heatmap::{
    compose_heatmap, pga_accuracy, pointing_game, read_attention_file, read_peaks, write_pgm, HeatmapSidecar,
    PgaResult, DEFAULT_TEMPERATURE, VIT_B_LAYERS, VIT_L_LAYERS,
};
use crate::manifest::{
    load_manifest, mark_disposition, mine_review_queue, read_queue, write_queue, ClipRecord, Disposition, GtBox, Manifest,
};
use crate::metrics::{
    evaluate, evaluate_outcomes, read_outcomes, EvalConfig, KaggleBlock, MetricError, MetricsReport, OutcomeMode,
};
use crate::report::{compare_models, render_table, Input, TableId, TableSpec};
use crate::scorer::protocol::{decode_frames, Reply, Request};
use crate::scorer::{load_traces, write_bundle, write_bundle_to, ReplayScorer, Scorer, ScoreTrace, ScorerSpec};
use crate::streaming::{
    run_stream, AlertEvent, FrameSource, LatencyReport, StreamOptions, StreamRun, SyntheticFrames, DEFAULT_FPS,
    DEFAULT_THRESHOLD,
};
use crate::vlmprob::{compression_diagnostic, read_logits};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable holding a default subprocess scorer command.
pub const SCORER_ENV: &str = "CRASHBENCH_SCORER";

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn metric_err(e: MetricError) -> CliError {
    match e {
        MetricError::Io { .. } => runtime(e),
        _ => input(e),
    }
}

#[derive(Debug, Parser)]
#[command(name = "crashbench", version, about = "Evaluation toolkit for collision anticipation models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a manifest (or replay traces) and write report.json.
    Evaluate(EvaluateArgs),
    /// Stream clips through a scorer; writes traces, alerts and latency.
    Stream(StreamArgs),
    /// Compose an attention heatmap and check it against ground-truth boxes.
    Heatmap(HeatmapArgs),
    /// Pointing Game accuracy of stored heatmap peaks.
    Pga(PgaArgs),
    /// Train the toy distillation student.
    DistillDemo(DistillArgs),
    /// Convert answer-token log-probabilities into score traces.
    VlmProb(VlmArgs),
    /// Build or update the active-mining review queue.
    Mine(MineArgs),
    /// Render stored results as tables.
    Report(ReportArgs),
    /// Built-in subprocess backend, for testing the scorer protocol.
    #[command(hide = true)]
    Backend(BackendArgs),
}

/// Settings shared by `evaluate` and `stream`. Defaults follow the standard
/// protocol: 16-frame windows at 8 fps, stride 1, threshold 0.75.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Benchmark manifest (JSONL).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Scorer: constant:<p>, ramp[:...], noisy-ramp[:...], replay:<path>,
    /// subprocess:<cmd> or subprocess-replay:<cmd>.
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = DEFAULT_FPS)]
    pub fps: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed for synthetic frames.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clip-level parallelism.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Directory holding one frame directory per clip id. Without it,
    /// synthetic frames are generated.
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
    /// Side length of synthetic frames.
    #[arg(long, default_value_t = 64)]
    pub synthetic_size: usize,
}

impl RunConfig {
    fn validate(&self) -> CliResult {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(input(format!("--threshold {} outside (0, 1)", self.threshold)));
        }
        if self.stride == 0 {
            return Err(input("--stride must be >= 1"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(input(format!("--fps {} must be > 0", self.fps)));
        }
        if self.jobs == 0 {
            return Err(input("--jobs must be >= 1"));
        }
        if self.synthetic_size == 0 {
            return Err(input("--synthetic-size must be >= 1"));
        }
        if let Some(d) = &self.frames_dir {
            if !d.is_dir() {
                return Err(input(format!("--frames-dir {}: not a directory", d.display())));
            }
        }
        Ok(())
    }

    /// The scorer flag, else the environment default, else none.
    fn scorer_spec(&self) -> CliResult<Option<ScorerSpec>> {
        if let Some(s) = &self.scorer {
            return s.parse().map(Some).map_err(input);
        }
        match std::env::var(SCORER_ENV) {
            Ok(cmd) if !cmd.trim().is_empty() => Ok(Some(ScorerSpec::Subprocess { command: cmd, send_frames: true })),
            _ => Ok(None),
        }
    }

    fn stream_options(&self) -> StreamOptions {
        StreamOptions { threshold: self.threshold, stride: self.stride, ..StreamOptions::default() }
    }

    fn source_for(&self, clip: &ClipRecord, index: usize) -> CliResult<FrameSource> {
        let source = match &self.frames_dir {
            Some(dir) => FrameSource::from_dir(dir.join(&clip.clip_id), clip.clip_id.clone(), self.fps),
            None => FrameSource::synthetic(
                clip.clip_id.clone(),
                self.fps,
                SyntheticFrames {
                    frames: clip_frames(clip, self.fps),
                    width: self.synthetic_size,
                    height: self.synthetic_size,
                    seed: self.seed.wrapping_add(index as u64),
                },
            ),
        };
        Ok(source.map_err(input)?.with_event_time(clip.event_time_s))
    }
}

fn clip_frames(clip: &ClipRecord, fps: f64) -> usize {
    (clip.duration_s * fps).round() as usize
}

fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_manifest_checked(path: &Path) -> CliResult<Manifest> {
    let m = load_manifest(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    if m.is_empty() {
        return Err(input(format!("{}: manifest has no clips", path.display())));
    }
    Ok(m)
}

/// Streams every manifest clip, in manifest order whatever `jobs` is.
fn stream_manifest(
    cfg: &RunConfig,
    manifest: &Manifest,
    spec: &ScorerSpec,
    options: &StreamOptions,
) -> CliResult<Vec<StreamRun>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build().map_err(runtime)?;
    let results: Vec<CliResult<StreamRun>> = pool.install(|| {
        manifest
            .clips
            .par_iter()
            .enumerate()
            .map_init(
                || spec.build().map_err(|e| e.to_string()),
                |scorer, (i, clip)| {
                    let scorer: &mut Box<dyn Scorer> = scorer.as_mut().map_err(|e| runtime(e.clone()))?;
                    let source = cfg.source_for(clip, i)?;
                    run_stream(source, scorer.as_mut(), options).map_err(runtime)
                },
            )
            .collect()
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunConfig,
    /// Recorded traces (bundle file or directory) to evaluate directly.
    #[arg(long, conflicts_with = "scorer")]
    pub traces: Option<PathBuf>,
    /// Precomputed per-clip outcomes instead of traces.
    #[arg(long, conflicts_with_all = ["scorer", "traces"])]
    pub outcomes: Option<PathBuf>,
    /// How the outcome scores were produced.
    #[arg(long, value_enum, default_value_t = ModeArg::Sliding)]
    pub mode: ModeArg,
    /// Single-window outcomes for the Kaggle block of the report.
    #[arg(long)]
    pub kaggle_outcomes: Option<PathBuf>,
    /// Do not print the table.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sliding,
    SingleWindow,
}

impl From<ModeArg> for OutcomeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sliding => OutcomeMode::Sliding,
            ModeArg::SingleWindow => OutcomeMode::SingleWindow,
        }
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> CliResult<MetricsReport> {
    let cfg = &args.run;
    cfg.validate()?;
    let eval = EvalConfig { threshold: cfg.threshold, fps: cfg.fps, stride: cfg.stride, ..EvalConfig::default() };
    let mut report = if let Some(path) = &args.outcomes {
        let outcomes = read_outcomes(path).map_err(metric_err)?;
        if outcomes.is_empty() {
            return Err(input(format!("{}: no outcomes", path.display())));
        }
        evaluate_outcomes(&outcomes, &eval, args.mode.into()).map_err(metric_err)?
    } else {
        let path = cfg.manifest.as_ref().ok_or_else(|| input("--manifest is required"))?;
        let manifest = load_manifest_checked(path)?;
        let traces = if let Some(t) = &args.traces {
            load_traces(t).map_err(input)?
        } else {
            let spec = cfg.scorer_spec()?.ok_or_else(|| input("give --traces, --outcomes or --scorer"))?;
            let runs = stream_manifest(cfg, &manifest, &spec, &cfg.stream_options())?;
            ensure_dir(&cfg.out)?;
            let traces: Vec<ScoreTrace> = runs.iter().map(|r| r.trace.clone()).collect();
            write_bundle(cfg.out.join("traces.jsonl"), &traces).map_err(runtime)?;
            if let Some(r) = runs.iter().find(|r| !r.is_complete()) {
                return Err(runtime(format!("clip {}: {}", r.clip_id, r.failure.as_deref().unwrap_or_default())));
            }
            traces
        };
        evaluate(&manifest, &traces, &eval).map_err(metric_err)?
    };
    if let Some(path) = &args.kaggle_outcomes {
        let outcomes = read_outcomes(path).map_err(metric_err)?;
        let mode = OutcomeMode::SingleWindow;
        for o in &outcomes {
            o.validate(mode).map_err(metric_err)?;
        }
        report.kaggle = KaggleBlock::compute(&outcomes, &eval.leads_s, eval.threshold, mode);
    }
    ensure_dir(&cfg.out)?;
    report.save(cfg.out.join("report.json")).map_err(runtime)?;
    if !args.quiet {
        let table = render_table(&[("model".into(), Input::Metrics(&report))], &TableSpec::standard(TableId::Longtail))
            .map_err(runtime)?;
        let _ = out.write_all(table.text.as_bytes());
    }
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    pub run: RunConfig,
    /// Stream a single clip with this id instead of a manifest.
    #[arg(long)]
    pub clip_id: Option<String>,
    /// Frame directory of the single clip.
    #[arg(long, requires = "clip_id")]
    pub clip_dir: Option<PathBuf>,
    /// Number of synthetic frames for the single clip.
    #[arg(long, requires = "clip_id", conflicts_with = "clip_dir")]
    pub synthetic_frames: Option<usize>,
    /// Event time handed to synthetic scorers for the single clip.
    #[arg(long)]
    pub event_time: Option<f64>,
    /// Re-arm alerts this many seconds after each alert.
    #[arg(long)]
    pub rearm: Option<f64>,
    /// Keep per-window latency samples in latency.json.
    #[arg(long)]
    pub per_window: bool,
}

#[derive(Debug, Serialize)]
struct ClipLatency<'a> {
    clip_id: &'a str,
    complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<&'a str>,
    latency: &'a LatencyReport,
}

pub fn cmd_stream(args: &StreamArgs, out: &mut dyn Write) -> CliResult<Vec<StreamRun>> {
    let cfg = &args.run;
    cfg.validate()?;
    let spec = cfg.scorer_spec()?.ok_or_else(|| input(format!("--scorer (or {SCORER_ENV}) is required")))?;
    let mut options = cfg.stream_options();
    options.rearm_after_s = args.rearm;
    options.keep_per_window = args.per_window;
    options.validate().map_err(input)?;

    let runs = if let Some(id) = &args.clip_id {
        let source = match (&args.clip_dir, args.synthetic_frames) {
            (Some(dir), _) => FrameSource::from_dir(dir, id.clone(), cfg.fps),
            (None, Some(n)) => FrameSource::synthetic(
                id.clone(),
                cfg.fps,
                SyntheticFrames { frames: n, width: cfg.synthetic_size, height: cfg.synthetic_size, seed: cfg.seed },
            ),
            (None, None) => return Err(input("--clip-id needs --clip-dir or --synthetic-frames")),
        }
        .map_err(input)?
        .with_event_time(args.event_time);
        let mut scorer = spec.build().map_err(runtime)?;
        vec![run_stream(source, scorer.as_mut(), &options).map_err(runtime)?]
    } else {
        let path = cfg.manifest.as_ref().ok_or_else(|| input("give --manifest or --clip-id"))?;
        let manifest = load_manifest_checked(path)?;
        stream_manifest(cfg, &manifest, &spec, &options)?
    };

    ensure_dir(&cfg.out)?;
    let traces: Vec<ScoreTrace> = runs.iter().map(|r| r.trace.clone()).collect();
    write_bundle(cfg.out.join("trace.jsonl"), &traces).map_err(runtime)?;
    let alerts: Vec<&AlertEvent> = runs.iter().flat_map(|r| &r.alerts).collect();
    let mut text = String::new();
    for a in &alerts {
        text.push_str(&serde_json::to_string(a).map_err(runtime)?);
        text.push('\n');
    }
    fs::write(cfg.out.join("alerts.jsonl"), text).map_err(runtime)?;
    let latency: Vec<ClipLatency> = runs
        .iter()
        .map(|r| ClipLatency {
            clip_id: &r.clip_id,
            complete: r.is_complete(),
            failure: r.failure.as_deref(),
            latency: &r.latency,
        })
        .collect();
    write_json(&cfg.out.join("latency.json"), &latency)?;

    for r in &runs {
        let l = &r.latency;
        let _ = writeln!(
            out,
            "{}: {} windows, {} frames, {} alerts, preprocessing mean {:.3} ms p99 {:.3} ms, inference mean {:.3} ms p99 {:.3} ms{}",
            r.clip_id,
            l.windows,
            l.frames_preprocessed,
            r.alerts.len(),
            l.preprocessing_ms.mean,
            l.preprocessing_ms.p99,
            l.inference_ms.mean,
            l.inference_ms.p99,
            if r.is_complete() { "" } else { " [INCOMPLETE]" }
        );
    }
    if let Some(r) = runs.iter().find(|r| !r.is_complete()) {
        return Err(runtime(format!(
            "clip {}: {} (partial outputs written)",
            r.clip_id,
            r.failure.as_deref().unwrap_or_default()
        )));
    }
    Ok(runs)
}

#[derive(Debug, Clone, Args)]
pub struct HeatmapArgs {
    /// Attention stack in ATTN format.
    #[arg(long)]
    pub attn: PathBuf,
    /// Layers to average: `all`, `vit-l`, `vit-b`, or a range like `12-20`.
    #[arg(long, default_value = "all")]
    pub layers: String,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    /// Ground-truth boxes as a JSON array of `[frame, x0, y0, x1, y1]`.
    #[arg(long, conflicts_with = "manifest")]
    pub boxes: Option<PathBuf>,
    /// Manifest to take the boxes of `--clip-id` from.
    #[arg(long, requires = "clip_id")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub clip_id: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_layers(s: &str) -> CliResult<Option<(u32, u32)>> {
    match s {
        "all" => Ok(None),
        "vit-l" => Ok(Some((*VIT_L_LAYERS.start(), *VIT_L_LAYERS.end()))),
        "vit-b" => Ok(Some((*VIT_B_LAYERS.start(), *VIT_B_LAYERS.end()))),
        _ => {
            let (a, b) = s.split_once('-').unwrap_or((s, s));
            let p = |v: &str| v.trim().parse::<u32>().map_err(|e| input(format!("--layers {s}: {e}")));
            let (a, b) = (p(a)?, p(b)?);
            if a > b {
                return Err(input(format!("--layers {s}: empty range")));
            }
            Ok(Some((a, b)))
        }
    }
}

pub fn cmd_heatmap(args: &HeatmapArgs, out: &mut dyn Write) -> CliResult<HeatmapSidecar> {
    if !(args.temperature.is_finite() && args.temperature > 0.0) {
        return Err(input(format!("--temperature {} must be > 0", args.temperature)));
    }
    let range = parse_layers(&args.layers)?;
    let boxes: Option<Vec<GtBox>> = match (&args.boxes, &args.manifest) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", p.display())))?)
        }
        (None, Some(m)) => {
            let manifest = load_manifest_checked(m)?;
            let id = args.clip_id.as_deref().unwrap_or_default();
            let clip = manifest.get(id).ok_or_else(|| input(format!("clip {id} not in manifest")))?;
            Some(clip.gt_boxes.clone().ok_or_else(|| input(format!("clip not PGA-annotated: {id}")))?)
        }
        (None, None) => None,
    };
    let mut stack = read_attention_file(&args.attn).map_err(input)?;
    if let Some((a, b)) = range {
        stack = stack.select(|id| (a..=b).contains(&id));
        if stack.layers.is_empty() {
            return Err(input(format!("--layers {}: no such layers in {}", args.layers, args.attn.display())));
        }
    }
    let heatmap = compose_heatmap(&stack, args.temperature as f32).map_err(input)?;
    let hit = match &boxes {
        Some(b) => Some(pointing_game(heatmap.peak, b).map_err(input)?),
        None => None,
    };
    let clip_id = args.clip_id.clone().unwrap_or_else(|| {
        args.attn.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    ensure_dir(&args.out)?;
    write_pgm(args.out.join(format!("{clip_id}.pgm")), &heatmap).map_err(runtime)?;
    let sidecar = HeatmapSidecar { clip_id: clip_id.clone(), peak: heatmap.peak, layers: stack.layer_ids(), temperature: args.temperature, hit };
    write_json(&args.out.join(format!("{clip_id}.json")), &sidecar)?;
    let verdict = match hit {
        Some(true) => "PGA hit",
        Some(false) => "PGA miss",
        None => "no boxes",
    };
    let _ = writeln!(out, "{clip_id}: peak (row {}, col {}): {verdict}", heatmap.peak.0, heatmap.peak.1);
    Ok(sidecar)
}

#[derive(Debug, Clone, Args)]
pub struct PgaArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Heatmap peaks, one `{"clip_id", "peak": [row, col]}` per line.
    #[arg(long)]
    pub peaks: PathBuf,
    /// Where to write the result JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_pga(args: &PgaArgs, out: &mut dyn Write) -> CliResult<PgaResult> {
    let manifest = load_manifest_checked(&args.manifest)?;
    let peaks = read_peaks(&args.peaks).map_err(input)?;
    let mut pairs = Vec::with_capacity(peaks.len());
    for p in &peaks {
        let clip = manifest.get(&p.clip_id).ok_or_else(|| input(format!("clip {} not in manifest", p.clip_id)))?;
        pairs.push((clip, p.peak));
    }
    let result = pga_accuracy(pairs).map_err(input)?;
    if let Some(path) = &args.out {
        write_json(path, &result)?;
    }
    let _ = writeln!(
        out,
        "PGA {:.1}% over {} clips ({} hits); random baseline {:.1}%; delta {:+.1} pp",
        result.pga * 100.0,
        result.clips,
        result.hits,
        result.random_baseline * 100.0,
        result.delta * 100.0
    );
    Ok(result)
}

#[derive(Debug, Clone, Args)]
pub struct DistillArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Total steps; phase 1 keeps its share of the default schedule.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Train with hard labels only.
    #[arg(long)]
    pub hard_only: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistillSummary {
    pub seed: u64,
    pub hard_only: bool,
    pub steps: usize,
    pub phase1_steps: usize,
    pub brier: f64,
    pub ece: f64,
    pub teacher_brier: f64,
    pub mean_abs_dp: f64,
    pub final_total_loss: f64,
}

pub fn cmd_distill_demo(args: &DistillArgs, out: &mut dyn Write) -> CliResult<DistillSummary> {
    let mut config = DistillConfig::default();
    if let Some(steps) = args.steps {
        if steps == 0 {
            return Err(input("--steps must be >= 1"));
        }
        config.phase1_steps = config.phase1_steps * steps / config.total_steps;
        config.total_steps = steps;
    }
    if args.hard_only {
        config = config.hard_only();
    }
    let report = train_toy::<f64>(&config, &ToyConfig::default(), args.seed).map_err(runtime)?;
    ensure_dir(&args.out)?;
    write_log(args.out.join("distill_log.jsonl"), &report.log).map_err(runtime)?;
    let summary = DistillSummary {
        seed: args.seed,
        hard_only: args.hard_only,
        steps: config.total_steps,
        phase1_steps: config.phase1_steps,
        brier: report.brier,
        ece: report.ece,
        teacher_brier: report.teacher_brier,
        mean_abs_dp: report.mean_abs_dp,
        final_total_loss: report.log.last().map_or(f64::NAN, |l| l.total),
    };
    write_json(&args.out.join("distill_summary.json"), &summary)?;
    let _ = writeln!(
        out,
        "seed {}: brier {:.5} (teacher {:.5}), ece {:.5}, mean |dp| {:.4}",
        summary.seed, summary.brier, summary.teacher_brier, summary.ece, summary.mean_abs_dp
    );
    Ok(summary)
}

#[derive(Debug, Clone, Args)]
pub struct VlmArgs {
    /// `logits.jsonl`: `{"clip_id", "ell_a", "ell_b"}` or `{"clip_id", "p": [p0, p1, p2]}` per line,
    /// with an optional `"t"`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output trace bundle; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest with labels, to print the compression diagnostic.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn cmd_vlm_prob(args: &VlmArgs, out: &mut dyn Write) -> CliResult<Vec<ScoreTrace>> {
    let traces = read_logits(&args.input).map_err(input)?;
    match &args.out {
        Some(p) => write_bundle(p, &traces).map_err(runtime)?,
        None => write_bundle_to(&mut *out, &traces).map_err(runtime)?,
    }
    if let Some(m) = &args.manifest {
        let manifest = load_manifest_checked(m)?;
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for t in &traces {
            let clip = manifest.get(&t.clip_id).ok_or_else(|| input(format!("clip {} not in manifest", t.clip_id)))?;
            if clip.label.is_positive() {
                pos.extend(t.peak());
            } else {
                neg.extend(t.scores());
            }
        }
        let d = compression_diagnostic(&pos, &neg).map_err(input)?;
        // keep stdout parseable as a bundle when it carries the traces
        let mut sink: Box<dyn Write> = if args.out.is_some() { Box::new(&mut *out) } else { Box::new(io::stderr()) };
        let _ = writeln!(sink, "{}", serde_json::to_string(&d).map_err(runtime)?);
    }
    Ok(traces)
}

#[derive(Debug, Clone, Args)]
pub struct MineArgs {
    /// Traces to mine (bundle or directory).
    #[arg(long, conflicts_with = "queue")]
    pub traces: Option<PathBuf>,
    /// Existing queue to update with `--mark`.
    #[arg(long)]
    pub queue: Option<PathBuf>,
    /// Reviewer verdicts, `clip_id=confirmed_positive|confirmed_negative`.
    #[arg(long, requires = "queue")]
    pub mark: Vec<String>,
    /// Mining threshold.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "queue.jsonl")]
    pub out: PathBuf,
}

pub fn cmd_mine(args: &MineArgs, out: &mut dyn Write) -> CliResult<Vec<crate::manifest::ReviewQueueEntry>> {
    let queue = match (&args.traces, &args.queue) {
        (Some(t), _) => {
            let traces = load_traces(t).map_err(input)?;
            let scores: Vec<(String, Vec<f64>)> = traces.iter().map(|t| (t.clip_id.clone(), t.scores())).collect();
            mine_review_queue(scores.iter().map(|(c, s)| (c.as_str(), s.as_slice())), args.threshold).map_err(input)?
        }
        (None, Some(q)) => {
            let mut queue = read_queue(q).map_err(input)?;
            for m in &args.mark {
                let (id, d) = m.split_once('=').ok_or_else(|| input(format!("--mark {m}: expected clip_id=disposition")))?;
                let disposition: Disposition =
                    serde_json::from_value(serde_json::Value::String(d.into())).map_err(|_| input(format!("--mark {m}: unknown disposition")))?;
                let entry = queue.iter_mut().find(|e| e.clip_id == id).ok_or_else(|| input(format!("clip {id} not in queue")))?;
                *entry = mark_disposition(entry, disposition, args.threshold).map_err(input)?;
            }
            for e in &queue {
                e.validate(args.threshold).map_err(input)?;
            }
            queue
        }
        (None, None) => return Err(input("give --traces or --queue")),
    };
    write_queue(&queue, &args.out).map_err(runtime)?;
    let hard = queue.iter().filter(|e| e.hard_negative).count();
    let _ = writeln!(out, "{} clips queued, {hard} hard negatives", queue.len());
    Ok(queue)
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Input result file, optionally named: `NAME=PATH`. Repeat for several models.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<String>,
    #[arg(long, default_value = "longtail")]
    pub table: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
    /// Another report.json to compare the first input against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Csv,
    Json,
}

enum Loaded {
    Metrics(MetricsReport),
    Pga(PgaResult),
    Latency(LatencyReport),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn split_named(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(s);
            let name = p.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_else(|| s.to_string());
            (name, p)
        }
    }
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> CliResult<String> {
    let id = TableId::parse(&args.table).map_err(input)?;
    let mut loaded = Vec::with_capacity(args.inputs.len());
    for s in &args.inputs {
        let (name, path) = split_named(s);
        let value = match id {
            TableId::Pga => Loaded::Pga(read_json(&path)?),
            TableId::Latency => Loaded::Latency(read_json(&path)?),
            _ => Loaded::Metrics(MetricsReport::load(&path).map_err(input)?),
        };
        loaded.push((name, value));
    }
    let text = if let Some(other) = &args.compare {
        let Loaded::Metrics(base) = &loaded[0].1 else {
            return Err(input("--compare needs metric reports"));
        };
        let (other_name, other_path) = split_named(&other.to_string_lossy());
        let other = MetricsReport::load(&other_path).map_err(input)?;
        let table = compare_models(&[(loaded[0].0.clone(), base), (other_name, &other)]).map_err(input)?;
        match args.format {
            FormatArg::Json => serde_json::to_string_pretty(&table).map_err(runtime)? + "\n",
            _ => table.to_text(),
        }
    } else {
        let models: Vec<(String, Input)> = loaded
            .iter()
            .map(|(n, v)| {
                let input = match v {
                    Loaded::Metrics(r) => Input::Metrics(r),
                    Loaded::Pga(p) => Input::Pga(p),
                    Loaded::Latency(l) => Input::Latency(l),
                };
                (n.clone(), input)
            })
            .collect();
        let rendered = render_table(&models, &TableSpec::standard(id)).map_err(input)?;
        match args.format {
            FormatArg::Text => rendered.text,
            FormatArg::Csv => rendered.csv,
            FormatArg::Json => serde_json::to_string_pretty(&rendered.table).map_err(runtime)? + "\n",
        }
    };
    let _ = out.write_all(text.as_bytes());
    Ok(text)
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// `constant:<p>`, `mean` (mean pixel value, clamped) or `replay:<traces>`.
    #[arg(long, default_value = "mean")]
    pub mode: String,
    /// Reply with an error to the request with this id.
    #[arg(long)]
    pub fail_at: Option<u64>,
    /// Answer requests in reverse order within each batch of this size.
    #[arg(long, default_value_t = 1)]
    pub shuffle: usize,
}

/// Serves the subprocess scoring protocol on stdin/stdout.
pub fn cmd_backend(args: &BackendArgs) -> CliResult {
    enum Mode {
        Constant(f64),
        Mean,
        Replay(ReplayScorer),
    }
    let mode = match args.mode.split_once(':') {
        Some(("constant", v)) => Mode::Constant(v.parse().map_err(input)?),
        Some(("replay", p)) => Mode::Replay(ReplayScorer::new(load_traces(p).map_err(input)?)),
        None if args.mode == "mean" => Mode::Mean,
        _ => return Err(input(format!("--mode {}: unknown", args.mode))),
    };
    let stdin = io::stdin();
    let mut stdout = io::BufWriter::new(io::stdout());
    let mut batch: Vec<Reply> = Vec::new();
    for line in stdin.lock().lines() {
        let line = line.map_err(runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line).map_err(input)?;
        let result = if args.fail_at == Some(req.id) {
            Err(format!("injected failure at request {}", req.id))
        } else {
            match &mode {
                Mode::Constant(c) => Ok(*c),
                Mode::Mean => match &req.data {
                    Some(d) => decode_frames(d).map(|frames| {
                        let (sum, n) = frames.iter().flatten().fold((0.0_f64, 0usize), |(s, n), &v| (s + v as f64, n + 1));
                        (sum / n.max(1) as f64).clamp(0.0, 1.0)
                    }),
                    None => Err("request carries no pixel data".into()),
                },
                Mode::Replay(r) => match (&req.clip_id, req.prediction_time_s()) {
                    (Some(c), Some(t)) => r.lookup(c, t).map_err(|e| e.to_string()),
                    _ => Err("replay needs clip_id and fps".into()),
                },
            }
        };
        batch.push(match result {
            Ok(score) => Reply { id: req.id, score: Some(score), error: None },
            Err(e) => Reply { id: req.id, score: None, error: Some(e) },
        });
        if batch.len() >= args.shuffle.max(1) {
            for r in batch.drain(..).rev() {
                writeln!(stdout, "{}", serde_json::to_string(&r).map_err(runtime)?).map_err(runtime)?;
            }
            stdout.flush().map_err(runtime)?;
        }
    }
    for r in batch.drain(..).rev() {
        writeln!(stdout, "{}", serde_json::to_string(&r).map_err(runtime)?).map_err(runtime)?;
    }
    stdout.flush().map_err(runtime)
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult {
    match &cli.command {
        Command::Evaluate(a) => cmd_evaluate(a, out).map(drop),
        Command::Stream(a) => cmd_stream(a, out).map(drop),
        Command::Heatmap(a) => cmd_heatmap(a, out).map(drop),
        Command::Pga(a) => cmd_pga(a, out).map(drop),
        Command::DistillDemo(a) => cmd_distill_demo(a, out).map(drop),
        Command::VlmProb(a) => cmd_vlm_prob(a, out).map(drop),
        Command::Mine(a) => cmd_mine(a, out).map(drop),
        Command::Report(a) => cmd_report(a, out).map(drop),
        Command::Backend(a) => cmd_backend(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match dispatch(&cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn layer_ranges() {
        assert_eq!(parse_layers("all").unwrap(), None);
        assert_eq!(parse_layers("vit-l").unwrap(), Some((12, 20)));
        assert_eq!(parse_layers("3-5").unwrap(), Some((3, 5)));
        assert_eq!(parse_layers("7").unwrap(), Some((7, 7)));
        assert!(parse_layers("5-3").is_err());
    }

    #[test]
    fn named_inputs() {
        assert_eq!(split_named("v2=a/b.json"), ("v2".into(), PathBuf::from("a/b.json")));
        assert_eq!(split_named("dir/report.json"), ("report".into(), PathBuf::from("dir/report.json")));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["crashbench", "evaluate", "--threshold"]), EXIT_INPUT);
        assert_eq!(run(["crashbench", "nope"]), EXIT_INPUT);
        assert_eq!(run(["crashbench", "--help"]), EXIT_OK);
    }
}
