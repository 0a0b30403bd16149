//! Paper-shaped tables rendered from metric reports, PGA results and latency
//! reports, plus a model-to-model delta table.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::heatmap::PgaResult;
use crate::metrics::MetricsReport;
use crate::streaming::LatencyReport;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("table {table}: column {column}: metric missing for {row}")]
    MissingMetric { table: &'static str, column: String, row: String },
    #[error("table {table}: expected {expected} input, got {got}")]
    WrongInput { table: &'static str, expected: &'static str, got: &'static str },
    #[error("table {0}: no inputs")]
    NoInputs(&'static str),
    #[error("comparison needs at least two reports")]
    TooFewReports,
    #[error("reports cover different manifests: {0} vs {1}")]
    ManifestMismatch(String, String),
    #[error("unknown table {0:?}")]
    UnknownTable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableId {
    Kaggle,
    Longtail,
    Pga,
    Latency,
    SslAblation,
}

impl TableId {
    pub fn key(self) -> &'static str {
        match self {
            TableId::Kaggle => "kaggle",
            TableId::Longtail => "longtail",
            TableId::Pga => "pga",
            TableId::Latency => "latency",
            TableId::SslAblation => "ssl_ablation",
        }
    }

    pub fn parse(s: &str) -> Result<TableId, ReportError> {
        [TableId::Kaggle, TableId::Longtail, TableId::Pga, TableId::Latency, TableId::SslAblation]
            .into_iter()
            .find(|t| t.key() == s)
            .ok_or_else(|| ReportError::UnknownTable(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// Fraction rendered as a percentage with one decimal.
    Percent,
    /// Fraction difference rendered as signed percentage points.
    PercentPoints,
    Decimal3,
    Seconds2,
    Millis2,
}

impl Format {
    pub fn render(self, v: f64) -> String {
        match self {
            Format::Percent => format!("{:.1}%", v * 100.0),
            Format::PercentPoints => format!("{:+.1}pp", v * 100.0),
            Format::Decimal3 => format!("{v:.3}"),
            Format::Seconds2 => format!("{v:.2}"),
            Format::Millis2 => format!("{v:.2}"),
        }
    }

    /// The value as written in CSV: same digits, no unit suffix.
    pub fn render_plain(self, v: f64) -> String {
        let s = self.render(v);
        s.trim_end_matches('%').trim_end_matches("pp").to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Best {
    None,
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnDef {
    pub metric: &'static str,
    pub header: &'static str,
    pub format: Format,
    pub best: Best,
}

const fn col(metric: &'static str, header: &'static str, format: Format, best: Best) -> ColumnDef {
    ColumnDef { metric, header, format, best }
}

/// Rows are models, except for the long-tail table where rows are groups and
/// each model contributes a block of columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    ModelRows,
    GroupRows,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSpec {
    pub id: TableId,
    pub layout: Layout,
    pub columns: Vec<ColumnDef>,
}

impl TableSpec {
    pub fn standard(id: TableId) -> TableSpec {
        use Best::*;
        use Format::*;
        let (layout, columns) = match id {
            TableId::Kaggle => (
                Layout::ModelRows,
                vec![
                    col("ap@0.5", "@0.5s", Decimal3, Max),
                    col("ap@1.0", "@1.0s", Decimal3, Max),
                    col("ap@1.5", "@1.5s", Decimal3, Max),
                    col("map", "mAP", Decimal3, Max),
                    col("kaggle_fpr", "FPR", Percent, Min),
                ],
            ),
            TableId::Longtail => (
                Layout::GroupRows,
                vec![
                    col("auc", "AUC", Decimal3, Max),
                    col("f1", "F1", Decimal3, Max),
                    col("ewr", "EWR", Percent, Max),
                    col("mtta_s", "TTA", Seconds2, None),
                ],
            ),
            TableId::Pga => (
                Layout::ModelRows,
                vec![col("pga", "PGA", Percent, Max), col("delta", "Δrand", PercentPoints, Max)],
            ),
            TableId::Latency => (
                Layout::ModelRows,
                vec![
                    col("preprocessing_mean", "prep mean ms", Millis2, Min),
                    col("preprocessing_p99", "prep p99 ms", Millis2, Min),
                    col("inference_mean", "infer mean ms", Millis2, Min),
                    col("inference_p99", "infer p99 ms", Millis2, Min),
                    col("total_mean", "total mean ms", Millis2, Min),
                    col("total_p99", "total p99 ms", Millis2, Min),
                ],
            ),
            TableId::SslAblation => (
                Layout::ModelRows,
                vec![
                    col("ap", "AP", Decimal3, Max),
                    col("f1", "F1", Decimal3, Max),
                    col("fpr", "FPR", Percent, Min),
                ],
            ),
        };
        TableSpec { id, layout, columns }
    }
}

/// One model's results, in whichever shape the table consumes.
#[derive(Debug, Clone)]
pub enum Input<'a> {
    Metrics(&'a MetricsReport),
    Pga(&'a PgaResult),
    Latency(&'a LatencyReport),
}

impl Input<'_> {
    fn kind(&self) -> &'static str {
        match self {
            Input::Metrics(_) => "metrics report",
            Input::Pga(_) => "PGA result",
            Input::Latency(_) => "latency report",
        }
    }
}

/// Looks up a metric; `Some(None)` means present but undefined (null).
fn lookup(input: &Input, row: &str, metric: &str) -> Option<Option<f64>> {
    match input {
        Input::Metrics(r) => {
            if let Some(lead) = metric.strip_prefix("ap@") {
                let lead: f64 = lead.parse().ok()?;
                return r.kaggle.ap_at.iter().find(|(l, _)| (l - lead).abs() < 1e-9).map(|&(_, v)| v);
            }
            match metric {
                "map" => return Some(r.kaggle.map),
                "kaggle_fpr" => return Some(r.kaggle.fpr),
                _ => {}
            }
            let g = if row == "overall" { &r.overall } else { r.group(row)? };
            Some(match metric {
                "auc" => g.auc,
                "f1" => g.f1,
                "ewr" => g.ewr,
                "mtta_s" => g.mtta_s,
                "fpr" => g.fpr,
                "ap" => g.ap,
                _ => return None,
            })
        }
        Input::Pga(p) => match metric {
            "pga" => Some(Some(p.pga)),
            "delta" => Some(Some(p.delta)),
            "random_baseline" => Some(Some(p.random_baseline)),
            _ => None,
        },
        Input::Latency(l) => {
            let (stats, which) = metric.rsplit_once('_')?;
            let s = match stats {
                "preprocessing" => &l.preprocessing_ms,
                "inference" => &l.inference_ms,
                "total" => &l.total_ms,
                _ => return None,
            };
            match which {
                "mean" => Some(Some(s.mean)),
                "p50" => Some(Some(s.p50)),
                "p99" => Some(Some(s.p99)),
                _ => None,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub value: Option<f64>,
    pub text: String,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub id: TableId,
    /// Model name above each column; empty for single-block tables.
    pub blocks: Vec<String>,
    pub headers: Vec<String>,
    pub rows: Vec<(String, Vec<Cell>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub table: Table,
    pub text: String,
    pub csv: String,
}

const UNDEFINED: &str = "n/a";

/// Renders `models` (name, results) under `spec`. Best cells get a `*`.
pub fn render_table(models: &[(String, Input)], spec: &TableSpec) -> Result<Rendered, ReportError> {
    let table = build_table(models, spec)?;
    let text = to_text(&table);
    let csv = to_csv(&table, spec);
    Ok(Rendered { table, text, csv })
}

fn build_table(models: &[(String, Input)], spec: &TableSpec) -> Result<Table, ReportError> {
    let name = spec.id.key();
    if models.is_empty() {
        return Err(ReportError::NoInputs(name));
    }
    let expected = match spec.id {
        TableId::Pga => "PGA result",
        TableId::Latency => "latency report",
        _ => "metrics report",
    };
    for (_, input) in models {
        if input.kind() != expected {
            return Err(ReportError::WrongInput { table: name, expected, got: input.kind() });
        }
    }
    let cell = |input: &Input, row: &str, c: &ColumnDef| -> Result<Cell, ReportError> {
        let value = lookup(input, row, c.metric).ok_or_else(|| ReportError::MissingMetric {
            table: name,
            column: c.header.to_string(),
            row: row.to_string(),
        })?;
        let text = value.map_or_else(|| UNDEFINED.to_string(), |v| c.format.render(v));
        Ok(Cell { value, text, best: false })
    };

    let mut table = Table { id: spec.id, blocks: Vec::new(), headers: Vec::new(), rows: Vec::new() };
    match spec.layout {
        Layout::ModelRows => {
            table.headers = spec.columns.iter().map(|c| c.header.to_string()).collect();
            if spec.id == TableId::Pga {
                if let Input::Pga(p) = &models[0].1 {
                    let mut cells = vec![Cell { value: None, text: "-".into(), best: false }; spec.columns.len()];
                    cells[0].text = Format::Percent.render(p.random_baseline);
                    table.rows.push(("Random baseline".into(), cells));
                }
            }
            let first = table.rows.len();
            for (model, input) in models {
                let cells = spec.columns.iter().map(|c| cell(input, "overall", c)).collect::<Result<_, _>>()?;
                table.rows.push((model.clone(), cells));
            }
            for (j, c) in spec.columns.iter().enumerate() {
                let idx: Vec<(usize, usize)> = (first..table.rows.len()).map(|i| (i, j)).collect();
                mark_best(&mut table, &idx, c);
            }
        }
        Layout::GroupRows => {
            let Input::Metrics(lead) = &models[0].1 else { unreachable!() };
            let mut rows: Vec<(String, String)> =
                lead.groups.iter().map(|(k, _)| (k.clone(), display_group(k))).collect();
            rows.push(("overall".into(), "Overall".into()));
            for (model, _) in models {
                for c in &spec.columns {
                    table.blocks.push(model.clone());
                    table.headers.push(c.header.to_string());
                }
            }
            for (key, label) in &rows {
                let mut cells = Vec::new();
                for (_, input) in models {
                    for c in &spec.columns {
                        cells.push(cell(input, key, c)?);
                    }
                }
                table.rows.push((label.clone(), cells));
            }
            let k = spec.columns.len();
            for i in 0..table.rows.len() {
                for (j, c) in spec.columns.iter().enumerate() {
                    let idx: Vec<(usize, usize)> = (0..models.len()).map(|m| (i, m * k + j)).collect();
                    mark_best(&mut table, &idx, c);
                }
            }
        }
    }
    Ok(table)
}

fn display_group(key: &str) -> String {
    crate::manifest::Group::from_key(key).map_or_else(|| key.to_string(), |g| g.display_name().to_string())
}

/// Marks every cell whose rendered value equals the best rendered value, so
/// ties at display precision are all marked. Single-model tables mark nothing.
fn mark_best(table: &mut Table, idx: &[(usize, usize)], c: &ColumnDef) {
    if c.best == Best::None || idx.len() < 2 {
        return;
    }
    let shown = |t: &Table, (i, j): (usize, usize)| -> Option<f64> {
        let cell = &t.rows[i].1[j];
        cell.value.and_then(|v| c.format.render_plain(v).parse::<f64>().ok())
    };
    let vals: Vec<f64> = idx.iter().filter_map(|&p| shown(table, p)).collect();
    let target = match c.best {
        Best::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Best::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
        Best::None => unreachable!(),
    };
    if vals.is_empty() {
        return;
    }
    for &p in idx {
        if shown(table, p) == Some(target) {
            table.rows[p.0].1[p.1].best = true;
        }
    }
}

fn to_text(t: &Table) -> String {
    let label_w = t.rows.iter().map(|(l, _)| l.chars().count()).chain([5]).max().unwrap_or(5);
    let cell_text = |c: &Cell| if c.best { format!("{}*", c.text) } else { format!("{} ", c.text) };
    let mut widths: Vec<usize> = t.headers.iter().map(|h| h.chars().count() + 1).collect();
    for (_, cells) in &t.rows {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(cell_text(c).chars().count());
        }
    }
    let mut out = String::new();
    if !t.blocks.is_empty() {
        let _ = write!(out, "{:label_w$}", "");
        let mut j = 0;
        while j < t.blocks.len() {
            let end = (j..t.blocks.len()).find(|&e| t.blocks[e] != t.blocks[j]).unwrap_or(t.blocks.len());
            let span: usize = widths[j..end].iter().map(|w| w + 2).sum();
            let _ = write!(out, " |{:^w$}", t.blocks[j], w = span - 1);
            j = end;
        }
        out.push('\n');
    }
    let header_label = if t.blocks.is_empty() { "Model" } else { "Group" };
    let _ = write!(out, "{header_label:label_w$}");
    for (h, w) in t.headers.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    let rule = label_w + widths.iter().map(|w| w + 2).sum::<usize>();
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for (label, cells) in &t.rows {
        let _ = write!(out, "{label:label_w$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", cell_text(c));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn to_csv(t: &Table, spec: &TableSpec) -> String {
    let k = spec.columns.len();
    let mut out = String::from(if t.blocks.is_empty() { "model" } else { "group" });
    for (j, h) in t.headers.iter().enumerate() {
        let unit = match spec.columns[j % k].format {
            Format::Percent => " (%)",
            Format::PercentPoints => " (pp)",
            _ => "",
        };
        let name = match t.blocks.get(j) {
            Some(b) => format!("{b} {h}{unit}"),
            None => format!("{h}{unit}"),
        };
        out.push(',');
        out.push_str(&csv_field(&name));
    }
    out.push('\n');
    for (label, cells) in &t.rows {
        out.push_str(&csv_field(label));
        for (j, c) in cells.iter().enumerate() {
            out.push(',');
            match c.value {
                Some(v) => out.push_str(&spec.columns[j % k].format.render_plain(v)),
                None if c.text == UNDEFINED => {}
                None => out.push_str(&csv_field(c.text.trim_end_matches('%'))),
            }
        }
        out.push('\n');
    }
    out
}

/// Whether a higher value of the metric is an improvement.
fn higher_is_better(metric: &str) -> bool {
    metric != "fpr"
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta {
    pub model: String,
    pub group: String,
    pub metric: &'static str,
    pub baseline: Option<f64>,
    pub value: Option<f64>,
    pub delta: Option<f64>,
    pub regression: bool,
}

impl Delta {
    pub fn sign(&self) -> char {
        match self.delta {
            Some(d) if d > 0.0 => '+',
            Some(d) if d < 0.0 => '-',
            Some(_) => '=',
            None => '?',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaTable {
    pub baseline: String,
    pub deltas: Vec<Delta>,
}

const DELTA_METRICS: [(&str, Format); 5] = [
    ("auc", Format::Decimal3),
    ("f1", Format::Decimal3),
    ("ewr", Format::Percent),
    ("mtta_s", Format::Seconds2),
    ("fpr", Format::Percent),
];

/// Deltas of every report against the first one, per group and overall,
/// plus the Kaggle mAP row.
pub fn compare_models(reports: &[(String, &MetricsReport)]) -> Result<DeltaTable, ReportError> {
    if reports.len() < 2 {
        return Err(ReportError::TooFewReports);
    }
    let (base_name, base) = &reports[0];
    let digest = |r: &MetricsReport| r.manifest.as_ref().map(|m| m.digest.clone());
    for (_, r) in &reports[1..] {
        if digest(r) != digest(base) {
            let show = |d: Option<String>| d.unwrap_or_else(|| "<none>".into());
            return Err(ReportError::ManifestMismatch(show(digest(base)), show(digest(r))));
        }
    }
    let mut rows: Vec<String> = base.groups.iter().map(|(k, _)| k.clone()).collect();
    rows.push("overall".into());
    let mut deltas = Vec::new();
    for (model, r) in &reports[1..] {
        let mut push = |group: &str, metric: &'static str, b: Option<f64>, v: Option<f64>| {
            let delta = match (b, v) {
                (Some(b), Some(v)) => Some(v - b),
                _ => None,
            };
            let regression = delta.is_some_and(|d| if higher_is_better(metric) { d < 0.0 } else { d > 0.0 });
            deltas.push(Delta {
                model: model.clone(),
                group: group.to_string(),
                metric,
                baseline: b,
                value: v,
                delta,
                regression,
            });
        };
        for g in &rows {
            for (metric, _) in DELTA_METRICS {
                let b = lookup(&Input::Metrics(base), g, metric).flatten();
                let v = lookup(&Input::Metrics(r), g, metric).flatten();
                push(g, metric, b, v);
            }
        }
        push("kaggle", "map", base.kaggle.map, r.kaggle.map);
    }
    Ok(DeltaTable { baseline: base_name.clone(), deltas })
}

impl DeltaTable {
    /// One line per delta; regressions end with `!`.
    pub fn to_text(&self) -> String {
        let mut out = format!("baseline: {}\n", self.baseline);
        for d in &self.deltas {
            let fmt = DELTA_METRICS.iter().find(|(m, _)| *m == d.metric).map_or(Format::Decimal3, |&(_, f)| f);
            let show = |v: Option<f64>| v.map_or_else(|| UNDEFINED.to_string(), |v| fmt.render(v));
            let delta = match (d.delta, fmt) {
                (None, _) => UNDEFINED.to_string(),
                (Some(x), Format::Percent) => Format::PercentPoints.render(x),
                (Some(x), _) => format!("{x:+.3}"),
            };
            let _ = writeln!(
                out,
                "{:<14} {:<18} {:<7} {:>8} -> {:<8} {:>9}{}",
                d.model,
                display_group(&d.group),
                d.metric,
                show(d.baseline),
                show(d.value),
                delta,
                if d.regression { " !" } else { "" }
            );
        }
        out
    }

    pub fn get(&self, model: &str, group: &str, metric: &str) -> Option<&Delta> {
        self.deltas.iter().find(|d| d.model == model && d.group == group && d.metric == metric)
    }
}
