//! Rolling-origin evaluation over the test segment and report tables.
//!
//! Every model forecasts from each admissible test origin; the horizon-`j`
//! prediction from origin `t` is scored against the actual at `t + j`.
//! Per-node RMSEs are divided by the AR(1) RMSE of the same node and horizon.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::SeriesPanel;
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::forecast::Forecaster;
use crate::hierarchy::{Hierarchy, NodeId};
use crate::metrics::{distance_correlation, pearson, relative_rmse, rmse, EvalRecord};

pub const MONTHLY_HORIZONS: [usize; 6] = [0, 1, 2, 3, 4, 8];
pub const DAILY_HORIZONS: [usize; 6] = [0, 1, 2, 3, 7, 14];

/// How node-level results are combined into a table cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Mean of per-node relative RMSEs and per-node coefficients.
    #[default]
    MeanOfNodes,
    /// Metrics recomputed on the concatenation of all nodes' pairs.
    Pooled,
}

/// A report cell: a number or the reason it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    Value(f64),
    Missing(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::Missing(_) => None,
        }
    }

    fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Cell::Value(v),
            Err(e) => Cell::Missing(reason_code(&e).into()),
        }
    }

    /// Three decimals, or `n/a(code)`.
    pub fn rounded(&self) -> String {
        match self {
            // avoid printing "-0.000"
            Cell::Value(v) if v.abs() < 0.0005 => format!("{:.3}", 0.0),
            Cell::Value(v) => format!("{v:.3}"),
            Cell::Missing(code) => format!("n/a({code})"),
        }
    }

    /// Shortest text that parses back to the same value.
    pub fn raw(&self) -> String {
        match self {
            Cell::Value(v) => format!("{v:?}"),
            Cell::Missing(code) => format!("n/a({code})"),
        }
    }
}

fn reason_code(e: &Error) -> &'static str {
    match e.root_cause() {
        Error::DegenerateVariance => "degenerate-variance",
        Error::DegenerateDistanceVariance => "degenerate-distance-variance",
        Error::ZeroBaseline => "zero-baseline",
        Error::MissingModel(_) => "missing-model",
        Error::Empty => "no-data",
        _ => "error",
    }
}

fn mean_of(cells: &[&Cell]) -> Cell {
    let vals: Vec<f64> = cells.iter().filter_map(|c| c.value()).collect();
    if vals.is_empty() {
        return Cell::Missing("no-defined-nodes".into());
    }
    Cell::Value(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Scores of one model at one node and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub model: String,
    pub node: NodeId,
    pub level: usize,
    pub horizon: usize,
    pub n: usize,
    pub rmse: Cell,
    pub baseline_rmse: Cell,
    pub rel_rmse: Cell,
    pub pearson: Cell,
    pub dcor: Cell,
}

/// One row of the main table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub horizon: usize,
    pub avg_rel_rmse: Cell,
    pub avg_pearson: Cell,
    pub avg_dcor: Cell,
    pub headline_rel_rmse: Cell,
    pub headline_pearson: Cell,
    pub headline_dcor: Cell,
}

/// One row of the per-level table. Level 0 is labelled `headline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub model: String,
    pub horizon: usize,
    pub n_nodes: usize,
    pub rel_rmse: Cell,
    pub pearson: Cell,
    pub dcor: Cell,
}

impl LevelRow {
    pub fn label(&self) -> String {
        if self.level == 0 {
            "headline".into()
        } else {
            format!("level {}", self.level)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub baseline: String,
    pub models: Vec<String>,
    pub horizons: Vec<usize>,
    pub aggregation: Aggregation,
    pub scores: Vec<NodeScore>,
    pub rows: Vec<ReportRow>,
    pub levels: Vec<LevelRow>,
    #[serde(skip)]
    records: Vec<(usize, EvalRecord)>,
    #[serde(skip)]
    baseline_records: Vec<EvalRecord>,
}

impl EvalReport {
    /// Actual/prediction pairs, keyed by the model's index in `models`.
    pub fn records(&self) -> impl Iterator<Item = (&str, &EvalRecord)> {
        self.records
            .iter()
            .map(|(m, r)| (self.models[*m].as_str(), r))
    }

    pub fn score(&self, model: &str, node: &str, horizon: usize) -> Option<&NodeScore> {
        self.scores
            .iter()
            .find(|s| s.model == model && s.node.as_str() == node && s.horizon == horizon)
    }
}

/// Collected pairs of one forecaster at one node, one entry per horizon.
type NodePairs = Result<Vec<(Vec<f64>, Vec<f64>)>>;

fn collect_pairs(
    f: &dyn Forecaster,
    panel: &SeriesPanel,
    node: &str,
    horizons: &[usize],
) -> NodePairs {
    let s = panel.series(node)?;
    let max_h = horizons.iter().copied().max().unwrap_or(0);
    let mut out = vec![(Vec::new(), Vec::new()); horizons.len()];
    let first = s.split().max(f.lookback());
    for origin in first..s.len() {
        let preds = match f.forecast(panel, node, origin, max_h) {
            Ok(p) => p,
            Err(e) if matches!(e.root_cause(), Error::InsufficientHistory { .. }) => continue,
            Err(e) => return Err(e),
        };
        for (k, &j) in horizons.iter().enumerate() {
            if origin + j < s.len() {
                out[k].0.push(s.rates()[origin + j]);
                out[k].1.push(preds[j]);
            }
        }
    }
    Ok(out)
}

/// Evaluates `models` against the AR(1) `baseline` on every hierarchy node
/// that has a series.
pub fn evaluate(
    models: &[&dyn Forecaster],
    baseline: &dyn Forecaster,
    panel: &SeriesPanel,
    h: &Hierarchy,
    horizons: &[usize],
    aggregation: Aggregation,
) -> Result<EvalReport> {
    evaluate_with(
        &Sequential,
        models,
        baseline,
        panel,
        h,
        horizons,
        aggregation,
    )
}

pub fn evaluate_with<E: Executor>(
    exec: &E,
    models: &[&dyn Forecaster],
    baseline: &dyn Forecaster,
    panel: &SeriesPanel,
    h: &Hierarchy,
    horizons: &[usize],
    aggregation: Aggregation,
) -> Result<EvalReport> {
    if horizons.is_empty() {
        return Err(Error::InvalidArgument("no horizons requested".into()));
    }
    let nodes: Vec<usize> = (0..h.len())
        .filter(|&i| panel.get(h.id(i).as_str()).is_some())
        .collect();
    let labels: Vec<String> = models.iter().map(|m| m.label()).collect();

    let base_pairs = exec.map(&nodes, |&i| {
        collect_pairs(baseline, panel, h.id(i).as_str(), horizons)
    });
    let mut baseline_records = Vec::new();
    let mut base_rmse: BTreeMap<(usize, usize), Cell> = BTreeMap::new();
    for (&i, pairs) in nodes.iter().zip(base_pairs) {
        let pairs = match pairs {
            Ok(p) => p,
            Err(e) if matches!(e.root_cause(), Error::MissingModel(_)) => {
                for k in 0..horizons.len() {
                    base_rmse.insert((i, k), Cell::Missing("missing-baseline".into()));
                }
                continue;
            }
            Err(e) => return Err(e.at_node(h.id(i).as_str())),
        };
        for (k, (a, p)) in pairs.into_iter().enumerate() {
            base_rmse.insert((i, k), Cell::from_result(rmse(&a, &p)));
            if !a.is_empty() {
                baseline_records.push(EvalRecord::new(
                    h.id(i).clone(),
                    baseline.label(),
                    horizons[k],
                    a,
                    p,
                )?);
            }
        }
    }
    if !nodes.is_empty()
        && base_rmse
            .values()
            .all(|c| matches!(c, Cell::Missing(m) if m == "missing-baseline"))
    {
        return Err(Error::MissingBaseline(baseline.label()));
    }

    let mut scores = Vec::new();
    let mut records = Vec::new();
    for (m, model) in models.iter().enumerate() {
        let all = exec.map(&nodes, |&i| {
            collect_pairs(*model, panel, h.id(i).as_str(), horizons)
        });
        for (&i, pairs) in nodes.iter().zip(all) {
            let id = h.id(i);
            let pairs = match pairs {
                Ok(p) => p,
                Err(e) if matches!(e.root_cause(), Error::MissingModel(_)) => {
                    vec![(Vec::new(), Vec::new()); horizons.len()]
                }
                Err(e) => return Err(e.at_node(id.as_str())),
            };
            for (k, (a, p)) in pairs.into_iter().enumerate() {
                let model_rmse = Cell::from_result(rmse(&a, &p));
                let b = base_rmse[&(i, k)].clone();
                let rel = match (&model_rmse, &b) {
                    (Cell::Value(x), Cell::Value(y)) => Cell::from_result(relative_rmse(*x, *y)),
                    (Cell::Missing(c), _) | (_, Cell::Missing(c)) => Cell::Missing(c.clone()),
                };
                let n = a.len();
                scores.push(NodeScore {
                    model: labels[m].clone(),
                    node: id.clone(),
                    level: h.level(i),
                    horizon: horizons[k],
                    n,
                    rmse: model_rmse,
                    baseline_rmse: b,
                    rel_rmse: rel,
                    pearson: Cell::from_result(pearson(&a, &p)),
                    dcor: Cell::from_result(distance_correlation(&a, &p)),
                });
                if n > 0 {
                    records.push((
                        m,
                        EvalRecord::new(id.clone(), labels[m].clone(), horizons[k], a, p)?,
                    ));
                }
            }
        }
    }

    let mut report = EvalReport {
        baseline: baseline.label(),
        models: labels,
        horizons: horizons.to_vec(),
        aggregation,
        scores,
        rows: Vec::new(),
        levels: Vec::new(),
        records,
        baseline_records,
    };
    report.rows = main_rows(&report, h);
    report.levels = per_level_table(&report, h);
    Ok(report)
}

/// Combined metrics over the nodes accepted by `keep`.
fn aggregate<F>(
    report: &EvalReport,
    model: &str,
    horizon: usize,
    keep: F,
) -> (usize, Cell, Cell, Cell)
where
    F: Fn(&NodeScore) -> bool,
{
    let chosen: Vec<&NodeScore> = report
        .scores
        .iter()
        .filter(|s| s.model == model && s.horizon == horizon && keep(s))
        .collect();
    let n_nodes = chosen.len();
    match report.aggregation {
        Aggregation::MeanOfNodes => {
            let rel: Vec<&Cell> = chosen.iter().map(|s| &s.rel_rmse).collect();
            let pc: Vec<&Cell> = chosen.iter().map(|s| &s.pearson).collect();
            let dc: Vec<&Cell> = chosen.iter().map(|s| &s.dcor).collect();
            (n_nodes, mean_of(&rel), mean_of(&pc), mean_of(&dc))
        }
        Aggregation::Pooled => {
            let in_set = |n: &NodeId| chosen.iter().any(|s| &s.node == n);
            let (mut a, mut p) = (Vec::new(), Vec::new());
            for (_, r) in report
                .records()
                .filter(|(m, r)| *m == model && r.horizon == horizon)
            {
                if in_set(&r.node) {
                    a.extend_from_slice(r.actuals());
                    p.extend_from_slice(r.predictions());
                }
            }
            let (mut ba, mut bp) = (Vec::new(), Vec::new());
            for r in report
                .baseline_records
                .iter()
                .filter(|r| r.horizon == horizon)
            {
                if in_set(&r.node) {
                    ba.extend_from_slice(r.actuals());
                    bp.extend_from_slice(r.predictions());
                }
            }
            let rel = match (rmse(&a, &p), rmse(&ba, &bp)) {
                (Ok(x), Ok(y)) => Cell::from_result(relative_rmse(x, y)),
                (Err(e), _) | (_, Err(e)) => Cell::from_result(Err(e)),
            };
            (
                n_nodes,
                rel,
                Cell::from_result(pearson(&a, &p)),
                Cell::from_result(distance_correlation(&a, &p)),
            )
        }
    }
}

fn main_rows(report: &EvalReport, h: &Hierarchy) -> Vec<ReportRow> {
    let root = h.root_id();
    let mut rows = Vec::new();
    for model in &report.models {
        for &horizon in &report.horizons {
            let (_, rel, pc, dc) = aggregate(report, model, horizon, |s| &s.node != root);
            let (_, hrel, hpc, hdc) = aggregate(report, model, horizon, |s| &s.node == root);
            rows.push(ReportRow {
                model: model.clone(),
                horizon,
                avg_rel_rmse: rel,
                avg_pearson: pc,
                avg_dcor: dc,
                headline_rel_rmse: hrel,
                headline_pearson: hpc,
                headline_dcor: hdc,
            });
        }
    }
    rows
}

/// The main aggregation restricted to each level of the hierarchy in turn.
pub fn per_level_table(report: &EvalReport, h: &Hierarchy) -> Vec<LevelRow> {
    let mut rows = Vec::new();
    for level in 0..=h.depth() {
        for model in &report.models {
            for &horizon in &report.horizons {
                let (n_nodes, rel, pc, dc) =
                    aggregate(report, model, horizon, |s| s.level == level);
                if n_nodes == 0 {
                    continue;
                }
                rows.push(LevelRow {
                    level,
                    model: model.clone(),
                    horizon,
                    n_nodes,
                    rel_rmse: rel,
                    pearson: pc,
                    dcor: dc,
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

const MAIN_HEADER: [&str; 8] = [
    "Model",
    "Horizon",
    "Avg. Rel. RMSE",
    "Avg. Pearson",
    "Avg. Dist. Corr.",
    "Headline Rel. RMSE",
    "Headline Pearson",
    "Headline Dist. Corr.",
];

const LEVEL_HEADER: [&str; 7] = [
    "Level",
    "Model",
    "Horizon",
    "Nodes",
    "Rel. RMSE",
    "Pearson",
    "Dist. Corr.",
];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.into()
    }
}

fn table(header: &[&str], rows: &[Vec<String>], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let line = |cells: &mut dyn Iterator<Item = &str>| {
                cells.map(csv_field).collect::<Vec<_>>().join(",")
            };
            out.push_str(&line(&mut header.iter().copied()));
            out.push('\n');
            for r in rows {
                out.push_str(&line(&mut r.iter().map(String::as_str)));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for r in rows {
                let _ = writeln!(out, "| {} |", r.join(" | "));
            }
        }
    }
    out
}

/// The main table with 3-decimal cells.
pub fn render_report(report: &EvalReport, format: TableFormat) -> String {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.horizon.to_string(),
                r.avg_rel_rmse.rounded(),
                r.avg_pearson.rounded(),
                r.avg_dcor.rounded(),
                r.headline_rel_rmse.rounded(),
                r.headline_pearson.rounded(),
                r.headline_dcor.rounded(),
            ]
        })
        .collect();
    table(&MAIN_HEADER, &rows, format)
}

pub fn render_levels(report: &EvalReport, format: TableFormat) -> String {
    let rows: Vec<Vec<String>> = report
        .levels
        .iter()
        .map(|r| {
            vec![
                r.label(),
                r.model.clone(),
                r.horizon.to_string(),
                r.n_nodes.to_string(),
                r.rel_rmse.rounded(),
                r.pearson.rounded(),
                r.dcor.rounded(),
            ]
        })
        .collect();
    table(&LEVEL_HEADER, &rows, format)
}

/// Unrounded per-node scores, one line per (model, node, horizon).
pub fn render_raw(report: &EvalReport) -> String {
    let header = [
        "model",
        "node",
        "level",
        "horizon",
        "n",
        "rmse",
        "baseline_rmse",
        "rel_rmse",
        "pearson",
        "dcor",
    ];
    let rows: Vec<Vec<String>> = report
        .scores
        .iter()
        .map(|s| {
            vec![
                s.model.clone(),
                s.node.to_string(),
                s.level.to_string(),
                s.horizon.to_string(),
                s.n.to_string(),
                s.rmse.raw(),
                s.baseline_rmse.raw(),
                s.rel_rmse.raw(),
                s.pearson.raw(),
                s.dcor.raw(),
            ]
        })
        .collect();
    table(&header, &rows, TableFormat::Csv)
}

/// Whitespace-separated blocks (one per model) of `horizon rel_rmse` pairs,
/// readable by gnuplot's `index`.
pub fn render_gnuplot(report: &EvalReport) -> String {
    let mut out = String::new();
    for model in &report.models {
        let _ = writeln!(out, "# {model}");
        let _ = writeln!(out, "# horizon avg_rel_rmse headline_rel_rmse");
        for r in report.rows.iter().filter(|r| &r.model == model) {
            let v = |c: &Cell| c.value().map_or("NaN".to_string(), |v| format!("{v:?}"));
            let _ = writeln!(
                out,
                "{} {} {}",
                r.horizon,
                v(&r.avg_rel_rmse),
                v(&r.headline_rel_rmse)
            );
        }
        out.push_str("\n\n");
    }
    out
}
