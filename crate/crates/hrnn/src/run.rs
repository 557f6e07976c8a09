//! The `prepare`, `synth` and `run` commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hrnn_core::baselines::{fit_baseline_with, BaselineBundle, BaselineSpec};
use hrnn_core::dataset::{synth_panel, SeriesPanel, SynthSpec};
use hrnn_core::eval::{
    evaluate_with, render_gnuplot, render_levels, render_raw, render_report, EvalReport, TableFormat,
};
use hrnn_core::exec::Executor;
use hrnn_core::forecast::{Forecaster, ModelTag};
use hrnn_core::hierarchy::impute_weights;
use hrnn_core::models::{
    train_bihrnn_with, train_hrnn_with, train_igru_with, train_knn_gru_with, train_sgru_with, HrnnPrior,
    ModelBundle, TrainSpec,
};
use hrnn_core::{Hierarchy, NodeId};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::checkpoint::{save_baseline_bundle, save_model_bundle, sha256_hex};
use crate::config::{ModelEntry, ModelSpec, Pretrained, Resolved, RunConfig};
use crate::error::{Result, RunError};
use crate::exec::Pool;
use crate::io::{read_hierarchy, read_series, write_hierarchy, write_panel, write_text};

/// Converts index levels to change rates, or validates and copies a file
/// that already holds rates.
pub fn cmd_prepare(input: &Path, output: &Path, already_rates: bool) -> Result<()> {
    let raw = read_series(input)?;
    if already_rates {
        let bytes = fs::read(input).map_err(|e| RunError::io(input, e))?;
        return fs::write(output, bytes).map_err(|e| RunError::io(output, e));
    }
    crate::io::write_series(output, &raw.to_rates()?)
}

/// Writes `hierarchy.csv` and `series.csv` (rates) for a synthetic tree.
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out).map_err(|e| RunError::io(out, e))?;
    let (h, panel) = synth_panel(spec)?;
    let hp = out.join("hierarchy.csv");
    let sp = out.join("series.csv");
    write_hierarchy(&hp, &h)?;
    write_panel(&sp, &panel)?;
    Ok((hp, sp))
}

/// Command-line overrides of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub already_rates: bool,
    pub grid: bool,
}

#[derive(Debug, Clone, Serialize)]
struct ModelRecord {
    tag: ModelTag,
    label: String,
    checkpoint: String,
    spec: ModelSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pretrained: Option<Pretrained>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<GridRecord>,
    node_seeds: BTreeMap<NodeId, u64>,
}

#[derive(Debug, Clone, Serialize)]
struct GridRecord {
    chosen: Map<String, Value>,
    /// Validation RMSE of every grid point in search order.
    scores: Vec<(Map<String, Value>, Option<f64>)>,
}

#[derive(Debug, Clone, Serialize)]
struct RunManifest {
    created: String,
    config_sha256: String,
    data: BTreeMap<String, String>,
    seed: u64,
    train_fraction: f64,
    horizons: Vec<usize>,
    imputed_weights: Vec<NodeId>,
    singular_imputation: Vec<NodeId>,
    models: Vec<ModelRecord>,
}

/// Outcome of a run.
#[derive(Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    pub report: EvalReport,
}

enum Fitted {
    Recurrent(ModelBundle),
    Baseline(BaselineBundle, BaselineSpec),
}

impl Fitted {
    fn forecaster(&self) -> &dyn Forecaster {
        match self {
            Fitted::Recurrent(b) => b,
            Fitted::Baseline(b, _) => b,
        }
    }
}

fn train_recurrent<E: Executor>(
    exec: &E,
    tag: ModelTag,
    pretrained: Pretrained,
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &TrainSpec,
    cache: &mut Vec<(ModelTag, TrainSpec, ModelBundle)>,
) -> Result<ModelBundle> {
    if let Some((_, _, b)) = cache.iter().find(|(t, s, _)| *t == tag && s == spec) {
        return Ok(b.clone());
    }
    let bundle = match tag {
        ModelTag::Sgru => train_sgru_with(exec, panel, h, spec)?,
        ModelTag::Igru => train_igru_with(exec, panel, h, spec)?,
        ModelTag::KnnGru => train_knn_gru_with(exec, panel, h, spec)?,
        ModelTag::Hrnn => train_hrnn_with(exec, panel, h, spec, HrnnPrior::Hierarchical)?,
        ModelTag::BiHrnn => {
            let base = match pretrained {
                Pretrained::Hrnn => ModelTag::Hrnn,
                Pretrained::Igru => ModelTag::Igru,
            };
            let pre = train_recurrent(exec, base, pretrained, panel, h, spec, cache)?;
            train_bihrnn_with(exec, panel, h, spec, &pre)?
        }
        other => unreachable!("{other} is not recurrent"),
    };
    cache.push((tag, spec.clone(), bundle.clone()));
    Ok(bundle)
}

fn fit_entry<E: Executor>(
    exec: &E,
    entry: &ModelEntry,
    spec: &ModelSpec,
    panel: &SeriesPanel,
    h: &Hierarchy,
    cache: &mut Vec<(ModelTag, TrainSpec, ModelBundle)>,
) -> Result<Fitted> {
    Ok(match spec {
        ModelSpec::Recurrent(s) => {
            Fitted::Recurrent(train_recurrent(exec, entry.tag, entry.pretrained, panel, h, s, cache)?)
        }
        ModelSpec::Baseline(s) => Fitted::Baseline(fit_baseline_with(exec, entry.tag, panel, h, s)?, s.clone()),
    })
}

fn ar1<E: Executor>(exec: &E, panel: &SeriesPanel, h: &Hierarchy, seed: u64) -> Result<BaselineBundle> {
    let spec = BaselineSpec {
        rho: 1,
        seed,
        ..BaselineSpec::default()
    };
    Ok(fit_baseline_with(exec, ModelTag::Ar, panel, h, &spec)?)
}

/// Mean one-step RMSE over nodes on the validation tail of the training
/// segment; `None` when no node could be scored.
fn validation_score<E: Executor>(
    exec: &E,
    entry: &ModelEntry,
    spec: &ModelSpec,
    fit_panel: &SeriesPanel,
    h: &Hierarchy,
    seed: u64,
) -> Result<Option<f64>> {
    let mut cache = Vec::new();
    let fitted = match fit_entry(exec, entry, spec, fit_panel, h, &mut cache) {
        Ok(f) => f,
        // a diverging grid point just loses
        Err(RunError::Divergence(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let base = ar1(exec, fit_panel, h, seed)?;
    let report = evaluate_with(
        exec,
        &[fitted.forecaster()],
        &base,
        fit_panel,
        h,
        &[0],
        Default::default(),
    )?;
    let vals: Vec<f64> = report.scores.iter().filter_map(|s| s.rmse.value()).collect();
    Ok((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
}

fn grid_search<E: Executor>(
    exec: &E,
    entry: &ModelEntry,
    panel: &SeriesPanel,
    h: &Hierarchy,
    cfg: &RunConfig,
) -> Result<(ModelSpec, GridRecord)> {
    let fit_panel = panel.training_only(cfg.validation_fraction)?;
    let mut scores = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    for (i, point) in entry.grid_points().into_iter().enumerate() {
        let spec = entry.spec_with(&point)?;
        let score = validation_score(exec, entry, &spec, &fit_panel, h, cfg.seed)?;
        if let Some(s) = score {
            if best.is_none_or(|(b, _)| s < b) {
                best = Some((s, i));
            }
        }
        scores.push((point, score));
    }
    let (_, i) = best.ok_or_else(|| {
        RunError::Divergence(format!("no grid point of {} produced a finite validation score", entry.tag))
    })?;
    let chosen = scores[i].0.clone();
    Ok((entry.spec_with(&chosen)?, GridRecord { chosen, scores }))
}

fn node_seeds(fitted: &Fitted, h: &Hierarchy) -> BTreeMap<NodeId, u64> {
    match fitted {
        Fitted::Recurrent(b) => b.provenance.nodes.iter().map(|(k, p)| (k.clone(), p.seed)).collect(),
        Fitted::Baseline(_, s) => h
            .ids()
            .iter()
            .map(|id| (id.clone(), hrnn_core::seed::node_seed(s.seed, id.as_str())))
            .collect(),
    }
}

fn load_inputs(r: &Resolved, already_rates: bool) -> Result<(Hierarchy, SeriesPanel)> {
    let h = read_hierarchy(&r.hierarchy)?;
    let raw = read_series(&r.series)?;
    let raw = if already_rates { raw } else { raw.to_rates()? };
    let panel = raw.to_panel(r.config.train_fraction)?;
    Ok((h, panel))
}

fn hash_file(path: &Path) -> Result<String> {
    fs::read(path)
        .map(|b| sha256_hex(&b))
        .map_err(|e| RunError::io(path, e))
}

/// Reads a config file and applies command-line overrides.
pub fn load_config(path: &Path, opts: &RunOptions) -> Result<Resolved> {
    let bytes = fs::read(path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| RunError::Config("config is not UTF-8".into()))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if opts.already_rates {
        cfg.already_rates = true;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.resolve(base, sha256_hex(&bytes))
}

/// Trains every configured model, evaluates them against AR(1) and writes
/// reports, checkpoints and a manifest into the output directory.
pub fn cmd_run(config: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let r = load_config(config, opts)?;
    let out = opts
        .out
        .clone()
        .or_else(|| r.config.output.as_ref().map(|o| config.parent().unwrap_or(Path::new(".")).join(o)))
        .ok_or_else(|| RunError::Config("no output directory: pass --out or set `output`".into()))?;
    let pool = Pool::new(opts.jobs)?;
    let (h, panel) = load_inputs(&r, r.config.already_rates)?;
    for id in panel.node_ids() {
        if h.index_of(id.as_str()).is_none() {
            return Err(RunError::Data(format!("series node {id:?} is not in the hierarchy")));
        }
    }
    let imputation = impute_weights(&panel, &h)?;
    let h = imputation.hierarchy.clone();

    fs::create_dir_all(&out).map_err(|e| RunError::io(&out, e))?;
    let ck_root = out.join("checkpoints");
    let mut cache = Vec::new();
    let mut fitted = Vec::with_capacity(r.models.len());
    let mut records = Vec::with_capacity(r.models.len());
    for (i, entry) in r.models.iter().enumerate() {
        let (spec, grid) = if opts.grid && !entry.grid.is_empty() {
            let (s, g) = grid_search(&pool, entry, &panel, &h, &r.config)?;
            (s, Some(g))
        } else {
            (entry.spec.clone(), None)
        };
        let f = fit_entry(&pool, entry, &spec, &panel, &h, &mut cache)
            .map_err(|e| match e {
                RunError::Divergence(m) => RunError::Divergence(format!("{}: {m}", entry.tag)),
                e => e,
            })?;
        let dir_name = format!("{i:02}-{}", entry.tag);
        let dir = ck_root.join(&dir_name);
        match &f {
            Fitted::Recurrent(b) => {
                save_model_bundle(&dir, b)?;
            }
            Fitted::Baseline(b, s) => {
                save_baseline_bundle(&dir, b, s)?;
            }
        }
        records.push(ModelRecord {
            tag: entry.tag,
            label: f.forecaster().label(),
            checkpoint: format!("checkpoints/{dir_name}"),
            spec,
            pretrained: (entry.tag == ModelTag::BiHrnn).then_some(entry.pretrained),
            grid,
            node_seeds: node_seeds(&f, &h),
        });
        fitted.push(f);
    }

    let base = ar1(&pool, &panel, &h, r.config.seed)?;
    let models: Vec<&dyn Forecaster> = fitted.iter().map(Fitted::forecaster).collect();
    let report = evaluate_with(&pool, &models, &base, &panel, &h, &r.horizons, r.config.aggregation)?;

    write_text(&out.join("report.csv"), &render_report(&report, TableFormat::Csv))?;
    write_text(&out.join("report.md"), &render_report(&report, TableFormat::Markdown))?;
    write_text(&out.join("report_by_level.csv"), &render_levels(&report, TableFormat::Csv))?;
    write_text(&out.join("report_raw.csv"), &render_raw(&report))?;
    write_text(&out.join("report.dat"), &render_gnuplot(&report))?;
    write_hierarchy(&out.join("hierarchy_imputed.csv"), &h)?;

    let mut data = BTreeMap::new();
    data.insert("hierarchy".to_string(), hash_file(&r.hierarchy)?);
    data.insert("series".to_string(), hash_file(&r.series)?);
    let manifest = RunManifest {
        created: chrono::Utc::now().to_rfc3339(),
        config_sha256: r.sha256.clone(),
        data,
        seed: r.config.seed,
        train_fraction: r.config.train_fraction,
        horizons: r.horizons.clone(),
        imputed_weights: imputation.imputed,
        singular_imputation: imputation.singular,
        models: records,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| RunError::Data(format!("cannot serialize manifest: {e}")))?;
    write_text(&out.join("manifest.json"), &(text + "\n"))?;
    Ok(RunSummary { out, report })
}
