//! Run configuration (JSON).
//!
//! ```json
//! {
//!   "hierarchy": "hierarchy.csv",
//!   "series": "series.csv",
//!   "already_rates": false,
//!   "train_fraction": 0.75,
//!   "horizons": "monthly",
//!   "seed": 0,
//!   "aggregation": "meanofnodes",
//!   "train": { "rho": 4, "hidden": 8, "epochs": 300 },
//!   "baselines": { "forest": { "n_trees": 100 } },
//!   "models": ["ar", "rw", { "tag": "hrnn", "train": { "alpha": 2.0 } },
//!              { "tag": "bihrnn", "pretrained": "igru",
//!                "grid": { "lambda1": [0.1, 1.0] } }]
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.
//! `horizons` is `"monthly"`, `"daily"` or a list of integers. A model entry is
//! a tag or an object with `tag` and optional `train` / `baseline` overrides,
//! `grid` value lists (searched with `--grid`) and, for BiHRNN, `pretrained`.
//! `ar` defaults to a lookback of 1 unless `rho` is set; other baselines
//! default to 4.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hrnn_core::baselines::BaselineSpec;
use hrnn_core::eval::{Aggregation, DAILY_HORIZONS, MONTHLY_HORIZONS};
use hrnn_core::forecast::ModelTag;
use hrnn_core::models::TrainSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizons {
    Preset(String),
    List(Vec<usize>),
}

impl Default for Horizons {
    fn default() -> Self {
        Horizons::Preset("monthly".into())
    }
}

impl Horizons {
    pub fn resolve(&self) -> Result<Vec<usize>> {
        match self {
            Horizons::Preset(p) if p == "monthly" => Ok(MONTHLY_HORIZONS.to_vec()),
            Horizons::Preset(p) if p == "daily" => Ok(DAILY_HORIZONS.to_vec()),
            Horizons::Preset(p) => Err(RunError::Config(format!("unknown horizon preset {p:?}"))),
            Horizons::List(l) if l.is_empty() => Err(RunError::Config("horizon list is empty".into())),
            Horizons::List(l) => Ok(l.clone()),
        }
    }
}

fn default_fraction() -> f64 {
    hrnn_core::dataset::DEFAULT_TRAIN_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hierarchy: PathBuf,
    pub series: PathBuf,
    #[serde(default)]
    pub already_rates: bool,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// Share of the training segment used for fitting during grid search;
    /// the rest is the validation tail.
    #[serde(default = "default_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub horizons: Horizons,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Overrides applied to every recurrent model.
    #[serde(default)]
    pub train: Map<String, Value>,
    /// Overrides applied to every baseline.
    #[serde(default)]
    pub baselines: Map<String, Value>,
    pub models: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryObject {
    tag: String,
    #[serde(default)]
    train: Map<String, Value>,
    #[serde(default)]
    baseline: Map<String, Value>,
    #[serde(default)]
    grid: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pretrained: Option<String>,
}

/// Which bundle BiHRNN takes its frozen anchors from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pretrained {
    Hrnn,
    Igru,
}

/// Hyperparameters of one model family after all overrides.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Recurrent(TrainSpec),
    Baseline(BaselineSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub tag: ModelTag,
    /// Merged override object the spec was built from; grid values are
    /// layered on top of it.
    overrides: Map<String, Value>,
    pub spec: ModelSpec,
    pub grid: BTreeMap<String, Vec<Value>>,
    pub pretrained: Pretrained,
}

fn merge(base: &mut Map<String, Value>, over: &Map<String, Value>) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Object(b)), Value::Object(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn build<T: Serialize + DeserializeOwned + Default>(over: &Map<String, Value>, what: &str) -> Result<T> {
    let mut base = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("specs serialize to objects"),
    };
    merge(&mut base, over);
    serde_json::from_value(Value::Object(base)).map_err(|e| RunError::Config(format!("{what}: {e}")))
}

impl ModelEntry {
    fn parse(v: &Value, cfg: &RunConfig) -> Result<Self> {
        let obj: EntryObject = match v {
            Value::String(tag) => EntryObject {
                tag: tag.clone(),
                train: Map::new(),
                baseline: Map::new(),
                grid: BTreeMap::new(),
                pretrained: None,
            },
            Value::Object(_) => serde_json::from_value(v.clone())
                .map_err(|e| RunError::Config(format!("model entry {v}: {e}")))?,
            other => return Err(RunError::Config(format!("model entry must be a tag or an object, got {other}"))),
        };
        let tag: ModelTag = obj
            .tag
            .parse()
            .map_err(|_| RunError::Config(format!("unknown model tag {:?}", obj.tag)))?;
        let pretrained = match obj.pretrained.as_deref() {
            None | Some("hrnn") => Pretrained::Hrnn,
            Some("igru") => Pretrained::Igru,
            Some(p) => return Err(RunError::Config(format!("pretrained must be \"hrnn\" or \"igru\", got {p:?}"))),
        };
        if obj.pretrained.is_some() && tag != ModelTag::BiHrnn {
            return Err(RunError::Config(format!("`pretrained` only applies to bihrnn, not {tag}")));
        }
        let mut overrides = Map::new();
        let what = format!("{tag} settings");
        if tag.is_recurrent() {
            if !obj.baseline.is_empty() {
                return Err(RunError::Config(format!("{tag} takes `train`, not `baseline`")));
            }
            merge(&mut overrides, &cfg.train);
            merge(&mut overrides, &obj.train);
            overrides.insert("seed".into(), cfg.seed.into());
        } else {
            if !obj.train.is_empty() {
                return Err(RunError::Config(format!("{tag} takes `baseline`, not `train`")));
            }
            // a bare `ar` is the AR(1) every report is normalized by
            if tag == ModelTag::Ar {
                overrides.insert("rho".into(), 1.into());
            }
            merge(&mut overrides, &cfg.baselines);
            merge(&mut overrides, &obj.baseline);
            overrides.insert("seed".into(), cfg.seed.into());
        }
        let mut entry = ModelEntry {
            tag,
            overrides,
            spec: ModelSpec::Baseline(BaselineSpec::default()),
            grid: obj.grid,
            pretrained,
        };
        entry.spec = entry.spec_with(&Map::new()).map_err(|e| match e {
            RunError::Config(m) => RunError::Config(format!("{what}: {m}")),
            e => e,
        })?;
        // every grid point must itself be valid
        for point in entry.grid_points() {
            entry.spec_with(&point)?;
        }
        Ok(entry)
    }

    /// The spec with `extra` layered over the entry's overrides.
    pub fn spec_with(&self, extra: &Map<String, Value>) -> Result<ModelSpec> {
        let mut over = self.overrides.clone();
        merge(&mut over, extra);
        if self.tag.is_recurrent() {
            let spec: TrainSpec = build(&over, self.tag.as_str())?;
            spec.validate()?;
            Ok(ModelSpec::Recurrent(spec))
        } else {
            let spec: BaselineSpec = build(&over, self.tag.as_str())?;
            if spec.rho == 0 {
                return Err(RunError::Config(format!("{}: rho must be at least 1", self.tag)));
            }
            Ok(ModelSpec::Baseline(spec))
        }
    }

    /// Cartesian product of the grid in key order; each key may be a dotted
    /// path such as `forest.max_depth`.
    pub fn grid_points(&self) -> Vec<Map<String, Value>> {
        let mut points = vec![Map::new()];
        for (key, values) in &self.grid {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for v in values {
                    let mut q = p.clone();
                    merge(&mut q, &nested(key, v.clone()));
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }

    pub fn rho(&self) -> usize {
        match &self.spec {
            ModelSpec::Recurrent(s) => s.rho,
            ModelSpec::Baseline(s) => s.rho,
        }
    }
}

fn nested(key: &str, value: Value) -> Map<String, Value> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut inner = Map::new();
    inner.insert(last.into(), value);
    for p in parts.into_iter().rev() {
        let mut outer = Map::new();
        outer.insert(p.into(), Value::Object(inner));
        inner = outer;
    }
    inner
}

/// A config with paths resolved and every model entry validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub hierarchy: PathBuf,
    pub series: PathBuf,
    pub horizons: Vec<usize>,
    pub models: Vec<ModelEntry>,
    /// SHA-256 of the config file bytes.
    pub sha256: String,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    /// Validates the config; `base` is the directory relative paths start from.
    pub fn resolve(self, base: &Path, sha256: String) -> Result<Resolved> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(RunError::Config("train_fraction must lie in (0, 1)".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(RunError::Config("validation_fraction must lie in (0, 1)".into()));
        }
        if self.models.is_empty() {
            return Err(RunError::Config("no models listed".into()));
        }
        let horizons = self.horizons.resolve()?;
        let models = self
            .models
            .iter()
            .map(|m| ModelEntry::parse(m, &self))
            .collect::<Result<Vec<_>>>()?;
        let hierarchy = base.join(&self.hierarchy);
        let series = base.join(&self.series);
        for p in [&hierarchy, &series] {
            if !p.is_file() {
                return Err(RunError::Config(format!("data file {} does not exist", p.display())));
            }
        }
        Ok(Resolved {
            config: self,
            hierarchy,
            series,
            horizons,
            models,
            sha256,
        })
    }
}
