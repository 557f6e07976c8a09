//! Classical comparators: AR, RW, random forest, gradient boosting and
//! fully connected networks, all forecasting recursively from the last `rho`
//! rates like the recurrent models.

mod ar;
mod mlp;
mod tree;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use ar::{fit_ar, predict_rw, ArModel};
pub use mlp::{fit_mlp, mlp_loss_and_grad, MlpConfig, MlpModel};
pub use tree::{
    fit_forest, fit_gbt, EnsembleMode, ForestConfig, GbtConfig, RegressionTree, TreeEnsemble,
    TreeNode,
};

use crate::dataset::{make_windows, Segment, SeriesPanel};
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::forecast::{recursive_forecast, Forecaster, ModelTag};
use crate::hierarchy::{Hierarchy, NodeId};
use crate::models::SkippedNode;
use crate::seed::node_seed;

/// Hyperparameters of every baseline family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub rho: usize,
    /// Mixed with each node id to seed the stochastic learners.
    pub seed: u64,
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
    pub fc: MlpConfig,
    pub deepnn: MlpConfig,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            rho: 4,
            seed: 0,
            forest: ForestConfig::default(),
            gbt: GbtConfig::default(),
            fc: MlpConfig::fc(),
            deepnn: MlpConfig::deep(),
        }
    }
}

/// A fitted per-node baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum BaselineModel {
    Ar(ArModel),
    Rw,
    Trees(TreeEnsemble),
    Mlp(MlpModel),
}

impl BaselineModel {
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        match self {
            BaselineModel::Ar(m) => m.predict(window),
            BaselineModel::Rw => predict_rw(window, window.len()),
            BaselineModel::Trees(m) => m.predict(window),
            BaselineModel::Mlp(m) => m.predict(window),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineBundle {
    pub tag: ModelTag,
    pub rho: usize,
    pub nodes: BTreeMap<NodeId, BaselineModel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedNode>,
}

impl Forecaster for BaselineBundle {
    fn label(&self) -> String {
        self.tag.label(self.rho)
    }

    fn lookback(&self) -> usize {
        self.rho
    }

    fn forecast(
        &self,
        panel: &SeriesPanel,
        node: &str,
        origin: usize,
        horizon: usize,
    ) -> Result<Vec<f64>> {
        let model = self
            .nodes
            .get(node)
            .ok_or_else(|| Error::MissingModel(node.into()))?;
        let series = panel.series(node)?;
        recursive_forecast(series.rates(), node, origin, self.rho, horizon, |w| {
            model.predict(w)
        })
    }
}

fn fit_node(
    tag: ModelTag,
    panel: &SeriesPanel,
    id: &str,
    spec: &BaselineSpec,
) -> Result<Option<BaselineModel>> {
    if panel.get(id).is_none() {
        return Ok(None);
    }
    let windows = make_windows(panel, id, spec.rho, Segment::Train)?;
    if windows.is_empty() {
        return Ok(None);
    }
    let seed = node_seed(spec.seed, id);
    let model = match tag {
        ModelTag::Ar => BaselineModel::Ar(fit_ar(&windows, spec.rho)?),
        ModelTag::Rw => BaselineModel::Rw,
        ModelTag::Rf => BaselineModel::Trees(fit_forest(
            &windows,
            &ForestConfig {
                seed,
                ..spec.forest
            },
        )?),
        ModelTag::Gbt => BaselineModel::Trees(fit_gbt(&windows, &GbtConfig { seed, ..spec.gbt })?),
        ModelTag::Fc | ModelTag::DeepNn => {
            let base = if tag == ModelTag::Fc {
                &spec.fc
            } else {
                &spec.deepnn
            };
            let cfg = MlpConfig {
                seed,
                ..base.clone()
            };
            BaselineModel::Mlp(fit_mlp(&windows, &cfg)?.0)
        }
        other => {
            return Err(Error::InvalidArgument(format!("{other} is not a baseline")));
        }
    };
    Ok(Some(model))
}

/// Fits baseline `tag` on the training segment of every node of `h`.
pub fn fit_baseline(
    tag: ModelTag,
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &BaselineSpec,
) -> Result<BaselineBundle> {
    fit_baseline_with(&Sequential, tag, panel, h, spec)
}

pub fn fit_baseline_with<E: Executor>(
    exec: &E,
    tag: ModelTag,
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &BaselineSpec,
) -> Result<BaselineBundle> {
    if tag.is_recurrent() {
        return Err(Error::InvalidArgument(format!("{tag} is not a baseline")));
    }
    if spec.rho == 0 {
        return Err(Error::InvalidArgument("rho must be at least 1".into()));
    }
    let results = exec.map(h.ids(), |id| {
        fit_node(tag, panel, id.as_str(), spec).map_err(|e| e.at_node(id.as_str()))
    });
    let mut nodes = BTreeMap::new();
    let mut skipped = Vec::new();
    for (id, r) in h.ids().iter().zip(results) {
        match r? {
            Some(m) => {
                nodes.insert(id.clone(), m);
            }
            None => skipped.push(SkippedNode {
                node: id.clone(),
                reason: "no training windows".into(),
            }),
        }
    }
    Ok(BaselineBundle {
        tag,
        rho: spec.rho,
        nodes,
        skipped,
    })
}
