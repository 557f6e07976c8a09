//! The recurrent model family: S-GRU, I-GRU, KNN-GRU, HRNN and BiHRNN.
//!
//! Every trainer produces a [`ModelBundle`] mapping each node to the GRU
//! parameters used to forecast it.

mod knn;
mod train;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use knn::{nearest_neighbors, Neighbors};
pub use train::{
    train_bihrnn, train_bihrnn_with, train_hrnn, train_hrnn_with, train_igru, train_igru_with,
    train_knn_gru, train_knn_gru_with, train_sgru, train_sgru_with, HrnnPrior,
};

use crate::dataset::SeriesPanel;
use crate::error::{Error, Result};
use crate::forecast::{recursive_forecast, Forecaster, ModelTag};
use crate::gru::{predict_sequence, GruParams};
use crate::hierarchy::{CorrelationFallback, NodeId};
use crate::optim::{LrSchedule, Method, OptimConfig};

/// How BiHRNN initializes each node before fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Start from the node's own pretrained parameters.
    #[default]
    Warm,
    Random,
}

/// Training knobs shared by the recurrent family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub rho: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    /// HRNN precision offset: `tau = exp(alpha + C)`.
    pub alpha: f64,
    /// BiHRNN parent-anchor weight.
    pub lambda1: f64,
    /// BiHRNN child-anchor weight.
    pub lambda2: f64,
    pub k_neighbors: usize,
    pub seed: u64,
    pub batch_size: Option<usize>,
    pub method: Method,
    pub schedule: LrSchedule,
    pub init_scale: f64,
    pub bihrnn_init: InitMode,
    pub correlation_fallback: CorrelationFallback,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            rho: 4,
            hidden: 8,
            lr: 0.005,
            epochs: 300,
            alpha: 1.5,
            lambda1: 1.0,
            lambda2: 1.0,
            k_neighbors: 5,
            seed: 0,
            batch_size: None,
            method: Method::default(),
            schedule: LrSchedule::default(),
            init_scale: 0.1,
            bihrnn_init: InitMode::default(),
            correlation_fallback: CorrelationFallback::default(),
        }
    }
}

impl TrainSpec {
    /// Checks the invariants. `epochs = 0` is accepted and means "no updates".
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.rho < 1 {
            return bad("rho must be at least 1".into());
        }
        if self.hidden < 1 {
            return bad("hidden must be at least 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.k_neighbors < 1 {
            return bad("k_neighbors must be at least 1".into());
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return bad("init_scale must be finite and nonnegative".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            method: self.method,
            lr: self.lr,
            schedule: self.schedule,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }
}

/// Trained parameters of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub params: GruParams,
    /// KNN-GRU input channels after the node itself, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neighbors: Vec<NodeId>,
}

impl NodeModel {
    pub fn new(params: GruParams) -> Self {
        Self {
            params,
            neighbors: Vec::new(),
        }
    }
}

/// Training record of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProvenance {
    /// Seed of the node's generator.
    pub seed: u64,
    /// Position in training order; parents always precede children in HRNN.
    pub order: usize,
    pub level: usize,
    pub n_windows: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedNode {
    pub node: NodeId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub nodes: BTreeMap<NodeId, NodeProvenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedNode>,
}

/// Per-node parameters of one trained model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub tag: ModelTag,
    pub spec: TrainSpec,
    pub nodes: BTreeMap<NodeId, NodeModel>,
    pub provenance: Provenance,
}

impl ModelBundle {
    pub fn params(&self, node: &str) -> Option<&GruParams> {
        self.nodes.get(node).map(|m| &m.params)
    }

    fn node(&self, node: &str) -> Result<&NodeModel> {
        self.nodes
            .get(node)
            .ok_or_else(|| Error::MissingModel(node.into()))
    }
}

impl Forecaster for ModelBundle {
    fn label(&self) -> String {
        self.tag.label(self.spec.rho)
    }

    fn lookback(&self) -> usize {
        self.spec.rho
    }

    fn forecast(
        &self,
        panel: &SeriesPanel,
        node: &str,
        origin: usize,
        horizon: usize,
    ) -> Result<Vec<f64>> {
        let model = self.node(node)?;
        if !model.neighbors.is_empty() {
            return knn::forecast(model, panel, node, origin, self.spec.rho, horizon);
        }
        let series = panel.series(node)?;
        recursive_forecast(series.rates(), node, origin, self.spec.rho, horizon, |w| {
            predict_sequence(&model.params, w)
        })
    }
}

/// Forecast positions `origin..=origin + horizon` of `node` with `bundle`.
pub fn forecast(
    bundle: &ModelBundle,
    panel: &SeriesPanel,
    node: &str,
    origin: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    bundle.forecast(panel, node, origin, horizon)
}

#[cfg(test)]
mod tests;
