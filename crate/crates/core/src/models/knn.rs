//! Neighbor selection, windowing and forecasting for KNN-GRU.

use alloc::vec::Vec;

use super::NodeModel;
use crate::dataset::{SeriesPanel, Window};
use crate::error::{Error, Result};
use crate::gru::predict_sequence;
use crate::hierarchy::{Hierarchy, NodeId, MIN_OVERLAP};
use crate::metrics::pearson;

/// Chosen neighbors of a node with their training-window correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub ids: Vec<NodeId>,
    pub correlations: Vec<f64>,
}

/// The `k` nodes most Pearson-correlated with `node` on shared training
/// periods, highest first; ties go to the lexicographically smaller id.
/// Fewer than `k` are returned when not enough candidates qualify.
pub fn nearest_neighbors(
    panel: &SeriesPanel,
    h: &Hierarchy,
    node: &str,
    k: usize,
) -> Result<Neighbors> {
    panel.series(node)?;
    let mut scored: Vec<(f64, &NodeId)> = Vec::new();
    for other in h.ids() {
        if other.as_str() == node || panel.get(other.as_str()).is_none() {
            continue;
        }
        let (a, b) = panel.train_overlap(node, other.as_str())?;
        if a.len() < MIN_OVERLAP {
            continue;
        }
        if let Ok(c) = pearson(&a, &b) {
            scored.push((c, other));
        }
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
    scored.truncate(k);
    Ok(Neighbors {
        ids: scored.iter().map(|(_, id)| (*id).clone()).collect(),
        correlations: scored.iter().map(|(c, _)| *c).collect(),
    })
}

/// Training windows whose every input lies in the training segment of the
/// node and of each neighbor.
pub(super) fn knn_windows(
    panel: &SeriesPanel,
    node: &str,
    neighbors: &[NodeId],
    rho: usize,
) -> Result<Vec<Window>> {
    let own = panel.series(node)?;
    let others = neighbors
        .iter()
        .map(|n| panel.series(n.as_str()))
        .collect::<Result<Vec<_>>>()?;
    let dim = 1 + others.len();
    let mut out = Vec::new();
    'targets: for t in rho..own.split() {
        let mut inputs = Vec::with_capacity(rho * dim);
        for pos in t - rho..t {
            inputs.push(own.rates()[pos]);
            let period = own.period(pos);
            for o in &others {
                match o.train_value_at(period) {
                    Some(v) => inputs.push(v),
                    None => continue 'targets,
                }
            }
        }
        out.push(Window {
            inputs,
            target: own.rates()[t],
        });
    }
    Ok(out)
}

/// Recursive forecast. Neighbor channels use observed values before the
/// origin; later (or unobserved) periods are filled with the mean of the
/// neighbor's last `rho` observations before the origin.
pub(super) fn forecast(
    model: &NodeModel,
    panel: &SeriesPanel,
    node: &str,
    origin: usize,
    rho: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    let own = panel.series(node)?;
    let history = || Error::InsufficientHistory {
        node: node.into(),
        origin,
        rho,
    };
    if origin < rho || origin > own.len() {
        return Err(history());
    }
    let origin_period = own.period(origin);
    let mut channels: Vec<(Vec<f64>, f64)> = Vec::with_capacity(model.neighbors.len());
    for n in &model.neighbors {
        let s = panel.series(n.as_str())?;
        let end = (origin_period.saturating_sub(s.start())).min(s.len());
        if end == 0 {
            return Err(history());
        }
        let tail = &s.rates()[end.saturating_sub(rho)..end];
        let fill = tail.iter().sum::<f64>() / tail.len() as f64;
        let values = (0..rho + horizon)
            .map(|i| {
                let period = origin_period + i - rho;
                match s.position(period) {
                    Some(p) if period < origin_period => s.rates()[p],
                    _ => fill,
                }
            })
            .collect();
        channels.push((values, fill));
    }

    let dim = 1 + channels.len();
    let mut own_window: Vec<f64> = own.rates()[origin - rho..origin].to_vec();
    let mut out = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(rho * dim);
    for step in 0..=horizon {
        inputs.clear();
        for lag in 0..rho {
            inputs.push(own_window[step + lag]);
            for (values, _) in &channels {
                inputs.push(values[step + lag]);
            }
        }
        let y = predict_sequence(&model.params, &inputs)?;
        own_window.push(y);
        out.push(y);
    }
    Ok(out)
}
