use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::knn::{knn_windows, nearest_neighbors};
use super::{InitMode, ModelBundle, NodeModel, NodeProvenance, Provenance, SkippedNode, TrainSpec};
use crate::dataset::{make_windows, Segment, SeriesPanel, Window};
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::forecast::ModelTag;
use crate::gru::{optimize, GruParams};
use crate::hierarchy::{child_weights, precision_schedule, Hierarchy, NodeId};
use crate::optim::Anchor;
use crate::seed::{node_seed, rng_for};

/// Whether HRNN applies its Gaussian priors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HrnnPrior {
    #[default]
    Hierarchical,
    /// All prior coefficients forced to zero.
    Off,
}

/// Coefficient on the root's zero-mean, unit-variance prior.
const ROOT_PRIOR_COEFF: f64 = 0.5;

fn train_windows(panel: &SeriesPanel, id: &str, rho: usize) -> Result<Vec<Window>> {
    match panel.get(id) {
        Some(_) => make_windows(panel, id, rho, Segment::Train),
        None => Ok(Vec::new()),
    }
}

enum NodeOutcome {
    Trained(NodeModel, NodeProvenance),
    Skipped(String),
}

fn fitted(params: GruParams, prov: NodeProvenance) -> Result<NodeOutcome> {
    Ok(NodeOutcome::Trained(NodeModel::new(params), prov))
}

/// Random initialization followed by training, all from the node's own
/// generator.
fn fit_from_scratch(
    id: &str,
    windows: &[Window],
    input_dim: usize,
    spec: &TrainSpec,
    anchors: &[Anchor<'_>],
) -> Result<(GruParams, NodeProvenance)> {
    let seed = node_seed(spec.seed, id);
    let mut rng = rng_for(seed);
    let init = GruParams::random(spec.hidden, input_dim, spec.init_scale, &mut rng);
    let (params, trace) = optimize(init, windows, &spec.optim_config(), anchors, &mut rng)
        .map_err(|e| e.at_node(id))?;
    Ok((
        params,
        NodeProvenance {
            seed,
            order: 0,
            level: 0,
            n_windows: windows.len(),
            initial_loss: trace.initial_loss,
            final_loss: trace.final_loss,
            correlation: None,
            tau: None,
            flags: Vec::new(),
        },
    ))
}

fn assemble<I>(tag: ModelTag, spec: &TrainSpec, h: &Hierarchy, outcomes: I) -> Result<ModelBundle>
where
    I: IntoIterator<Item = (usize, Result<NodeOutcome>)>,
{
    let mut nodes = BTreeMap::new();
    let mut provenance = Provenance::default();
    for (idx, outcome) in outcomes {
        let id = h.id(idx).clone();
        match outcome? {
            NodeOutcome::Trained(model, mut prov) => {
                prov.order = idx;
                prov.level = h.level(idx);
                nodes.insert(id.clone(), model);
                provenance.nodes.insert(id, prov);
            }
            NodeOutcome::Skipped(reason) => {
                provenance.skipped.push(SkippedNode { node: id, reason })
            }
        }
    }
    Ok(ModelBundle {
        tag,
        spec: spec.clone(),
        nodes,
        provenance,
    })
}

fn all_nodes(h: &Hierarchy) -> Vec<usize> {
    (0..h.len()).collect()
}

/// One GRU per node, trained independently without any prior.
pub fn train_igru(panel: &SeriesPanel, h: &Hierarchy, spec: &TrainSpec) -> Result<ModelBundle> {
    train_igru_with(&Sequential, panel, h, spec)
}

pub fn train_igru_with<E: Executor>(
    exec: &E,
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &TrainSpec,
) -> Result<ModelBundle> {
    spec.validate()?;
    let jobs = all_nodes(h);
    let outcomes = exec.map(&jobs, |&idx| {
        let id = h.id(idx).as_str();
        let windows = train_windows(panel, id, spec.rho)?;
        if windows.is_empty() {
            return Ok(NodeOutcome::Skipped("no training windows".into()));
        }
        let (params, prov) = fit_from_scratch(id, &windows, 1, spec, &[])?;
        fitted(params, prov)
    });
    assemble(ModelTag::Igru, spec, h, jobs.into_iter().zip(outcomes))
}

/// A single GRU trained on the pooled windows of every node.
///
/// The generator is seeded from the root's id, so on a one-node hierarchy
/// this coincides with I-GRU.
pub fn train_sgru(panel: &SeriesPanel, h: &Hierarchy, spec: &TrainSpec) -> Result<ModelBundle> {
    train_sgru_with(&Sequential, panel, h, spec)
}

pub fn train_sgru_with<E: Executor>(
    _exec: &E,
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &TrainSpec,
) -> Result<ModelBundle> {
    spec.validate()?;
    let mut pooled = Vec::new();
    for id in h.ids() {
        pooled.extend(train_windows(panel, id.as_str(), spec.rho)?);
    }
    if pooled.is_empty() {
        return Err(Error::NoTrainingData(None));
    }
    let root = h.root_id().as_str();
    let (params, prov) = fit_from_scratch(root, &pooled, 1, spec, &[])?;
    let jobs = all_nodes(h);
    let outcomes = jobs.iter().map(|&idx| {
        let mut p = prov.clone();
        p.n_windows = train_windows(panel, h.id(idx).as_str(), spec.rho)?.len();
        p.flags.push(format!(
            "shared parameters; pooled windows {}",
            pooled.len()
        ));
        fitted(params.clone(), p)
    });
    assemble(ModelTag::Sgru, spec, h, jobs.iter().copied().zip(outcomes))
}

/// HRNN: top-down MAP training under unit observation precision, so each
/// node maximizes `-SSE/2 - coeff·||θ - anchor||²`. The root is pulled
/// towards zero with coefficient 1/2; every other node towards its
/// already-trained parent with coefficient `tau/2`, `tau = exp(alpha + C)`.
pub fn train_hrnn(
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &TrainSpec,
    prior: HrnnPrior,
) -> Result<ModelBundle> {
    train_hrnn_with(&Sequential, panel, h, spec, prior)
}

pub fn train_hrnn_with<E: Executor>(
    exec: &E,
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &TrainSpec,
    prior: HrnnPrior,
) -> Result<ModelBundle> {
    spec.validate()?;
    let schedule = match prior {
        HrnnPrior::Hierarchical => Some(precision_schedule(
            panel,
            h,
            spec.alpha,
            spec.correlation_fallback,
        )?),
        HrnnPrior::Off => None,
    };
    let zero = GruParams::zeros(spec.hidden, 1);
    let mut trained: Vec<Option<GruParams>> = vec![None; h.len()];
    let mut outcomes: Vec<(usize, Result<NodeOutcome>)> = Vec::with_capacity(h.len());

    for level in h.levels() {
        let results = exec.map(&level, |&idx| -> Result<NodeOutcome> {
            let id = h.id(idx);
            let windows = train_windows(panel, id.as_str(), spec.rho)?;
            let (anchor, coeff, correlation, tau) = match (&schedule, h.parent(idx)) {
                (None, _) => (None, 0.0, None, None),
                (Some(_), None) => (Some(&zero), ROOT_PRIOR_COEFF, None, None),
                (Some(s), Some(p)) => {
                    let parent = trained[p]
                        .as_ref()
                        .expect("parents are trained one level earlier");
                    let tau = s.tau(id.as_str()).expect("tau for every non-root");
                    (
                        Some(parent),
                        tau / 2.0,
                        s.correlation.get(id).copied(),
                        Some(tau),
                    )
                }
            };
            let mut flags = Vec::new();
            if let Some(s) = &schedule {
                if s.fallbacks.contains(id) {
                    flags.push(String::from("correlation unavailable; used C = 0"));
                }
            }
            if windows.is_empty() {
                return match anchor {
                    None => Ok(NodeOutcome::Skipped("no training windows".into())),
                    // the prior alone is maximized at its mean
                    Some(a) => {
                        flags.push(String::from("no training windows; set to prior mean"));
                        Ok(NodeOutcome::Trained(
                            NodeModel::new(a.clone()),
                            NodeProvenance {
                                seed: node_seed(spec.seed, id.as_str()),
                                order: 0,
                                level: 0,
                                n_windows: 0,
                                initial_loss: 0.0,
                                final_loss: 0.0,
                                correlation,
                                tau,
                                flags,
                            },
                        ))
                    }
                };
            }
            // The log-posterior is -SSE/2 - coeff·||θ - anchor||²; the optimizer
            // works on the mean squared error, so the prior is rescaled by 2/N.
            let scale = 2.0 / windows.len() as f64;
            let anchors: Vec<Anchor<'_>> = anchor
                .filter(|_| coeff != 0.0)
                .map(|a| Anchor::new(a.flatten(), coeff * scale))
                .into_iter()
                .collect();
            let (params, mut prov) = fit_from_scratch(id.as_str(), &windows, 1, spec, &anchors)?;
            prov.correlation = correlation;
            prov.tau = tau;
            prov.flags = flags;
            fitted(params, prov)
        });
        for (&idx, result) in level.iter().zip(results) {
            // children need every parent of this level
            let outcome = result?;
            if let NodeOutcome::Trained(m, _) = &outcome {
                trained[idx] = Some(m.params.clone());
            }
            outcomes.push((idx, Ok(outcome)));
        }
    }
    assemble(ModelTag::Hrnn, spec, h, outcomes)
}

/// KNN-GRU: one multi-channel GRU per node fed with its own rates and those
/// of its `k` most correlated nodes.
pub fn train_knn_gru(panel: &SeriesPanel, h: &Hierarchy, spec: &TrainSpec) -> Result<ModelBundle> {
    train_knn_gru_with(&Sequential, panel, h, spec)
}

pub fn train_knn_gru_with<E: Executor>(
    exec: &E,
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &TrainSpec,
) -> Result<ModelBundle> {
    spec.validate()?;
    let jobs = all_nodes(h);
    let outcomes = exec.map(&jobs, |&idx| -> Result<NodeOutcome> {
        let id = h.id(idx).as_str();
        if panel.get(id).is_none() {
            return Ok(NodeOutcome::Skipped("no series".into()));
        }
        let nn = nearest_neighbors(panel, h, id, spec.k_neighbors)?;
        let windows = knn_windows(panel, id, &nn.ids, spec.rho)?;
        if windows.is_empty() {
            return Ok(NodeOutcome::Skipped("no training windows".into()));
        }
        let (params, mut prov) = fit_from_scratch(id, &windows, 1 + nn.ids.len(), spec, &[])?;
        if nn.ids.len() < spec.k_neighbors {
            prov.flags.push(format!(
                "insufficient neighbors: using {} of {}",
                nn.ids.len(),
                spec.k_neighbors
            ));
        }
        Ok(NodeOutcome::Trained(
            NodeModel {
                params,
                neighbors: nn.ids,
            },
            prov,
        ))
    });
    assemble(ModelTag::KnnGru, spec, h, jobs.into_iter().zip(outcomes))
}

/// BiHRNN: every node is fine-tuned against frozen pretrained anchors,
/// `MSE + λ1·||θ - θ̄_parent||² + λ2·Σ w_i·||θ - θ̄_child_i||²`.
pub fn train_bihrnn(
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &TrainSpec,
    pretrained: &ModelBundle,
) -> Result<ModelBundle> {
    train_bihrnn_with(&Sequential, panel, h, spec, pretrained)
}

pub fn train_bihrnn_with<E: Executor>(
    exec: &E,
    panel: &SeriesPanel,
    h: &Hierarchy,
    spec: &TrainSpec,
    pretrained: &ModelBundle,
) -> Result<ModelBundle> {
    spec.validate()?;
    let frozen = |idx: usize| -> Result<&GruParams> {
        let id = h.id(idx).as_str();
        let p = pretrained
            .params(id)
            .ok_or_else(|| Error::MissingPretrained(id.into()))?;
        if p.input_dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "pretrained parameters of {id:?} are not univariate"
            )));
        }
        Ok(p)
    };
    // fail fast on any gap before spending time on training
    for idx in 0..h.len() {
        frozen(idx)?;
    }

    let jobs = all_nodes(h);
    let outcomes = exec.map(&jobs, |&idx| -> Result<NodeOutcome> {
        let id: &NodeId = h.id(idx);
        let own = frozen(idx)?;
        let mut flags = Vec::new();
        let mut anchors = Vec::new();
        if let Some(p) = h.parent(idx) {
            if spec.lambda1 != 0.0 {
                anchors.push(Anchor::new(frozen(p)?.flatten(), spec.lambda1));
            }
        }
        if !h.children(idx).is_empty() && spec.lambda2 != 0.0 {
            let weights = match child_weights(h, id.as_str()) {
                Ok(w) => {
                    if w.uniform_fallback {
                        flags.push(String::from("all child weights zero; uniform"));
                    }
                    w.weights
                }
                Err(Error::MissingWeight { .. }) => {
                    flags.push(String::from("missing child weights; uniform"));
                    let n = h.children(idx).len() as f64;
                    h.children(idx)
                        .iter()
                        .map(|c| (h.id(*c).clone(), 1.0 / n))
                        .collect()
                }
                Err(e) => return Err(e.at_node(id.as_str())),
            };
            for &c in h.children(idx) {
                let w = weights[h.id(c)];
                anchors.push(Anchor::new(frozen(c)?.flatten(), spec.lambda2 * w));
            }
        }

        let seed = node_seed(spec.seed, id.as_str());
        let mut rng = rng_for(seed);
        let init = match spec.bihrnn_init {
            InitMode::Warm => own.clone(),
            InitMode::Random => GruParams::random(own.hidden(), 1, spec.init_scale, &mut rng),
        };
        let windows = train_windows(panel, id.as_str(), spec.rho)?;
        let (params, trace) = if windows.is_empty() {
            flags.push(String::from("no training windows; kept initialization"));
            (init, Default::default())
        } else {
            optimize(init, &windows, &spec.optim_config(), &anchors, &mut rng)
                .map_err(|e| e.at_node(id.as_str()))?
        };
        Ok(NodeOutcome::Trained(
            NodeModel::new(params),
            NodeProvenance {
                seed,
                order: 0,
                level: 0,
                n_windows: windows.len(),
                initial_loss: trace.initial_loss,
                final_loss: trace.final_loss,
                correlation: None,
                tau: None,
                flags,
            },
        ))
    });
    assemble(ModelTag::BiHrnn, spec, h, jobs.into_iter().zip(outcomes))
}
