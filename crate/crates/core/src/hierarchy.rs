//! The index tree: parent links, basket weights, levels, parent-child
//! correlations and the prior precision schedule derived from them.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::SeriesPanel;
use crate::error::{Error, Result};
use crate::metrics::pearson;

/// Minimum number of shared training points for a parent correlation.
pub const MIN_OVERLAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: &str) -> Self {
        Self(id.to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// One row of a hierarchy file.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: String,
    pub parent: Option<String>,
    pub weight: Option<f64>,
}

impl NodeRecord {
    pub fn new(id: &str, parent: Option<&str>, weight: Option<f64>) -> Self {
        Self {
            id: id.into(),
            parent: parent.map(Into::into),
            weight,
        }
    }
}

/// A validated single-rooted tree. Nodes are stored in breadth-first order,
/// so every parent index is smaller than its children's.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    weight: Vec<Option<f64>>,
    level: Vec<usize>,
}

impl Hierarchy {
    pub fn from_records(records: Vec<NodeRecord>) -> Result<Self> {
        let mut input_index: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.id.is_empty() {
                return Err(Error::EmptyNodeId);
            }
            if input_index.insert(r.id.as_str(), i).is_some() {
                return Err(Error::DuplicateNode(r.id.clone()));
            }
        }
        for r in &records {
            if let Some(w) = r.weight {
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::NegativeWeight {
                        node: r.id.clone(),
                        weight: w,
                    });
                }
            }
            if let Some(p) = &r.parent {
                if !input_index.contains_key(p.as_str()) {
                    return Err(Error::UnknownParent {
                        node: r.id.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }
        let roots: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.parent.is_none())
            .map(|(i, _)| i)
            .collect();
        match roots.len() {
            0 if records.is_empty() => return Err(Error::MissingRoot),
            // every node has a parent, so the links must close a cycle
            0 => {
                return Err(Error::CycleDetected(
                    records.iter().map(|r| r.id.clone()).collect(),
                ))
            }
            1 => {}
            _ => {
                return Err(Error::MultipleRoots(
                    roots.iter().map(|i| records[*i].id.clone()).collect(),
                ))
            }
        }

        let mut input_children: Vec<Vec<usize>> = vec![Vec::new(); records.len()];
        for (i, r) in records.iter().enumerate() {
            if let Some(p) = &r.parent {
                input_children[input_index[p.as_str()]].push(i);
            }
        }

        // BFS from the root; unreachable nodes sit on a cycle.
        let mut order = Vec::with_capacity(records.len());
        let mut new_index = vec![usize::MAX; records.len()];
        let mut queue = VecDeque::from([roots[0]]);
        while let Some(i) = queue.pop_front() {
            new_index[i] = order.len();
            order.push(i);
            queue.extend(input_children[i].iter().copied());
        }
        if order.len() != records.len() {
            let stuck = records
                .iter()
                .enumerate()
                .filter(|(i, _)| new_index[*i] == usize::MAX)
                .map(|(_, r)| r.id.clone())
                .collect();
            return Err(Error::CycleDetected(stuck));
        }

        let ids: Vec<NodeId> = order.iter().map(|i| NodeId::new(&records[*i].id)).collect();
        let parent: Vec<Option<usize>> = order
            .iter()
            .map(|i| {
                records[*i]
                    .parent
                    .as_ref()
                    .map(|p| new_index[input_index[p.as_str()]])
            })
            .collect();
        let children = order
            .iter()
            .map(|i| input_children[*i].iter().map(|c| new_index[*c]).collect())
            .collect();
        let weight = order.iter().map(|i| records[*i].weight).collect();
        let mut level = vec![0usize; ids.len()];
        for i in 1..ids.len() {
            level[i] = level[parent[i].expect("non-root")] + 1;
        }
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            ids,
            index,
            parent,
            children,
            weight,
            level,
        })
    }

    /// Records in breadth-first order, suitable for writing back to disk.
    pub fn records(&self) -> Vec<NodeRecord> {
        (0..self.len())
            .map(|i| NodeRecord {
                id: self.ids[i].as_str().into(),
                parent: self.parent[i].map(|p| self.ids[p].as_str().into()),
                weight: self.weight[i],
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn root_id(&self) -> &NodeId {
        &self.ids[0]
    }

    /// Node ids in breadth-first order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, idx: usize) -> &NodeId {
        &self.ids[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::UnknownNode(id.into()))
    }

    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.parent[idx]
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    pub fn weight(&self, idx: usize) -> Option<f64> {
        self.weight[idx]
    }

    pub fn level(&self, idx: usize) -> usize {
        self.level[idx]
    }

    /// Number of levels (deepest level + 1).
    pub fn depth(&self) -> usize {
        self.level.iter().max().map_or(0, |l| l + 1)
    }

    /// Node indices grouped by level, each group in breadth-first order.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.depth()];
        for i in 0..self.len() {
            out[self.level[i]].push(i);
        }
        out
    }

    fn with_weights(&self, weight: Vec<Option<f64>>) -> Self {
        Self {
            weight,
            ..self.clone()
        }
    }
}

/// Pearson correlation between node `n` and its parent over the shared
/// training periods.
pub fn parent_correlation(panel: &SeriesPanel, h: &Hierarchy, n: &str) -> Result<f64> {
    let idx = h.require(n)?;
    let p = h
        .parent(idx)
        .ok_or_else(|| Error::RootHasNoParent(n.into()))?;
    let (child, parent) = panel.train_overlap(n, h.id(p).as_str())?;
    if child.len() < MIN_OVERLAP {
        return Err(Error::InsufficientOverlap {
            node: n.into(),
            overlap: child.len(),
            required: MIN_OVERLAP,
        });
    }
    pearson(&child, &parent)
}

/// How [`precision_schedule`] treats nodes whose correlation is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationFallback {
    /// Use `C = 0`, i.e. `tau = e^alpha`, and flag the node.
    #[default]
    Neutral,
    Strict,
}

/// `tau(n) = exp(alpha + C(n))` for every non-root node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSchedule {
    pub alpha: f64,
    pub tau: BTreeMap<NodeId, f64>,
    pub correlation: BTreeMap<NodeId, f64>,
    /// Nodes whose correlation fell back to zero.
    pub fallbacks: Vec<NodeId>,
}

impl PrecisionSchedule {
    pub fn tau(&self, n: &str) -> Option<f64> {
        self.tau.get(n).copied()
    }
}

pub fn tau_from_correlation(alpha: f64, c: f64) -> f64 {
    libm::exp(alpha + c)
}

pub fn precision_schedule(
    panel: &SeriesPanel,
    h: &Hierarchy,
    alpha: f64,
    fallback: CorrelationFallback,
) -> Result<PrecisionSchedule> {
    let mut tau = BTreeMap::new();
    let mut correlation = BTreeMap::new();
    let mut fallbacks = Vec::new();
    for idx in 1..h.len() {
        let id = h.id(idx);
        let c = match parent_correlation(panel, h, id.as_str()) {
            Ok(c) => c,
            Err(e) => match (fallback, e) {
                (
                    CorrelationFallback::Neutral,
                    Error::InsufficientOverlap { .. }
                    | Error::DegenerateVariance
                    | Error::UnknownNode(_),
                ) => {
                    fallbacks.push(id.clone());
                    0.0
                }
                (_, e) => return Err(e.at_node(id.as_str())),
            },
        };
        correlation.insert(id.clone(), c);
        tau.insert(id.clone(), tau_from_correlation(alpha, c));
    }
    Ok(PrecisionSchedule {
        alpha,
        tau,
        correlation,
        fallbacks,
    })
}

/// Normalized sibling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildWeights {
    pub weights: BTreeMap<NodeId, f64>,
    /// Set when all weights were zero and uniform weights were used instead.
    pub uniform_fallback: bool,
}

/// Basket weights of `n`'s children normalized to sum to one.
pub fn child_weights(h: &Hierarchy, n: &str) -> Result<ChildWeights> {
    let idx = h.require(n)?;
    let kids = h.children(idx);
    if kids.is_empty() {
        return Err(Error::NoChildren(n.into()));
    }
    let mut raw = Vec::with_capacity(kids.len());
    for &c in kids {
        let w = h.weight(c).ok_or_else(|| Error::MissingWeight {
            parent: n.into(),
            child: h.id(c).as_str().into(),
        })?;
        raw.push(w);
    }
    let total: f64 = raw.iter().sum();
    let uniform_fallback = !(total > 0.0);
    let weights = kids
        .iter()
        .zip(&raw)
        .map(|(&c, &w)| {
            let share = if uniform_fallback {
                1.0 / kids.len() as f64
            } else {
                w / total
            };
            (h.id(c).clone(), share)
        })
        .collect();
    Ok(ChildWeights {
        weights,
        uniform_fallback,
    })
}

/// Outcome of [`impute_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub hierarchy: Hierarchy,
    /// Parents whose child weights were estimated.
    pub imputed: Vec<NodeId>,
    /// Parents whose regression was singular and got uniform weights.
    pub singular: Vec<NodeId>,
}

/// Fills missing child weights by regressing the parent's training rates on
/// its children's (no intercept). Negative coefficients are clamped to zero
/// and the rest renormalized. Existing weights are left as they are; when a
/// group mixes known and missing weights, the estimated shares are expressed
/// in the units of the known ones.
pub fn impute_weights(panel: &SeriesPanel, h: &Hierarchy) -> Result<Imputation> {
    let mut weight: Vec<Option<f64>> = (0..h.len()).map(|i| h.weight(i)).collect();
    let mut imputed = Vec::new();
    let mut singular = Vec::new();
    for p in 0..h.len() {
        let kids = h.children(p);
        if kids.is_empty() || kids.iter().all(|c| h.weight(*c).is_some()) {
            continue;
        }
        let pid = h.id(p);
        let (shares, was_singular) = match regression_shares(panel, h, p) {
            Some(s) => (s, false),
            None => (vec![1.0 / kids.len() as f64; kids.len()], true),
        };
        let known: Vec<(usize, f64)> = kids
            .iter()
            .enumerate()
            .filter_map(|(k, c)| h.weight(*c).map(|w| (k, w)))
            .collect();
        let known_share: f64 = known.iter().map(|(k, _)| shares[*k]).sum();
        let known_total: f64 = known.iter().map(|(_, w)| *w).sum();
        let scale = if known.is_empty() || !(known_share > 0.0) {
            1.0
        } else {
            known_total / known_share
        };
        for (k, &c) in kids.iter().enumerate() {
            if weight[c].is_none() {
                weight[c] = Some(shares[k] * scale);
            }
        }
        imputed.push(pid.clone());
        if was_singular {
            singular.push(pid.clone());
        }
    }
    Ok(Imputation {
        hierarchy: h.with_weights(weight),
        imputed,
        singular,
    })
}

/// Clamped, renormalized OLS shares; `None` when the design is singular or
/// degenerate.
fn regression_shares(panel: &SeriesPanel, h: &Hierarchy, p: usize) -> Option<Vec<f64>> {
    let kids = h.children(p);
    let parent = panel.get(h.id(p).as_str())?;
    let kid_series: Vec<_> = kids
        .iter()
        .map(|c| panel.get(h.id(*c).as_str()))
        .collect::<Option<Vec<_>>>()?;
    let lo = kid_series
        .iter()
        .map(|s| s.train_periods().start)
        .fold(parent.train_periods().start, usize::max);
    let hi = kid_series
        .iter()
        .map(|s| s.train_periods().end)
        .fold(parent.train_periods().end, usize::min);
    if hi <= lo || hi - lo < kids.len() {
        return None;
    }
    let rows = hi - lo;
    let x = DMatrix::from_fn(rows, kids.len(), |r, c| {
        kid_series[c]
            .train_value_at(lo + r)
            .expect("inside overlap")
    });
    let y = DVector::from_fn(rows, |r, _| {
        parent.train_value_at(lo + r).expect("inside overlap")
    });
    let svd = x.svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    if !(max_sv > 0.0) || min_sv <= max_sv * 1e-10 {
        return None;
    }
    let beta = svd.solve(&y, 0.0).ok()?;
    let clamped: Vec<f64> = beta.iter().map(|b| b.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    Some(clamped.iter().map(|b| b / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::monthly_calendar;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rec(id: &str, parent: Option<&str>, w: Option<f64>) -> NodeRecord {
        NodeRecord::new(id, parent, w)
    }

    fn abc() -> Hierarchy {
        Hierarchy::from_records(vec![
            rec("A", None, Some(1.0)),
            rec("B", Some("A"), Some(0.6)),
            rec("C", Some("A"), Some(0.4)),
        ])
        .unwrap()
    }

    fn panel(series: &[(&str, Vec<f64>)]) -> SeriesPanel {
        let n = series.iter().map(|(_, v)| v.len()).max().unwrap();
        SeriesPanel::new(
            monthly_calendar(2000, 1, n),
            series.iter().map(|(id, v)| (NodeId::new(id), 0, v.clone())),
            0.75,
        )
        .unwrap()
    }

    #[test]
    fn three_node_tree() {
        let h = abc();
        assert_eq!(h.level(h.index_of("A").unwrap()), 0);
        assert_eq!(h.level(h.index_of("B").unwrap()), 1);
        assert_eq!(h.level(h.index_of("C").unwrap()), 1);
        assert_eq!(h.depth(), 2);
        assert_eq!(h.root_id().as_str(), "A");
    }

    #[test]
    fn structural_errors() {
        let cycle =
            Hierarchy::from_records(vec![rec("B", Some("C"), None), rec("C", Some("B"), None)]);
        assert!(matches!(cycle, Err(Error::CycleDetected(_))));

        let cycle_beside_root = Hierarchy::from_records(vec![
            rec("A", None, None),
            rec("B", Some("C"), None),
            rec("C", Some("B"), None),
        ]);
        assert_eq!(
            cycle_beside_root,
            Err(Error::CycleDetected(vec!["B".into(), "C".into()]))
        );

        assert_eq!(Hierarchy::from_records(vec![]), Err(Error::MissingRoot));
        assert!(matches!(
            Hierarchy::from_records(vec![rec("A", None, None), rec("B", None, None)]),
            Err(Error::MultipleRoots(r)) if r.len() == 2
        ));
        assert!(matches!(
            Hierarchy::from_records(vec![rec("A", None, None), rec("B", Some("Z"), None)]),
            Err(Error::UnknownParent { .. })
        ));
        assert!(matches!(
            Hierarchy::from_records(vec![rec("A", None, Some(-1.0))]),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn correlation_examples() {
        let parent = vec![1.0, 2.0, 3.0, 4.0, 9.0, 9.0];
        let h = abc();
        let p = panel(&[
            ("A", parent.clone()),
            ("B", parent.clone()),
            ("C", parent.iter().map(|x| -x).collect()),
        ]);
        assert_relative_eq!(
            parent_correlation(&p, &h, "B").unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            parent_correlation(&p, &h, "C").unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            parent_correlation(&p, &h, "A"),
            Err(Error::RootHasNoParent(_))
        ));

        // The training window is the first 4 of these 5 points (ceil(3.75) = 4).
        let p = panel(&[
            ("A", vec![1.0, 2.0, 3.0, 4.0, 100.0]),
            ("B", vec![1.0, 2.0, 3.0, 5.0, -100.0]),
            ("C", vec![1.0, 2.0, 3.0, 4.0, 0.0]),
        ]);
        // brute-force Pearson from sums
        let (x, y) = ([1.0f64, 2.0, 3.0, 5.0], [1.0f64, 2.0, 3.0, 4.0]);
        let n = 4.0;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        let expected = (n * sxy - sx * sy) / libm::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
        assert_relative_eq!(
            parent_correlation(&p, &h, "B").unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn correlation_needs_overlap() {
        let h = abc();
        let p = SeriesPanel::new(
            monthly_calendar(2000, 1, 20),
            vec![
                (NodeId::new("A"), 0, (0..8).map(f64::from).collect()),
                (
                    NodeId::new("B"),
                    5,
                    (0..8).map(|i| f64::from(i * i)).collect(),
                ),
                (NodeId::new("C"), 0, (0..8).map(f64::from).collect()),
            ],
            0.75,
        )
        .unwrap();
        assert!(matches!(
            parent_correlation(&p, &h, "B"),
            Err(Error::InsufficientOverlap { overlap: 1, .. })
        ));
        let s = precision_schedule(&p, &h, 1.5, CorrelationFallback::Neutral).unwrap();
        assert_eq!(s.fallbacks, vec![NodeId::new("B")]);
        assert_relative_eq!(s.tau("B").unwrap(), libm::exp(1.5), epsilon = 1e-12);
        assert_relative_eq!(s.tau("C").unwrap(), libm::exp(2.5), epsilon = 1e-12);
        assert!(s.tau("A").is_none());
        assert!(precision_schedule(&p, &h, 1.5, CorrelationFallback::Strict).is_err());
    }

    #[test]
    fn tau_values() {
        assert_relative_eq!(tau_from_correlation(1.5, 1.0), 12.18249, epsilon = 1e-5);
        assert_relative_eq!(tau_from_correlation(1.5, 0.0), 4.48169, epsilon = 1e-5);
        assert_relative_eq!(tau_from_correlation(0.5, -1.0), 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn child_weight_examples() {
        let h = Hierarchy::from_records(vec![
            rec("A", None, None),
            rec("B", Some("A"), Some(3.0)),
            rec("C", Some("A"), Some(1.0)),
            rec("D", Some("B"), Some(42.0)),
            rec("E", Some("C"), Some(0.0)),
            rec("F", Some("C"), Some(0.0)),
        ])
        .unwrap();
        let w = child_weights(&h, "A").unwrap();
        assert_eq!(w.weights["B"], 0.75);
        assert_eq!(w.weights["C"], 0.25);
        assert!(!w.uniform_fallback);
        assert_eq!(child_weights(&h, "B").unwrap().weights["D"], 1.0);
        let z = child_weights(&h, "C").unwrap();
        assert!(z.uniform_fallback);
        assert_eq!(z.weights["E"], 0.5);
        assert_eq!(child_weights(&h, "D"), Err(Error::NoChildren("D".into())));
    }

    #[test]
    fn imputation_recovers_linear_mix() {
        let h = Hierarchy::from_records(vec![
            rec("P", None, Some(1.0)),
            rec("A", Some("P"), None),
            rec("B", Some("P"), None),
        ])
        .unwrap();
        let a: Vec<f64> = (0..12).map(|i| libm::sin(f64::from(i))).collect();
        let b: Vec<f64> = (0..12).map(|i| libm::cos(f64::from(i) * 0.7)).collect();
        let p: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.7 * x + 0.3 * y).collect();
        let panel = panel(&[("P", p), ("A", a.clone()), ("B", b)]);
        let out = impute_weights(&panel, &h).unwrap();
        let hh = &out.hierarchy;
        assert_relative_eq!(
            hh.weight(hh.index_of("A").unwrap()).unwrap(),
            0.7,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            hh.weight(hh.index_of("B").unwrap()).unwrap(),
            0.3,
            epsilon = 1e-9
        );
        assert!(out.singular.is_empty());

        let single =
            Hierarchy::from_records(vec![rec("P", None, None), rec("A", Some("P"), None)]).unwrap();
        let panel1 = panel_of_pair("P", "A", &a);
        let out = impute_weights(&panel1, &single).unwrap();
        assert_relative_eq!(out.hierarchy.weight(1).unwrap(), 1.0, epsilon = 1e-12);
        // root keeps its missing weight
        assert_eq!(out.hierarchy.weight(0), None);
    }

    fn panel_of_pair(p: &str, c: &str, v: &[f64]) -> SeriesPanel {
        panel(&[(p, v.to_vec()), (c, v.to_vec())])
    }

    #[test]
    fn imputation_singular_falls_back_to_uniform() {
        let h = Hierarchy::from_records(vec![
            rec("P", None, Some(1.0)),
            rec("A", Some("P"), None),
            rec("B", Some("P"), None),
        ])
        .unwrap();
        let a: Vec<f64> = (0..12).map(|i| libm::sin(f64::from(i))).collect();
        let panel = panel(&[("P", a.clone()), ("A", a.clone()), ("B", a)]);
        let out = impute_weights(&panel, &h).unwrap();
        assert_eq!(out.singular, vec![NodeId::new("P")]);
        assert_eq!(out.hierarchy.weight(1), Some(0.5));
        assert_eq!(out.hierarchy.weight(2), Some(0.5));
    }

    #[test]
    fn imputation_is_identity_on_full_weights() {
        let h = abc();
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        let p = panel(&[("A", v.clone()), ("B", v.clone()), ("C", v)]);
        let out = impute_weights(&p, &h).unwrap();
        assert_eq!(out.hierarchy, h);
        assert!(out.imputed.is_empty());
    }

    proptest! {
        #[test]
        fn child_weights_sum_to_one(ws in proptest::collection::vec(0.0f64..1000.0, 1..12)) {
            let mut recs = vec![rec("root", None, None)];
            for (i, w) in ws.iter().enumerate() {
                recs.push(NodeRecord::new(&alloc::format!("c{i}"), Some("root"), Some(*w)));
            }
            let h = Hierarchy::from_records(recs).unwrap();
            let cw = child_weights(&h, "root").unwrap();
            let total: f64 = cw.weights.values().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn tau_increases_with_correlation(alpha in -5.0f64..10.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
            prop_assume!(c1 < c2);
            prop_assert!(tau_from_correlation(alpha, c1) < tau_from_correlation(alpha, c2));
        }

        #[test]
        fn random_trees_are_valid(parents in proptest::collection::vec(0usize..1000, 1..40)) {
            // node i+1 attaches to an earlier node
            let mut recs = vec![rec("n0", None, Some(1.0))];
            for (i, p) in parents.iter().enumerate() {
                let parent = alloc::format!("n{}", p % (i + 1));
                recs.push(NodeRecord::new(&alloc::format!("n{}", i + 1), Some(&parent), Some(1.0)));
            }
            let h = Hierarchy::from_records(recs).unwrap();
            prop_assert_eq!(h.len(), parents.len() + 1);
            for i in 1..h.len() {
                let p = h.parent(i).unwrap();
                prop_assert!(p < i);
                prop_assert_eq!(h.level(i), h.level(p) + 1);
            }
        }
    }
}
