use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf(f64),
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary regression tree stored as a flat node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, at: usize) -> usize {
            match t.nodes[at] {
                TreeNode::Leaf(_) => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnsembleMode {
    /// Mean of the tree outputs.
    Average,
    /// `base + shrinkage * Σ tree outputs`.
    Additive { base: f64, shrinkage: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<RegressionTree>,
    pub mode: EnsembleMode,
    pub n_features: usize,
}

impl TreeEnsemble {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::WrongLength {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(self.predict_stages(x, self.trees.len()))
    }

    /// Prediction using only the first `m` trees.
    pub fn predict_stages(&self, x: &[f64], m: usize) -> f64 {
        let trees = &self.trees[..m.min(self.trees.len())];
        let sum: f64 = trees.iter().map(|t| t.predict(x)).sum();
        match self.mode {
            EnsembleMode::Average if trees.is_empty() => 0.0,
            EnsembleMode::Average => sum / trees.len() as f64,
            EnsembleMode::Additive { base, shrinkage } => base + shrinkage * sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Share of features tried at each split, at least one.
    pub feature_frac: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 6,
            min_leaf: 2,
            feature_frac: 1.0 / 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub shrinkage: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            min_leaf: 1,
            shrinkage: 0.1,
            seed: 0,
        }
    }
}

struct Grower<'a> {
    x: &'a [&'a [f64]],
    y: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    n_try: usize,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn grow<R: Rng + ?Sized>(&mut self, rows: &mut [usize], depth: usize, rng: &mut R) -> usize {
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf(mean));
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(rows, rng) else {
            return at;
        };
        // stable partition keeps the bootstrap order
        let (mut l, mut r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(&mut l, depth + 1, rng);
        let right = self.grow(&mut r, depth + 1, rng);
        self.nodes[at] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    /// Split maximizing the reduction of the sum of squared errors.
    fn best_split<R: Rng + ?Sized>(&self, rows: &mut [usize], rng: &mut R) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        let (chosen, _) = features.partial_shuffle(rng, self.n_try);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();

        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let parent_score = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for f in chosen {
            rows.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.y[rows[k - 1]];
                let (lo, hi) = (self.x[rows[k - 1]][f], self.x[rows[k]][f]);
                if lo == hi || k < self.min_leaf || n - k < self.min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE reduction up to a constant
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64;
                let gain = score - parent_score;
                if gain > 1e-12 * (1.0 + parent_score.abs()) && best.is_none_or(|b| score > b.0) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some((score, f, mid));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn grow_tree<R: Rng + ?Sized>(
    x: &[&[f64]],
    y: &[f64],
    rows: &mut [usize],
    max_depth: usize,
    min_leaf: usize,
    n_try: usize,
    rng: &mut R,
) -> RegressionTree {
    let mut g = Grower {
        x,
        y,
        max_depth,
        min_leaf: min_leaf.max(1),
        n_try,
        nodes: Vec::new(),
    };
    g.grow(rows, 0, rng);
    RegressionTree { nodes: g.nodes }
}

fn check(windows: &[Window]) -> Result<usize> {
    let d = windows
        .first()
        .ok_or(Error::NoTrainingData(None))?
        .inputs
        .len();
    if let Some(w) = windows.iter().find(|w| w.inputs.len() != d) {
        return Err(Error::WrongLength {
            expected: d,
            found: w.inputs.len(),
        });
    }
    if d == 0 {
        return Err(Error::InvalidArgument("windows have no inputs".into()));
    }
    Ok(d)
}

/// Bagged regression trees with per-split feature subsampling.
pub fn fit_forest(windows: &[Window], cfg: &ForestConfig) -> Result<TreeEnsemble> {
    let d = check(windows)?;
    if !(cfg.feature_frac > 0.0 && cfg.feature_frac <= 1.0) {
        return Err(Error::InvalidArgument(
            "feature_frac must lie in (0, 1]".into(),
        ));
    }
    let n_try = (libm::ceil(cfg.feature_frac * d as f64) as usize).clamp(1, d);
    let x: Vec<&[f64]> = windows.iter().map(|w| w.inputs.as_slice()).collect();
    let y: Vec<f64> = windows.iter().map(|w| w.target).collect();
    let mut rng = rng_for(cfg.seed);
    let n = windows.len();
    let trees = (0..cfg.n_trees)
        .map(|_| {
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(
                &x,
                &y,
                &mut rows,
                cfg.max_depth,
                cfg.min_leaf,
                n_try,
                &mut rng,
            )
        })
        .collect();
    Ok(TreeEnsemble {
        trees,
        mode: EnsembleMode::Average,
        n_features: d,
    })
}

/// Least-squares gradient boosting started from the training mean.
pub fn fit_gbt(windows: &[Window], cfg: &GbtConfig) -> Result<TreeEnsemble> {
    let d = check(windows)?;
    if !(cfg.shrinkage > 0.0) || !cfg.shrinkage.is_finite() {
        return Err(Error::InvalidArgument("shrinkage must be positive".into()));
    }
    let x: Vec<&[f64]> = windows.iter().map(|w| w.inputs.as_slice()).collect();
    let y: Vec<f64> = windows.iter().map(|w| w.target).collect();
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut fitted = vec![base; y.len()];
    let mut rng = rng_for(cfg.seed);
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let mut rows: Vec<usize> = (0..y.len()).collect();
        let t = grow_tree(
            &x,
            &resid,
            &mut rows,
            cfg.max_depth,
            cfg.min_leaf,
            d,
            &mut rng,
        );
        for (f, xi) in fitted.iter_mut().zip(&x) {
            *f += cfg.shrinkage * t.predict(xi);
        }
        trees.push(t);
    }
    Ok(TreeEnsemble {
        trees,
        mode: EnsembleMode::Additive {
            base,
            shrinkage: cfg.shrinkage,
        },
        n_features: d,
    })
}
