//! Forecast accuracy metrics.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::NodeId;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Root mean squared error.
pub fn rmse(actuals: &[f64], predictions: &[f64]) -> Result<f64> {
    check_pair(actuals, predictions)?;
    let sse: f64 = actuals
        .iter()
        .zip(predictions)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(libm::sqrt(sse / actuals.len() as f64))
}

/// Pearson correlation with population normalization.
pub fn pearson(actuals: &[f64], predictions: &[f64]) -> Result<f64> {
    check_pair(actuals, predictions)?;
    if actuals.len() < 2 {
        return Err(Error::DegenerateVariance);
    }
    let (ma, mp) = (mean(actuals), mean(predictions));
    let (mut cov, mut va, mut vp) = (0.0, 0.0, 0.0);
    for (a, p) in actuals.iter().zip(predictions) {
        let (da, dp) = (a - ma, p - mp);
        cov += da * dp;
        va += da * da;
        vp += dp * dp;
    }
    let n = actuals.len() as f64;
    let (cov, va, vp) = (cov / n, va / n, vp / n);
    if !(va > 0.0) || !(vp > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok((cov / libm::sqrt(va * vp)).clamp(-1.0, 1.0))
}

/// Double-centered absolute-distance matrix, row-major.
fn centered_distances(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (x[i] - x[j]).abs();
        }
    }
    let row_means: Vec<f64> = (0..n).map(|i| mean(&d[i * n..(i + 1) * n])).collect();
    // symmetric, so column means equal row means
    let grand = mean(&row_means);
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    d
}

/// Székely distance correlation (V-statistic form), O(T²).
pub fn distance_correlation(actuals: &[f64], predictions: &[f64]) -> Result<f64> {
    check_pair(actuals, predictions)?;
    if actuals.len() < 2 {
        return Err(Error::DegenerateDistanceVariance);
    }
    let a = centered_distances(actuals);
    let b = centered_distances(predictions);
    let m = a.len() as f64;
    let dcov2: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / m;
    let dvar2_a: f64 = a.iter().map(|x| x * x).sum::<f64>() / m;
    let dvar2_b: f64 = b.iter().map(|x| x * x).sum::<f64>() / m;
    if !(dvar2_a > 0.0) || !(dvar2_b > 0.0) {
        return Err(Error::DegenerateDistanceVariance);
    }
    let r2 = dcov2.max(0.0) / libm::sqrt(dvar2_a * dvar2_b);
    Ok(libm::sqrt(r2).min(1.0))
}

/// `model_rmse / ar1_rmse`.
pub fn relative_rmse(model_rmse: f64, ar1_rmse: f64) -> Result<f64> {
    if !(ar1_rmse > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    Ok(model_rmse / ar1_rmse)
}

/// Actuals and predictions of one model at one node and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub node: NodeId,
    pub model: alloc::string::String,
    pub horizon: usize,
    actuals: Vec<f64>,
    predictions: Vec<f64>,
    residuals: Vec<f64>,
}

impl EvalRecord {
    pub fn new(
        node: NodeId,
        model: alloc::string::String,
        horizon: usize,
        actuals: Vec<f64>,
        predictions: Vec<f64>,
    ) -> Result<Self> {
        check_pair(&actuals, &predictions)?;
        let residuals = actuals
            .iter()
            .zip(&predictions)
            .map(|(a, p)| a - p)
            .collect();
        Ok(Self {
            node,
            model,
            horizon,
            actuals,
            predictions,
            residuals,
        })
    }

    pub fn actuals(&self) -> &[f64] {
        &self.actuals
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn len(&self) -> usize {
        self.actuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actuals.is_empty()
    }
}
