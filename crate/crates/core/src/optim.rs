//! First-order optimizers over flat parameter vectors, shared by the GRU and
//! MLP trainers.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadratic pull `coeff * ||theta - target||^2`.
#[derive(Debug, Clone, Copy)]
pub struct Anchor<'a> {
    pub target: &'a [f64],
    pub coeff: f64,
}

impl<'a> Anchor<'a> {
    pub fn new(target: &'a [f64], coeff: f64) -> Self {
        Self { target, coeff }
    }
}

/// Adds every anchor's penalty to `loss` and its gradient to `grad`.
/// Anchors with a zero coefficient are skipped entirely.
pub fn apply_anchors(theta: &[f64], anchors: &[Anchor<'_>], grad: &mut [f64]) -> Result<f64> {
    let mut penalty = 0.0;
    for a in anchors {
        if a.target.len() != theta.len() {
            return Err(Error::ShapeMismatch {
                expected: theta.len(),
                found: a.target.len(),
            });
        }
        if a.coeff == 0.0 {
            continue;
        }
        let mut sq = 0.0;
        for ((g, t), p) in grad.iter_mut().zip(a.target).zip(theta) {
            let d = p - t;
            sq += d * d;
            *g += 2.0 * a.coeff * d;
        }
        penalty += a.coeff * sq;
    }
    Ok(penalty)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Method {
    fn default() -> Self {
        Method::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate towards zero over the run.
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub method: Method,
    pub lr: f64,
    pub schedule: LrSchedule,
    pub epochs: usize,
    /// `None` trains on the full batch every epoch, in data order.
    pub batch_size: Option<usize>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            method: Method::default(),
            lr: 0.005,
            schedule: LrSchedule::default(),
            epochs: 300,
            batch_size: None,
        }
    }
}

/// Optimizer state: step counter and per-parameter moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    method: Method,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimState {
    pub fn new(method: Method, n_params: usize) -> Self {
        let (m, v) = match method {
            Method::Adam { .. } => (vec![0.0; n_params], vec![0.0; n_params]),
            Method::Sgd => (Vec::new(), Vec::new()),
        };
        Self {
            method,
            step: 0,
            m,
            v,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        match self.method {
            Method::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Method::Adam { beta1, beta2, eps } => {
                let t = self.step as f64;
                let c1 = 1.0 - libm::pow(beta1, t);
                let c2 = 1.0 - libm::pow(beta2, t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
                }
            }
        }
    }
}

fn lr_at(cfg: &OptimConfig, step: usize, total: usize) -> f64 {
    match cfg.schedule {
        LrSchedule::Constant => cfg.lr,
        LrSchedule::Cosine => {
            let frac = step as f64 / total.max(1) as f64;
            0.5 * cfg.lr * (1.0 + libm::cos(core::f64::consts::PI * frac))
        }
    }
}

/// Loss trajectory summary of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: usize,
    pub steps: u64,
}

/// Runs `cfg.epochs` passes of first-order descent on `params`.
///
/// `objective(theta, batch)` returns the loss and gradient over the sample
/// indices in `batch`. Full-batch runs never touch `rng`. A non-finite loss or
/// gradient aborts with [`Error::DivergenceDetected`] carrying the last finite
/// parameters.
pub fn minimize<R, F>(
    params: &mut [f64],
    n_samples: usize,
    cfg: &OptimConfig,
    rng: &mut R,
    mut objective: F,
) -> Result<TrainTrace>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
{
    if !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
        return Err(Error::InvalidArgument(
            "learning rate must be finite and nonnegative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    let batch = match cfg.batch_size {
        Some(b) if b > 0 => b.min(n_samples.max(1)),
        _ => n_samples.max(1),
    };
    let per_epoch = n_samples.div_ceil(batch).max(1);
    let total = per_epoch * cfg.epochs;
    let mut state = OptimState::new(cfg.method, params.len());

    let diverged = |epoch: usize, last: &[f64]| Error::DivergenceDetected {
        epoch,
        last_finite: last.to_vec(),
    };
    let (initial_loss, _) = objective(params, &order)?;
    if !initial_loss.is_finite() {
        return Err(diverged(0, params));
    }

    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        if batch < n_samples {
            order.shuffle(rng);
        }
        for chunk in order.chunks(batch) {
            let (loss, grad) = objective(params, chunk)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged(epoch, params));
            }
            let before = params.to_vec();
            state.update(params, &grad, lr_at(cfg, step, total));
            step += 1;
            if params.iter().any(|p| !p.is_finite()) {
                return Err(diverged(epoch, &before));
            }
        }
    }
    let full: Vec<usize> = (0..n_samples).collect();
    let (final_loss, _) = objective(params, &full)?;
    if !final_loss.is_finite() {
        return Err(diverged(cfg.epochs, params));
    }
    Ok(TrainTrace {
        initial_loss,
        final_loss,
        epochs: cfg.epochs,
        steps: state.steps(),
    })
}
