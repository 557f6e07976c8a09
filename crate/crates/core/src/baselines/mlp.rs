use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::optim::{minimize, LrSchedule, Method, OptimConfig, TrainTrace};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    /// Hidden layer widths; the output layer has one unit.
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub method: Method,
    pub schedule: LrSchedule,
    /// Start the output layer at zero so every initial prediction is 0.
    pub zero_output: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self::fc()
    }
}

impl MlpConfig {
    /// One ReLU layer of 100 units.
    pub fn fc() -> Self {
        Self {
            hidden: vec![100],
            lr: 0.005,
            epochs: 300,
            batch_size: None,
            method: Method::default(),
            schedule: LrSchedule::default(),
            zero_output: false,
            seed: 0,
        }
    }

    /// Ten ReLU layers of 100 units, lr 0.005, 50 epochs.
    pub fn deep() -> Self {
        Self {
            hidden: vec![100; 10],
            epochs: 50,
            batch_size: Some(32),
            ..Self::fc()
        }
    }

    fn optim(&self) -> OptimConfig {
        OptimConfig {
            method: self.method,
            lr: self.lr,
            schedule: self.schedule,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }
}

/// Fully connected network, ReLU on hidden layers and identity on the output.
///
/// Parameters are flat: for every layer its `in x out` weights (row-major,
/// input index first) followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
}

impl MlpModel {
    pub fn new(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidArgument("bad layer sizes".into()));
        }
        let expected = n_params(&sizes);
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(Self { sizes, params })
    }

    /// He-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(
        sizes: Vec<usize>,
        zero_output: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Vec::with_capacity(n_params(&sizes));
        let last = sizes.len().saturating_sub(2);
        for (l, p) in sizes.windows(2).enumerate() {
            let limit = libm::sqrt(6.0 / p[0] as f64);
            for _ in 0..p[0] * p[1] {
                let w = if zero_output && l == last {
                    0.0
                } else {
                    rng.random_range(-limit..limit)
                };
                params.push(w);
            }
            params.extend(core::iter::repeat_n(0.0, p[1]));
        }
        Self::new(sizes, params)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.sizes[0] {
            return Err(Error::WrongLength {
                expected: self.sizes[0],
                found: x.len(),
            });
        }
        Ok(forward(&self.sizes, &self.params, x, &mut Vec::new()))
    }
}

/// Stores every layer's post-activation output in `acts` (input first).
fn forward(sizes: &[usize], theta: &[f64], x: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
    acts.clear();
    acts.push(x.to_vec());
    let mut off = 0;
    let n_layers = sizes.len() - 1;
    for l in 0..n_layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &theta[off..off + n_in * n_out];
        let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
        let input = &acts[l];
        let mut out = b.to_vec();
        for (i, xi) in input.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = &w[i * n_out..(i + 1) * n_out];
            for (o, wij) in out.iter_mut().zip(row) {
                *o += xi * wij;
            }
        }
        if l + 1 < n_layers {
            for o in &mut out {
                *o = o.max(0.0);
            }
        }
        acts.push(out);
        off += n_in * n_out + n_out;
    }
    acts[n_layers][0]
}

fn backward(sizes: &[usize], theta: &[f64], acts: &[Vec<f64>], dy: f64, grad: &mut [f64]) {
    let n_layers = sizes.len() - 1;
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for p in sizes.windows(2) {
        offsets.push(off);
        off += p[0] * p[1] + p[1];
    }
    let mut delta = vec![dy];
    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let off = offsets[l];
        let input = &acts[l];
        for (i, xi) in input.iter().enumerate() {
            for (j, dj) in delta.iter().enumerate() {
                grad[off + i * n_out + j] += xi * dj;
            }
        }
        for (j, dj) in delta.iter().enumerate() {
            grad[off + n_in * n_out + j] += dj;
        }
        if l == 0 {
            break;
        }
        let w = &theta[off..off + n_in * n_out];
        // ReLU derivative taken as 0 at the kink
        delta = (0..n_in)
            .map(|i| {
                if input[i] > 0.0 {
                    let row = &w[i * n_out..(i + 1) * n_out];
                    row.iter().zip(&delta).map(|(a, b)| a * b).sum()
                } else {
                    0.0
                }
            })
            .collect();
    }
}

/// Mean squared error over `idx` and its gradient.
pub fn mlp_loss_and_grad(
    sizes: &[usize],
    theta: &[f64],
    windows: &[Window],
    idx: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; theta.len()];
    if idx.is_empty() {
        return Ok((0.0, grad));
    }
    let n = idx.len() as f64;
    let mut acts = Vec::new();
    let mut sse = 0.0;
    for &i in idx {
        let w = &windows[i];
        if w.inputs.len() != sizes[0] {
            return Err(Error::WrongLength {
                expected: sizes[0],
                found: w.inputs.len(),
            });
        }
        let y = forward(sizes, theta, &w.inputs, &mut acts);
        let err = y - w.target;
        sse += err * err;
        backward(sizes, theta, &acts, 2.0 * err / n, &mut grad);
    }
    Ok((sse / n, grad))
}

pub fn fit_mlp(windows: &[Window], cfg: &MlpConfig) -> Result<(MlpModel, TrainTrace)> {
    let d = windows
        .first()
        .ok_or(Error::NoTrainingData(None))?
        .inputs
        .len();
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    let mut sizes = Vec::with_capacity(cfg.hidden.len() + 2);
    sizes.push(d);
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut rng = rng_for(cfg.seed);
    let mut model = MlpModel::random(sizes, cfg.zero_output, &mut rng)?;
    let sizes = model.sizes.clone();
    let trace = minimize(
        &mut model.params,
        windows.len(),
        &cfg.optim(),
        &mut rng,
        |theta, idx| mlp_loss_and_grad(&sizes, theta, windows, idx),
    )?;
    Ok((model, trace))
}
