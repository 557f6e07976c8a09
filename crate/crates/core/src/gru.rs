//! A single GRU unit with a linear scalar readout, trained by hand-derived
//! backpropagation through time.
//!
//! With input `x` (dimension `d`), previous state `s` and hidden size `h`:
//!
//! ```text
//! z  = sigmoid(x·U_z + s·W_z + b_z)
//! r  = sigmoid(x·U_r + s·W_r + b_r)
//! v  = tanh(x·U_v + (s∘r)·W_v + b_v)
//! s' = z∘v + (1 - z)∘s
//! y  = readout_w·s_T + readout_b
//! ```
//!
//! Row vectors multiply from the left, so `U` is `d×h` and `W` is `h×h`,
//! both row-major.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::optim::{apply_anchors, minimize, Anchor, OptimConfig, TrainTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Update,
    Reset,
    Candidate,
}

impl Gate {
    fn block(self) -> usize {
        match self {
            Gate::Update => 0,
            Gate::Reset => 1,
            Gate::Candidate => 2,
        }
    }
}

/// Parameters of one GRU unit, stored as a single flat vector.
///
/// Flat layout, for each gate in the order update, reset, candidate:
/// `U` (`d·h`), `W` (`h·h`), `b` (`h`); then `readout_w` (`h`) and
/// `readout_b` (1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    hidden: usize,
    input_dim: usize,
    data: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Layout {
    h: usize,
    d: usize,
}

impl Layout {
    fn block_len(self) -> usize {
        self.d * self.h + self.h * self.h + self.h
    }
    fn u(self, g: usize) -> usize {
        g * self.block_len()
    }
    fn w(self, g: usize) -> usize {
        self.u(g) + self.d * self.h
    }
    fn b(self, g: usize) -> usize {
        self.w(g) + self.h * self.h
    }
    fn readout_w(self) -> usize {
        3 * self.block_len()
    }
    fn readout_b(self) -> usize {
        self.readout_w() + self.h
    }
    fn len(self) -> usize {
        self.readout_b() + 1
    }
}

impl GruParams {
    pub fn n_params(hidden: usize, input_dim: usize) -> usize {
        Layout {
            h: hidden,
            d: input_dim,
        }
        .len()
    }

    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        assert!(
            hidden >= 1 && input_dim >= 1,
            "GRU dimensions must be positive"
        );
        Self {
            hidden,
            input_dim,
            data: vec![0.0; Self::n_params(hidden, input_dim)],
        }
    }

    /// Every entry drawn from `uniform(-scale, scale)`.
    pub fn random<R: Rng + ?Sized>(
        hidden: usize,
        input_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(hidden, input_dim);
        for x in p.data.iter_mut() {
            *x = scale * (2.0 * rng.random::<f64>() - 1.0);
        }
        p
    }

    pub fn from_flat(hidden: usize, input_dim: usize, data: Vec<f64>) -> Result<Self> {
        if hidden == 0 || input_dim == 0 {
            return Err(Error::InvalidArgument(
                "GRU dimensions must be positive".into(),
            ));
        }
        let expected = Self::n_params(hidden, input_dim);
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "GRU parameters must be finite".into(),
            ));
        }
        Ok(Self {
            hidden,
            input_dim,
            data,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn flatten(&self) -> &[f64] {
        &self.data
    }

    pub fn flatten_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    fn layout(&self) -> Layout {
        Layout {
            h: self.hidden,
            d: self.input_dim,
        }
    }

    pub fn u(&self, gate: Gate) -> &[f64] {
        let l = self.layout();
        &self.data[l.u(gate.block())..l.w(gate.block())]
    }

    pub fn w(&self, gate: Gate) -> &[f64] {
        let l = self.layout();
        &self.data[l.w(gate.block())..l.b(gate.block())]
    }

    pub fn b(&self, gate: Gate) -> &[f64] {
        let l = self.layout();
        &self.data[l.b(gate.block())..l.b(gate.block()) + l.h]
    }

    pub fn readout_w(&self) -> &[f64] {
        let l = self.layout();
        &self.data[l.readout_w()..l.readout_b()]
    }

    pub fn readout_b(&self) -> f64 {
        self.data[self.layout().readout_b()]
    }

    pub fn u_mut(&mut self, gate: Gate) -> &mut [f64] {
        let l = self.layout();
        &mut self.data[l.u(gate.block())..l.w(gate.block())]
    }

    pub fn w_mut(&mut self, gate: Gate) -> &mut [f64] {
        let l = self.layout();
        &mut self.data[l.w(gate.block())..l.b(gate.block())]
    }

    pub fn b_mut(&mut self, gate: Gate) -> &mut [f64] {
        let l = self.layout();
        let start = l.b(gate.block());
        &mut self.data[start..start + l.h]
    }

    pub fn readout_w_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.data[l.readout_w()..l.readout_b()]
    }

    pub fn set_readout_b(&mut self, b: f64) {
        let i = self.layout().readout_b();
        self.data[i] = b;
    }

    /// Euclidean distance between two parameter sets of the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        libm::sqrt(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        )
    }
}

/// Hidden state `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub s: Vec<f64>,
}

impl GruState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            s: vec![0.0; hidden],
        }
    }
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-a))
}

/// Gate activations of one step.
struct StepOut<'a> {
    z: &'a mut [f64],
    r: &'a mut [f64],
    v: &'a mut [f64],
    q: &'a mut [f64],
    s_next: &'a mut [f64],
}

fn step_into(l: Layout, theta: &[f64], s: &[f64], x: &[f64], out: StepOut<'_>) {
    let h = l.h;
    let gate_pre = |g: usize, state: &[f64], j: usize| -> f64 {
        let u = &theta[l.u(g)..];
        let w = &theta[l.w(g)..];
        let mut a = theta[l.b(g) + j];
        for (d, xd) in x.iter().enumerate() {
            a += xd * u[d * h + j];
        }
        for (i, si) in state.iter().enumerate() {
            a += si * w[i * h + j];
        }
        a
    };
    for j in 0..h {
        out.z[j] = sigmoid(gate_pre(0, s, j));
        out.r[j] = sigmoid(gate_pre(1, s, j));
    }
    for i in 0..h {
        out.q[i] = s[i] * out.r[i];
    }
    for j in 0..h {
        out.v[j] = libm::tanh(gate_pre(2, out.q, j));
        out.s_next[j] = out.z[j] * out.v[j] + (1.0 - out.z[j]) * s[j];
    }
}

/// One GRU step from `s_prev` on input `x` (length `input_dim`).
pub fn gru_step(p: &GruParams, s_prev: &GruState, x: &[f64]) -> GruState {
    assert_eq!(x.len(), p.input_dim, "input dimension");
    assert_eq!(s_prev.s.len(), p.hidden, "state dimension");
    let h = p.hidden;
    let mut buf = vec![0.0; 5 * h];
    let (z, rest) = buf.split_at_mut(h);
    let (r, rest) = rest.split_at_mut(h);
    let (v, rest) = rest.split_at_mut(h);
    let (q, s_next) = rest.split_at_mut(h);
    step_into(
        p.layout(),
        &p.data,
        &s_prev.s,
        x,
        StepOut { z, r, v, q, s_next },
    );
    GruState { s: s_next.to_vec() }
}

fn steps_of(l: Layout, inputs: &[f64]) -> Result<usize> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if inputs.len() % l.d != 0 {
        return Err(Error::ShapeMismatch {
            expected: l.d * (inputs.len() / l.d + 1),
            found: inputs.len(),
        });
    }
    Ok(inputs.len() / l.d)
}

/// Forward activations cached for backpropagation.
struct Tape {
    /// `(T + 1)·h` states; `states[0..h]` is the zero initial state.
    states: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    v: Vec<f64>,
    q: Vec<f64>,
}

impl Tape {
    fn new() -> Self {
        Self {
            states: Vec::new(),
            z: Vec::new(),
            r: Vec::new(),
            v: Vec::new(),
            q: Vec::new(),
        }
    }

    fn run(&mut self, l: Layout, theta: &[f64], inputs: &[f64], steps: usize) -> f64 {
        let h = l.h;
        self.states.clear();
        self.states.resize((steps + 1) * h, 0.0);
        for buf in [&mut self.z, &mut self.r, &mut self.v, &mut self.q] {
            buf.clear();
            buf.resize(steps * h, 0.0);
        }
        for t in 0..steps {
            let (prev, next) = self.states.split_at_mut((t + 1) * h);
            step_into(
                l,
                theta,
                &prev[t * h..],
                &inputs[t * l.d..(t + 1) * l.d],
                StepOut {
                    z: &mut self.z[t * h..(t + 1) * h],
                    r: &mut self.r[t * h..(t + 1) * h],
                    v: &mut self.v[t * h..(t + 1) * h],
                    q: &mut self.q[t * h..(t + 1) * h],
                    s_next: &mut next[..h],
                },
            );
        }
        let last = &self.states[steps * h..];
        let ro = &theta[l.readout_w()..l.readout_b()];
        theta[l.readout_b()] + last.iter().zip(ro).map(|(s, w)| s * w).sum::<f64>()
    }

    /// Accumulates `dy · ∂y/∂theta` into `grad`.
    fn backward(
        &self,
        l: Layout,
        theta: &[f64],
        inputs: &[f64],
        steps: usize,
        dy: f64,
        grad: &mut [f64],
    ) {
        let h = l.h;
        let ro = &theta[l.readout_w()..l.readout_b()];
        let last = &self.states[steps * h..];
        for j in 0..h {
            grad[l.readout_w() + j] += dy * last[j];
        }
        grad[l.readout_b()] += dy;

        let mut ds: Vec<f64> = ro.iter().map(|w| dy * w).collect();
        let mut ds_prev = vec![0.0; h];
        let mut da = vec![0.0; h];
        let mut dq = vec![0.0; h];
        let mut dz = vec![0.0; h];
        for t in (0..steps).rev() {
            let s = &self.states[t * h..(t + 1) * h];
            let x = &inputs[t * l.d..(t + 1) * l.d];
            let z = &self.z[t * h..(t + 1) * h];
            let r = &self.r[t * h..(t + 1) * h];
            let v = &self.v[t * h..(t + 1) * h];
            let q = &self.q[t * h..(t + 1) * h];

            for j in 0..h {
                ds_prev[j] = ds[j] * (1.0 - z[j]);
                dz[j] = ds[j] * (v[j] - s[j]);
                // candidate pre-activation
                da[j] = ds[j] * z[j] * (1.0 - v[j] * v[j]);
            }
            accumulate_gate(l, 2, x, q, &da, grad);
            let wv = &theta[l.w(2)..l.b(2)];
            for i in 0..h {
                dq[i] = (0..h).map(|j| wv[i * h + j] * da[j]).sum();
                ds_prev[i] += dq[i] * r[i];
            }

            // reset gate
            for j in 0..h {
                da[j] = dq[j] * s[j] * r[j] * (1.0 - r[j]);
            }
            accumulate_gate(l, 1, x, s, &da, grad);
            propagate_state(l, 1, theta, &da, &mut ds_prev);

            // update gate
            for j in 0..h {
                da[j] = dz[j] * z[j] * (1.0 - z[j]);
            }
            accumulate_gate(l, 0, x, s, &da, grad);
            propagate_state(l, 0, theta, &da, &mut ds_prev);

            core::mem::swap(&mut ds, &mut ds_prev);
        }
    }
}

/// Gradient of a gate's `U`, `W`, `b` given its pre-activation gradient `da`
/// and the state-side input `state` that multiplied `W`.
fn accumulate_gate(l: Layout, g: usize, x: &[f64], state: &[f64], da: &[f64], grad: &mut [f64]) {
    let h = l.h;
    let (u0, w0, b0) = (l.u(g), l.w(g), l.b(g));
    for (d, xd) in x.iter().enumerate() {
        for j in 0..h {
            grad[u0 + d * h + j] += xd * da[j];
        }
    }
    for (i, si) in state.iter().enumerate() {
        for j in 0..h {
            grad[w0 + i * h + j] += si * da[j];
        }
    }
    for j in 0..h {
        grad[b0 + j] += da[j];
    }
}

fn propagate_state(l: Layout, g: usize, theta: &[f64], da: &[f64], ds_prev: &mut [f64]) {
    let h = l.h;
    let w = &theta[l.w(g)..l.b(g)];
    for i in 0..h {
        ds_prev[i] += (0..h).map(|j| w[i * h + j] * da[j]).sum::<f64>();
    }
}

/// Runs the unit over `inputs` (time-major, `input_dim` values per step) from
/// the zero state and returns the readout of the final state.
pub fn predict_sequence(p: &GruParams, inputs: &[f64]) -> Result<f64> {
    let l = p.layout();
    let steps = steps_of(l, inputs)?;
    Ok(Tape::new().run(l, &p.data, inputs, steps))
}

fn data_loss_and_grad(
    l: Layout,
    theta: &[f64],
    windows: &[Window],
    idx: &[usize],
    grad: &mut [f64],
) -> Result<f64> {
    let n = idx.len() as f64;
    let mut tape = Tape::new();
    let mut sse = 0.0;
    for &i in idx {
        let w = &windows[i];
        let steps = steps_of(l, &w.inputs)?;
        let y = tape.run(l, theta, &w.inputs, steps);
        let err = y - w.target;
        sse += err * err;
        tape.backward(l, theta, &w.inputs, steps, 2.0 * err / n, grad);
    }
    Ok(sse / n)
}

fn objective(
    l: Layout,
    theta: &[f64],
    windows: &[Window],
    idx: &[usize],
    anchors: &[Anchor<'_>],
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; theta.len()];
    let mse = if idx.is_empty() {
        0.0
    } else {
        data_loss_and_grad(l, theta, windows, idx, &mut grad)?
    };
    let penalty = apply_anchors(theta, anchors, &mut grad)?;
    Ok((mse + penalty, grad))
}

/// `mean((target - prediction)^2) + Σ coeff·||theta - anchor||^2` and its
/// exact gradient.
pub fn loss_and_grad(
    p: &GruParams,
    batch: &[Window],
    anchors: &[Anchor<'_>],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty);
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    objective(p.layout(), &p.data, batch, &idx, anchors)
}

/// Trains `init` on `windows` with the given anchors. An empty window set
/// leaves only the anchor terms.
pub fn optimize<R: Rng + ?Sized>(
    init: GruParams,
    windows: &[Window],
    cfg: &OptimConfig,
    anchors: &[Anchor<'_>],
    rng: &mut R,
) -> Result<(GruParams, TrainTrace)> {
    let l = init.layout();
    for a in anchors {
        if a.target.len() != init.data.len() {
            return Err(Error::ShapeMismatch {
                expected: init.data.len(),
                found: a.target.len(),
            });
        }
    }
    let mut p = init;
    let trace = minimize(&mut p.data, windows.len(), cfg, rng, |theta, idx| {
        objective(l, theta, windows, idx, anchors)
    })?;
    Ok((p, trace))
}
