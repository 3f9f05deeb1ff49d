//! Single-hidden-layer perceptron with a rectifier hidden layer.
//!
//! All parameters live in one flat vector laid out as
//! `[W1 (hidden x inputs, row-major) | b1 (hidden) | W2 (hidden) | b2]`,
//! which lets gradients and optimizer state share the same shape.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{bail, Error, Result};
use crate::loss::sigmoid;
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Output head applied to the second-layer affine output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Head {
    Identity,
    Logistic,
}

impl Head {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Head::Identity => z,
            Head::Logistic => sigmoid(z),
        }
    }

    /// Derivative of the head output with respect to its input, expressed
    /// through the output value.
    #[inline]
    pub fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Head::Identity => 1.0,
            Head::Logistic => out * (1.0 - out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpParams {
    inputs: usize,
    hidden: usize,
    head: Head,
    theta: Vec<f64>,
}

impl MlpParams {
    pub fn num_params(inputs: usize, hidden: usize) -> usize {
        hidden * inputs + 2 * hidden + 1
    }

    pub fn zeros(inputs: usize, hidden: usize, head: Head) -> Result<Self> {
        Self::from_flat(inputs, hidden, head, vec![0.0; Self::num_params(inputs, hidden)])
    }

    pub fn from_flat(inputs: usize, hidden: usize, head: Head, theta: Vec<f64>) -> Result<Self> {
        if inputs == 0 || hidden == 0 {
            bail!(InvalidInput, "network needs at least one input and one hidden unit");
        }
        if theta.len() != Self::num_params(inputs, hidden) {
            bail!(
                Dimension,
                "{} parameters for a {}-{}-1 network",
                theta.len(),
                inputs,
                hidden
            );
        }
        if theta.iter().any(|v| !v.is_finite()) {
            bail!(NonFinite, "network parameters");
        }
        Ok(MlpParams {
            inputs,
            hidden,
            head,
            theta,
        })
    }

    /// Fan-in scaled uniform weights, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// and zero biases.
    pub fn init(inputs: usize, hidden: usize, head: Head, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(inputs, hidden, head)?;
        let a1 = 1.0 / libm::sqrt(inputs as f64);
        let a2 = 1.0 / libm::sqrt(hidden as f64);
        let (w1_end, w2_start) = (hidden * inputs, hidden * inputs + hidden);
        for w in &mut p.theta[..w1_end] {
            *w = rng.random_range(-a1..a1);
        }
        for w in &mut p.theta[w2_start..w2_start + hidden] {
            *w = rng.random_range(-a2..a2);
        }
        Ok(p)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }
    pub fn hidden(&self) -> usize {
        self.hidden
    }
    pub fn head(&self) -> Head {
        self.head
    }
    pub fn as_flat(&self) -> &[f64] {
        &self.theta
    }
    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn w1(&self) -> &[f64] {
        &self.theta[..self.hidden * self.inputs]
    }
    pub fn b1(&self) -> &[f64] {
        let s = self.hidden * self.inputs;
        &self.theta[s..s + self.hidden]
    }
    pub fn w2(&self) -> &[f64] {
        let s = self.hidden * self.inputs + self.hidden;
        &self.theta[s..s + self.hidden]
    }
    pub fn b2(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }

    fn zeros_like(&self) -> MlpParams {
        MlpParams {
            theta: vec![0.0; self.theta.len()],
            ..*self
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.inputs {
            bail!(
                Dimension,
                "input has {} columns, network expects {}",
                x.ncols(),
                self.inputs
            );
        }
        Ok(())
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Pass {
    /// Post-rectifier hidden activations, `n x hidden`.
    hidden: Vec<f64>,
    /// Second-layer affine outputs.
    pub logits: Vec<f64>,
    /// Head outputs (predictions).
    pub outputs: Vec<f64>,
}

pub fn forward_pass(params: &MlpParams, x: &Matrix) -> Result<Pass> {
    params.check_input(x)?;
    let (h, d) = (params.hidden, params.inputs);
    let (w1, b1, w2, b2) = (params.w1(), params.b1(), params.w2(), params.b2());
    let n = x.nrows();
    let mut hidden = vec![0.0; n * h];
    let mut logits = Vec::with_capacity(n);
    for (k, row) in x.rows().enumerate() {
        let act = &mut hidden[k * h..(k + 1) * h];
        let mut z = b2;
        for u in 0..h {
            let wr = &w1[u * d..(u + 1) * d];
            let mut s = b1[u];
            for (w, xv) in wr.iter().zip(row) {
                s += w * xv;
            }
            let a = s.max(0.0);
            act[u] = a;
            z += w2[u] * a;
        }
        logits.push(z);
    }
    let outputs = logits.iter().map(|&z| params.head.apply(z)).collect();
    Ok(Pass {
        hidden,
        logits,
        outputs,
    })
}

/// Network predictions for every row of `x`: the raw affine output for the
/// identity head, probabilities for the logistic head.
pub fn forward(params: &MlpParams, x: &Matrix) -> Result<Vec<f64>> {
    Ok(forward_pass(params, x)?.outputs)
}

/// Accumulates into `grad` the parameter gradient given the gradient of the
/// objective with respect to the logits of one pass.
fn backward(params: &MlpParams, x: &Matrix, pass: &Pass, dlogits: &[f64], grad: &mut [f64]) {
    let (h, d) = (params.hidden, params.inputs);
    let w2 = params.w2();
    let (w1_end, b1_end) = (h * d, h * d + h);
    let (gw1, rest) = grad.split_at_mut(w1_end);
    let (gb1, rest) = rest.split_at_mut(b1_end - w1_end);
    let (gw2, gb2) = rest.split_at_mut(h);
    for (k, row) in x.rows().enumerate() {
        let dz = dlogits[k];
        if dz == 0.0 {
            continue;
        }
        gb2[0] += dz;
        let act = &pass.hidden[k * h..(k + 1) * h];
        for u in 0..h {
            gw2[u] += dz * act[u];
            if act[u] > 0.0 {
                let da = dz * w2[u];
                gb1[u] += da;
                for (g, xv) in gw1[u * d..(u + 1) * d].iter_mut().zip(row) {
                    *g += da * xv;
                }
            }
        }
    }
}

/// Forward outputs handed to an objective: one entry per input matrix.
pub struct PassOutputs<'a> {
    pub logits: &'a [f64],
    pub outputs: &'a [f64],
}

/// Evaluates `objective` on the network outputs for each of `inputs` and
/// returns the loss with its exact gradient with respect to the parameters.
///
/// The objective receives one [`PassOutputs`] per input matrix and must
/// return the loss together with its gradient with respect to each pass's
/// logits.
pub fn loss_and_grad<F>(params: &MlpParams, inputs: &[&Matrix], objective: F) -> Result<(f64, MlpParams)>
where
    F: FnOnce(&[PassOutputs<'_>]) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let passes = inputs
        .iter()
        .map(|x| forward_pass(params, x))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<PassOutputs<'_>> = passes
        .iter()
        .map(|p| PassOutputs {
            logits: &p.logits,
            outputs: &p.outputs,
        })
        .collect();
    let (loss, dlogits) = objective(&views)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(alloc::format!("objective value {}", loss)));
    }
    if dlogits.len() != passes.len() {
        bail!(Dimension, "objective returned {} gradients for {} passes", dlogits.len(), passes.len());
    }
    let mut grad = params.zeros_like();
    for ((x, pass), dz) in inputs.iter().zip(&passes).zip(&dlogits) {
        if dz.len() != pass.logits.len() {
            bail!(Dimension, "gradient length {} for {} outputs", dz.len(), pass.logits.len());
        }
        backward(params, x, pass, dz, &mut grad.theta);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut MlpParams, grads: &MlpParams, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let n = params.theta.len();
    if grads.theta.len() != n || state.m.len() != n {
        bail!(Dimension, "optimizer state does not match parameter count {}", n);
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for i in 0..n {
        let g = grads.theta[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params.theta[i] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}
