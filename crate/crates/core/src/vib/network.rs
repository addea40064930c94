//! Encoder/decoder parameters and the hand-written reverse pass of the
//! variational objective.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::{kl_unchecked, Likelihood};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Relu => a.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer; `weight` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Weights and biases uniform on `±1/√fan_in`.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || (rng.random::<f64>() * 2.0 - 1.0) * bound;
        let weight = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Dense { inputs, outputs, weight, bias }
    }

    #[inline]
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weight.chunks_exact(self.inputs).zip(&self.bias)) {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients for upstream `da` and input `x`, and
    /// adds `Wᵀ da` into `dx` when requested.
    #[inline]
    fn backward(&self, x: &[f64], da: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        for ((g_row, gb), d) in grad.weight.chunks_exact_mut(self.inputs).zip(grad.bias.iter_mut()).zip(da) {
            *gb += d;
            for (g, v) in g_row.iter_mut().zip(x) {
                *g += d * v;
            }
        }
        if let Some(dx) = dx {
            for (row, d) in self.weight.chunks_exact(self.inputs).zip(da) {
                for (o, w) in dx.iter_mut().zip(row) {
                    *o += d * w;
                }
            }
        }
    }
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibParams {
    pub encoder: Vec<Dense>,
    pub mean_head: Dense,
    pub logvar_head: Dense,
    pub decoder: Vec<Dense>,
    pub output: Dense,
    pub log_scale: f64,
}

impl VibParams {
    /// Encoder `inputs → hidden… → (μ, logvar)` and decoder
    /// `latent → reversed hidden… → location`.
    pub fn init<R: Rng>(inputs: usize, hidden: &[usize], latent: usize, rng: &mut R) -> Self {
        let mut encoder = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for &h in hidden {
            encoder.push(Dense::init(width, h, rng));
            width = h;
        }
        let mean_head = Dense::init(width, latent, rng);
        let logvar_head = Dense::init(width, latent, rng);
        let mut decoder = Vec::with_capacity(hidden.len());
        let mut width = latent;
        for &h in hidden.iter().rev() {
            decoder.push(Dense::init(width, h, rng));
            width = h;
        }
        let output = Dense::init(width, 1, rng);
        VibParams { encoder, mean_head, logvar_head, decoder, output, log_scale: 0.0 }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs, d.outputs);
        VibParams {
            encoder: self.encoder.iter().map(z).collect(),
            mean_head: z(&self.mean_head),
            logvar_head: z(&self.logvar_head),
            decoder: self.decoder.iter().map(z).collect(),
            output: z(&self.output),
            log_scale: 0.0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_head.outputs
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.first().unwrap_or(&self.mean_head).inputs
    }

    /// Named views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, d) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.weight"), &d.weight));
            out.push((format!("encoder.{i}.bias"), &d.bias));
        }
        out.push(("mean_head.weight".into(), &self.mean_head.weight));
        out.push(("mean_head.bias".into(), &self.mean_head.bias));
        out.push(("logvar_head.weight".into(), &self.logvar_head.weight));
        out.push(("logvar_head.bias".into(), &self.logvar_head.bias));
        for (i, d) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{i}.weight"), &d.weight));
            out.push((format!("decoder.{i}.bias"), &d.bias));
        }
        out.push(("output.weight".into(), &self.output.weight));
        out.push(("output.bias".into(), &self.output.bias));
        out.push(("log_scale".into(), core::slice::from_ref(&self.log_scale)));
        out
    }

    /// Mutable views in the same order as [`VibParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for d in &mut self.encoder {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out.push(&mut self.mean_head.weight);
        out.push(&mut self.mean_head.bias);
        out.push(&mut self.logvar_head.weight);
        out.push(&mut self.logvar_head.bias);
        for d in &mut self.decoder {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out.push(core::slice::from_mut(&mut self.log_scale));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Settings of the objective that are fixed during one optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub beta: f64,
    pub likelihood: Likelihood,
    pub activation: Activation,
    /// Sample `z = μ + σ ⊙ ε`; when false `z = μ` and ε is ignored.
    pub stochastic: bool,
    /// Whether the global log-scale receives gradient.
    pub learn_scale: bool,
}

/// Per-sample activations reused across a batch.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    enc: Vec<Vec<f64>>,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    z: Vec<f64>,
    dec: Vec<Vec<f64>>,
    d_dec: Vec<Vec<f64>>,
    d_enc: Vec<Vec<f64>>,
    d_mu: Vec<f64>,
    d_logvar: Vec<f64>,
    d_z: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(params: &VibParams) -> Self {
        let enc: Vec<Vec<f64>> = params.encoder.iter().map(|d| vec![0.0; d.outputs]).collect();
        let dec: Vec<Vec<f64>> = params.decoder.iter().map(|d| vec![0.0; d.outputs]).collect();
        let k = params.latent_dim();
        Workspace {
            d_enc: enc.clone(),
            d_dec: dec.clone(),
            enc,
            dec,
            mu: vec![0.0; k],
            logvar: vec![0.0; k],
            z: vec![0.0; k],
            d_mu: vec![0.0; k],
            d_logvar: vec![0.0; k],
            d_z: vec![0.0; k],
        }
    }
}

fn run_stack(layers: &[Dense], act: Activation, input: &[f64], outs: &mut [Vec<f64>]) {
    for k in 0..layers.len() {
        let (done, rest) = outs.split_at_mut(k);
        let x = if k == 0 { input } else { &done[k - 1] };
        let out = &mut rest[0];
        layers[k].forward(x, out);
        for v in out.iter_mut() {
            *v = act.apply(*v);
        }
    }
}

/// Encoder heads `(μ, logvar)` for one input row.
pub(crate) fn encode_into(params: &VibParams, act: Activation, x: &[f64], ws: &mut Workspace) {
    run_stack(&params.encoder, act, x, &mut ws.enc);
    let h = ws.enc.last().map_or(x, Vec::as_slice);
    params.mean_head.forward(h, &mut ws.mu);
    params.logvar_head.forward(h, &mut ws.logvar);
}

/// Decoder location for the latent currently stored in `ws.z`.
pub(crate) fn decode(params: &VibParams, act: Activation, ws: &mut Workspace) -> f64 {
    run_stack(&params.decoder, act, &ws.z, &mut ws.dec);
    let g = ws.dec.last().map_or(ws.z.as_slice(), Vec::as_slice);
    let mut loc = [0.0];
    params.output.forward(g, &mut loc);
    loc[0]
}

pub(crate) fn latent_mean(ws: &Workspace) -> &[f64] {
    &ws.mu
}

pub(crate) fn latent_logvar(ws: &Workspace) -> &[f64] {
    &ws.logvar
}

pub(crate) fn set_latent_to_mean(ws: &mut Workspace) {
    ws.z.copy_from_slice(&ws.mu);
}

/// Loss of one datum, accumulating `weight · ∂loss/∂θ` into `grad` when given.
pub(crate) fn sample_loss(
    params: &VibParams,
    obj: &Objective,
    x: &[f64],
    t: f64,
    eps: &[f64],
    ws: &mut Workspace,
    grad: Option<(&mut VibParams, f64)>,
) -> f64 {
    let act = obj.activation;
    encode_into(params, act, x, ws);
    let k = ws.mu.len();
    for j in 0..k {
        ws.z[j] = if obj.stochastic { ws.mu[j] + (0.5 * ws.logvar[j]).exp() * eps[j] } else { ws.mu[j] };
    }
    let loc = decode(params, act, ws);
    let kl = if obj.beta != 0.0 { kl_unchecked(&ws.mu, &ws.logvar) } else { 0.0 };
    let loss = obj.likelihood.nll_log_scale(t, loc, params.log_scale) + obj.beta * kl;
    let Some((grad, weight)) = grad else {
        return loss;
    };

    let (dloc, dls) = obj.likelihood.nll_gradient(t, loc, params.log_scale);
    let dloc = dloc * weight;
    if obj.learn_scale {
        grad.log_scale += dls * weight;
    }

    // Decoder, from the output layer down to the latent.
    let top = ws.dec.last().map_or(ws.z.as_slice(), Vec::as_slice);
    let m = params.decoder.len();
    if m == 0 {
        ws.d_z.iter_mut().for_each(|v| *v = 0.0);
        params.output.backward(top, &[dloc], &mut grad.output, Some(&mut ws.d_z));
    } else {
        ws.d_dec[m - 1].iter_mut().for_each(|v| *v = 0.0);
        params.output.backward(top, &[dloc], &mut grad.output, Some(&mut ws.d_dec[m - 1]));
        for l in (0..m).rev() {
            for (d, h) in ws.d_dec[l].iter_mut().zip(&ws.dec[l]) {
                *d *= act.derivative_from_output(*h);
            }
            let (below, here) = ws.d_dec.split_at_mut(l);
            let da = &here[0];
            if l == 0 {
                ws.d_z.iter_mut().for_each(|v| *v = 0.0);
                params.decoder[0].backward(&ws.z, da, &mut grad.decoder[0], Some(&mut ws.d_z));
            } else {
                let dx = &mut below[l - 1];
                dx.iter_mut().for_each(|v| *v = 0.0);
                params.decoder[l].backward(&ws.dec[l - 1], da, &mut grad.decoder[l], Some(dx));
            }
        }
    }

    // Reparameterization and KL.
    let bw = obj.beta * weight;
    for j in 0..k {
        ws.d_mu[j] = ws.d_z[j] + bw * ws.mu[j];
        let sigma = (0.5 * ws.logvar[j]).exp();
        let through_sample = if obj.stochastic { 0.5 * ws.d_z[j] * eps[j] * sigma } else { 0.0 };
        ws.d_logvar[j] = through_sample + 0.5 * bw * ws.logvar[j].exp_m1();
    }

    // Encoder heads and trunk.
    let n = params.encoder.len();
    let h = ws.enc.last().map_or(x, Vec::as_slice);
    if n == 0 {
        params.mean_head.backward(h, &ws.d_mu, &mut grad.mean_head, None);
        params.logvar_head.backward(h, &ws.d_logvar, &mut grad.logvar_head, None);
        return loss;
    }
    ws.d_enc[n - 1].iter_mut().for_each(|v| *v = 0.0);
    params.mean_head.backward(h, &ws.d_mu, &mut grad.mean_head, Some(&mut ws.d_enc[n - 1]));
    params.logvar_head.backward(h, &ws.d_logvar, &mut grad.logvar_head, Some(&mut ws.d_enc[n - 1]));
    for l in (0..n).rev() {
        for (d, h) in ws.d_enc[l].iter_mut().zip(&ws.enc[l]) {
            *d *= act.derivative_from_output(*h);
        }
        let (below, here) = ws.d_enc.split_at_mut(l);
        let da = &here[0];
        if l == 0 {
            params.encoder[0].backward(x, da, &mut grad.encoder[0], None);
        } else {
            let dx = &mut below[l - 1];
            dx.iter_mut().for_each(|v| *v = 0.0);
            params.encoder[l].backward(&ws.enc[l - 1], da, &mut grad.encoder[l], Some(dx));
        }
    }
    loss
}

/// Mean loss over `rows` of `x` with the matching rows of `eps`, and its
/// gradient when `grad` is given (overwritten, not accumulated).
pub(crate) fn batch_loss(
    params: &VibParams,
    obj: &Objective,
    x: &Matrix,
    t: &[f64],
    rows: &[usize],
    eps: &Matrix,
    ws: &mut Workspace,
    mut grad: Option<&mut VibParams>,
) -> f64 {
    if let Some(g) = grad.as_deref_mut() {
        for v in g.tensors_mut() {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    let weight = 1.0 / rows.len() as f64;
    let mut total = 0.0;
    for (b, &i) in rows.iter().enumerate() {
        let g = grad.as_deref_mut().map(|g| (g, weight));
        total += sample_loss(params, obj, x.row(i), t[i], eps.row(b), ws, g);
    }
    total * weight
}
