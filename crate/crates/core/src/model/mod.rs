//! A small multilayer perceptron with hand-written reverse mode.

mod checkpoint;
mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use optim::{Optimizer, UpdateRule};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("trace was produced by parameter version {trace}, current is {current}")]
    StaleTrace { trace: u64, current: u64 },

    #[error("class {index} out of range for {classes} outputs")]
    IndexOutOfRange { index: usize, classes: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    ReluRegression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    pub head: Head,
    pub seed: u64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layer_widths.len() < 3 {
            return Err(ModelError::InvalidSpec(
                "need input, at least one hidden layer, and output".into(),
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(ModelError::InvalidSpec("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

/// Dense layer; `w` is row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                self.b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

/// Gradient buffers shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(layers: &[Layer]) -> Self {
        Gradients {
            layers: layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.iter_mut().zip(&b.w).for_each(|(x, y)| *x += y);
            a.b.iter_mut().zip(&b.b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x *= k);
            l.b.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = 0.0);
            l.b.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.w.iter().chain(&l.b).copied())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
    pub grads: Gradients,
    /// Bumped by every parameter update; traces remember it.
    pub version: u64,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub version: u64,
    /// `acts[0]` is the input, `acts[l]` the input to layer `l`.
    pub acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pub pre: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

/// How a loss gradient enters the network.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadGrad {
    /// Gradient with respect to the head outputs.
    Outputs(Vec<f64>),
    /// Gradient with respect to the final pre-activations.
    Logits(Vec<f64>),
}

pub fn init(spec: &MlpSpec) -> Result<ModelParameters, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_layers = spec.layer_widths.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for (l, pair) in spec.layer_widths.windows(2).enumerate() {
        let (n_in, n_out) = (pair[0], pair[1]);
        let last = l + 1 == n_layers;
        // He-uniform for layers feeding a ReLU, LeCun-uniform for softmax logits
        let gain = if last && spec.head == Head::Softmax { 3.0 } else { 6.0 };
        let limit = (gain / n_in as f64).sqrt();
        let mut layer = Layer::zeros(n_in, n_out);
        for w in &mut layer.w {
            *w = rng.gen_range(-limit..limit);
        }
        layers.push(layer);
    }
    let grads = Gradients::zeros_like(&layers);
    Ok(ModelParameters {
        spec: spec.clone(),
        layers,
        grads,
        version: 0,
    })
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl ModelParameters {
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.n_params() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut k = 0;
        for l in &mut self.layers {
            for x in l.w.iter_mut().chain(l.b.iter_mut()) {
                *x = flat[k];
                k += 1;
            }
        }
        self.version += 1;
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardTrace), ModelError> {
        if x.len() != self.spec.n_inputs() {
            return Err(ModelError::ShapeMismatch(format!(
                "input width {} vs {}",
                x.len(),
                self.spec.n_inputs()
            )));
        }
        let n = self.layers.len();
        let mut acts = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            acts.push(a);
            a = if l + 1 < n {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                match self.spec.head {
                    Head::Softmax => softmax(&z),
                    Head::ReluRegression => z.iter().map(|v| v.max(0.0)).collect(),
                }
            };
            pre.push(z);
        }
        let trace = ForwardTrace {
            version: self.version,
            acts,
            pre,
            outputs: a.clone(),
        };
        Ok((a, trace))
    }

    /// Reverse mode through one trace into `out` (not into `self.grads`).
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        grad: &HeadGrad,
        out: &mut Gradients,
    ) -> Result<(), ModelError> {
        if trace.version != self.version {
            return Err(ModelError::StaleTrace {
                trace: trace.version,
                current: self.version,
            });
        }
        let n_out = self.spec.n_outputs();
        let g = match grad {
            HeadGrad::Outputs(g) | HeadGrad::Logits(g) if g.len() != n_out => {
                return Err(ModelError::ShapeMismatch(format!(
                    "head gradient width {} vs {}",
                    g.len(),
                    n_out
                )))
            }
            HeadGrad::Logits(g) => g.clone(),
            HeadGrad::Outputs(g) => match self.spec.head {
                Head::Softmax => {
                    let p = &trace.outputs;
                    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                    p.iter().zip(g).map(|(pi, gi)| pi * (gi - dot)).collect()
                }
                Head::ReluRegression => {
                    let z = trace.pre.last().unwrap();
                    g.iter().zip(z).map(|(gi, &zi)| if zi > 0.0 { *gi } else { 0.0 }).collect()
                }
            },
        };
        if g.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        let mut delta = g;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a = &trace.acts[l];
            let gl = &mut out.layers[l];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gl.b[o] += d;
                let row = &mut gl.w[o * layer.n_in..(o + 1) * layer.n_in];
                row.iter_mut().zip(a).for_each(|(w, x)| *w += d * x);
            }
            if l == 0 {
                break;
            }
            let z_prev = &trace.pre[l - 1];
            let mut next = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                next.iter_mut().zip(row).for_each(|(n, w)| *n += d * w);
            }
            for (n, &z) in next.iter_mut().zip(z_prev) {
                if z <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
        Ok(())
    }

    /// Accumulates into the parameter's own gradient buffers.
    pub fn backward(&mut self, trace: &ForwardTrace, grad: &HeadGrad) -> Result<(), ModelError> {
        let mut g = std::mem::replace(&mut self.grads, Gradients { layers: Vec::new() });
        let r = self.backward_into(trace, grad, &mut g);
        self.grads = g;
        r
    }
}

/// `-log p[target]` and its gradient with respect to the softmax logits.
pub fn cross_entropy(pred: &[f64], target: usize) -> Result<(f64, Vec<f64>), ModelError> {
    if target >= pred.len() {
        return Err(ModelError::IndexOutOfRange {
            index: target,
            classes: pred.len(),
        });
    }
    let p = pred[target].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let mut g = pred.to_vec();
    g[target] -= 1.0;
    Ok((-p.ln(), g))
}

/// Mean squared error over output coordinates and its output gradient.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
    if pred.len() != target.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "prediction width {} vs target {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let g = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, g))
}
