//! Feed-forward building blocks with hand-derived reverse-mode gradients.
//!
//! Batches are row-major: one sample per row. Parameters flatten layer by
//! layer as the weight matrix in row-major order (`out x in`) followed by
//! the bias vector.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    /// `out_dim x in_dim`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl LinearLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: DMatrix::zeros(out_dim, in_dim),
            bias: DVector::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += self.bias.transpose();
        }
        z
    }
}

/// Chain of linear layers with ReLU between them. The output layer is
/// linear unless `activate_output` is set (used for shared trunks).
/// An `Mlp` with no layers is the identity map.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<LinearLayer>,
    activate_output: bool,
}

/// Everything `forward` computed, kept for `backward`.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Input to each layer (`inputs[0]` is the batch itself).
    pub inputs: Vec<DMatrix<f64>>,
    /// Pre-activation of each layer.
    pub pre: Vec<DMatrix<f64>>,
    /// Final output (raw logits unless the output is activated).
    pub output: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Gradients shaped like the parameters of the `Mlp` they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub layers: Vec<LayerGradient>,
}

impl GradientBundle {
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for g in &self.layers {
            push_row_major(&g.weights, out);
            out.extend(g.bias.iter());
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.flatten_into(&mut v);
        v
    }
}

fn push_row_major(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

impl Mlp {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn random(dims: &[usize], activate_output: bool, rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "an Mlp needs at least an input and an output size".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                LinearLayer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| {
                        rng.random_range(-limit..limit)
                    }),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            input_dim: dims[0],
            layers,
            activate_output,
        })
    }

    /// Identity map on `dim`-vectors (no parameters).
    pub fn identity(dim: usize) -> Self {
        Self {
            input_dim: dim,
            layers: Vec::new(),
            activate_output: false,
        }
    }

    pub fn from_layers(layers: Vec<LinearLayer>, activate_output: bool) -> Result<Self> {
        let first = layers
            .first()
            .ok_or(Error::InvalidArgument("no layers".into()))?;
        let input_dim = first.in_dim();
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    context: "layer chaining",
                    expected: w[0].out_dim(),
                    got: w[1].in_dim(),
                });
            }
        }
        Ok(Self {
            input_dim,
            layers,
            activate_output,
        })
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.layers
    }

    pub fn activate_output(&self) -> bool {
        self.activate_output
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, LinearLayer::out_dim)
    }

    /// Layer sizes including the input, e.g. `[in, hidden, out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.layers.len() + 1);
        d.push(self.input_dim);
        d.extend(self.layers.iter().map(LinearLayer::out_dim));
        d
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(LinearLayer::n_params).sum()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            push_row_major(&l.weights, out);
            out.extend(l.bias.iter());
        }
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        self.flatten_into(&mut v);
        v
    }

    /// Loads parameters from the front of `src`, returning how many were read.
    pub fn load_from(&mut self, src: &[f64]) -> Result<usize> {
        if src.len() < self.n_params() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.n_params(),
                got: src.len(),
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for i in 0..l.weights.nrows() {
                for j in 0..l.weights.ncols() {
                    l.weights[(i, j)] = src[k];
                    k += 1;
                }
            }
            for b in l.bias.iter_mut() {
                *b = src[k];
                k += 1;
            }
        }
        Ok(k)
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<Activations> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "Mlp input",
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&a);
            let next = if i < last || self.activate_output {
                z.map(relu)
            } else {
                z.clone()
            };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(Activations {
            inputs,
            pre,
            output: a,
        })
    }

    /// Gradients of a scalar loss given its gradient with respect to
    /// `Activations::output`. Also returns the gradient with respect to the
    /// batch input.
    pub fn backward(
        &self,
        act: &Activations,
        output_grad: &DMatrix<f64>,
    ) -> Result<(GradientBundle, DMatrix<f64>)> {
        if act.pre.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "activations depth",
                expected: self.layers.len(),
                got: act.pre.len(),
            });
        }
        if output_grad.shape() != act.output.shape() {
            return Err(Error::DimensionMismatch {
                context: "output gradient columns",
                expected: act.output.ncols(),
                got: output_grad.ncols(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i < last || self.activate_output {
                delta.zip_apply(&act.pre[i], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let weights = delta.transpose() * &act.inputs[i];
            let bias = DVector::from_iterator(
                delta.ncols(),
                delta.column_iter().map(|c| c.sum()),
            );
            let input_grad = &delta * &layer.weights;
            grads.push(LayerGradient { weights, bias });
            delta = input_grad;
        }
        grads.reverse();
        Ok((GradientBundle { layers: grads }, delta))
    }
}

/// Builds an `Mlp` with a fresh seeded generator.
pub fn init(dims: &[usize], seed: u64) -> Result<Mlp> {
    Mlp::random(dims, false, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits"));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| libm::exp(v - m)).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Row-wise softmax of a batch of logits.
pub fn softmax_rows(logits: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let v: Vec<f64> = row.iter().copied().collect();
        let p = softmax(&v)?;
        for (dst, src) in row.iter_mut().zip(p) {
            *dst = src;
        }
    }
    Ok(out)
}

/// Row-wise log-softmax, used for losses so that `-log p` stays finite.
pub fn log_softmax_rows(logits: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log-softmax logits"));
    }
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + libm::log(row.iter().map(|&v| libm::exp(v - m)).sum::<f64>());
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Ok(out)
}
