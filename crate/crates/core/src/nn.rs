//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Batches are row-major `(batch, features)` slices. Weight matrices are
//! row-major `(outputs, inputs)`. Products go through `matrixmultiply::dgemm`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output nonlinearity of the last layer. Hidden layers always use ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Softplus,
    /// `scale * sigmoid(z)`.
    ScaledSigmoid(f64),
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Softplus => softplus(z),
            Activation::ScaledSigmoid(s) => s * sigmoid(z),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Softplus => sigmoid(z),
            Activation::ScaledSigmoid(s) => {
                let g = sigmoid(z);
                s * g * (1.0 - g)
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    // log(1 + e^z) without overflow; strictly positive for finite z.
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs {
            return Err(Error::Dimension {
                context: "layer weights",
                expected: inputs * outputs,
                actual: weights.len(),
            });
        }
        if biases.len() != outputs {
            return Err(Error::Dimension {
                context: "layer biases",
                expected: outputs,
                actual: biases.len(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            biases,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }
    pub fn outputs(&self) -> usize {
        self.outputs
    }
    /// Row-major `(outputs, inputs)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    batch: usize,
    /// `inputs[l]` is the input of layer `l`; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Cache {
    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn output(&self) -> &[f64] {
        &self.output
    }
    pub fn into_output(self) -> Vec<f64> {
        self.output
    }
}

/// Per-layer `(d weights, d biases)`, summed over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    /// Flattened in the same order as [`Mlp::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|g| *g *= k);
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    output: Activation,
}

/// `c = a * b^T + c`-style wrapper: `c (m x n) = alpha * A (m x k) * B (k x n) + beta * c`
/// with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the caller passes slices whose extents cover every strided index
    // touched for the given shapes; `c` is exclusively borrowed and row-major.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Random network with layer widths `sizes = [input, hidden.., output]`.
    /// Weights and biases are uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        Self::build(sizes, output, |fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            rng.random_range(-bound..=bound)
        })
    }

    /// All-zero network.
    pub fn zeros(sizes: &[usize], output: Activation) -> Result<Self> {
        Self::build(sizes, output, |_| 0.0)
    }

    fn build(sizes: &[usize], output: Activation, mut init: impl FnMut(usize) -> f64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("mlp sizes", format!("{sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let weights = (0..i * o).map(|_| init(i)).collect();
                let biases = (0..o).map(|_| init(i)).collect();
                Layer::new(i, o, weights, biases)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, output })
    }

    pub fn from_layers(layers: Vec<Layer>, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("mlp", "no layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Dimension {
                    context: "mlp layer chain",
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers, output })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }
    pub fn output_activation(&self) -> Activation {
        self.output
    }
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }
    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }
    /// Widths `[input, hidden.., output]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Dimension {
                context: "mlp parameters",
                expected: self.parameter_count(),
                actual: params.len(),
            });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *p = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|p| p.is_finite()))
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes() == other.sizes()
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Cache)> {
        let cache = self.forward_batch(input, 1)?;
        Ok((cache.output.clone(), cache))
    }

    /// Forward pass over `batch` row-major samples.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Cache> {
        let d = self.input_dim();
        if inputs.len() != d * batch {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: d * batch,
                actual: inputs.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = inputs.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let (i, o) = (layer.inputs, layer.outputs);
            let mut z = Vec::with_capacity(batch * o);
            for _ in 0..batch {
                z.extend_from_slice(&layer.biases);
            }
            gemm(batch, i, o, &x, i, 1, &layer.weights, 1, i, 1.0, &mut z);
            let a: Vec<f64> = if l == last {
                z.iter().map(|&v| self.output.apply(v)).collect()
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            acts.push(std::mem::replace(&mut x, a));
            pre.push(z);
        }
        Ok(Cache {
            batch,
            inputs: acts,
            pre,
            output: x,
        })
    }

    /// Reverse-mode pass: given `d loss / d output` for every sample, returns
    /// parameter gradients (summed over the batch) and `d loss / d input`.
    pub fn gradient(&self, cache: &Cache, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let batch = cache.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::Dimension {
                context: "mlp upstream gradient",
                expected: batch * self.output_dim(),
                actual: upstream.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut grads = vec![(Vec::new(), Vec::new()); self.layers.len()];
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&cache.pre[last])
            .map(|(g, &z)| g * self.output.derivative(z))
            .collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (i, o) = (layer.inputs, layer.outputs);
            let x = &cache.inputs[l];
            let mut dw = vec![0.0; o * i];
            gemm(o, batch, i, &delta, 1, o, x, i, 1, 0.0, &mut dw);
            let mut db = vec![0.0; o];
            for row in delta.chunks_exact(o) {
                for (acc, g) in db.iter_mut().zip(row) {
                    *acc += g;
                }
            }
            let mut dx = vec![0.0; batch * i];
            gemm(batch, o, i, &delta, o, 1, &layer.weights, i, 1, 0.0, &mut dx);
            grads[l] = (dw, db);
            if l > 0 {
                for (g, &z) in dx.iter_mut().zip(&cache.pre[l - 1]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok((Gradients { layers: grads }, delta))
    }

    /// Plain gradient descent step `p <- p - lr * g`.
    pub fn apply_sgd(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (dw, db)) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, g) in layer.weights.iter_mut().zip(dw) {
                *p -= lr * g;
            }
            for (p, g) in layer.biases.iter_mut().zip(db) {
                *p -= lr * g;
            }
        }
    }

    /// Polyak blend `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        debug_assert!(self.same_shape(source));
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            for (d, s) in dst.weights.iter_mut().zip(&src.weights) {
                *d = tau * s + (1.0 - tau) * *d;
            }
            for (d, s) in dst.biases.iter_mut().zip(&src.biases) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        let n = net.parameter_count();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Bias-corrected Adam step with step size `lr`.
    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut k = 0;
        for (layer, (dw, db)) in net.layers.iter_mut().zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            for (p, g) in params.zip(dw.iter().chain(db.iter())) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                k += 1;
            }
        }
    }
}
