//! Deep fully-connected ReLU network under the scaled parameterization
//! `f_W(x) = sqrt(m) * W_L relu(W_{L-1} ... relu(W_1 x) ...)`.
//!
//! Weight layout: W_1 is m x d, W_2..W_{L-1} are m x m, W_L is 1 x m.
//! Initialization draws hidden entries from N(0, 2/m) and output entries
//! from N(0, 1/m). Gradients are exact backpropagation with the convention
//! relu'(0) = 0.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{cross_entropy, cross_entropy_prime};
use crate::matrix::{dot, Matrix};
use crate::rng::Rng;

/// Architecture: input dimension d, hidden width m, depth L >= 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetworkShape {
    pub d: usize,
    pub m: usize,
    pub l: usize,
}

impl NetworkShape {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 || self.m < 1 || self.l < 2 {
            return Err(Error::InvalidInput(format!(
                "need d >= 1, m >= 1, L >= 2; got d={}, m={}, L={}",
                self.d, self.m, self.l
            )));
        }
        Ok(())
    }

    /// (rows, cols) of layer `idx` (0-based).
    pub fn layer_dims(&self, idx: usize) -> (usize, usize) {
        if idx == 0 {
            (self.m, self.d)
        } else if idx + 1 == self.l {
            (1, self.m)
        } else {
            (self.m, self.m)
        }
    }

    /// Total number of weight entries.
    pub fn flat_len(&self) -> usize {
        (0..self.l).map(|i| {
            let (r, c) = self.layer_dims(i);
            r * c
        }).sum()
    }

    /// Flat-vector ranges of each layer, in layer order.
    pub fn layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.l);
        let mut start = 0;
        for i in 0..self.l {
            let (r, c) = self.layer_dims(i);
            out.push(start..start + r * c);
            start += r * c;
        }
        out
    }
}

/// The collection W = {W_1, ..., W_L}.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStack {
    pub shape: NetworkShape,
    pub layers: Vec<Matrix>,
}

impl WeightStack {
    pub fn zeros(shape: NetworkShape) -> Self {
        let layers = (0..shape.l)
            .map(|i| {
                let (r, c) = shape.layer_dims(i);
                Matrix::zeros(r, c)
            })
            .collect();
        WeightStack { shape, layers }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|m| m.is_finite())
    }

    /// Concatenate all layers into one flat vector (layer order, row-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shape.flat_len());
        for layer in &self.layers {
            out.extend_from_slice(&layer.data);
        }
        out
    }

    pub fn from_flat(shape: NetworkShape, flat: &[f64]) -> Result<Self> {
        if flat.len() != shape.flat_len() {
            return Err(Error::DimensionMismatch(format!(
                "flat length {} != {}",
                flat.len(),
                shape.flat_len()
            )));
        }
        let mut stack = WeightStack::zeros(shape);
        for (layer, range) in stack.layers.iter_mut().zip(shape.layer_ranges()) {
            layer.data.copy_from_slice(&flat[range]);
        }
        Ok(stack)
    }

    /// self += c * other, layer by layer.
    pub fn add_scaled(&mut self, c: f64, other: &WeightStack) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(c, b);
        }
    }

    /// Per-layer Frobenius distances to another stack.
    pub fn layer_dists(&self, other: &WeightStack) -> Vec<f64> {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.frob_dist(b))
            .collect()
    }

    /// Squared Frobenius distance summed over layers.
    pub fn dist_sq(&self, other: &WeightStack) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let d = a.frob_dist(b);
                d * d
            })
            .sum()
    }
}

/// Gradient with respect to every layer; shapes mirror the weight stack.
#[derive(Debug, Clone)]
pub struct GradientStack {
    pub shape: NetworkShape,
    pub layers: Vec<Matrix>,
}

impl GradientStack {
    pub fn zeros(shape: NetworkShape) -> Self {
        let w = WeightStack::zeros(shape);
        GradientStack { shape, layers: w.layers }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shape.flat_len());
        for layer in &self.layers {
            out.extend_from_slice(&layer.data);
        }
        out
    }

    pub fn scale(&mut self, c: f64) {
        for layer in &mut self.layers {
            layer.scale(c);
        }
    }

    /// Frobenius norm of layer `idx`.
    pub fn layer_norm(&self, idx: usize) -> f64 {
        self.layers[idx].frob_norm()
    }

    pub fn max_layer_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.frob_norm())
            .fold(0.0, f64::max)
    }
}

/// Forward-pass record: per-hidden-layer pre/post activations, the input,
/// and the network score. The preactivations are kept because relu' needs
/// their signs during backpropagation.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    pub input: Vec<f64>,
    /// L-1 vectors of length m.
    pub pre: Vec<Vec<f64>>,
    /// post[k] = relu(pre[k]).
    pub post: Vec<Vec<f64>>,
    pub score: f64,
}

/// Gaussian initialization: hidden layers N(0, 2/m), output layer N(0, 1/m).
/// Entries are drawn in a fixed order from a counter-based stream, so the
/// result is bit-identical across platforms for a given seed.
pub fn init_weights(shape: NetworkShape, seed: u64) -> WeightStack {
    shape.validate().expect("valid shape");
    let mut rng = Rng::substream(seed, 0x1417);
    let sigma_hidden = (2.0 / shape.m as f64).sqrt();
    let sigma_out = (1.0 / shape.m as f64).sqrt();
    let mut stack = WeightStack::zeros(shape);
    for (idx, layer) in stack.layers.iter_mut().enumerate() {
        let sigma = if idx + 1 == shape.l { sigma_out } else { sigma_hidden };
        for v in layer.data.iter_mut() {
            *v = sigma * rng.normal();
        }
    }
    stack
}

/// Evaluate the network, caching every pre/post activation.
pub fn forward(weights: &WeightStack, x: &[f64]) -> Result<ActivationCache> {
    let shape = weights.shape;
    if x.len() != shape.d {
        return Err(Error::DimensionMismatch(format!(
            "input length {} != d={}",
            x.len(),
            shape.d
        )));
    }
    let hidden = shape.l - 1;
    let mut pre = Vec::with_capacity(hidden);
    let mut post = Vec::with_capacity(hidden);
    let mut h: &[f64] = x;
    for k in 0..hidden {
        let z = weights.layers[k].matvec(h);
        let a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        pre.push(z);
        post.push(a);
        h = post.last().unwrap();
    }
    let score = (shape.m as f64).sqrt() * dot(weights.layers[shape.l - 1].row(0), h);
    Ok(ActivationCache { input: x.to_vec(), pre, post, score })
}

/// Exact gradient of the score with respect to every layer, by
/// backpropagation through the cached activations. relu'(z) = 1 if z > 0
/// else 0.
pub fn network_gradient(weights: &WeightStack, cache: &ActivationCache) -> Result<GradientStack> {
    let shape = weights.shape;
    if cache.pre.len() != shape.l - 1 || cache.input.len() != shape.d {
        return Err(Error::DimensionMismatch(
            "activation cache does not match weight shapes".into(),
        ));
    }
    let mut grads = GradientStack::zeros(shape);
    accumulate_gradient(weights, cache, 1.0, &mut grads);
    Ok(grads)
}

/// grads += coeff * grad(f_W(x)); shared by the plain gradient and the
/// dataset-loss accumulation so the backward pass exists once.
pub(crate) fn accumulate_gradient(
    weights: &WeightStack,
    cache: &ActivationCache,
    coeff: f64,
    grads: &mut GradientStack,
) {
    let shape = weights.shape;
    let sqrt_m = (shape.m as f64).sqrt();
    let last_hidden = shape.l - 2;

    // Output layer: grad = sqrt(m) * h_{L-1}^T.
    {
        let out = grads.layers[shape.l - 1].row_mut(0);
        let h = &cache.post[last_hidden];
        for (o, hv) in out.iter_mut().zip(h) {
            *o += coeff * sqrt_m * hv;
        }
    }

    // delta at the last hidden layer: sqrt(m) * W_L^T masked by relu'.
    let mut delta: Vec<f64> = weights.layers[shape.l - 1]
        .row(0)
        .iter()
        .zip(&cache.pre[last_hidden])
        .map(|(&w, &z)| if z > 0.0 { sqrt_m * w } else { 0.0 })
        .collect();

    // Walk hidden layers backwards.
    for k in (0..=last_hidden).rev() {
        let upstream: &[f64] = if k == 0 { &cache.input } else { &cache.post[k - 1] };
        grads.layers[k].rank_one_update(coeff, &delta, upstream);
        if k > 0 {
            let mut next = vec![0.0; shape.m];
            weights.layers[k].t_matvec_into(&delta, &mut next);
            for (nv, &z) in next.iter_mut().zip(&cache.pre[k - 1]) {
                if z <= 0.0 {
                    *nv = 0.0;
                }
            }
            delta = next;
        }
    }
}

/// One full pass over the dataset: average cross-entropy loss, 0-1 error,
/// surrogate error, and the loss gradient, accumulated in dataset order.
pub struct DatasetPass {
    pub loss: f64,
    pub err01: f64,
    pub surrogate: f64,
    pub margins: Vec<f64>,
    pub grad: GradientStack,
}

pub fn dataset_pass(weights: &WeightStack, data: &LabeledDataset) -> Result<DatasetPass> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != weights.shape.d {
        return Err(Error::DimensionMismatch(format!(
            "dataset dimension {} != network d={}",
            data.dim(),
            weights.shape.d
        )));
    }
    let n = data.n();
    let inv_n = 1.0 / n as f64;
    let mut grad = GradientStack::zeros(weights.shape);
    let mut loss = 0.0;
    let mut errs = 0usize;
    let mut surrogate = 0.0;
    let mut margins = Vec::with_capacity(n);
    for i in 0..n {
        let cache = forward(weights, data.x(i))?;
        let z = data.y(i) * cache.score;
        margins.push(z);
        loss += cross_entropy(z);
        let lp = cross_entropy_prime(z);
        surrogate += -lp;
        if z <= 0.0 {
            errs += 1;
        }
        accumulate_gradient(weights, &cache, inv_n * lp * data.y(i), &mut grad);
    }
    Ok(DatasetPass {
        loss: loss * inv_n,
        err01: errs as f64 * inv_n,
        surrogate: surrogate * inv_n,
        margins,
        grad,
    })
}

/// Average cross-entropy loss and its gradient.
pub fn loss_and_gradient(
    weights: &WeightStack,
    data: &LabeledDataset,
) -> Result<(f64, GradientStack)> {
    let pass = dataset_pass(weights, data)?;
    Ok((pass.loss, pass.grad))
}
