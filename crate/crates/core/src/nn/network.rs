use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward, maxpool2d_forward, relu,
    relu_backward, PoolWinners,
};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 3;

/// Layer widths of the classifier.
///
/// Each conv entry is a block `conv 3×3 (same) → ReLU → max-pool 2×2`; dense
/// layers are followed by ReLU except the last, which emits logits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Channels, height, width.
    pub input: [usize; 3],
    pub conv_maps: Vec<usize>,
    pub dense: Vec<usize>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl NetworkSpec {
    /// 1×128×128 → maps (32, 64, 64, 128, 32) → FC (300, 100, 3).
    pub fn standard() -> Self {
        NetworkSpec {
            input: [1, 128, 128],
            conv_maps: vec![32, 64, 64, 128, 32],
            dense: vec![300, 100, NUM_CLASSES],
        }
    }

    /// Small 1×16×16 variant used for gradient checks.
    pub fn reduced() -> Self {
        NetworkSpec {
            input: [1, 16, 16],
            conv_maps: vec![4, 6],
            dense: vec![12, 8, NUM_CLASSES],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.input;
        let div = 1usize << self.conv_maps.len();
        if c == 0 || h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::param(format!(
                "input {:?} cannot be halved {} times",
                self.input,
                self.conv_maps.len()
            )));
        }
        if self.conv_maps.contains(&0) || self.dense.contains(&0) {
            return Err(Error::param("layer widths must be positive"));
        }
        if self.dense.last() != Some(&NUM_CLASSES) {
            return Err(Error::param(format!("the last dense layer must have {NUM_CLASSES} outputs")));
        }
        Ok(())
    }

    /// Shape of the tensor entering the first dense layer, after flattening.
    pub fn flatten_width(&self) -> usize {
        let div = 1 << self.conv_maps.len();
        let maps = self.conv_maps.last().copied().unwrap_or(self.input[0]);
        maps * (self.input[1] / div) * (self.input[2] / div)
    }

    /// Weight and bias shapes in parameter order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut channels = self.input[0];
        for &m in &self.conv_maps {
            shapes.push(vec![m, channels, 3, 3]);
            shapes.push(vec![m]);
            channels = m;
        }
        let mut width = self.flatten_width();
        for &k in &self.dense {
            shapes.push(vec![k, width]);
            shapes.push(vec![k]);
            width = k;
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Parameter index of the second dense layer's weights, which carry the L1 penalty.
    pub fn l1_param_index(&self) -> Option<usize> {
        (self.dense.len() >= 2).then(|| 2 * self.conv_maps.len() + 2)
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: Vec<Tensor<T>>,
}

/// Activations and pooling winners recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input of each conv layer.
    pub conv_inputs: Vec<Tensor<T>>,
    /// Post-ReLU output of each conv layer (the pool input).
    pub conv_outputs: Vec<Tensor<T>>,
    pub winners: Vec<PoolWinners>,
    /// Input of each dense layer (the first is the flattened feature map).
    pub dense_inputs: Vec<Tensor<T>>,
    /// Output of each dense layer, post-ReLU except the logits.
    pub dense_outputs: Vec<Tensor<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn logits(&self) -> &Tensor<T> {
        self.dense_outputs.last().expect("network has at least one dense layer")
    }
}

impl<T: Scalar> Network<T> {
    /// He-uniform weights (bound √(6/fan_in)), zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .param_shapes()
            .iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let fan_in: usize = shape[1..].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                let n: usize = shape.iter().product();
                let values: Vec<T> = (0..n).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect();
                Tensor::new(shape, values).expect("shape product matches")
            })
            .collect();
        Ok(Network { spec, params })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape()) {
            return Err(Error::param("parameter tensors do not match the network spec"));
        }
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }

    pub fn conv_weights(&self, layer: usize) -> &Tensor<T> {
        &self.params[2 * layer]
    }

    pub fn conv_bias(&self, layer: usize) -> &Tensor<T> {
        &self.params[2 * layer + 1]
    }

    pub fn dense_weights(&self, layer: usize) -> &Tensor<T> {
        &self.params[2 * (self.spec.conv_maps.len() + layer)]
    }

    pub fn dense_bias(&self, layer: usize) -> &Tensor<T> {
        &self.params[2 * (self.spec.conv_maps.len() + layer) + 1]
    }

    /// Forward pass of one `C×H×W` image, keeping every intermediate.
    pub fn forward_image(&self, input: &Tensor<T>) -> Result<ForwardCache<T>> {
        input.expect_shape(&self.spec.input, "network input")?;
        let n_conv = self.spec.conv_maps.len();
        let n_dense = self.spec.dense.len();
        let mut cache = ForwardCache {
            conv_inputs: Vec::with_capacity(n_conv),
            conv_outputs: Vec::with_capacity(n_conv),
            winners: Vec::with_capacity(n_conv),
            dense_inputs: Vec::with_capacity(n_dense),
            dense_outputs: Vec::with_capacity(n_dense),
        };
        let mut x = input.clone();
        for layer in 0..n_conv {
            let mut z = conv2d_forward(&x, self.conv_weights(layer), self.conv_bias(layer))?;
            relu(&mut z);
            let (pooled, winners) = maxpool2d_forward(&z)?;
            cache.conv_inputs.push(x);
            cache.conv_outputs.push(z);
            cache.winners.push(winners);
            x = pooled;
        }
        let width = x.len();
        let mut x = x.reshape(&[width])?;
        for layer in 0..n_dense {
            let mut z = dense_forward(&x, self.dense_weights(layer), self.dense_bias(layer))?;
            if layer + 1 < n_dense {
                relu(&mut z);
            }
            cache.dense_inputs.push(x);
            x = z.clone();
            cache.dense_outputs.push(z);
        }
        Ok(cache)
    }

    /// Pre-softmax outputs of one image.
    pub fn logits(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cache = self.forward_image(input)?;
        Ok(cache.dense_outputs.pop().expect("at least one dense layer"))
    }

    /// Forward pass of a `B×C×H×W` batch; returns `B×K` logits and the per-image caches.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, Vec<ForwardCache<T>>)> {
        let per = self.spec.input_len();
        let b = match batch.shape() {
            [b, rest @ ..] if rest == self.spec.input => *b,
            _ => {
                return Err(Error::param(format!(
                    "batch shape {:?} does not match input {:?}",
                    batch.shape(),
                    self.spec.input
                )))
            }
        };
        let caches: Vec<ForwardCache<T>> = (0..b)
            .into_par_iter()
            .map(|i| {
                let x = Tensor::new(&self.spec.input, batch.data()[i * per..(i + 1) * per].to_vec())?;
                self.forward_image(&x)
            })
            .collect::<Result<_>>()?;
        let k = NUM_CLASSES;
        let mut logits = Vec::with_capacity(b * k);
        for c in &caches {
            logits.extend_from_slice(c.logits().data());
        }
        Ok((Tensor::new(&[b, k], logits)?, caches))
    }

    /// Parameter gradients of one image given `dL/d(logits)`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let n_conv = self.spec.conv_maps.len();
        let n_dense = self.spec.dense.len();
        let mut grads: Vec<Tensor<T>> = Vec::with_capacity(self.params.len());
        grads.resize_with(self.params.len(), || Tensor::zeros(&[0]));
        let mut g = grad_logits.clone();
        for layer in (0..n_dense).rev() {
            if layer + 1 < n_dense {
                relu_backward(&mut g, &cache.dense_outputs[layer]);
            }
            let d = dense_backward(&cache.dense_inputs[layer], self.dense_weights(layer), &g)?;
            let at = 2 * (n_conv + layer);
            grads[at] = d.weights;
            grads[at + 1] = d.bias;
            g = d.input;
        }
        for layer in (0..n_conv).rev() {
            let out = &cache.conv_outputs[layer];
            let pooled_shape = [out.shape()[0], out.shape()[1] / 2, out.shape()[2] / 2];
            let gp = g.reshape(&pooled_shape)?;
            let mut gz = maxpool2d_backward(&gp, &cache.winners[layer], out.shape())?;
            relu_backward(&mut gz, out);
            let d = conv2d_backward(&cache.conv_inputs[layer], self.conv_weights(layer), &gz, layer > 0)?;
            grads[2 * layer] = d.weights;
            grads[2 * layer + 1] = d.bias;
            g = d.input.unwrap_or_else(|| Tensor::zeros(&[0]));
        }
        Ok(grads)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / sum).collect()
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `−log softmax(logits)[label]`, computed stably.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Per-item outcome of a training pass.
pub(crate) struct BatchPass<T> {
    pub ce: Vec<f64>,
    pub predictions: Vec<usize>,
    /// Summed gradient of the mean cross-entropy (no L1 term).
    pub grads: Vec<Tensor<T>>,
}

pub(crate) fn batch_pass<T: Scalar>(net: &Network<T>, inputs: &[&Tensor<T>], labels: &[usize]) -> Result<BatchPass<T>> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::param("batch must be non-empty with one label per input"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
        return Err(Error::param(format!("label {bad} out of range")));
    }
    let scale = 1.0 / inputs.len() as f64;
    let per_item: Vec<(f64, usize, Vec<Tensor<T>>)> = inputs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, &label)| {
            let cache = net.forward_image(x)?;
            let logits = cache.logits().to_f64_vec();
            let probs = softmax(&logits);
            let grad: Vec<T> = probs
                .iter()
                .enumerate()
                .map(|(k, p)| T::from_f64((p - if k == label { 1.0 } else { 0.0 }) * scale))
                .collect();
            let grads = net.backward(&cache, &Tensor::new(&[NUM_CLASSES], grad)?)?;
            Ok((cross_entropy(&logits, label), argmax(&probs), grads))
        })
        .collect::<Result<_>>()?;

    // fixed-order reduction keeps results independent of the thread count
    let mut iter = per_item.into_iter();
    let (ce0, pred0, mut grads) = iter.next().expect("non-empty batch");
    let mut ce = vec![ce0];
    let mut predictions = vec![pred0];
    for (c, p, g) in iter {
        ce.push(c);
        predictions.push(p);
        for (acc, gi) in grads.iter_mut().zip(g) {
            acc.data_mut().iter_mut().zip(gi.data()).for_each(|(a, b)| *a += *b);
        }
    }
    Ok(BatchPass { ce, predictions, grads })
}

/// `l1_lambda · Σ|w|` over the penalized dense weights.
pub fn l1_penalty<T: Scalar>(net: &Network<T>, l1_lambda: f64) -> f64 {
    match net.spec().l1_param_index() {
        Some(i) if l1_lambda != 0.0 => l1_lambda * net.params()[i].data().iter().map(|w| w.to_f64().abs()).sum::<f64>(),
        _ => 0.0,
    }
}

fn add_l1_subgradient<T: Scalar>(net: &Network<T>, grads: &mut [Tensor<T>], l1_lambda: f64) {
    let Some(i) = net.spec().l1_param_index() else { return };
    if l1_lambda == 0.0 {
        return;
    }
    let step = T::from_f64(l1_lambda);
    for (g, &w) in grads[i].data_mut().iter_mut().zip(net.params()[i].data()) {
        if w > T::ZERO {
            *g += step;
        } else if w < T::ZERO {
            *g += -step;
        }
    }
}

/// Mean cross-entropy plus the L1 penalty, and its gradient in parameter order.
pub fn loss_and_grad<T: Scalar>(
    net: &Network<T>,
    inputs: &[&Tensor<T>],
    labels: &[usize],
    l1_lambda: f64,
) -> Result<(f64, Vec<Tensor<T>>)> {
    if !(l1_lambda >= 0.0) {
        return Err(Error::param("l1_lambda must be non-negative"));
    }
    let mut pass = batch_pass(net, inputs, labels)?;
    add_l1_subgradient(net, &mut pass.grads, l1_lambda);
    let ce = pass.ce.iter().sum::<f64>() / pass.ce.len() as f64;
    Ok((ce + l1_penalty(net, l1_lambda), pass.grads))
}
