//! Layer-wise relevance propagation with the ε-stabilized z-rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    argmax, conv2d_backward, conv2d_forward, maxpool2d_backward, softmax, ForwardCache, Network, Scalar, Tensor,
    NUM_CLASSES,
};
use crate::raster::RgbImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrpConfig {
    /// Stabilizer relative to the layer's mean |Σᵢ zᵢⱼ|; 0 gives the plain z-rule.
    pub epsilon: f64,
}

impl Default for LrpConfig {
    fn default() -> Self {
        LrpConfig { epsilon: 1e-6 }
    }
}

impl LrpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::param("epsilon must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Relevance shares `Rⱼ / (zⱼ + ε·sign(zⱼ))`; neurons with a zero denominator pass nothing.
fn shares(relevance: &[f64], z: &[f64], config: &LrpConfig) -> Vec<f64> {
    let mean_abs = z.iter().map(|v| v.abs()).sum::<f64>() / z.len().max(1) as f64;
    let eps = config.epsilon * mean_abs;
    relevance
        .iter()
        .zip(z)
        .map(|(&r, &z)| {
            let denom = z + if z >= 0.0 { eps } else { -eps };
            if denom == 0.0 {
                0.0
            } else {
                r / denom
            }
        })
        .collect()
}

/// z-rule through a dense layer with `weights` of shape `K × N`; biases take no relevance.
pub fn lrp_dense(
    relevance_out: &Tensor<f64>,
    activations_in: &Tensor<f64>,
    weights: &Tensor<f64>,
    config: &LrpConfig,
) -> Result<Tensor<f64>> {
    config.validate()?;
    let (k, n) = (relevance_out.len(), activations_in.len());
    weights.expect_shape(&[k, n], "dense weights")?;
    let a = activations_in.data();
    let w = weights.data();
    let z: Vec<f64> = (0..k).map(|j| (0..n).map(|i| a[i] * w[j * n + i]).sum()).collect();
    let s = shares(relevance_out.data(), &z, config);
    let mut out = vec![0.0; n];
    for (j, sj) in s.iter().enumerate() {
        if *sj == 0.0 {
            continue;
        }
        for i in 0..n {
            out[i] += w[j * n + i] * sj;
        }
    }
    for (o, ai) in out.iter_mut().zip(a) {
        *o *= ai;
    }
    Tensor::new(activations_in.shape(), out)
}

/// z-rule through a 3×3 same convolution.
///
/// `Rᵢ = aᵢ · Σⱼ wᵢⱼ sⱼ` is the input gradient of the convolution applied to the shares.
pub fn lrp_conv(
    relevance_out: &Tensor<f64>,
    activations_in: &Tensor<f64>,
    kernel: &Tensor<f64>,
    config: &LrpConfig,
) -> Result<Tensor<f64>> {
    config.validate()?;
    let m = kernel.shape().first().copied().unwrap_or(0);
    let zero_bias = Tensor::zeros(&[m]);
    let z = conv2d_forward(activations_in, kernel, &zero_bias)?;
    relevance_out.expect_shape(z.shape(), "conv relevance")?;
    let s = Tensor::new(z.shape(), shares(relevance_out.data(), z.data(), config))?;
    let back = conv2d_backward(activations_in, kernel, &s, true)?
        .input
        .expect("input gradient requested");
    let values = back.data().iter().zip(activations_in.data()).map(|(g, a)| g * a).collect();
    Tensor::new(activations_in.shape(), values)
}

/// Routes each pooled relevance to its window's winner.
pub fn lrp_pool(relevance_out: &Tensor<f64>, winners: &[u8], input_shape: &[usize]) -> Result<Tensor<f64>> {
    maxpool2d_backward(relevance_out, winners, input_shape)
}

/// ReLU is transparent to relevance.
pub fn lrp_relu(relevance_out: &Tensor<f64>) -> Tensor<f64> {
    relevance_out.clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassChoice {
    Predicted,
    Fixed(usize),
}

/// Signed input-aligned relevance.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    pub values: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub target_class: usize,
    /// Logit used as root relevance.
    pub seed_logit: f64,
}

impl RelevanceMap {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `|Σ R − seed| / |seed|`.
    pub fn conservation_error(&self) -> f64 {
        (self.total() - self.seed_logit).abs() / self.seed_logit.abs()
    }
}

/// Relevance totals around one propagation step.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub layer: String,
    pub relevance_out: f64,
    pub relevance_in: f64,
    /// Some relevance-carrying neuron had |Σᵢ zᵢⱼ| < 1e-6 · Σᵢ |zᵢⱼ|.
    pub vanishing_denominator: bool,
}

impl LayerTrace {
    pub fn relative_error(&self) -> f64 {
        (self.relevance_in - self.relevance_out).abs() / self.relevance_out.abs().max(f64::MIN_POSITIVE)
    }
}

fn vanishing(relevance: &[f64], z: &[f64], z_abs: &[f64]) -> bool {
    relevance
        .iter()
        .zip(z.iter().zip(z_abs))
        .any(|(&r, (&z, &za))| r != 0.0 && z.abs() < 1e-6 * za)
}

/// Propagates `relevance` (aligned with the logits) back to the input, recording each layer.
pub fn propagate(
    net: &Network<f64>,
    cache: &ForwardCache<f64>,
    relevance: Tensor<f64>,
    config: &LrpConfig,
) -> Result<(Tensor<f64>, Vec<LayerTrace>)> {
    config.validate()?;
    let n_conv = net.spec().conv_maps.len();
    let n_dense = net.spec().dense.len();
    let mut trace = Vec::new();
    let mut r = relevance;
    for layer in (0..n_dense).rev() {
        let a = &cache.dense_inputs[layer];
        let w = net.dense_weights(layer);
        let before = r.data().iter().sum();
        let flag = {
            let n = a.len();
            let z: Vec<f64> = (0..r.len())
                .map(|j| (0..n).map(|i| a.data()[i] * w.data()[j * n + i]).sum())
                .collect();
            let za: Vec<f64> = (0..r.len())
                .map(|j| (0..n).map(|i| (a.data()[i] * w.data()[j * n + i]).abs()).sum())
                .collect();
            vanishing(r.data(), &z, &za)
        };
        r = lrp_dense(&lrp_relu(&r), a, w, config)?;
        trace.push(LayerTrace {
            layer: format!("dense{layer}"),
            relevance_out: before,
            relevance_in: r.data().iter().sum(),
            vanishing_denominator: flag,
        });
    }
    for layer in (0..n_conv).rev() {
        let out = &cache.conv_outputs[layer];
        let pooled = [out.shape()[0], out.shape()[1] / 2, out.shape()[2] / 2];
        let before: f64 = r.data().iter().sum();
        r = lrp_pool(&r.reshape(&pooled)?, &cache.winners[layer], out.shape())?;
        trace.push(LayerTrace {
            layer: format!("pool{layer}"),
            relevance_out: before,
            relevance_in: r.data().iter().sum(),
            vanishing_denominator: false,
        });

        let a = &cache.conv_inputs[layer];
        let w = net.conv_weights(layer);
        let before: f64 = r.data().iter().sum();
        let zero = Tensor::zeros(&[w.shape()[0]]);
        let z = conv2d_forward(a, w, &zero)?;
        let abs_a = Tensor::new(a.shape(), a.data().iter().map(|v| v.abs()).collect())?;
        let abs_w = Tensor::new(w.shape(), w.data().iter().map(|v| v.abs()).collect())?;
        let za = conv2d_forward(&abs_a, &abs_w, &zero)?;
        let flag = vanishing(r.data(), z.data(), za.data());
        r = lrp_conv(&lrp_relu(&r), a, w, config)?;
        trace.push(LayerTrace {
            layer: format!("conv{layer}"),
            relevance_out: before,
            relevance_in: r.data().iter().sum(),
            vanishing_denominator: flag,
        });
    }
    Ok((r, trace))
}

/// Explains one `C×H×W` input; `C` must be 1.
pub fn explain_traced(
    net: &Network<f64>,
    input: &Tensor<f64>,
    choice: ClassChoice,
    config: &LrpConfig,
) -> Result<(RelevanceMap, Vec<LayerTrace>)> {
    let [c, h, w] = net.spec().input;
    if c != 1 {
        return Err(Error::param("relevance maps need a single-channel input"));
    }
    let cache = net.forward_image(input)?;
    let logits = cache.logits().data().to_vec();
    let class = match choice {
        ClassChoice::Predicted => argmax(&logits),
        ClassChoice::Fixed(k) if k < NUM_CLASSES => k,
        ClassChoice::Fixed(k) => return Err(Error::param(format!("class {k} out of range"))),
    };
    let mut seed = vec![0.0; NUM_CLASSES];
    seed[class] = logits[class];
    let (r, trace) = propagate(net, &cache, Tensor::new(&[NUM_CLASSES], seed)?, config)?;
    Ok((
        RelevanceMap {
            values: r.into_data(),
            height: h,
            width: w,
            target_class: class,
            seed_logit: logits[class],
        },
        trace,
    ))
}

pub fn explain(net: &Network<f64>, input: &Tensor<f64>, choice: ClassChoice, config: &LrpConfig) -> Result<RelevanceMap> {
    Ok(explain_traced(net, input, choice, config)?.0)
}

/// Colour of a value already scaled by the map's max |value|.
pub fn heat_color(t: f64) -> [u8; 3] {
    let t = t.clamp(-0.2, 1.0);
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    if t < 0.0 {
        [0, 0, q(-t / 0.2)]
    } else if t <= 0.5 {
        [0, q(2.0 * t), 0]
    } else {
        [q(2.0 * t - 1.0), 255, 0]
    }
}

/// Blue for negative, dark for zero, green→yellow for positive relevance; scale −0.2..1.
pub fn render_heatmap(map: &RelevanceMap) -> RgbImage {
    let scale = map.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pixels = map
        .values
        .iter()
        .map(|&v| heat_color(if scale > 0.0 { v / scale } else { 0.0 }))
        .collect();
    RgbImage {
        width: map.width,
        height: map.height,
        pixels,
    }
}

/// Min-max rescales a map to `[0, 1]`; a constant map becomes all zeros.
pub fn rescale_unit(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Classifies the rescaled relevance map; returns the class and its probability.
pub fn reinject<T: Scalar>(net: &Network<T>, map: &RelevanceMap) -> Result<(usize, f64)> {
    let input = Tensor::from_f64(&net.spec().input, &rescale_unit(&map.values))?;
    let p = softmax(&net.logits(&input)?.to_f64_vec());
    let k = argmax(&p);
    Ok((k, p[k]))
}
