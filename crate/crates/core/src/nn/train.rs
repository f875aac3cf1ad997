use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{argmax, batch_pass, cross_entropy, l1_penalty, softmax, Network, NUM_CLASSES};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Penalty on the second dense layer's weights.
    pub l1_lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds weight init and the per-epoch shuffles.
    pub seed: u64,
    /// Score the test set every this many epochs (and always after the last); 0 means only after the last.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 200,
            l1_lambda: 0.001,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be at least 1"));
        }
        if !(self.l1_lambda >= 0.0) || !(self.learning_rate >= 0.0) {
            return Err(Error::param("l1_lambda and learning_rate must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::param("Adam needs betas in [0, 1) and a positive epsilon"));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<T: Scalar>(params: &[Tensor<T>]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(params: &mut [Tensor<T>], grads: &[Tensor<T>], state: &mut AdamState, config: &TrainConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((w, g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g.to_f64();
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let update = config.learning_rate * (*m / c1) / ((*v / c2).sqrt() + config.epsilon);
            *w = T::from_f64(w.to_f64() - update);
        }
    }
}

/// Images with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub inputs: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(inputs: Vec<Tensor<T>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::param("one label per input is required"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::param(format!("label {bad} out of range")));
        }
        Ok(LabeledSet { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// `None` on epochs where the test set was not scored.
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Mini-batch Adam training; `on_epoch` sees each epoch's statistics as they complete.
///
/// Train loss and accuracy are accumulated over the epoch's mini-batches but
/// summed in dataset order, so they do not depend on the shuffle.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train_set: &LabeledSet<T>,
    test_set: &LabeledSet<T>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainHistory> {
    config.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::param("training and test sets must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4521);
    let mut adam = AdamState::new(net.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut item_loss = vec![0.0; train_set.len()];
    let mut item_hit = vec![false; train_set.len()];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut penalty = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let inputs: Vec<&Tensor<T>> = chunk.iter().map(|&i| &train_set.inputs[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let mut pass = batch_pass(net, &inputs, &labels)?;
            for (k, &i) in chunk.iter().enumerate() {
                item_loss[i] = pass.ce[k];
                item_hit[i] = pass.predictions[k] == labels[k];
            }
            penalty += l1_penalty(net, config.l1_lambda);
            n_batches += 1;
            if let Some(idx) = net.spec().l1_param_index() {
                let lambda = T::from_f64(config.l1_lambda);
                let weights = net.params()[idx].data().to_vec();
                for (g, w) in pass.grads[idx].data_mut().iter_mut().zip(weights) {
                    if w > T::ZERO {
                        *g += lambda;
                    } else if w < T::ZERO {
                        *g += -lambda;
                    }
                }
            }
            adam_step(net.params_mut(), &pass.grads, &mut adam, config);
        }
        let train_loss = item_loss.iter().sum::<f64>() / train_set.len() as f64 + penalty / n_batches as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numerical {
                iteration: epoch,
                reason: "training loss is not finite".into(),
            });
        }
        let scored = epoch + 1 == config.epochs || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0);
        let test = if scored { Some(evaluate(net, test_set)?) } else { None };
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss,
            train_accuracy: item_hit.iter().filter(|&&h| h).count() as f64 / train_set.len() as f64,
            test_loss: test.as_ref().map(|t| t.mean_loss + l1_penalty(net, config.l1_lambda)),
            test_accuracy: test.map(|t| t.accuracy),
        };
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub probabilities: Vec<[f64; NUM_CLASSES]>,
    pub predictions: Vec<usize>,
    pub mean_loss: f64,
}

pub fn predict_probabilities<T: Scalar>(net: &Network<T>, inputs: &[Tensor<T>]) -> Result<Vec<[f64; NUM_CLASSES]>> {
    inputs
        .par_iter()
        .map(|x| {
            let p = softmax(&net.logits(x)?.to_f64_vec());
            Ok([p[0], p[1], p[2]])
        })
        .collect()
}

pub fn evaluate<T: Scalar>(net: &Network<T>, set: &LabeledSet<T>) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::param("cannot evaluate an empty set"));
    }
    let probabilities = predict_probabilities(net, &set.inputs)?;
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    let mut predictions = Vec::with_capacity(set.len());
    let mut loss = 0.0;
    for (p, &label) in probabilities.iter().zip(&set.labels) {
        let pred = argmax(p);
        confusion[label][pred] += 1;
        predictions.push(pred);
        loss += cross_entropy(&p.map(|v| v.max(f64::MIN_POSITIVE).ln()), label);
    }
    let correct: usize = (0..NUM_CLASSES).map(|k| confusion[k][k]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / set.len() as f64,
        confusion,
        probabilities,
        predictions,
        mean_loss: loss / set.len() as f64,
    })
}
