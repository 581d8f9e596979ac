//! Small dense classifier with manual backpropagation.
//!
//! Parameter layout (frozen per architecture): layers in forward order; for
//! each layer the weight matrix row-major as `[fan_out][fan_in]`, followed by
//! its `fan_out` biases. Hidden layers use a rectifier; the output layer feeds
//! a softmax cross-entropy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::param::{ParamVector, TaskVector};
use crate::rng::{self, Stream};
use crate::tasks::Sample;

/// Nonlinearity between hidden layers. Only the rectifier is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub activation: Activation,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("model input_dim", "must be positive"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::invalid("model hidden_dims", "widths must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("model num_classes", "must be at least 2"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer in forward order.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_dims.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden_dims);
        widths.push(self.num_classes);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    /// Indices of all bias entries in the flat layout.
    pub fn bias_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in self.layers() {
            offset += fan_in * fan_out;
            out.extend(offset..offset + fan_out);
            offset += fan_out;
        }
        out
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        let expected = self.param_count();
        if theta.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: theta.dim(),
            });
        }
        Ok(())
    }
}

/// A row-major block of inputs plus class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, input_dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("batch", "must contain at least one sample"));
        }
        if input_dim == 0 || inputs.len() != labels.len() * input_dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * input_dim,
                actual: inputs.len(),
            });
        }
        Ok(Batch {
            inputs,
            labels,
            input_dim,
        })
    }

    pub fn from_samples<'a, I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for s in samples {
            match dim {
                None => dim = Some(s.input.len()),
                Some(d) if d != s.input.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: s.input.len(),
                    })
                }
                _ => {}
            }
            inputs.extend_from_slice(&s.input);
            labels.push(s.label);
        }
        Batch::new(inputs, labels, dim.unwrap_or(0))
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Batch) -> Result<Batch> {
        if self.input_dim != other.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: other.input_dim,
            });
        }
        let mut inputs = self.inputs.clone();
        inputs.extend_from_slice(&other.inputs);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Batch::new(inputs, labels, self.input_dim)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub new_loss: f64,
    pub mem_loss: Option<f64>,
    pub grad_norm: f64,
}

/// Deterministic scaled-uniform initialisation: weights drawn from
/// `U(-sqrt(6 / (fan_in + fan_out)), +sqrt(...))`, biases zero.
pub fn init_model(spec: &ModelSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::Init);
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layers() {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        for _ in 0..fan_in * fan_out {
            values.push(rng.random_range(-limit..limit));
        }
        values.extend(core::iter::repeat_n(0.0, fan_out));
    }
    ParamVector::new(values)
}

fn check_batch(spec: &ModelSpec, batch: &Batch) -> Result<()> {
    if batch.input_dim != spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            actual: batch.input_dim,
        });
    }
    if let Some(&bad) = batch.labels.iter().find(|&&l| l >= spec.num_classes) {
        return Err(Error::invalid(
            "batch labels",
            format!("label {bad} outside [0, {})", spec.num_classes),
        ));
    }
    Ok(())
}

/// Forward pass for one sample; returns every layer's post-activation output
/// (the last entry holds the logits).
fn forward(theta: &[f64], spec: &ModelSpec, x: &[f64]) -> Vec<Vec<f64>> {
    let layers = spec.layers();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let w = &theta[offset..offset + fan_in * fan_out];
        let b = &theta[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        let input = &acts[l];
        let last = l + 1 == layers.len();
        let out: Vec<f64> = (0..fan_out)
            .map(|o| {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>() + b[o];
                if last || z > 0.0 {
                    z
                } else {
                    0.0
                }
            })
            .collect();
        acts.push(out);
    }
    acts
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| libm::exp(z - max)).sum();
    let log_norm = max + libm::log(sum);
    logits.iter().map(|z| z - log_norm).collect()
}

fn diverged(loss: f64, batch: &Batch) -> Error {
    Error::Divergence {
        context: format!("loss {loss} on batch of {} samples", batch.len()),
    }
}

/// Mean cross-entropy of `theta` on `batch`, without gradients.
pub fn loss(theta: &ParamVector, spec: &ModelSpec, batch: &Batch) -> Result<f64> {
    spec.check_theta(theta)?;
    check_batch(spec, batch)?;
    let mut total = 0.0;
    for i in 0..batch.len() {
        let acts = forward(theta.as_slice(), spec, batch.row(i));
        let logp = log_softmax(acts.last().expect("output layer"));
        total -= logp[batch.labels[i]];
    }
    let mean = total / batch.len() as f64;
    if !mean.is_finite() {
        return Err(diverged(mean, batch));
    }
    Ok(mean)
}

/// Mean cross-entropy and its exact gradient with respect to `theta`.
pub fn loss_and_grad(
    theta: &ParamVector,
    spec: &ModelSpec,
    batch: &Batch,
) -> Result<(f64, TaskVector)> {
    spec.check_theta(theta)?;
    check_batch(spec, batch)?;
    let layers = spec.layers();
    let mut offsets = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for &(fan_in, fan_out) in &layers {
        offsets.push(offset);
        offset += (fan_in + 1) * fan_out;
    }

    let params = theta.as_slice();
    let mut grad = vec![0.0; params.len()];
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;

    for i in 0..batch.len() {
        let acts = forward(params, spec, batch.row(i));
        let logp = log_softmax(acts.last().expect("output layer"));
        let label = batch.labels[i];
        total -= logp[label];

        // dL/dz at the output: softmax - onehot
        let mut delta: Vec<f64> = logp.iter().map(|lp| libm::exp(*lp)).collect();
        delta[label] -= 1.0;

        for l in (0..layers.len()).rev() {
            let (fan_in, fan_out) = layers[l];
            let off = offsets[l];
            let input = &acts[l];
            for o in 0..fan_out {
                let d = delta[o] * scale;
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + fan_in * fan_out + o] += d;
            }
            if l > 0 {
                let w = &params[off..off + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += wi * delta[o];
                    }
                }
                // rectifier derivative; acts[l] is the post-activation output
                for (p, a) in prev.iter_mut().zip(&acts[l]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    let mean = total * scale;
    if !mean.is_finite() {
        return Err(diverged(mean, batch));
    }
    let grad = TaskVector::new(grad).map_err(|_| diverged(mean, batch))?;
    Ok((mean, grad))
}

/// `theta - lr * grad`.
pub fn sgd_step(theta: &ParamVector, grad: &TaskVector, lr: f64) -> Result<ParamVector> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid("learning rate", "must be positive and finite"));
    }
    if theta.dim() != grad.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            actual: grad.dim(),
        });
    }
    let mut next = theta.clone();
    for (p, g) in next.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *p -= lr * g;
    }
    if next.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            context: format!("non-finite parameters after SGD step with lr {lr}"),
        });
    }
    Ok(next)
}

/// One SGD step on `new_batch`. When a probe batch is supplied its loss is
/// measured at the pre-step parameters and never contributes to the update.
pub fn train_step_with_probe(
    theta: &ParamVector,
    spec: &ModelSpec,
    new_batch: &Batch,
    probe_batch: Option<&Batch>,
    lr: f64,
) -> Result<(ParamVector, StepReport)> {
    let (new_loss, grad) = loss_and_grad(theta, spec, new_batch)?;
    let mem_loss = probe_batch.map(|b| loss(theta, spec, b)).transpose()?;
    let grad_norm = libm::sqrt(grad.as_slice().iter().map(|g| g * g).sum::<f64>());
    let next = sgd_step(theta, &grad, lr)?;
    Ok((
        next,
        StepReport {
            new_loss,
            mem_loss,
            grad_norm,
        },
    ))
}

/// Index of the largest logit; ties resolve to the lowest class index.
pub fn predict(theta: &ParamVector, spec: &ModelSpec, x: &[f64]) -> usize {
    let acts = forward(theta.as_slice(), spec, x);
    let logits = acts.last().expect("output layer");
    let mut best = 0;
    for (c, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = c;
        }
    }
    best
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate_accuracy(theta: &ParamVector, spec: &ModelSpec, dataset: &[Sample]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("evaluation dataset", "must be non-empty"));
    }
    spec.check_theta(theta)?;
    if let Some(s) = dataset.iter().find(|s| s.input.len() != spec.input_dim) {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            actual: s.input.len(),
        });
    }
    let correct = dataset
        .iter()
        .filter(|s| predict(theta, spec, &s.input) == s.label)
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}
