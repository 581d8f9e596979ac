//! Rehearsal-based knowledge fusion.
//!
//! At a merge the update since the previous merge (`tau_new`) is combined
//! with a short rehearsal update on memory data (`tau_past`):
//!
//! ```text
//! theta_hat = anchor + alpha1 * tau_new + alpha2 * tau_past
//! ```
//!
//! The weights come from the controller's signals: the share of rising Λ
//! comparisons in the trend window and the share of forgetting activations
//! out of `f_max`, normalised to sum to one.

use crate::controller::{MergeContext, MergeReason};
use crate::error::{Error, Result};
use crate::param::{apply_merge, task_vector, ParamVector};
use crate::rng::Rng;
use crate::tasks::{memory_training_batches, sample_probe, MemoryBuffer};
use crate::trainer::{loss, loss_and_grad, sgd_step, ModelSpec};

/// How the two fusion weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightRule {
    /// Derived from the learning and forgetting signals.
    Adaptive,
    /// Global weights set by hand.
    Fixed { alpha1: f64, alpha2: f64 },
}

/// Audit record of one merge.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MergeEvent {
    pub merge_index: usize,
    pub task_id: usize,
    pub iteration: usize,
    pub actual_interval: usize,
    pub reason: MergeReason,
    pub lambda_value: f64,
    pub n_up: usize,
    pub l_w_used: usize,
    pub f_count_at_merge: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub mem_loss_before: Option<f64>,
    pub mem_loss_after: Option<f64>,
    pub rehearsal_steps: usize,
}

/// Everything about a merge that is decided before fusion runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionInputs {
    pub merge_index: usize,
    pub task_id: usize,
    pub iteration: usize,
    pub reason: MergeReason,
    pub actual_interval: usize,
    pub lambda_value: f64,
    pub n_up: usize,
    /// Trend pairs actually compared (fewer than `l_w` early on).
    pub pairs_used: usize,
    pub l_w: usize,
    pub f_count: usize,
    pub f_max: usize,
}

impl FusionInputs {
    pub fn from_context(
        ctx: &MergeContext,
        l_w: usize,
        f_max: usize,
        reason: MergeReason,
        actual_interval: usize,
        lambda_value: f64,
    ) -> Self {
        FusionInputs {
            merge_index: 0,
            task_id: 0,
            iteration: 0,
            reason,
            actual_interval,
            lambda_value,
            n_up: ctx.trend.n_up,
            pairs_used: ctx.trend.pairs(),
            l_w,
            f_count: ctx.f_count,
            f_max,
        }
    }
}

/// `(alpha1, alpha2)` from `P_new = n_up / l_w` and `P_past = f_count / f_max`,
/// normalised; `(1, 0)` when both proportions are zero. `alpha1` is taken as
/// `1 - alpha2` so the pair sums to exactly one.
pub fn fusion_weights(n_up: usize, l_w: usize, f_count: usize, f_max: usize) -> (f64, f64) {
    let p_new = if l_w == 0 { 0.0 } else { n_up as f64 / l_w as f64 };
    let p_past = if f_max == 0 { 0.0 } else { f_count as f64 / f_max as f64 };
    let total = p_new + p_past;
    if total > 0.0 {
        let alpha2 = p_past / total;
        (1.0 - alpha2, alpha2)
    } else {
        (1.0, 0.0)
    }
}

/// `steps` SGD steps on memory batches starting from `theta_j`. Returns a
/// copy of `theta_j` when there is nothing to rehearse.
#[allow(clippy::too_many_arguments)]
pub fn rehearsal_finetune(
    theta_j: &ParamVector,
    spec: &ModelSpec,
    buffer: &MemoryBuffer,
    steps: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<ParamVector> {
    if steps == 0 || buffer.is_empty() {
        return Ok(theta_j.clone());
    }
    let mut theta = theta_j.clone();
    for batch in memory_training_batches(buffer, batch_size, steps, rng)? {
        let (_, grad) = loss_and_grad(&theta, spec, &batch)?;
        theta = sgd_step(&theta, &grad, lr)?;
    }
    Ok(theta)
}

pub struct MergeOutcome {
    pub theta_hat: ParamVector,
    pub event: MergeEvent,
}

/// Runs one fusion: rehearsal for `ceil(S'/2)` steps, then the weighted
/// combination anchored at the previous merge point.
///
/// Memory losses before and after are measured on one probe batch drawn
/// from `rng` ahead of the rehearsal batches.
#[allow(clippy::too_many_arguments)]
pub fn execute_merge(
    anchor: &ParamVector,
    theta_j: &ParamVector,
    spec: &ModelSpec,
    buffer: &MemoryBuffer,
    inputs: &FusionInputs,
    rule: WeightRule,
    lr: f64,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<MergeOutcome> {
    let tau_new = task_vector(anchor, theta_j)?;
    let probe = sample_probe(buffer, batch_size, rng);
    let rehearsal_steps = if buffer.is_empty() {
        0
    } else {
        inputs.actual_interval.div_ceil(2)
    };
    let theta_mem = rehearsal_finetune(theta_j, spec, buffer, rehearsal_steps, batch_size, lr, rng)?;
    let tau_past = task_vector(theta_j, &theta_mem)?;

    // without memory there is no past task vector to weight
    let (alpha1, alpha2) = match rule {
        _ if buffer.is_empty() => (1.0, 0.0),
        WeightRule::Adaptive => fusion_weights(inputs.n_up, inputs.l_w, inputs.f_count, inputs.f_max),
        WeightRule::Fixed { alpha1, alpha2 } => (alpha1, alpha2),
    };
    let theta_hat = apply_merge(anchor, &tau_new, &tau_past, alpha1, alpha2).map_err(|e| match e {
        Error::NonFinite(_) => Error::Divergence {
            context: alloc::format!("non-finite merge at iteration {}", inputs.iteration),
        },
        other => other,
    })?;

    let (mem_loss_before, mem_loss_after) = match &probe {
        Some(p) => (Some(loss(theta_j, spec, p)?), Some(loss(&theta_hat, spec, p)?)),
        None => (None, None),
    };

    Ok(MergeOutcome {
        theta_hat,
        event: MergeEvent {
            merge_index: inputs.merge_index,
            task_id: inputs.task_id,
            iteration: inputs.iteration,
            actual_interval: inputs.actual_interval,
            reason: inputs.reason,
            lambda_value: inputs.lambda_value,
            n_up: inputs.n_up,
            l_w_used: inputs.pairs_used,
            f_count_at_merge: inputs.f_count,
            alpha1,
            alpha2,
            mem_loss_before,
            mem_loss_after,
            rehearsal_steps,
        },
    })
}
