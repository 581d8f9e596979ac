//! Flat parameter-vector algebra.
//!
//! A [`ParamVector`] is the full set of trainable parameters laid out in the
//! model's canonical order (see [`crate::trainer::ModelSpec`]). Snapshots taken
//! at different times therefore align index by index, which is all that
//! merging needs.

use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ParamVector(Vec<f64>);

/// Difference between two parameter snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskVector(Vec<f64>);

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("parameter vector", "dimension must be positive"));
        }
        check_finite(&values, "parameter vector")?;
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "parameter vector dimension must be positive");
        ParamVector(alloc::vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `self + tau`, elementwise.
    pub fn add(&self, tau: &TaskVector) -> Result<ParamVector> {
        check_dim(self.dim(), tau.dim())?;
        let values: Vec<f64> = self.0.iter().zip(&tau.0).map(|(a, d)| a + d).collect();
        check_finite(&values, "parameter vector")?;
        Ok(ParamVector(values))
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TaskVector {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::invalid("task vector", "dimension must be positive"));
        }
        check_finite(&deltas, "task vector")?;
        Ok(TaskVector(deltas))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "task vector dimension must be positive");
        TaskVector(alloc::vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scale(&self, c: f64) -> TaskVector {
        TaskVector(self.0.iter().map(|d| c * d).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&d| d == 0.0)
    }
}

impl Index<usize> for TaskVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `to - from`, elementwise.
pub fn task_vector(from: &ParamVector, to: &ParamVector) -> Result<TaskVector> {
    check_dim(from.dim(), to.dim())?;
    check_finite(&from.0, "parameter vector")?;
    check_finite(&to.0, "parameter vector")?;
    Ok(TaskVector(
        to.0.iter().zip(&from.0).map(|(t, f)| t - f).collect(),
    ))
}

/// Per-step L1 magnitude of a task vector: `sum |tau_i| / steps`.
pub fn l1_rate(tau: &TaskVector, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    let total: f64 = tau.0.iter().map(|d| libm::fabs(*d)).sum();
    Ok(total / steps as f64)
}

/// `anchor + alpha1 * tau_new + alpha2 * tau_past`.
pub fn apply_merge(
    anchor: &ParamVector,
    tau_new: &TaskVector,
    tau_past: &TaskVector,
    alpha1: f64,
    alpha2: f64,
) -> Result<ParamVector> {
    check_dim(anchor.dim(), tau_new.dim())?;
    check_dim(anchor.dim(), tau_past.dim())?;
    for (name, a) in [("alpha1", alpha1), ("alpha2", alpha2)] {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid(name, "must lie in [0, 1]"));
        }
    }
    let values: Vec<f64> = anchor
        .0
        .iter()
        .zip(&tau_new.0)
        .zip(&tau_past.0)
        .map(|((a, n), p)| a + alpha1 * n + alpha2 * p)
        .collect();
    check_finite(&values, "merged parameters")?;
    Ok(ParamVector(values))
}
