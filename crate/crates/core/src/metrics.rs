//! Continual-learning metrics over the accuracy matrix.
//!
//! `a[i][j]` is the accuracy on task `i` after training through task `j`
//! (0-based here, defined for `j >= i`). `a0[i]` is the accuracy on task `i`
//! of a model trained on that task alone from the initial parameters.
//!
//! All sums run over ascending task index and are divided once at the end.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccuracyMatrix {
    a: Vec<Vec<Option<f64>>>,
    a0: Option<Vec<f64>>,
}

fn check_acc(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid("accuracy", "must lie in [0, 1]"))
    }
}

impl AccuracyMatrix {
    pub fn new(num_tasks: usize) -> Result<Self> {
        if num_tasks < 2 {
            return Err(Error::invalid("accuracy matrix", "need at least 2 tasks"));
        }
        Ok(AccuracyMatrix {
            a: vec![vec![None; num_tasks]; num_tasks],
            a0: None,
        })
    }

    /// Builds a full matrix from row-major values; entries below the diagonal
    /// are ignored.
    pub fn from_rows(rows: &[Vec<f64>], a0: Option<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        let mut m = AccuracyMatrix::new(k)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate().skip(i) {
                m.set(i, j, v)?;
            }
        }
        if let Some(a0) = a0 {
            m.set_individual(a0)?;
        }
        Ok(m)
    }

    pub fn num_tasks(&self) -> usize {
        self.a.len()
    }

    pub fn set(&mut self, task: usize, after: usize, value: f64) -> Result<()> {
        let k = self.num_tasks();
        if task >= k || after >= k || after < task {
            return Err(Error::invalid("accuracy index", "need task <= after < num_tasks"));
        }
        check_acc(value)?;
        self.a[task][after] = Some(value);
        Ok(())
    }

    pub fn set_individual(&mut self, a0: Vec<f64>) -> Result<()> {
        if a0.len() != self.num_tasks() {
            return Err(Error::DimensionMismatch {
                expected: self.num_tasks(),
                actual: a0.len(),
            });
        }
        for &v in &a0 {
            check_acc(v)?;
        }
        self.a0 = Some(a0);
        Ok(())
    }

    pub fn get(&self, task: usize, after: usize) -> Option<f64> {
        self.a.get(task)?.get(after).copied().flatten()
    }

    pub fn individual(&self) -> Option<&[f64]> {
        self.a0.as_deref()
    }

    fn require(&self, task: usize, after: usize) -> Result<f64> {
        self.get(task, after)
            .ok_or_else(|| Error::invalid("accuracy matrix", alloc::format!("a[{task}][{after}] missing")))
    }

    /// Final accuracies `a[i][K-1]`.
    pub fn final_row(&self) -> Result<Vec<f64>> {
        let last = self.num_tasks() - 1;
        (0..self.num_tasks()).map(|i| self.require(i, last)).collect()
    }
}

/// Mean of the final accuracies.
pub fn compute_op(m: &AccuracyMatrix) -> Result<f64> {
    let finals = m.final_row()?;
    let mut sum = 0.0;
    for v in &finals {
        sum += v;
    }
    Ok(sum / finals.len() as f64)
}

/// Mean change from just-learned to final accuracy over all but the last task.
pub fn compute_bwt(m: &AccuracyMatrix) -> Result<f64> {
    let k = m.num_tasks();
    if k < 2 {
        return Err(Error::invalid("accuracy matrix", "need at least 2 tasks"));
    }
    let mut sum = 0.0;
    for i in 0..k - 1 {
        sum += m.require(i, k - 1)? - m.require(i, i)?;
    }
    Ok(sum / (k - 1) as f64)
}

/// Mean gap between sequential and individual accuracy on each task.
pub fn compute_fwt(m: &AccuracyMatrix) -> Result<f64> {
    let a0 = m
        .individual()
        .ok_or_else(|| Error::invalid("accuracy matrix", "individual-training row missing"))?;
    let k = m.num_tasks();
    let mut sum = 0.0;
    for (i, base) in a0.iter().enumerate() {
        sum += m.require(i, i)? - base;
    }
    Ok(sum / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub op: f64,
    pub bwt: f64,
    pub fwt: f64,
    pub per_task_final: Vec<f64>,
}

impl MetricsReport {
    pub fn from_matrix(m: &AccuracyMatrix) -> Result<Self> {
        Ok(MetricsReport {
            op: compute_op(m)?,
            bwt: compute_bwt(m)?,
            fwt: compute_fwt(m)?,
            per_task_final: m.final_row()?,
        })
    }
}
