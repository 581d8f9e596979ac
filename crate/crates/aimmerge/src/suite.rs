//! Runs every (strategy, seed) pair and aggregates the metrics.

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Strategy};
use crate::error::{HarnessError, Result};
use crate::run::{run_id, run_task_sequence, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub op: MeanStd,
    pub bwt: MeanStd,
    pub fwt: MeanStd,
    pub merge_count: f64,
}

#[derive(Debug, Clone)]
pub struct RunFailure {
    pub run_id: String,
    pub error: String,
    pub exit_code: i32,
}

#[derive(Debug)]
pub struct SuiteReport {
    /// Successful runs in (strategy, seed) config order.
    pub runs: Vec<RunOutput>,
    pub failures: Vec<RunFailure>,
    pub summaries: Vec<StrategySummary>,
}

impl SuiteReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn summary(&self, strategy: &Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| &s.strategy == strategy)
    }
}

pub fn summarize(runs: &[RunOutput], strategies: &[Strategy]) -> Vec<StrategySummary> {
    strategies
        .iter()
        .filter_map(|strategy| {
            let mine: Vec<&RunOutput> = runs
                .iter()
                .filter(|r| &r.result.strategy == strategy)
                .collect();
            if mine.is_empty() {
                return None;
            }
            let pick = |f: fn(&RunOutput) -> f64| mine.iter().map(|r| f(r)).collect::<Vec<_>>();
            Some(StrategySummary {
                strategy: *strategy,
                runs: mine.len(),
                op: MeanStd::of(&pick(|r| r.result.metrics.op)),
                bwt: MeanStd::of(&pick(|r| r.result.metrics.bwt)),
                fwt: MeanStd::of(&pick(|r| r.result.metrics.fwt)),
                merge_count: MeanStd::of(&pick(|r| r.result.merge_count as f64)).mean,
            })
        })
        .collect()
}

/// Runs all configured strategies under all seeds. Independent runs execute
/// in parallel; results come back in config order. Failed runs are reported
/// alongside the successful ones.
pub fn run_suite(config: &ExperimentConfig) -> Result<SuiteReport> {
    config.validate()?;
    let mut strategies: Vec<Strategy> = Vec::new();
    for s in &config.strategies {
        if !strategies.contains(s) {
            strategies.push(*s);
        }
    }
    let jobs: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|s| config.seeds.iter().map(move |&seed| (*s, seed)))
        .collect();

    let outcomes: Vec<(String, Result<RunOutput>)> = jobs
        .par_iter()
        .map(|&(strategy, seed)| {
            let out = run_task_sequence(config, strategy, seed);
            (run_id(&strategy, seed), out)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(run) => {
                log::info!(
                    "{id}: OP {:.4} BWT {:.4} FWT {:.4} merges {} ({:.2?})",
                    run.result.metrics.op,
                    run.result.metrics.bwt,
                    run.result.metrics.fwt,
                    run.result.merge_count,
                    run.result.wall_time
                );
                runs.push(run);
            }
            Err(e @ HarnessError::Config(_)) => return Err(e),
            Err(e) => {
                log::error!("{id}: {e}");
                failures.push(RunFailure {
                    run_id: id,
                    exit_code: e.exit_code(),
                    error: e.to_string(),
                });
            }
        }
    }
    let summaries = summarize(&runs, &strategies);
    Ok(SuiteReport {
        runs,
        failures,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[0.4]);
        assert_eq!((m.mean, m.std), (0.4, 0.0));
        let d = MeanStd::of(&[0.3, 0.3]);
        assert_eq!((d.mean, d.std), (0.3, 0.0));
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
    }
}
