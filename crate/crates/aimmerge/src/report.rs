//! Result files.
//!
//! Layout of an output directory:
//!
//! ```text
//! config.json                 config echo (re-runnable)
//! metrics.csv                 one row per run
//! summary.csv                 mean/std per strategy
//! merges.csv                  one row per merge event
//! failures.csv                runs that aborted
//! runs/<run_id>/trajectory.jsonl
//! runs/<run_id>/accuracy.csv
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::run::{RunOutput, TrajectoryRecord};
use crate::suite::SuiteReport;

pub const METRICS_HEADER: [&str; 7] = ["run_id", "seed", "strategy", "OP", "BWT", "FWT", "merge_count"];
pub const SUMMARY_HEADER: [&str; 9] = [
    "strategy", "runs", "OP_mean", "OP_std", "BWT_mean", "BWT_std", "FWT_mean", "FWT_std",
    "merge_count_mean",
];
pub const MERGES_HEADER: [&str; 15] = [
    "run_id", "merge_index", "task_id", "iteration", "actual_interval", "reason", "lambda",
    "n_up", "l_w_used", "f_count", "alpha1", "alpha2", "mem_loss_before", "mem_loss_after",
    "rehearsal_steps",
];

/// A parsed row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub strategy: String,
    #[serde(rename = "OP")]
    pub op: f64,
    #[serde(rename = "BWT")]
    pub bwt: f64,
    #[serde(rename = "FWT")]
    pub fwt: f64,
    pub merge_count: usize,
}

/// A parsed row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub runs: usize,
    #[serde(rename = "OP_mean")]
    pub op_mean: f64,
    #[serde(rename = "OP_std")]
    pub op_std: f64,
    #[serde(rename = "BWT_mean")]
    pub bwt_mean: f64,
    #[serde(rename = "BWT_std")]
    pub bwt_std: f64,
    #[serde(rename = "FWT_mean")]
    pub fwt_mean: f64,
    #[serde(rename = "FWT_std")]
    pub fwt_std: f64,
    pub merge_count_mean: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn run_dir(dir: &Path, run_id: &str) -> PathBuf {
    dir.join("runs").join(run_id)
}

fn write_trajectory(path: &Path, run: &RunOutput) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for record in &run.trajectory {
        let line = serde_json::to_string(record).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        writeln!(w, "{line}").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_accuracy(path: &Path, run: &RunOutput) -> Result<()> {
    let m = &run.result.accuracy;
    let k = m.num_tasks();
    let mut header: Vec<String> = vec!["task".into()];
    header.extend((1..=k).map(|j| format!("after_{j}")));
    header.push("individual".into());
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..k).map(|i| {
        let mut row = vec![(i + 1).to_string()];
        row.extend((0..k).map(|j| opt(m.get(i, j))));
        row.push(opt(m.individual().map(|a| a[i])));
        row
    });
    write_rows(path, &header_ref, rows)
}

/// Writes every result file for `report` into `dir`.
pub fn emit_reports(config: &ExperimentConfig, report: &SuiteReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_json()).map_err(|e| HarnessError::io(&config_path, e))?;

    write_rows(
        &dir.join("metrics.csv"),
        &METRICS_HEADER,
        report.runs.iter().map(|r| {
            let m = &r.result.metrics;
            vec![
                r.result.run_id.clone(),
                r.result.seed.to_string(),
                r.result.strategy.label(),
                m.op.to_string(),
                m.bwt.to_string(),
                m.fwt.to_string(),
                r.result.merge_count.to_string(),
            ]
        }),
    )?;

    write_rows(
        &dir.join("summary.csv"),
        &SUMMARY_HEADER,
        report.summaries.iter().map(|s| {
            vec![
                s.strategy.label(),
                s.runs.to_string(),
                s.op.mean.to_string(),
                s.op.std.to_string(),
                s.bwt.mean.to_string(),
                s.bwt.std.to_string(),
                s.fwt.mean.to_string(),
                s.fwt.std.to_string(),
                s.merge_count.to_string(),
            ]
        }),
    )?;

    write_rows(
        &dir.join("merges.csv"),
        &MERGES_HEADER,
        report.runs.iter().flat_map(|r| {
            r.merges.iter().map(move |e| {
                vec![
                    r.result.run_id.clone(),
                    e.merge_index.to_string(),
                    e.task_id.to_string(),
                    e.iteration.to_string(),
                    e.actual_interval.to_string(),
                    e.reason.as_str().to_string(),
                    e.lambda_value.to_string(),
                    e.n_up.to_string(),
                    e.l_w_used.to_string(),
                    e.f_count_at_merge.to_string(),
                    e.alpha1.to_string(),
                    e.alpha2.to_string(),
                    opt(e.mem_loss_before),
                    opt(e.mem_loss_after),
                    e.rehearsal_steps.to_string(),
                ]
            })
        }),
    )?;

    write_rows(
        &dir.join("failures.csv"),
        &["run_id", "exit_code", "error"],
        report
            .failures
            .iter()
            .map(|f| vec![f.run_id.clone(), f.exit_code.to_string(), f.error.clone()]),
    )?;

    for run in &report.runs {
        let rd = run_dir(dir, &run.result.run_id);
        fs::create_dir_all(&rd).map_err(|e| HarnessError::io(&rd, e))?;
        write_trajectory(&rd.join("trajectory.jsonl"), run)?;
        write_accuracy(&rd.join("accuracy.csv"), run)?;
    }
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_metrics(dir: &Path) -> Result<Vec<MetricsRow>> {
    read_csv(&dir.join("metrics.csv"))
}

pub fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>> {
    read_csv(&dir.join("summary.csv"))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| HarnessError::io(path, e))?;
            serde_json::from_str(&line).map_err(|source| HarnessError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// Checks one trajectory: global iterations increase by one, and every
/// merge's interval equals the gap to the previous merge or task start.
/// Returns the number of merge records.
pub fn check_trajectory(records: &[TrajectoryRecord]) -> std::result::Result<usize, String> {
    let mut last_iter = 0usize;
    let mut interval_start = 0usize;
    let mut merges = 0usize;
    for r in records {
        match r {
            TrajectoryRecord::Iteration { global_iter, .. } => {
                if *global_iter != last_iter + 1 {
                    return Err(format!("iteration {global_iter} follows {last_iter}"));
                }
                last_iter = *global_iter;
            }
            TrajectoryRecord::Merge { event, .. } => {
                merges += 1;
                if event.iteration != last_iter {
                    return Err(format!("merge {} logged at {last_iter}", event.merge_index));
                }
                let gap = event.iteration - interval_start;
                if event.actual_interval != gap {
                    return Err(format!(
                        "merge {} reports interval {} but the gap is {gap}",
                        event.merge_index, event.actual_interval
                    ));
                }
                interval_start = event.iteration;
            }
            TrajectoryRecord::TaskBoundary { global_iter, .. } => {
                interval_start = *global_iter;
            }
            _ => {}
        }
    }
    Ok(merges)
}

/// Re-reads an output directory and cross-checks the metrics file against
/// the per-run trajectories.
pub fn verify_dir(dir: &Path) -> Result<Vec<MetricsRow>> {
    let rows = read_metrics(dir)?;
    for row in &rows {
        let path = run_dir(dir, &row.run_id).join("trajectory.jsonl");
        let records = read_trajectory(&path)?;
        let merges = check_trajectory(&records).map_err(|reason| HarnessError::Format {
            path: path.clone(),
            reason,
        })?;
        if merges != row.merge_count {
            return Err(HarnessError::Format {
                path,
                reason: format!(
                    "{} merge records but metrics.csv says {}",
                    merges, row.merge_count
                ),
            });
        }
    }
    Ok(rows)
}
