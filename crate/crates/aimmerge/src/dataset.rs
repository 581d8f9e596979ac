//! CSV export of generated task data (feature columns then `label`).

use std::fs::File;
use std::path::Path;

use aimmerge_core::{Sample, TaskDataset};

use crate::error::{HarnessError, Result};

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let dim = samples.first().map_or(0, |s| s.input.len());
    let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for s in samples {
        let mut row: Vec<String> = s.input.iter().map(f64::to_string).collect();
        row.push(s.label.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes `task<k>_train.csv` and `task<k>_test.csv` for every task.
pub fn export_sequence(dir: &Path, tasks: &[TaskDataset]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for t in tasks {
        write_samples(&dir.join(format!("task{}_train.csv", t.task_id)), &t.train)?;
        write_samples(&dir.join(format!("task{}_test.csv", t.task_id)), &t.test)?;
    }
    Ok(())
}
