use std::path::PathBuf;
use std::process::ExitCode;

use aimmerge::config::ExperimentConfig;
use aimmerge::error::HarnessError;
use aimmerge::{report, selftest, suite};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aimmerge", version, about = "Adaptive iterative model merging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured strategy under every seed and write the results.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Summarise and cross-check an output directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Quick sanity checks of the trainer, controller and a tiny run.
    Selftest,
    /// Write the default configuration as JSON to stdout.
    DefaultConfig,
    /// Export the generated task data of a config as CSV files.
    ExportData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply_env_overrides()?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let results = suite::run_suite(&cfg)?;
            report::emit_reports(&cfg, &results, &cfg.output_dir)?;
            for s in &results.summaries {
                println!(
                    "{:<22} OP {:.4}±{:.4}  BWT {:+.4}±{:.4}  FWT {:+.4}±{:.4}  merges {:.1}",
                    s.strategy.label(),
                    s.op.mean,
                    s.op.std,
                    s.bwt.mean,
                    s.bwt.std,
                    s.fwt.mean,
                    s.fwt.std,
                    s.merge_count
                );
            }
            println!("results written to {}", cfg.output_dir.display());
            if let Some(first) = results.failures.first() {
                eprintln!("{} run(s) failed; first: {}", results.failures.len(), first.error);
                return Err(HarnessError::Divergence {
                    run_id: first.run_id.clone(),
                    context: first.error.clone(),
                });
            }
        }
        Command::Report { dir } => {
            let rows = report::verify_dir(&dir)?;
            println!("{:<24} {:>6} {:>8} {:>8} {:>8} {:>7}", "run_id", "seed", "OP", "BWT", "FWT", "merges");
            for r in &rows {
                println!(
                    "{:<24} {:>6} {:>8.4} {:>+8.4} {:>+8.4} {:>7}",
                    r.run_id, r.seed, r.op, r.bwt, r.fwt, r.merge_count
                );
            }
            for s in report::read_summary(&dir)? {
                println!(
                    "{:<24} n={} OP {:.4} BWT {:+.4} FWT {:+.4}",
                    s.strategy, s.runs, s.op_mean, s.bwt_mean, s.fwt_mean
                );
            }
            println!("{} runs consistent with their trajectories", rows.len());
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let mut ok = true;
            for c in &checks {
                println!("[{}] {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                std::process::exit(1);
            }
        }
        Command::DefaultConfig => print!("{}", ExperimentConfig::default().to_json()),
        Command::ExportData { config, dir, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let tasks = aimmerge_core::generate_sequence(&cfg.sequence_for(seed))?;
            aimmerge::dataset::export_sequence(&dir, &tasks)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
