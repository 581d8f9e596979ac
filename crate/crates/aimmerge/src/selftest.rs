//! Quick end-to-end sanity checks behind `aimmerge selftest`.

use aimmerge_core::controller::{ControllerConfig, ControllerMode, ControllerState, MergeDecision};
use aimmerge_core::{init_model, loss, loss_and_grad, Batch, ModelSpec, ParamVector};

use crate::config::{ExperimentConfig, Strategy};
use crate::run::run_task_sequence;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn gradient_check() -> Check {
    let spec = ModelSpec {
        input_dim: 3,
        hidden_dims: vec![4],
        num_classes: 3,
        activation: Default::default(),
        seed: 7,
    };
    let theta = init_model(&spec).expect("valid spec");
    let batch = Batch::new(
        vec![0.3, -0.7, 1.1, -0.2, 0.5, 0.9, 1.4, 0.1, -0.6],
        vec![0, 2, 1],
        3,
    )
    .expect("valid batch");
    let (_, grad) = loss_and_grad(&theta, &spec, &batch).expect("finite loss");
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..theta.dim() {
        let mut plus = theta.clone().into_vec();
        let mut minus = plus.clone();
        plus[i] += h;
        minus[i] -= h;
        let lp = loss(&ParamVector::new(plus).unwrap(), &spec, &batch).unwrap();
        let lm = loss(&ParamVector::new(minus).unwrap(), &spec, &batch).unwrap();
        let numeric = (lp - lm) / (2.0 * h);
        let denom = numeric.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max((numeric - grad[i]).abs() / denom);
    }
    Check {
        name: "gradient matches central differences",
        passed: worst < 1e-4,
        detail: format!("max relative error {worst:.2e}"),
    }
}

fn controller_check() -> Check {
    let mut st = ControllerState::new(ControllerConfig::default(), ControllerMode::FULL)
        .expect("default config");
    let mut first = None;
    for step in 1..=40 {
        if let MergeDecision::MergeNow { interval, .. } = st.observe_step(Some(1.0)) {
            first = Some((step, interval));
            break;
        }
    }
    Check {
        name: "quiet forgetting signal defers to 2S",
        passed: first == Some((16, 16)),
        detail: format!("{first:?}"),
    }
}

fn tiny_run_check() -> Check {
    let mut cfg = ExperimentConfig::default();
    cfg.sequence.num_tasks = 2;
    cfg.sequence.samples_per_task = 80;
    cfg.sequence.test_samples_per_task = 40;
    cfg.epochs_per_task = 2;
    cfg.seeds = vec![0];
    match run_task_sequence(&cfg, Strategy::Aim, 0) {
        Ok(run) => Check {
            name: "two-task run completes",
            passed: run.result.merge_count > 0 && run.result.metrics.op.is_finite(),
            detail: format!(
                "OP {:.3}, {} merges",
                run.result.metrics.op, run.result.merge_count
            ),
        },
        Err(e) => Check {
            name: "two-task run completes",
            passed: false,
            detail: e.to_string(),
        },
    }
}

pub fn run_all() -> Vec<Check> {
    vec![gradient_check(), controller_check(), tiny_run_check()]
}
