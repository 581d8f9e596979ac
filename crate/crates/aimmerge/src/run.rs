//! One continual-learning run: a strategy trained over the whole task
//! sequence under one seed.

use std::time::{Duration, Instant};

use aimmerge_core::controller::{ControllerState, MergeDecision, MergeReason, Phase};
use aimmerge_core::fusion::{execute_merge, FusionInputs, MergeEvent};
use aimmerge_core::rng::{self, Rng, Stream};
use aimmerge_core::{
    evaluate_accuracy, generate_sequence, init_model, l1_rate, loss, loss_and_grad, sample_probe,
    sgd_step, store_memory, task_vector, train_step_with_probe, AccuracyMatrix, Batch,
    MemoryBuffer, MetricsReport, ModelSpec, ParamVector, TaskDataset,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Strategy};
use crate::error::{HarnessError, Result};

/// One line of `trajectory.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrajectoryRecord {
    Iteration {
        run_id: String,
        seed: u64,
        task_id: usize,
        global_iter: usize,
        iter_in_task: usize,
        new_loss: f64,
        mem_loss: Option<f64>,
        steps_since_merge: Option<usize>,
        phase: Option<Phase>,
        f_count: Option<usize>,
    },
    Merge {
        run_id: String,
        #[serde(flatten)]
        event: MergeEvent,
    },
    TaskBoundary {
        run_id: String,
        task_id: usize,
        global_iter: usize,
        accuracy_row: Vec<f64>,
    },
    Calibrated {
        run_id: String,
        global_iter: usize,
        delta: f64,
    },
    Activation {
        run_id: String,
        global_iter: usize,
        f_count: usize,
    },
    IntervalChange {
        run_id: String,
        global_iter: usize,
        from: usize,
        to: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_id: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub metrics: MetricsReport,
    pub accuracy: AccuracyMatrix,
    pub merge_count: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub trajectory: Vec<TrajectoryRecord>,
    pub merges: Vec<MergeEvent>,
    pub final_theta: ParamVector,
}

pub fn run_id(strategy: &Strategy, seed: u64) -> String {
    format!("{}-s{seed}", strategy.label())
}

/// Seeded epoch-by-epoch batching over a task's training set.
fn epoch_batches(task: &TaskDataset, batch_size: usize, rng: &mut Rng) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..task.n_train()).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .map(|idx| Batch::from_samples(idx.iter().map(|&i| &task.train[i])).expect("task samples"))
        .collect()
}

/// Accuracy of plain training on each task alone, from the initial model,
/// with the same iteration budget as one task of the sequence.
pub fn individual_accuracies(
    config: &ExperimentConfig,
    spec: &ModelSpec,
    theta0: &ParamVector,
    tasks: &[TaskDataset],
    seed: u64,
) -> aimmerge_core::Result<Vec<f64>> {
    tasks
        .iter()
        .map(|task| {
            let mut rng = rng::indexed_stream(seed, Stream::Shuffle, task.task_id as u64);
            let mut theta = theta0.clone();
            for _ in 0..config.epochs_per_task {
                for batch in epoch_batches(task, config.batch_size, &mut rng) {
                    let (_, grad) = loss_and_grad(&theta, spec, &batch)?;
                    theta = sgd_step(&theta, &grad, config.lr)?;
                }
            }
            evaluate_accuracy(&theta, spec, &task.test)
        })
        .collect()
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    strategy: Strategy,
    seed: u64,
    run_id: String,
    spec: ModelSpec,
    trajectory: Vec<TrajectoryRecord>,
    merges: Vec<MergeEvent>,
    probe_rng: Rng,
    rehearsal_rng: Rng,
    replay_rng: Rng,
}

impl Runner<'_> {
    fn diverged(&self, task_id: usize, iter: usize, e: aimmerge_core::Error) -> HarnessError {
        match e {
            aimmerge_core::Error::Divergence { context } => HarnessError::Divergence {
                run_id: self.run_id.clone(),
                context: format!("task {task_id}, iteration {iter}: {context}"),
            },
            other => other.into(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn merge(
        &mut self,
        controller: Option<&mut ControllerState>,
        anchor: &ParamVector,
        theta: &ParamVector,
        memory: &MemoryBuffer,
        task_id: usize,
        global_iter: usize,
        reason: MergeReason,
        interval: usize,
    ) -> aimmerge_core::Result<ParamVector> {
        let tau_new = task_vector(anchor, theta)?;
        let lambda = l1_rate(&tau_new, interval)?;
        let mut inputs = match controller {
            Some(ctrl) => {
                let ctx = ctrl.on_merge(lambda);
                if ctx.interval_after != ctx.interval_before {
                    log::debug!(
                        "{} iter {global_iter}: interval {} -> {}",
                        self.run_id,
                        ctx.interval_before,
                        ctx.interval_after
                    );
                    self.trajectory.push(TrajectoryRecord::IntervalChange {
                        run_id: self.run_id.clone(),
                        global_iter,
                        from: ctx.interval_before,
                        to: ctx.interval_after,
                    });
                }
                let c = ctrl.config();
                FusionInputs::from_context(&ctx, c.l_w, c.f_max, reason, interval, lambda)
            }
            None => FusionInputs {
                merge_index: 0,
                task_id,
                iteration: global_iter,
                reason,
                actual_interval: interval,
                lambda_value: lambda,
                n_up: 0,
                pairs_used: 0,
                l_w: self.config.controller.l_w,
                f_count: 0,
                f_max: self.config.controller.f_max,
            },
        };
        inputs.merge_index = self.merges.len() + 1;
        inputs.task_id = task_id;
        inputs.iteration = global_iter;
        let out = execute_merge(
            anchor,
            theta,
            &self.spec,
            memory,
            &inputs,
            self.strategy.weight_rule(),
            self.config.lr,
            self.config.batch_size,
            &mut self.rehearsal_rng,
        )?;
        log::debug!(
            "{} iter {}: merge {} ({}, S'={}) alpha=({:.3}, {:.3})",
            self.run_id,
            out.event.iteration,
            out.event.merge_index,
            out.event.reason.as_str(),
            out.event.actual_interval,
            out.event.alpha1,
            out.event.alpha2
        );
        self.trajectory.push(TrajectoryRecord::Merge {
            run_id: self.run_id.clone(),
            event: out.event.clone(),
        });
        self.merges.push(out.event);
        Ok(out.theta_hat)
    }

    fn controller_events(&mut self, before: &ControllerState, after: &ControllerState, iter: usize) {
        if before.delta_threshold().is_none() {
            if let Some(delta) = after.delta_threshold() {
                log::debug!("{} iter {iter}: threshold calibrated at {delta:.4}", self.run_id);
                self.trajectory.push(TrajectoryRecord::Calibrated {
                    run_id: self.run_id.clone(),
                    global_iter: iter,
                    delta,
                });
            }
        }
        if after.f_count() > before.f_count() {
            log::debug!("{} iter {iter}: activation, F = {}", self.run_id, after.f_count());
            self.trajectory.push(TrajectoryRecord::Activation {
                run_id: self.run_id.clone(),
                global_iter: iter,
                f_count: after.f_count(),
            });
        }
    }

    fn run(mut self) -> Result<RunOutput> {
        let started = Instant::now();
        let config = self.config;
        let tasks = generate_sequence(&config.sequence_for(self.seed))?;
        let theta0 = init_model(&self.spec)?;
        let a0 = individual_accuracies(config, &self.spec, &theta0, &tasks, self.seed)
            .map_err(|e| self.diverged(0, 0, e))?;

        let strategy = self.strategy;
        let new_controller = || -> Result<Option<ControllerState>> {
            let Some(mode) = strategy.controller_mode() else {
                return Ok(None);
            };
            let mut c = config.controller.clone();
            if let Strategy::FixedInterval { interval } = strategy {
                c.s_init = interval;
                c.s_min = c.s_min.min(interval);
                c.s_max = c.s_max.max(interval);
            }
            Ok(Some(ControllerState::new(c, mode)?))
        };
        let mut controller = new_controller()?;

        let mut memory = MemoryBuffer::new(config.memory_fraction)?;
        let mut memory_rng = rng::stream(self.seed, Stream::Memory);
        let mut shuffle_rng = rng::stream(self.seed, Stream::Shuffle);
        let mut accuracy = AccuracyMatrix::new(tasks.len())?;
        let mut theta = theta0;
        let mut global_iter = 0usize;

        for (k, task) in tasks.iter().enumerate() {
            let task_id = task.task_id;
            let mut anchor = theta.clone();
            let task_start = global_iter;
            match controller.as_mut() {
                Some(_) if config.reset_controller_per_task && k > 0 => {
                    controller = new_controller()?
                }
                Some(c) => c.restart_interval(),
                None => {}
            }

            let mut iter_in_task = 0;
            for _ in 0..config.epochs_per_task {
                for batch in epoch_batches(task, config.batch_size, &mut shuffle_rng) {
                    iter_in_task += 1;
                    global_iter += 1;
                    let step = self
                        .train_iteration(&theta, &batch, &memory)
                        .map_err(|e| self.diverged(task_id, iter_in_task, e))?;
                    theta = step.0;
                    let report = step.1;

                    let mut decision = MergeDecision::Continue;
                    if let Some(ctrl) = controller.as_mut() {
                        let before = ctrl.clone();
                        decision = ctrl.observe_step(report.mem_loss);
                        self.controller_events(&before, ctrl, global_iter);
                    }
                    let ctrl_view = controller.as_ref();
                    self.trajectory.push(TrajectoryRecord::Iteration {
                        run_id: self.run_id.clone(),
                        seed: self.seed,
                        task_id,
                        global_iter,
                        iter_in_task,
                        new_loss: report.new_loss,
                        mem_loss: report.mem_loss,
                        steps_since_merge: ctrl_view.map(|c| c.steps_since_merge()),
                        phase: ctrl_view.map(|c| c.phase()),
                        f_count: ctrl_view.map(|c| c.f_count()),
                    });

                    if let MergeDecision::MergeNow { reason, interval } = decision {
                        theta = self
                            .merge(
                                controller.as_mut(),
                                &anchor,
                                &theta,
                                &memory,
                                task_id,
                                global_iter,
                                reason,
                                interval,
                            )
                            .map_err(|e| self.diverged(task_id, iter_in_task, e))?;
                        anchor = theta.clone();
                    }
                }
            }

            if matches!(self.strategy, Strategy::SingleMergeEndOfTask { .. }) {
                theta = self
                    .merge(
                        None,
                        &anchor,
                        &theta,
                        &memory,
                        task_id,
                        global_iter,
                        MergeReason::TaskEnd,
                        global_iter - task_start,
                    )
                    .map_err(|e| self.diverged(task_id, iter_in_task, e))?;
            }

            if self.strategy.uses_memory() {
                store_memory(&mut memory, task, &mut memory_rng);
            }
            let mut row = Vec::with_capacity(k + 1);
            for (i, earlier) in tasks.iter().enumerate().take(k + 1) {
                let acc = evaluate_accuracy(&theta, &self.spec, &earlier.test)?;
                accuracy.set(i, k, acc)?;
                row.push(acc);
            }
            self.trajectory.push(TrajectoryRecord::TaskBoundary {
                run_id: self.run_id.clone(),
                task_id,
                global_iter,
                accuracy_row: row,
            });
        }

        accuracy.set_individual(a0)?;
        let metrics = MetricsReport::from_matrix(&accuracy)?;
        Ok(RunOutput {
            result: RunResult {
                run_id: self.run_id,
                seed: self.seed,
                strategy: self.strategy,
                metrics,
                accuracy,
                merge_count: self.merges.len(),
                wall_time: started.elapsed(),
            },
            trajectory: self.trajectory,
            merges: self.merges,
            final_theta: theta,
        })
    }

    fn train_iteration(
        &mut self,
        theta: &ParamVector,
        batch: &Batch,
        memory: &MemoryBuffer,
    ) -> aimmerge_core::Result<(ParamVector, aimmerge_core::StepReport)> {
        let lr = self.config.lr;
        if self.strategy.probes_memory() {
            let probe = sample_probe(memory, self.config.batch_size, &mut self.probe_rng);
            return train_step_with_probe(theta, &self.spec, batch, probe.as_ref(), lr);
        }
        if matches!(self.strategy, Strategy::ReplayOnly) {
            if let Some(replay) = sample_probe(memory, self.config.batch_size, &mut self.replay_rng) {
                let new_loss = loss(theta, &self.spec, batch)?;
                let mem_loss = loss(theta, &self.spec, &replay)?;
                let (_, grad) = loss_and_grad(theta, &self.spec, &batch.concat(&replay)?)?;
                let grad_norm = grad.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
                let next = sgd_step(theta, &grad, lr)?;
                return Ok((
                    next,
                    aimmerge_core::StepReport {
                        new_loss,
                        mem_loss: Some(mem_loss),
                        grad_norm,
                    },
                ));
            }
        }
        train_step_with_probe(theta, &self.spec, batch, None, lr)
    }
}

/// Trains `strategy` over the configured task sequence under `seed`.
pub fn run_task_sequence(
    config: &ExperimentConfig,
    strategy: Strategy,
    seed: u64,
) -> Result<RunOutput> {
    config.validate()?;
    Runner {
        config,
        strategy,
        seed,
        run_id: run_id(&strategy, seed),
        spec: config.model_for(seed),
        trajectory: Vec::new(),
        merges: Vec::new(),
        probe_rng: rng::stream(seed, Stream::Probe),
        rehearsal_rng: rng::stream(seed, Stream::Rehearsal),
        replay_rng: rng::stream(seed, Stream::Replay),
    }
    .run()
}
