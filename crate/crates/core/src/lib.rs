//! Adaptive iterative model merging for continual learning.
//!
//! This crate is `no_std` (it needs `alloc`). It holds the numerical pieces:
//! flat parameter algebra, a small dense classifier with manual backprop,
//! synthetic interfering task sequences with a rehearsal buffer, the
//! trajectory-guided merge controller, rehearsal-based fusion and the
//! continual-learning metrics. Orchestration, file formats and the CLI live in
//! the `aimmerge` crate.

#![no_std]

extern crate alloc;

pub mod controller;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod param;
pub mod rng;
pub mod tasks;
pub mod trainer;

pub use controller::{
    calibrate_threshold, next_interval, trend, ControllerConfig, ControllerMode, ControllerState,
    Dominance, MergeContext, MergeDecision, MergeReason, Phase, TrendSummary,
};
pub use error::{Error, Result};
pub use fusion::{
    execute_merge, fusion_weights, rehearsal_finetune, FusionInputs, MergeEvent, MergeOutcome,
    WeightRule,
};
pub use metrics::{compute_bwt, compute_fwt, compute_op, AccuracyMatrix, MetricsReport};
pub use param::{apply_merge, l1_rate, task_vector, ParamVector, TaskVector};
pub use tasks::{
    generate_sequence, memory_training_batches, sample_probe, store_memory, InterferenceMode,
    MemoryBuffer, Sample, SequenceSpec, TaskDataset,
};
pub use trainer::{
    evaluate_accuracy, init_model, loss, loss_and_grad, sgd_step, train_step_with_probe, Batch,
    ModelSpec, StepReport,
};
