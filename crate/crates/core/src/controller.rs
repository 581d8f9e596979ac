//! Training-trajectory-guided merge controller.
//!
//! Two signals drive the merge schedule:
//!
//! * the learning signal, the per-step L1 size of the update between merges.
//!   Its recent trend (over a sliding window of Λ values) shrinks, keeps or
//!   grows the next interval;
//! * the forgetting signal, counting iterations in which the memory-probe
//!   loss exceeds a threshold calibrated on the first part of the interval.
//!   Enough activations force an early merge; none at all defers the merge
//!   up to twice the interval.
//!
//! The controller never touches parameters. It consumes one optional probe
//! loss per training iteration and one Λ value per executed merge.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Intervals strictly above this use the large-interval γ pair.
pub const LARGE_INTERVAL: usize = 64;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ControllerConfig {
    pub s_init: usize,
    /// Number of consecutive-pair comparisons in the trend window.
    pub l_w: usize,
    pub s_min: usize,
    pub s_max: usize,
    pub gamma_learn_plus_small: f64,
    pub gamma_learn_minus_small: f64,
    pub gamma_learn_plus_large: f64,
    pub gamma_learn_minus_large: f64,
    pub gamma_forget: f64,
    pub f_max: usize,
    /// Share of the interval used to calibrate the forgetting threshold.
    pub calib_fraction: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            s_init: 8,
            l_w: 3,
            s_min: 2,
            s_max: 128,
            gamma_learn_plus_small: 2.0,
            gamma_learn_minus_small: 1.5,
            gamma_learn_plus_large: 1.5,
            gamma_learn_minus_large: 2.0,
            gamma_forget: 2.0,
            f_max: 3,
            calib_fraction: 2.0 / 3.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.s_min && self.s_min <= self.s_init && self.s_init <= self.s_max) {
            return Err(Error::invalid(
                "controller intervals",
                "need 1 <= s_min <= s_init <= s_max",
            ));
        }
        if self.l_w == 0 {
            return Err(Error::invalid("l_w", "must be at least 1"));
        }
        if self.f_max == 0 {
            return Err(Error::invalid("f_max", "must be at least 1"));
        }
        let gammas = [
            self.gamma_learn_plus_small,
            self.gamma_learn_minus_small,
            self.gamma_learn_plus_large,
            self.gamma_learn_minus_large,
            self.gamma_forget,
        ];
        if gammas.iter().any(|g| !(g.is_finite() && *g > 1.0)) {
            return Err(Error::invalid("gamma", "every adjustment factor must exceed 1"));
        }
        if !(self.calib_fraction > 0.0 && self.calib_fraction < 1.0) {
            return Err(Error::invalid("calib_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `(gamma_plus, gamma_minus)` for an interval of `s` steps.
    pub fn gammas_for(&self, s: usize) -> (f64, f64) {
        if s > LARGE_INTERVAL {
            (self.gamma_learn_plus_large, self.gamma_learn_minus_large)
        } else {
            (self.gamma_learn_plus_small, self.gamma_learn_minus_small)
        }
    }

    /// Steps spent calibrating the forgetting threshold in an interval of `s`.
    pub fn calibration_steps(&self, s: usize) -> usize {
        let raw = self.calib_fraction * s as f64;
        (libm::ceil(raw - 1e-9) as usize).clamp(1, s.max(1))
    }
}

/// Which parts of the controller are active. The ablations and the
/// fixed-interval baseline switch pieces off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerMode {
    /// Adapt the interval from the Λ trend after cold start.
    pub adapt_interval: bool,
    /// Let forgetting activations trigger early merges and deferrals.
    pub forgetting_timing: bool,
    /// Calibrate δ and count activations (feeds the fusion weights).
    pub count_activations: bool,
}

impl ControllerMode {
    pub const FULL: ControllerMode = ControllerMode {
        adapt_interval: true,
        forgetting_timing: true,
        count_activations: true,
    };
    /// Interval pinned at `s_init`; forgetting logic intact.
    pub const NO_LEARNING_SIGNAL: ControllerMode = ControllerMode {
        adapt_interval: false,
        forgetting_timing: true,
        count_activations: true,
    };
    /// Merges exactly every `s_current` steps; no forgetting signal at all.
    pub const NO_FORGETTING_SIGNAL: ControllerMode = ControllerMode {
        adapt_interval: true,
        forgetting_timing: false,
        count_activations: false,
    };
    /// Merges exactly every `s_init` steps; activations still counted.
    pub const FIXED_INTERVAL: ControllerMode = ControllerMode {
        adapt_interval: false,
        forgetting_timing: false,
        count_activations: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    /// Collecting probe losses for δ. Also the resting phase of an interval
    /// whose forgetting signal is inert.
    Calibrating,
    Monitoring,
    Deferred,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Calibrating => "calibrating",
            Phase::Monitoring => "monitoring",
            Phase::Deferred => "deferred",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MergeReason {
    Scheduled,
    Early,
    DeferredForgetTrigger,
    DeferredCap,
    /// Baseline merge at the end of a task.
    TaskEnd,
}

impl MergeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            MergeReason::Scheduled => "scheduled",
            MergeReason::Early => "early",
            MergeReason::DeferredForgetTrigger => "deferred_forget_trigger",
            MergeReason::DeferredCap => "deferred_cap",
            MergeReason::TaskEnd => "task_end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeDecision {
    Continue,
    MergeNow { reason: MergeReason, interval: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    Up,
    Down,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrendSummary {
    pub n_up: usize,
    pub n_down: usize,
    pub n_flat: usize,
    pub dominance: Dominance,
}

impl TrendSummary {
    pub fn pairs(&self) -> usize {
        self.n_up + self.n_down + self.n_flat
    }
}

/// Counts rises, falls and ties over the last `l_w` adjacent pairs of
/// `history` (fewer when the history is shorter).
pub fn trend(history: &[f64], l_w: usize) -> TrendSummary {
    let pairs = l_w.min(history.len().saturating_sub(1));
    let tail = if pairs == 0 {
        &history[..0]
    } else {
        &history[history.len() - pairs - 1..]
    };
    let (mut n_up, mut n_down, mut n_flat) = (0, 0, 0);
    for w in tail.windows(2) {
        if w[1] > w[0] {
            n_up += 1;
        } else if w[1] < w[0] {
            n_down += 1;
        } else {
            n_flat += 1;
        }
    }
    let dominance = match n_up.cmp(&n_down) {
        core::cmp::Ordering::Greater => Dominance::Up,
        core::cmp::Ordering::Less => Dominance::Down,
        core::cmp::Ordering::Equal => Dominance::Balanced,
    };
    TrendSummary {
        n_up,
        n_down,
        n_flat,
        dominance,
    }
}

/// Next merge interval given the current one and the Λ trend.
///
/// Rising Λ (fast learning) shrinks the interval by γ⁻, falling Λ grows it by
/// γ⁺, a balanced window keeps it. The γ pair is picked by the current
/// interval; results are rounded half away from zero and clamped.
pub fn next_interval(s_current: usize, dominance: Dominance, config: &ControllerConfig) -> usize {
    let (plus, minus) = config.gammas_for(s_current);
    let s = s_current as f64;
    let next = match dominance {
        Dominance::Up => libm::round(s / minus) as usize,
        Dominance::Down => libm::round(s * plus) as usize,
        Dominance::Balanced => s_current,
    };
    next.clamp(config.s_min, config.s_max)
}

/// Forgetting threshold δ = γ_forget · mean(losses); `None` without losses.
pub fn calibrate_threshold(calib_losses: &[f64], gamma_forget: f64) -> Option<f64> {
    if calib_losses.is_empty() {
        return None;
    }
    let mean = calib_losses.iter().sum::<f64>() / calib_losses.len() as f64;
    Some(gamma_forget * mean)
}

/// What the fusion step needs to know about the merge just taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeContext {
    pub trend: TrendSummary,
    /// Activation count F(b) accumulated over the finished interval.
    pub f_count: usize,
    pub interval_before: usize,
    pub interval_after: usize,
    /// Whether the interval update was skipped because of cold start.
    pub cold_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    config: ControllerConfig,
    mode: ControllerMode,
    lambda_history: Vec<f64>,
    s_current: usize,
    steps_since_merge: usize,
    phase: Phase,
    calib_losses: Vec<f64>,
    delta_threshold: Option<f64>,
    f_count: usize,
    merges_completed: usize,
    pending: Option<MergeDecision>,
}

impl ControllerState {
    pub fn new(config: ControllerConfig, mode: ControllerMode) -> Result<Self> {
        config.validate()?;
        Ok(ControllerState {
            s_current: config.s_init,
            config,
            mode,
            lambda_history: Vec::new(),
            steps_since_merge: 0,
            phase: Phase::Calibrating,
            calib_losses: Vec::new(),
            delta_threshold: None,
            f_count: 0,
            merges_completed: 0,
            pending: None,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn lambda_history(&self) -> &[f64] {
        &self.lambda_history
    }

    pub fn s_current(&self) -> usize {
        self.s_current
    }

    pub fn steps_since_merge(&self) -> usize {
        self.steps_since_merge
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn delta_threshold(&self) -> Option<f64> {
        self.delta_threshold
    }

    pub fn f_count(&self) -> usize {
        self.f_count
    }

    pub fn merges_completed(&self) -> usize {
        self.merges_completed
    }

    /// True until the Λ history holds `l_w + 1` values.
    pub fn is_cold_start(&self) -> bool {
        self.lambda_history.len() <= self.config.l_w
    }

    fn exceeds(&self, mem_loss: Option<f64>) -> bool {
        matches!((mem_loss, self.delta_threshold), (Some(l), Some(d)) if l > d)
    }

    fn activate(&mut self) {
        self.f_count = (self.f_count + 1).min(self.config.f_max);
    }

    fn merge_now(&mut self, reason: MergeReason, interval: usize) -> MergeDecision {
        let d = MergeDecision::MergeNow { reason, interval };
        self.pending = Some(d);
        d
    }

    /// Advances the controller by one training iteration.
    ///
    /// `mem_loss` is the memory-probe loss of this iteration, `None` when no
    /// memory exists yet. After a `MergeNow` the caller must run the merge and
    /// call [`on_merge`](Self::on_merge); until then the pending decision is
    /// returned again without advancing.
    pub fn observe_step(&mut self, mem_loss: Option<f64>) -> MergeDecision {
        if let Some(d) = self.pending {
            return d;
        }
        self.steps_since_merge += 1;
        let step = self.steps_since_merge;
        let s = self.s_current;

        match self.phase {
            Phase::Calibrating => {
                if self.mode.count_activations {
                    if let Some(l) = mem_loss {
                        self.calib_losses.push(l);
                    }
                    if step == self.config.calibration_steps(s) {
                        if let Some(delta) =
                            calibrate_threshold(&self.calib_losses, self.config.gamma_forget)
                        {
                            self.delta_threshold = Some(delta);
                            self.phase = Phase::Monitoring;
                        }
                    }
                }
            }
            Phase::Monitoring => {
                if self.exceeds(mem_loss) {
                    self.activate();
                }
                if self.mode.forgetting_timing && self.f_count == self.config.f_max && step < s {
                    return self.merge_now(MergeReason::Early, step);
                }
            }
            Phase::Deferred => {
                if self.exceeds(mem_loss) {
                    self.activate();
                    return self.merge_now(MergeReason::DeferredForgetTrigger, step);
                }
                if step >= 2 * s {
                    return self.merge_now(MergeReason::DeferredCap, step);
                }
                return MergeDecision::Continue;
            }
        }

        if step >= s {
            let can_defer = self.mode.forgetting_timing
                && self.f_count == 0
                && self.delta_threshold.is_some();
            if can_defer {
                self.phase = Phase::Deferred;
                return MergeDecision::Continue;
            }
            return self.merge_now(MergeReason::Scheduled, step);
        }
        MergeDecision::Continue
    }

    /// Records Λ for the merge just executed, updates the interval (after
    /// cold start) and opens a fresh interval.
    pub fn on_merge(&mut self, lambda_value: f64) -> MergeContext {
        let f_count = self.f_count;
        let interval_before = self.s_current;
        self.lambda_history.push(lambda_value);
        let summary = trend(&self.lambda_history, self.config.l_w);
        let cold_start = self.is_cold_start();
        if self.mode.adapt_interval && !cold_start {
            self.s_current = next_interval(self.s_current, summary.dominance, &self.config);
        }
        self.merges_completed += 1;
        self.restart_interval();
        MergeContext {
            trend: summary,
            f_count,
            interval_before,
            interval_after: self.s_current,
            cold_start,
        }
    }

    /// Starts a new interval without recording a merge (used at task
    /// boundaries). Λ history and the current interval carry over.
    pub fn restart_interval(&mut self) {
        self.steps_since_merge = 0;
        self.f_count = 0;
        self.calib_losses.clear();
        self.delta_threshold = None;
        self.phase = Phase::Calibrating;
        self.pending = None;
    }
}
