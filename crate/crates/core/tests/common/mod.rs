#![allow(dead_code)]

use aimmerge_core::{ControllerConfig, ControllerMode, ControllerState, MergeDecision, MergeReason};

/// One observed merge: why, after how many steps, and the interval that
/// was in force when the merge fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fired {
    pub reason: MergeReason,
    pub interval: usize,
    pub s_before: usize,
}

/// Drives a controller through `lambdas.len()` merges. `loss(merge, step)`
/// supplies the probe loss of each step, counted from 1 within an interval.
pub fn drive<F>(
    config: ControllerConfig,
    mode: ControllerMode,
    lambdas: &[f64],
    mut loss: F,
) -> (Vec<Fired>, ControllerState)
where
    F: FnMut(usize, usize) -> Option<f64>,
{
    let mut st = ControllerState::new(config, mode).unwrap();
    let mut fired = Vec::new();
    for (m, &lambda) in lambdas.iter().enumerate() {
        let s_before = st.s_current();
        let mut step = 0;
        loop {
            step += 1;
            assert!(step <= 2 * s_before, "no merge within 2S");
            if let MergeDecision::MergeNow { reason, interval } = st.observe_step(loss(m, step)) {
                fired.push(Fired {
                    reason,
                    interval,
                    s_before,
                });
                break;
            }
        }
        st.on_merge(lambda);
    }
    (fired, st)
}

pub fn intervals(fired: &[Fired]) -> Vec<usize> {
    fired.iter().map(|f| f.interval).collect()
}

pub fn with_s_init(s_init: usize) -> ControllerConfig {
    ControllerConfig {
        s_init,
        ..ControllerConfig::default()
    }
}
