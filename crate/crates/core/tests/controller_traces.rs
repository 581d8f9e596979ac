//! Hand-traced controller scenarios. Expected sequences were worked out by
//! hand from the interval and forgetting rules, not by running the code.

mod common;

use aimmerge_core::{ControllerConfig, ControllerMode, ControllerState, MergeDecision, MergeReason};
use common::{drive, intervals, with_s_init, Fired};

use MergeReason::*;

fn no_memory(_: usize, _: usize) -> Option<f64> {
    None
}

fn reasons(fired: &[Fired]) -> Vec<MergeReason> {
    fired.iter().map(|f| f.reason).collect()
}

#[test]
fn falling_signal_doubles_interval() {
    let lambdas = [4.0, 3.0, 2.0, 1.0, 0.5, 0.25];
    let (fired, st) = drive(ControllerConfig::default(), ControllerMode::FULL, &lambdas, no_memory);
    assert_eq!(intervals(&fired), [8, 8, 8, 8, 16, 32]);
    assert!(reasons(&fired).iter().all(|r| *r == Scheduled));
    assert_eq!(st.s_current(), 64);
}

#[test]
fn rising_signal_shrinks_to_floor() {
    // 8 -> round(5.33)=5 -> round(3.33)=3 -> 2 -> round(1.33)=1 clamped to 2
    let lambdas: Vec<f64> = (1..=8).map(f64::from).collect();
    let (fired, st) = drive(ControllerConfig::default(), ControllerMode::FULL, &lambdas, no_memory);
    assert_eq!(intervals(&fired), [8, 8, 8, 8, 5, 3, 2, 2]);
    assert_eq!(st.s_current(), 2);
}

#[test]
fn ceiling_clamp_and_gamma_switch() {
    // 48 -> 96 (small γ+) -> 144 clamped -> 128 held; then Up at 128 halves
    // (large γ-), and Up at 64 divides by 1.5 since 64 is not above 64.
    let lambdas = [10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let (fired, _) = drive(with_s_init(48), ControllerMode::FULL, &lambdas, no_memory);
    assert_eq!(
        intervals(&fired),
        [48, 48, 48, 48, 96, 128, 128, 128, 128, 64, 43]
    );
}

#[test]
fn sixty_four_uses_small_gammas() {
    let lambdas = [4.0, 3.0, 2.0, 1.0, 0.5];
    let (fired, _) = drive(with_s_init(64), ControllerMode::FULL, &lambdas, no_memory);
    assert_eq!(intervals(&fired), [64, 64, 64, 64, 128]);
}

#[test]
fn flat_signal_keeps_interval() {
    let (fired, _) = drive(ControllerConfig::default(), ControllerMode::FULL, &[3.0; 6], no_memory);
    assert_eq!(intervals(&fired), [8; 6]);
}

#[test]
fn flat_pairs_do_not_block_a_rise() {
    // last three pairs: flat, up, flat
    let (fired, _) = drive(
        ControllerConfig::default(),
        ControllerMode::FULL,
        &[1.0, 1.0, 2.0, 2.0, 2.0],
        no_memory,
    );
    assert_eq!(intervals(&fired), [8, 8, 8, 8, 5]);
}

#[test]
fn early_merge_strictly_before_interval() {
    // s=12: calibrate on 8 steps of 1.0 (δ=2), then three activations end at
    // step 11. The next interval has no memory and runs to term.
    let (fired, _) = drive(with_s_init(12), ControllerMode::FULL, &[1.0, 1.0], |m, step| {
        match (m, step) {
            (0, 1..=8) => Some(1.0),
            (0, _) => Some(5.0),
            _ => None,
        }
    });
    assert_eq!(
        fired,
        [
            Fired { reason: Early, interval: 11, s_before: 12 },
            Fired { reason: Scheduled, interval: 12, s_before: 12 },
        ]
    );
}

#[test]
fn third_activation_at_boundary_is_scheduled() {
    // s=9: δ = 2·2.0 from six steps; activations at 7, 8, 9
    let (fired, _) = drive(with_s_init(9), ControllerMode::FULL, &[1.0], |_, step| {
        Some(if step <= 6 { 2.0 } else { 5.0 })
    });
    assert_eq!(reasons(&fired), [Scheduled]);
    assert_eq!(intervals(&fired), [9]);
}

#[test]
fn single_activation_merges_on_schedule() {
    let (fired, _) = drive(ControllerConfig::default(), ControllerMode::FULL, &[1.0], |_, step| {
        Some(if step == 7 { 3.0 } else { 1.0 })
    });
    assert_eq!((fired[0].reason, fired[0].interval), (Scheduled, 8));
}

#[test]
fn deferral_ends_on_first_activation() {
    // quiet through step 8, so the merge is deferred; step 11 crosses δ=2
    let (fired, _) = drive(ControllerConfig::default(), ControllerMode::FULL, &[1.0], |_, step| {
        Some(if step == 11 { 3.0 } else { 1.0 })
    });
    assert_eq!((fired[0].reason, fired[0].interval), (DeferredForgetTrigger, 11));
}

#[test]
fn deferral_capped_at_twice_interval() {
    let (fired, _) = drive(ControllerConfig::default(), ControllerMode::FULL, &[1.0], |_, _| Some(1.0));
    assert_eq!((fired[0].reason, fired[0].interval), (DeferredCap, 16));
}

#[test]
fn loss_equal_to_threshold_is_not_an_activation() {
    let (fired, _) = drive(ControllerConfig::default(), ControllerMode::FULL, &[1.0], |_, step| {
        Some(if step <= 6 { 1.0 } else { 2.0 })
    });
    assert_eq!((fired[0].reason, fired[0].interval), (DeferredCap, 16));
}

#[test]
fn spikes_inside_calibration_raise_threshold() {
    // s=9: calibration losses [1,10,1,1,1,1] give δ = 2·15/6 = 5, so the
    // later 4.0 losses stay quiet and the deferral runs to 18
    let (fired, _) = drive(with_s_init(9), ControllerMode::FULL, &[1.0], |_, step| {
        Some(match step {
            2 => 10.0,
            7..=9 => 4.0,
            _ => 1.0,
        })
    });
    assert_eq!((fired[0].reason, fired[0].interval), (DeferredCap, 18));
}

#[test]
fn no_learning_signal_pins_interval() {
    let lambdas = [4.0, 3.0, 2.0, 1.0, 0.5, 0.25];
    let (fired, _) = drive(
        ControllerConfig::default(),
        ControllerMode::NO_LEARNING_SIGNAL,
        &lambdas,
        no_memory,
    );
    assert_eq!(intervals(&fired), [8; 6]);
}

#[test]
fn no_forgetting_signal_ignores_losses() {
    let lambdas = [4.0, 3.0, 2.0, 1.0, 0.5];
    let (fired, _) = drive(
        ControllerConfig::default(),
        ControllerMode::NO_FORGETTING_SIGNAL,
        &lambdas,
        |_, step| Some(if step <= 3 { 1.0 } else { 50.0 }),
    );
    assert_eq!(intervals(&fired), [8, 8, 8, 8, 16]);
    assert!(reasons(&fired).iter().all(|r| *r == Scheduled));
}

#[test]
fn fixed_interval_counts_capped_activations() {
    // s=16: 11 calibration steps, then five activations saturate F at 3
    let mut st = ControllerState::new(with_s_init(16), ControllerMode::FIXED_INTERVAL).unwrap();
    for step in 1..16 {
        let l = if step <= 11 { 1.0 } else { 5.0 };
        assert_eq!(st.observe_step(Some(l)), MergeDecision::Continue, "step {step}");
    }
    assert_eq!(
        st.observe_step(Some(5.0)),
        MergeDecision::MergeNow { reason: Scheduled, interval: 16 }
    );
    let ctx = st.on_merge(1.0);
    assert_eq!(ctx.f_count, 3);
    assert_eq!(st.f_count(), 0);
}
