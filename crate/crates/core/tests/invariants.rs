mod common;

use aimmerge_core::{
    apply_merge, fusion_weights, l1_rate, next_interval, task_vector, trend, ControllerConfig,
    ControllerMode, ControllerState, Dominance, MergeDecision, MergeReason, ParamVector,
};
use common::{drive, intervals};
use proptest::prelude::*;

fn vec_pair(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|d| {
        (
            prop::collection::vec(-1e3..1e3f64, d),
            prop::collection::vec(-1e3..1e3f64, d),
        )
    })
}

fn dominance() -> impl Strategy<Value = Dominance> {
    prop_oneof![Just(Dominance::Up), Just(Dominance::Down), Just(Dominance::Balanced)]
}

fn modes() -> impl Strategy<Value = ControllerMode> {
    prop_oneof![
        Just(ControllerMode::FULL),
        Just(ControllerMode::NO_LEARNING_SIGNAL),
        Just(ControllerMode::NO_FORGETTING_SIGNAL),
        Just(ControllerMode::FIXED_INTERVAL),
    ]
}

/// Probe losses for a run of merges; `None` marks a step without memory.
fn loss_script(len: usize) -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.9, 0.0..10.0f64), len)
}

proptest! {
    #[test]
    fn task_vector_round_trip((a, b) in vec_pair(32)) {
        let a = ParamVector::new(a).unwrap();
        let b = ParamVector::new(b).unwrap();
        let tau = task_vector(&a, &b).unwrap();
        prop_assert!(a.add(&tau).unwrap().max_abs_diff(&b) <= 1e-12);
        prop_assert!(task_vector(&a, &a).unwrap().is_zero());
    }

    #[test]
    fn task_vectors_are_linear((a, b) in vec_pair(32), c in prop::collection::vec(-1e3..1e3f64, 32)) {
        let d = a.len();
        let a = ParamVector::new(a).unwrap();
        let b = ParamVector::new(b).unwrap();
        let c = ParamVector::new(c[..d].to_vec()).unwrap();
        let ab = task_vector(&a, &b).unwrap();
        let bc = task_vector(&b, &c).unwrap();
        let ac = task_vector(&a, &c).unwrap();
        for i in 0..d {
            prop_assert!((ab[i] + bc[i] - ac[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn l1_rate_is_homogeneous((a, b) in vec_pair(32), k in -50.0..50.0f64, steps in 1usize..200) {
        let tau = task_vector(&ParamVector::new(a).unwrap(), &ParamVector::new(b).unwrap()).unwrap();
        let base = l1_rate(&tau, steps).unwrap();
        let scaled = l1_rate(&tau.scale(k), steps).unwrap();
        prop_assert!((scaled - k.abs() * base).abs() <= 1e-12 * (1.0 + scaled.abs()));
    }

    #[test]
    fn merge_weights_sum_to_one(l_w in 1usize..=16, f_max in 1usize..=16, seed in any::<u64>()) {
        let n_up = (seed % (l_w as u64 + 1)) as usize;
        let f = ((seed >> 32) % (f_max as u64 + 1)) as usize;
        let (a1, a2) = fusion_weights(n_up, l_w, f, f_max);
        prop_assert!((0.0..=1.0).contains(&a1) && (0.0..=1.0).contains(&a2));
        if n_up + f > 0 {
            prop_assert_eq!(a1 + a2, 1.0);
        } else {
            prop_assert_eq!((a1, a2), (1.0, 0.0));
        }
    }

    #[test]
    fn merge_with_unit_new_weight_lands_on_endpoint((a, b) in vec_pair(32), p in prop::collection::vec(-1.0..1.0f64, 32)) {
        let d = a.len();
        let anchor = ParamVector::new(a).unwrap();
        let theta_j = ParamVector::new(b).unwrap();
        let tau_new = task_vector(&anchor, &theta_j).unwrap();
        let past = ParamVector::new(p[..d].to_vec()).unwrap();
        let tau_past = task_vector(&theta_j, &past).unwrap();
        let merged = apply_merge(&anchor, &tau_new, &tau_past, 1.0, 0.0).unwrap();
        prop_assert!(merged.max_abs_diff(&theta_j) <= 1e-12);
    }

    #[test]
    fn trend_counts_available_pairs(h in prop::collection::vec(0.0..4.0f64, 1..20), l_w in 1usize..8) {
        let t = trend(&h, l_w);
        prop_assert_eq!(t.pairs(), l_w.min(h.len() - 1));
    }

    #[test]
    fn interval_stays_in_bounds(s in 1usize..400, d in dominance(), s_min in 1usize..8, span in 0usize..200) {
        let config = ControllerConfig { s_min, s_init: s_min, s_max: s_min + span, ..Default::default() };
        let next = next_interval(s, d, &config);
        prop_assert!(config.s_min <= next && next <= config.s_max);
    }

    #[test]
    fn interval_responds_in_the_right_direction(s in 2usize..=128, d in dominance()) {
        let config = ControllerConfig::default();
        let next = next_interval(s, d, &config);
        match d {
            Dominance::Up => prop_assert!(next <= s),
            Dominance::Down => prop_assert!(next >= s),
            Dominance::Balanced => prop_assert_eq!(next, s),
        }
    }

    #[test]
    fn controller_state_stays_consistent(
        mode in modes(),
        s_init in 2usize..24,
        lambdas in prop::collection::vec(0.0..5.0f64, 1..12),
        script in loss_script(600),
    ) {
        let config = ControllerConfig { s_init, ..Default::default() };
        let f_max = config.f_max;
        let mut st = ControllerState::new(config, mode).unwrap();
        let mut t = 0;
        for &lambda in &lambdas {
            let s = st.s_current();
            loop {
                let l = script[t % script.len()];
                t += 1;
                let decision = st.observe_step(l);
                prop_assert!(st.steps_since_merge() <= 2 * s);
                prop_assert!(st.f_count() <= f_max);
                if let MergeDecision::MergeNow { reason, interval } = decision {
                    prop_assert_eq!(interval, st.steps_since_merge());
                    match reason {
                        MergeReason::Early => {
                            prop_assert_eq!(st.f_count(), f_max);
                            prop_assert!(interval < s);
                        }
                        MergeReason::DeferredCap => prop_assert_eq!(interval, 2 * s),
                        MergeReason::Scheduled => prop_assert_eq!(interval, s),
                        MergeReason::DeferredForgetTrigger => prop_assert!(interval > s && interval <= 2 * s),
                        MergeReason::TaskEnd => prop_assert!(false, "controller never ends a task"),
                    }
                    break;
                }
            }
            st.on_merge(lambda);
            prop_assert!(st.s_current() >= 2 && st.s_current() <= 128);
            prop_assert_eq!(st.f_count(), 0);
        }
    }

    #[test]
    fn merges_replay_identically(
        mode in modes(),
        lambdas in prop::collection::vec(0.0..5.0f64, 1..10),
        script in loss_script(300),
    ) {
        let loss = |m: usize, step: usize| script[(m * 31 + step) % script.len()];
        let (a, sa) = drive(ControllerConfig::default(), mode, &lambdas, loss);
        let (b, sb) = drive(ControllerConfig::default(), mode, &lambdas, loss);
        prop_assert_eq!(a, b);
        prop_assert_eq!(sa, sb);
    }

    #[test]
    fn cold_start_holds_initial_interval(
        s_init in 2usize..=32,
        lambdas in prop::collection::vec(0.0..5.0f64, 4..10),
    ) {
        let config = ControllerConfig { s_init, ..Default::default() };
        let (fired, _) = drive(config, ControllerMode::FULL, &lambdas, |_, _| None);
        prop_assert_eq!(&intervals(&fired)[..4], &[s_init; 4]);
    }

    #[test]
    fn heavier_losses_never_delay_a_merge(
        s_init in 2usize..24,
        calib in prop::collection::vec(0.5..2.0f64, 24),
        tail in prop::collection::vec(0.0..6.0f64, 48),
        bump in prop::collection::vec(0.0..6.0f64, 48),
    ) {
        let config = ControllerConfig { s_init, ..Default::default() };
        let window = config.calibration_steps(s_init);
        // both traces share the calibration prefix, so δ is identical
        let first_merge = |heavier: bool| {
            let (fired, _) = drive(config.clone(), ControllerMode::FULL, &[1.0], |_, step| {
                Some(if step <= window {
                    calib[step - 1]
                } else {
                    let i = step - window - 1;
                    tail[i] + if heavier { bump[i] } else { 0.0 }
                })
            });
            fired[0].interval
        };
        prop_assert!(first_merge(true) <= first_merge(false));
    }
}
