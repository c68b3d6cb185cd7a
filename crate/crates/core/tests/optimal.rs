mod common;

use commtdp::eval::evaluate;
use commtdp::helicopter::{Helicopter, HelicopterParams};
use commtdp::optimal::{delta, first_knowledge_events, locally_optimal_policy};
use commtdp::policy::SilentPolicy;
use commtdp::search::{globally_optimal_comm, CommSearchSpace};
use common::delta_by_difference;
use proptest::prelude::*;

fn cell(lambda: f64, r_sigma: f64) -> Helicopter {
    Helicopter::new(HelicopterParams::cell(lambda, r_sigma)).unwrap()
}

#[test]
fn delta_matches_difference_of_evaluations() {
    for (l, r) in [(0.0, 0.0), (0.3, 0.2), (0.7, 0.5), (1.0, 1.0)] {
        let h = cell(l, r);
        let events = first_knowledge_events(&h.model, &h.domain, &SilentPolicy, &h.goal, &h.sigma).unwrap();
        assert_eq!(events.len(), 8);
        for ev in &events {
            let a = delta(&h.model, &h.domain, &SilentPolicy, ev, &h.sigma).unwrap();
            let b = delta_by_difference(&h.model, &h.domain, &SilentPolicy, ev, &h.sigma);
            assert!((a - b).abs() < 1e-9, "({l}, {r}) t0={}: {a} vs {b}", ev.t0);
        }
    }
}

#[test]
fn local_policy_beats_the_fixed_strategies() {
    for (l, r) in [(0.0, 0.0), (0.2, 0.9), (0.5, 0.3), (0.9, 0.1), (1.0, 0.6)] {
        let h = cell(l, r);
        let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma).unwrap();
        let v = evaluate(&h.model, &h.domain, &local.policy).unwrap().value;
        let silent = evaluate(&h.model, &h.domain, &SilentPolicy).unwrap().value;
        let jennings = evaluate(&h.model, &h.domain, &h.jennings()).unwrap().value;
        assert!(v >= silent - 1e-12 && v >= jennings - 1e-12, "({l}, {r})");
    }
}

#[test]
fn global_search_never_loses_to_local() {
    for (l, r) in [(0.4, 0.1), (0.8, 0.2)] {
        let h = cell(l, r);
        let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma).unwrap();
        let lv = evaluate(&h.model, &h.domain, &local.policy).unwrap().value;
        let g = globally_optimal_comm(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma, &CommSearchSpace::default())
            .unwrap();
        assert!(g.value() >= lv - 1e-12);
        let zero = CommSearchSpace {
            window: 0,
            ..Default::default()
        };
        let g0 = globally_optimal_comm(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma, &zero).unwrap();
        assert!((g0.value() - lv).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn decisions_survive_positive_reward_scaling(l in 0.0f64..=1.0, r in 0.0f64..=1.0, k in 0.1f64..10.0) {
        let h = cell(l, r);
        let scaled = h.model.with_scaled_rewards(k);
        let a = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma).unwrap();
        let b = locally_optimal_policy(&scaled, &h.domain, SilentPolicy, &h.goal, &h.sigma).unwrap();
        for (x, y) in a.decisions.iter().zip(&b.decisions) {
            prop_assert!((y.breakdown.delta - k * x.breakdown.delta).abs() < 1e-9 * k.max(1.0));
            // exact ties can flip under rounding; anything clear of zero may not
            if x.breakdown.delta.abs() > 1e-9 {
                prop_assert_eq!(x.send, y.send);
            }
        }
    }
}
