mod common;

use commtdp::eval::evaluate;
use commtdp::numeric::fmt_sig12;
use commtdp::policy::SilentPolicy;
use commtdp::rollout::rollout;
use common::{hashed_pair, random_model, rng, tree_value, Shape};
use proptest::prelude::*;

fn shape(states: usize, horizon: usize, comm_cost: bool) -> Shape {
    Shape {
        states,
        agents: vec![(2, 2, 1), (2, 2, 1)],
        horizon,
        comm_cost,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engine_matches_unmerged_tree(seed in any::<u64>(), states in 1usize..4, horizon in 0usize..3, cost in any::<bool>()) {
        let m = random_model(&mut rng(seed), &shape(states, horizon, cost));
        let (d, c) = hashed_pair(&m, seed);
        let fast = evaluate(&m, &d, &c).unwrap();
        let slow = tree_value(&m, &d, &c);
        prop_assert!((fast.value - slow).abs() < 1e-10, "{} vs {}", fast.value, slow);
        prop_assert!(fast.pruned_mass < 1e-12);
    }

    #[test]
    fn value_is_linear_in_rewards(seed in any::<u64>(), k in -3.0f64..3.0) {
        let m = random_model(&mut rng(seed), &shape(2, 2, true));
        let (d, c) = hashed_pair(&m, seed);
        let v = evaluate(&m, &d, &c).unwrap().value;
        let w = evaluate(&m.with_scaled_rewards(k), &d, &c).unwrap().value;
        prop_assert!((w - k * v).abs() < 1e-10);
    }

    #[test]
    fn messages_do_not_change_silent_values(seed in any::<u64>()) {
        // with silence the communication reward never fires
        let free = random_model(&mut rng(seed), &shape(2, 2, false));
        let costly = random_model(&mut rng(seed), &shape(2, 2, true));
        let (d, _) = hashed_pair(&free, seed);
        let a = evaluate(&free, &d, &SilentPolicy).unwrap();
        let b = evaluate(&costly, &d, &SilentPolicy).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12);
        prop_assert_eq!(a.total_messages(), 0.0);
    }

    #[test]
    fn fmt_sig12_round_trips(x in -1e6f64..1e6) {
        let s = fmt_sig12(x);
        let y: f64 = s.parse().unwrap();
        let tol = if x.abs() < 1e-12 { 1e-12 } else { x.abs() * 1e-11 };
        prop_assert!((x - y).abs() <= tol, "{x} printed as {s}");
    }
}

#[test]
fn rollout_agrees_with_exact_value() {
    for seed in 0..5 {
        let m = random_model(&mut rng(seed), &shape(3, 2, true));
        let (d, c) = hashed_pair(&m, seed);
        let exact = evaluate(&m, &d, &c).unwrap().value;
        let est = rollout(&m, &d, &c, 20_000, seed).unwrap();
        assert!(est.agrees_with(exact, 4.0), "{est:?} vs {exact}");
    }
}

#[test]
fn rollout_is_reproducible() {
    let m = random_model(&mut rng(9), &shape(3, 2, true));
    let (d, c) = hashed_pair(&m, 9);
    let a = rollout(&m, &d, &c, 1000, 42).unwrap();
    let b = rollout(&m, &d, &c, 1000, 42).unwrap();
    assert_eq!(a, b);
}
