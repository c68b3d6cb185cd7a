mod common;

use commtdp::eval::evaluate;
use commtdp::helicopter::{
    steam_params_for, transport_sighting_probability, Helicopter, HelicopterParams, SteamCosts,
    SteamLevel,
};
use commtdp::model::{classify_communication, classify_observability, validate, CommCostClass, ObservabilityClass};
use commtdp::policy::SilentPolicy;
use common::helicopter_without_sightings;

fn values(p: HelicopterParams) -> (f64, f64) {
    let h = Helicopter::new(p).unwrap();
    let s = evaluate(&h.model, &h.domain, &SilentPolicy).unwrap().value;
    let j = evaluate(&h.model, &h.domain, &h.jennings()).unwrap().value;
    (s, j)
}

#[test]
fn blind_transport_matches_closed_form() {
    for (r_t, horizon, r_sigma) in [(0.1, 22, 0.0), (0.1, 22, 0.4), (0.06, 20, 1.0), (0.14, 26, 0.3)] {
        let p = HelicopterParams {
            lambda: 0.0,
            r_sigma,
            r_e: r_t,
            r_t,
            horizon,
        };
        let (s, j) = values(p);
        let (s0, j0) = helicopter_without_sightings(r_t, r_t, horizon, r_sigma);
        assert!((s - s0).abs() < 1e-9, "silent {s} vs {s0}");
        assert!((j - j0).abs() < 1e-9, "jennings {j} vs {j0}");
    }
}

#[test]
fn default_blind_values() {
    let (s, j) = helicopter_without_sightings(0.1, 0.1, 22, 0.0);
    assert!((s - 1.6).abs() < 1e-12);
    assert!((j - 2.3).abs() < 1e-12);
}

#[test]
fn full_observability_makes_the_message_pure_cost() {
    for r in [0.0, 0.3, 1.0] {
        let (s, j) = values(HelicopterParams::cell(1.0, r));
        assert!((s - (j + r)).abs() < 1e-9, "r_sigma {r}: {s} vs {j}");
    }
}

#[test]
fn sighting_probability_examples() {
    assert!((transport_sighting_probability(0.5, 3.0, 1.0) - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
    for d in [0.0, 2.5, 8.0] {
        assert_eq!(transport_sighting_probability(1.0, d, 0.0), 1.0);
    }
}

#[test]
fn steam_examples() {
    let low = SteamCosts { low: 0.5, medium: 1.5 };
    assert!(steam_params_for(0.3, 0.2, SteamLevel::Low, low).unwrap().communicates());
    for r in [0.1, 0.5, 1.0] {
        assert!(!steam_params_for(1.0, r, SteamLevel::Low, low).unwrap().communicates());
        assert!(!steam_params_for(1.0, r, SteamLevel::Medium, low).unwrap().communicates());
    }
    let costs = SteamCosts::default();
    for k in 0..=10 {
        let r = k as f64 / 10.0;
        assert!(steam_params_for(0.0, r, SteamLevel::Medium, costs).unwrap().communicates());
    }
}

#[test]
fn benchmark_classifications() {
    let h = Helicopter::new(HelicopterParams::cell(0.5, 0.2)).unwrap();
    assert!(validate(&h.model).is_ok());
    assert_eq!(classify_communication(&h.model), CommCostClass::General);
    assert_eq!(classify_observability(&h.model), ObservabilityClass::CollectivelyPartiallyObservable);
    let free = Helicopter::new(HelicopterParams::cell(0.5, 0.0)).unwrap();
    assert_eq!(classify_communication(&free.model), CommCostClass::Free);
}

#[test]
fn escort_value_is_independent_of_communication() {
    // silent and Jennings differ only through the transport and the message cost
    let h = Helicopter::new(HelicopterParams {
        horizon: 22,
        ..HelicopterParams::cell(0.6, 0.0)
    })
    .unwrap();
    let s = evaluate(&h.model, &h.domain, &SilentPolicy).unwrap().value;
    let j = evaluate(&h.model, &h.domain, &h.jennings()).unwrap().value;
    let escort = 0.1 * 13.0;
    assert!(s > escort && j > escort);
    assert!(j >= s - 1e-12);
}
