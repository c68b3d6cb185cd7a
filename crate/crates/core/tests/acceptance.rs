//! One pass/fail line per acceptance criterion, printed with `--nocapture`.

mod common;

use std::time::Instant;

use commtdp::eval::evaluate;
use commtdp::experiment::{
    run_sweep, summarize, Summary, Surface, Sweep, SweepConfig, GLOBAL, JENNINGS, LOCAL,
    ORDER_TOLERANCE, SILENT, STEAM_LOW, STEAM_MEDIUM,
};
use commtdp::helicopter::{decode_observation, Helicopter, HelicopterParams, ESCORT};
use commtdp::model::Model;
use commtdp::optimal::{delta, first_knowledge_events, locally_optimal_policy};
use commtdp::policy::{FullCommPolicy, SilentPolicy};
use commtdp::reductions::{
    collapse_free_comm, dominance_transform, lift_dec_pomdp, widen_messages, HashedPomdpPolicy,
    HistoryPolicy, PomdpDomainPolicy,
};
use commtdp::rollout::rollout;
use commtdp::search::globally_optimal_comm;
use common::{best_pair_value, delta_by_difference, hashed_pair, random_dec_pomdp, random_model, rng, Shape};
use rand::Rng;

const DELTA_TOLERANCE: f64 = 1e-9;
const EXACT: f64 = 1e-12;
const STAT_TOLERANCE: f64 = 0.05;
const GLOBAL_STAT_TOLERANCE: f64 = 0.03;
const ROLLOUT_SAMPLES: usize = 100_000;
const ROLLOUT_SE: f64 = 3.0;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let config = SweepConfig::default();
    let grid = config.grid();
    let (mut worst, mut events) = (0.0f64, 0);
    for &l in &grid {
        for &r in &grid {
            let h = Helicopter::new(config.params(l, r)).unwrap();
            for ev in first_knowledge_events(&h.model, &h.domain, &SilentPolicy, &h.goal, &h.sigma).unwrap() {
                let a = delta(&h.model, &h.domain, &SilentPolicy, &ev, &h.sigma).unwrap();
                let b = delta_by_difference(&h.model, &h.domain, &SilentPolicy, &ev, &h.sigma);
                worst = worst.max((a - b).abs());
                events += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        name: "factored delta equals difference of evaluations",
        pass: worst <= DELTA_TOLERANCE && secs < 60.0 && events == 8 * grid.len() * grid.len(),
        detail: format!("{events} events, max |diff| {worst:.2e} (tol {DELTA_TOLERANCE:.0e}), {secs:.1} s (< 60 s)"),
    }
}

/// Both instance families keep exhaustive enumeration of policy pairs
/// tractable at two epochs or fewer.
fn theorem_2_instance(k: u64) -> Model {
    let shape = if k % 5 == 4 {
        Shape {
            states: 2 + (k as usize / 5) % 2,
            agents: vec![(2, 2, 1), (2, 2, 1)],
            horizon: 0,
            comm_cost: false,
        }
    } else {
        Shape {
            states: 2 + (k as usize) % 2,
            agents: vec![(2, 2, 1), (2, 1, 0)],
            horizon: 1,
            comm_cost: false,
        }
    };
    random_model(&mut rng(10_000 + k), &shape)
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let n = 60;
    let (mut failures, mut worst_gap, mut pairs) = (Vec::new(), f64::NEG_INFINITY, 0u64);
    for k in 0..n {
        let m = theorem_2_instance(k);
        let c = collapse_free_comm(&m).unwrap();
        let (opt, best) = c.pomdp.solve();
        let team = evaluate(&c.model, &c.domain_policy(&best), &c.full_comm()).unwrap().value;
        let (brute, leaves) = best_pair_value(&m);
        pairs += leaves;
        worst_gap = worst_gap.max(brute - opt);
        let wide = widen_messages(&m).unwrap();
        let full = FullCommPolicy::new(&wide).unwrap();
        let replay_ok = (0..4).all(|s| {
            let (d, comm) = hashed_pair(&m, 31 * k + s);
            let v = evaluate(&m, &d, &comm).unwrap().value;
            let t = dominance_transform(&m, &d, &comm).unwrap();
            (evaluate(&wide, &t, &full).unwrap().value - v).abs() <= EXACT
        });
        if brute > opt + EXACT || (team - opt).abs() > EXACT || !replay_ok {
            failures.push(k);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 2,
        name: "no policy pair beats full communication (brute force)",
        pass: failures.is_empty() && secs < 300.0,
        detail: format!(
            "{n} instances, {pairs} complete assignments, max(brute - optimum) {worst_gap:.2e} (tol {EXACT:.0e}), failures {failures:?}, {secs:.1} s (< 300 s)"
        ),
    }
}

fn random_history_policy(observations: usize, horizon: usize, seed: u64) -> HistoryPolicy {
    let mut r = rng(seed);
    let mut p = HistoryPolicy::new(2);
    for i in 0..2 {
        let mut layer = vec![Vec::new()];
        for t in 0..=horizon {
            let mut next = Vec::new();
            for h in &layer {
                p.set(commtdp::model::AgentId(i), h.clone(), commtdp::model::ActionId(r.random_range(0..2)));
                if t < horizon {
                    for o in 0..observations {
                        let mut g: Vec<_> = h.clone();
                        g.push(commtdp::model::ObservationId(o as u32));
                        next.push(g);
                    }
                }
            }
            layer = next;
        }
    }
    p
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let n = 50;
    let mut worst = [0.0f64; 4];
    for k in 0..n {
        let horizon = 1 + (k as usize) % 2;
        let d = random_dec_pomdp(&mut rng(20_000 + k), 2 + (k as usize) % 2, 2, horizon);
        let lifted = lift_dec_pomdp(&d).unwrap();
        let delta = random_history_policy(2, horizon, k);
        let v = d.evaluate(&delta).unwrap();
        let w = evaluate(&lifted.model, &lifted.domain_policy(&delta), &SilentPolicy).unwrap().value;
        worst[0] = worst[0].max((v - w).abs());

        let (pi, _) = hashed_pair(&lifted.model, k);
        let v = evaluate(&lifted.model, &pi, &SilentPolicy).unwrap().value;
        let w = d.evaluate(&lifted.dec_policy(&pi).unwrap()).unwrap();
        worst[1] = worst[1].max((v - w).abs());

        let m = random_model(
            &mut rng(30_000 + k),
            &Shape {
                states: 2 + (k as usize) % 2,
                agents: vec![(2, 2, 1), (2, 2, 0)],
                horizon,
                comm_cost: false,
            },
        );
        let c = collapse_free_comm(&m).unwrap();
        let p = HashedPomdpPolicy {
            seed: k,
            actions: c.pomdp.actions.len(),
        };
        let v = c.pomdp.evaluate(&p).unwrap();
        let w = evaluate(&c.model, &c.domain_policy(p), &c.full_comm()).unwrap().value;
        worst[2] = worst[2].max((v - w).abs());
        let single = c.pomdp.to_model().unwrap();
        let w = evaluate(&single, &PomdpDomainPolicy(p), &SilentPolicy).unwrap().value;
        worst[3] = worst[3].max((v - w).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 3,
        name: "reductions preserve policy values",
        pass: worst.iter().all(|w| *w <= EXACT) && secs < 300.0,
        detail: format!(
            "{n} instances per direction; max |diff| dec->com {:.1e}, com->dec {:.1e}, pomdp->team {:.1e}, pomdp->model {:.1e} (tol {EXACT:.0e}), {secs:.1} s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    }
}

struct Target {
    what: String,
    got: f64,
    want: f64,
    tol: f64,
}

fn criterion_4(summary: &Summary, sweep: &Sweep) -> Verdict {
    let sub = |p: &str| summary.suboptimality[p];
    let gl = summary.global_minus_local.expect("global search ran");
    let mut targets = vec![
        ("silent max", sub(SILENT).max, 0.700),
        ("jennings max", sub(JENNINGS).max, 1.000),
        ("steam-low max", sub(STEAM_LOW).max, 0.587),
        ("steam-medium max", sub(STEAM_MEDIUM).max, 0.587),
        ("silent mean", sub(SILENT).mean, 0.160),
        ("jennings mean", sub(JENNINGS).mean, 0.161),
        ("steam-low mean", sub(STEAM_LOW).mean, 0.063),
        ("steam-medium mean", sub(STEAM_MEDIUM).mean, 0.083),
    ]
    .into_iter()
    .map(|(w, got, want)| Target {
        what: w.into(),
        got,
        want,
        tol: STAT_TOLERANCE,
    })
    .collect::<Vec<_>>();
    targets.extend(
        [("global-local mean", gl.mean, 0.011), ("global-local std", gl.std, 0.027), ("global-local max", gl.max, 0.120)]
            .into_iter()
            .map(|(w, got, want)| Target {
                what: w.into(),
                got,
                want,
                tol: GLOBAL_STAT_TOLERANCE,
            }),
    );
    let global: f64 = sweep.cells.iter().map(|c| c.global_seconds).sum();
    let without_global = (sweep.seconds - global).max(0.0);
    let pass = targets.iter().all(|t| (t.got - t.want).abs() <= t.tol) && without_global < 600.0;
    let c = &sweep.config;
    let mut detail = format!(
        "r_t=r_e={} T={} C_mt={}/{}; ",
        c.r_t, c.horizon, c.steam_cmt_low, c.steam_cmt_medium
    );
    for t in &targets {
        detail.push_str(&format!("{} {:.3} vs {:.3} (±{}); ", t.what, t.got, t.want, t.tol));
    }
    detail.push_str(&format!("sweep without global search {without_global:.1} s (< 600 s)"));
    Verdict {
        id: 4,
        name: "reference statistics (calibrated)",
        pass,
        detail,
    }
}

fn smallest_gap(cells: &[Surface]) -> f64 {
    cells
        .iter()
        .flat_map(|c| {
            let local = value(c, LOCAL);
            [SILENT, JENNINGS, STEAM_LOW, STEAM_MEDIUM]
                .iter()
                .map(move |p| local - value(c, p))
                .chain(std::iter::once(value(c, GLOBAL) - local))
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_5(calibrated: (&Summary, &[Surface]), uncalibrated: (&Summary, &[Surface])) -> Verdict {
    let v = calibrated.0.violations.len() + uncalibrated.0.violations.len();
    let missing = calibrated.0.global_missing + uncalibrated.0.global_missing;
    let gap = if missing == 0 {
        smallest_gap(calibrated.1).min(smallest_gap(uncalibrated.1))
    } else {
        f64::NAN
    };
    Verdict {
        id: 5,
        name: "ordering invariants on every cell",
        pass: v == 0 && missing == 0 && gap >= -ORDER_TOLERANCE,
        detail: format!(
            "calibrated and uncalibrated (T=22, C_mt=0.5/1.5) grids: {v} violations, {missing} cells without a global value, smallest suboptimality {gap:.2e} (>= -{ORDER_TOLERANCE:.0e})"
        ),
    }
}

fn surface_value(cells: &[Surface], l: f64, r: f64, f: impl Fn(&Surface) -> f64) -> f64 {
    cells
        .iter()
        .find(|c| (c.lambda - l).abs() < 1e-9 && (c.r_sigma - r).abs() < 1e-9)
        .map(f)
        .expect("grid cell")
}

fn value(c: &Surface, p: &str) -> f64 {
    c.values[commtdp::experiment::POLICIES.iter().position(|x| *x == p).unwrap()].unwrap()
}

fn messages(c: &Surface, p: &str) -> f64 {
    c.messages[commtdp::experiment::POLICIES.iter().position(|x| *x == p).unwrap()].unwrap()
}

/// Whether the global policy at one high-observability cell waits a step and
/// then sends exactly when the escort saw the transport creep forward.
fn defers_on_transport_movement(config: &SweepConfig, l: f64, r: f64) -> (bool, String) {
    let h = Helicopter::new(config.params(l, r)).unwrap();
    let g = globally_optimal_comm(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma, &config.search_space()).unwrap();
    let (mut consistent, mut deferred, mut held) = (true, 0, 0);
    for (i, p) in g.points.iter().enumerate() {
        if p.agent != ESCORT || p.epoch != p.knowledge_epoch + 1 {
            continue;
        }
        let obs: Vec<_> = p.belief.observations().collect();
        let pos = |o: &commtdp::model::ObservationId| {
            let label = h.model.observation_label(ESCORT, *o);
            decode_observation(label).and_then(|d| d.transport.parse::<f64>().ok())
        };
        let (Some(before), Some(now)) = (pos(&obs[obs.len() - 2]), pos(&obs[obs.len() - 1])) else {
            continue;
        };
        let crept = (now - before - 0.5).abs() < 1e-9;
        let sends = g.sends.contains(&i);
        if sends {
            deferred += 1;
        } else {
            held += 1;
        }
        // sending after a full step would be a wasted message
        if sends && !crept {
            consistent = false;
        }
    }
    let pass = consistent && deferred > 0 && held > 0 && g.value() > value_local(&h) + 1e-9;
    (
        pass,
        format!("at λ={l} r_Σ={r}: {deferred} deferred sends, {held} withheld, all after nap-of-the-earth moves: {consistent}"),
    )
}

fn value_local(h: &Helicopter) -> f64 {
    let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma).unwrap();
    evaluate(&h.model, &h.domain, &local.policy).unwrap().value
}

fn criterion_6(cells: &[Surface], config: &SweepConfig) -> Verdict {
    let sub = |c: &Surface, p: &str| value(c, LOCAL) - value(c, p);
    let j11 = surface_value(cells, 1.0, 1.0, |c| sub(c, JENNINGS));
    let j_max = cells.iter().map(|c| sub(c, JENNINGS)).fold(f64::NEG_INFINITY, f64::max);
    let j_at_max = (j11 - j_max).abs() <= 1e-9;
    let j_zero = cells
        .iter()
        .filter(|c| c.lambda < 1.0 && c.r_sigma == 0.0)
        .all(|c| sub(c, JENNINGS).abs() <= 1e-9);
    let s_arg = cells
        .iter()
        .max_by(|a, b| sub(a, SILENT).total_cmp(&sub(b, SILENT)))
        .unwrap();
    let step = 1.0 / (config.grid_steps - 1) as f64;
    let s_near = s_arg.lambda <= step + 1e-9 && s_arg.r_sigma <= step + 1e-9;
    let steam_binary = cells.iter().all(|c| {
        [STEAM_LOW, STEAM_MEDIUM]
            .iter()
            .all(|p| {
                let m = messages(c, p);
                m.abs() <= 1e-9 || (m - 1.0).abs() <= 1e-9
            })
    });
    let (defers, defer_detail) = defers_on_transport_movement(config, 0.8, 0.3);
    Verdict {
        id: 6,
        name: "qualitative shape of the surfaces",
        pass: j_at_max && j_zero && s_near && steam_binary && defers,
        detail: format!(
            "jennings max at (1,1): {j_at_max}; jennings zero for λ<1, r_Σ=0: {j_zero}; silent max at ({}, {}): {s_near}; STEAM messages in {{0,1}}: {steam_binary}; global deferral {defer_detail}",
            s_arg.lambda, s_arg.r_sigma
        ),
    }
}

fn criterion_7(sweep: &Sweep) -> Verdict {
    let local_max = sweep.cells.iter().map(|c| c.local_seconds).fold(0.0, f64::max);
    let global: f64 = sweep.cells.iter().map(|c| c.global_seconds).sum();
    Verdict {
        id: 7,
        name: "running time",
        pass: local_max <= 5.0 && sweep.seconds <= 1800.0,
        detail: format!(
            "slowest local optimum {local_max:.3} s (<= 5 s); full sweep with global search {:.1} s (<= 1800 s), of which global search {global:.1} s",
            sweep.seconds
        ),
    }
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let cells = [
        (0.0, 0.0),
        (0.1, 0.9),
        (0.2, 0.4),
        (0.3, 0.2),
        (0.4, 0.7),
        (0.5, 0.5),
        (0.6, 0.1),
        (0.7, 0.3),
        (0.9, 0.6),
        (1.0, 1.0),
    ];
    let mut worst_z = 0.0f64;
    let mut failures = Vec::new();
    for (k, (l, r)) in cells.iter().enumerate() {
        let h = Helicopter::new(HelicopterParams::cell(*l, *r)).unwrap();
        let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma).unwrap();
        let exact = evaluate(&h.model, &h.domain, &local.policy).unwrap().value;
        let est = rollout(&h.model, &h.domain, &local.policy, ROLLOUT_SAMPLES, 1000 + k as u64).unwrap();
        if est.std_error > 0.0 {
            worst_z = worst_z.max((est.mean - exact).abs() / est.std_error);
        }
        if !est.agrees_with(exact, ROLLOUT_SE) {
            failures.push((*l, *r));
        }
    }
    Verdict {
        id: 8,
        name: "rollout agrees with exact evaluation",
        pass: failures.is_empty(),
        detail: format!(
            "{} cells x {ROLLOUT_SAMPLES} episodes, worst |z| {worst_z:.2} (<= {ROLLOUT_SE}), failures {failures:?}, {:.1} s",
            cells.len(),
            start.elapsed().as_secs_f64()
        ),
    }
}

fn main() {
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3()];

    let config = SweepConfig::default();
    let sweep = run_sweep(&config).unwrap();
    let cells: Vec<Surface> = sweep.cells.iter().map(Surface::from).collect();
    let summary = summarize(&cells);
    let plain = SweepConfig {
        horizon: 22,
        steam_cmt_low: 0.5,
        steam_cmt_medium: 1.5,
        ..SweepConfig::default()
    };
    let plain_cells: Vec<Surface> = run_sweep(&plain).unwrap().cells.iter().map(Surface::from).collect();
    let plain_summary = summarize(&plain_cells);
    assert!(config.includes(GLOBAL));

    verdicts.push(criterion_4(&summary, &sweep));
    verdicts.push(criterion_5((&summary, &cells), (&plain_summary, &plain_cells)));
    verdicts.push(criterion_6(&cells, &config));
    verdicts.push(criterion_7(&sweep));
    verdicts.push(criterion_8());

    for v in &verdicts {
        println!(
            "criterion {}: {} {}: {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
