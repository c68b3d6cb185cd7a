//! Embed a DEC-POMDP with no messages, then collapse a free-communication
//! team into one agent and solve it exactly.

use commtdp::eval::evaluate;
use commtdp::model::{ActionId, AgentId, ObservationId, StateId};
use commtdp::policy::SilentPolicy;
use commtdp::reductions::{collapse_free_comm, lift_dec_pomdp, DecAgent, DecPomdp, HistoryPolicy};

fn two_rooms() -> DecPomdp {
    let agent = |name: &str| DecAgent {
        name: name.into(),
        actions: vec!["stay".into(), "swap".into()],
        observations: vec!["dim".into(), "bright".into()],
    };
    let (ns, na) = (2, 4);
    let mut transition = Vec::new();
    let mut observation = Vec::new();
    let mut reward = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            // the light moves only when both agents swap
            let next = if a == 3 { 1 - s } else { s };
            transition.push(vec![(StateId(next), 0.9), (StateId(1 - next), 0.1)]);
            reward.push(if s == 1 && a == 0 { 1.0 } else if a == 3 { -0.2 } else { 0.0 });
            let bright = if s == 1 { 0.8 } else { 0.2 };
            let joint = |x: u32, y: u32| vec![ObservationId(x), ObservationId(y)].into_boxed_slice();
            observation.push(vec![
                (joint(1, 1), bright * bright),
                (joint(1, 0), bright * (1.0 - bright)),
                (joint(0, 1), (1.0 - bright) * bright),
                (joint(0, 0), (1.0 - bright) * (1.0 - bright)),
            ]);
        }
    }
    DecPomdp {
        states: vec!["dark".into(), "lit".into()],
        agents: vec![agent("left"), agent("right")],
        transition,
        observation,
        reward,
        initial: vec![(StateId(0), 0.5), (StateId(1), 0.5)],
        horizon: 2,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = two_rooms();
    let lifted = lift_dec_pomdp(&d)?;

    // both agents stay put no matter what they see
    let mut stay = HistoryPolicy::new(2);
    let mut layer = vec![Vec::new()];
    for _ in 0..=d.horizon {
        let mut next = Vec::new();
        for h in layer {
            for i in 0..2 {
                stay.set(AgentId(i), h.clone(), ActionId(0));
            }
            for o in 0..2 {
                let mut g: Vec<ObservationId> = h.clone();
                g.push(ObservationId(o));
                next.push(g);
            }
        }
        layer = next;
    }
    let direct = d.evaluate(&stay)?;
    let embedded = evaluate(&lifted.model, &lifted.domain_policy(&stay), &SilentPolicy)?.value;
    println!("stay-put value: {direct:.6} directly, {embedded:.6} embedded");

    // give the left agent a free message and pool everything it sees
    let mut parts = lifted.model.into_parts();
    parts.agents[0].messages = vec!["ping".into()];
    let team = commtdp::model::Model::from_parts(parts)?;
    let collapsed = collapse_free_comm(&team)?;
    let (best, policy) = collapsed.pomdp.solve();
    let replayed = evaluate(&collapsed.model, &collapsed.domain_policy(&policy), &collapsed.full_comm())?.value;
    println!(
        "single-agent problem: {} actions, {} observations",
        collapsed.pomdp.actions.len(),
        collapsed.pomdp.observations.len()
    );
    println!("optimum {best:.6}, executed by the team under full communication {replayed:.6}");
    Ok(())
}
