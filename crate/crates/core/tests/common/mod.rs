//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use commtdp::eval::evaluate;
use commtdp::model::{
    ActionId, Agent, AgentId, BeliefState, CommReward, Feature, JointAction, JointMessage,
    Message, MessageId, Model, ModelParts, ObservationId, ObservationTable, StateId,
};
use commtdp::optimal::FirstKnowledgeEvent;
use commtdp::policy::{CommContext, CommPolicy, DomainPolicy, GoalMessage, OverridePolicy};
use commtdp::reductions::{DecAgent, DecPomdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random probability vector of length `n`; some entries may be zero.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.into_iter().map(|x| x / s).collect();
        }
    }
}

fn sparse<T>(ids: impl Iterator<Item = T>, p: Vec<f64>) -> Vec<(T, f64)> {
    ids.zip(p).filter(|(_, q)| *q > 0.0).collect()
}

/// Shape of a random instance.
#[derive(Debug, Clone)]
pub struct Shape {
    pub states: usize,
    /// Per agent: (actions, observations, proper messages).
    pub agents: Vec<(usize, usize, usize)>,
    pub horizon: usize,
    pub comm_cost: bool,
}

/// A random COM-MTDP with factored observations.
pub fn random_model(rng: &mut ChaCha8Rng, shape: &Shape) -> Model {
    let ns = shape.states;
    let agents: Vec<Agent> = shape
        .agents
        .iter()
        .enumerate()
        .map(|(i, (na, no, nm))| Agent {
            name: format!("A{i}"),
            actions: (0..*na).map(|k| format!("a{k}")).collect(),
            messages: (0..*nm).map(|k| format!("m{k}")).collect(),
            observations: (0..*no).map(|k| format!("o{k}")).collect(),
        })
        .collect();
    let na: usize = shape.agents.iter().map(|a| a.0).product();
    let transition = (0..ns * na)
        .map(|_| sparse((0..ns).map(|s| StateId(s as u32)), simplex(rng, ns)))
        .collect();
    let observation = ObservationTable::Factored(
        shape
            .agents
            .iter()
            .map(|(_, no, _)| {
                (0..ns * (na + 1))
                    .map(|_| sparse((0..*no).map(|o| ObservationId(o as u32)), simplex(rng, *no)))
                    .collect()
            })
            .collect(),
    );
    let reward_domain = (0..ns * na).map(|_| rng.random_range(-1.0..1.0)).collect();
    let initial = sparse((0..ns).map(|s| StateId(s as u32)), simplex(rng, ns));
    let model = Model::from_parts(ModelParts {
        features: vec![Feature {
            name: "S".into(),
            values: (0..ns).map(|s| format!("s{s}")).collect(),
        }],
        agents,
        transition,
        observation,
        reward_domain,
        reward_comm: CommReward::new(),
        initial,
        horizon: shape.horizon,
    })
    .expect("random model is well formed");
    if !shape.comm_cost {
        return model;
    }
    let messages = model.joint_messages();
    let mut parts = model.into_parts();
    for jm in messages.into_iter().filter(|m| !m.is_null()) {
        let v = (0..ns).map(|_| -rng.random::<f64>() * 0.5).collect();
        parts.reward_comm.set(jm, v);
    }
    Model::from_parts(parts).expect("random model is well formed")
}

pub fn random_dec_pomdp(rng: &mut ChaCha8Rng, states: usize, obs: usize, horizon: usize) -> DecPomdp {
    let agents: Vec<DecAgent> = (0..2)
        .map(|i| DecAgent {
            name: format!("A{i}"),
            actions: vec!["x".into(), "y".into()],
            observations: (0..obs).map(|k| format!("o{k}")).collect(),
        })
        .collect();
    let na = 4;
    let joint: Vec<Box<[ObservationId]>> = (0..obs * obs)
        .map(|k| vec![ObservationId((k / obs) as u32), ObservationId((k % obs) as u32)].into_boxed_slice())
        .collect();
    DecPomdp {
        states: (0..states).map(|s| format!("s{s}")).collect(),
        agents,
        transition: (0..states * na)
            .map(|_| sparse((0..states).map(|s| StateId(s as u32)), simplex(rng, states)))
            .collect(),
        observation: (0..states * na)
            .map(|_| sparse(joint.iter().cloned(), simplex(rng, joint.len())))
            .collect(),
        reward: (0..states * na).map(|_| rng.random_range(-1.0..1.0)).collect(),
        initial: sparse((0..states).map(|s| StateId(s as u32)), simplex(rng, states)),
        horizon,
    }
}

/// Deterministic pseudo-random choice keyed on a belief.
fn belief_hash(seed: u64, b: &BeliefState) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    seed.hash(&mut h);
    b.hash(&mut h);
    h.finish()
}

pub struct HashedDomain {
    pub seed: u64,
    pub actions: Vec<usize>,
}

impl DomainPolicy for HashedDomain {
    fn action(&self, b: &BeliefState) -> Option<ActionId> {
        let n = self.actions[b.owner().0] as u64;
        Some(ActionId((belief_hash(self.seed, b) % n) as u16))
    }
}

pub struct HashedComm {
    pub seed: u64,
    pub messages: Vec<usize>,
}

impl CommPolicy for HashedComm {
    fn message(&self, b: &BeliefState, _: &CommContext<'_>) -> Option<Message> {
        let n = self.messages[b.owner().0] as u64 + 1;
        let k = belief_hash(self.seed, b) % n;
        Some(k.checked_sub(1).map(|m| MessageId(m as u16)))
    }
}

pub fn hashed_pair(model: &Model, seed: u64) -> (HashedDomain, HashedComm) {
    (
        HashedDomain {
            seed,
            actions: model.agents().iter().map(|a| a.actions.len()).collect(),
        },
        HashedComm {
            seed: seed ^ 0x5555,
            messages: model.agents().iter().map(|a| a.messages.len()).collect(),
        },
    )
}

/// Expected reward by walking the full trajectory tree without merging any
/// nodes. Exponential, but shares nothing with the engine's enumeration.
pub fn tree_value(model: &Model, domain: &dyn DomainPolicy, comm: &dyn CommPolicy) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn walk(
        m: &Model,
        d: &dyn DomainPolicy,
        c: &dyn CommPolicy,
        t: usize,
        s: StateId,
        prev: Option<JointAction>,
        beliefs: &[BeliefState],
        w: f64,
    ) -> f64 {
        let ctx = CommContext::default();
        let mut total = 0.0;
        for (obs, p) in m.joint_observations(s, prev) {
            let pre: Vec<BeliefState> = beliefs
                .iter()
                .zip(&obs)
                .map(|(b, o)| b.se_pre(*o).unwrap())
                .collect();
            let msgs: Vec<Message> = pre.iter().map(|b| c.message(b, &ctx).unwrap()).collect();
            let jm = JointMessage::from(msgs.clone());
            let post: Vec<BeliefState> = pre.iter().map(|b| b.se_post(jm.clone()).unwrap()).collect();
            let acts: Vec<ActionId> = post.iter().map(|b| d.action(b).unwrap()).collect();
            let a = m.joint_action(&acts);
            total += w * p * m.reward(s, a, &msgs);
            if t < m.horizon() {
                for (s2, q) in m.transitions(s, a) {
                    total += walk(m, d, c, t + 1, *s2, Some(a), &post, w * p * q);
                }
            }
        }
        total
    }
    let roots: Vec<BeliefState> = (0..model.agent_count())
        .map(|i| BeliefState::initial(AgentId(i)))
        .collect();
    model
        .initial()
        .iter()
        .map(|(s, w)| walk(model, domain, comm, 0, *s, None, &roots, *w))
        .sum()
}

// ---------------------------------------------------------------------------
// Brute force over policy pairs

#[derive(Clone)]
enum Task {
    Expand {
        t: usize,
        s: StateId,
        prev: Option<JointAction>,
        beliefs: Vec<BeliefState>,
        w: f64,
    },
    Comm {
        t: usize,
        s: StateId,
        pre: Vec<BeliefState>,
        w: f64,
    },
    Act {
        t: usize,
        s: StateId,
        post: Vec<BeliefState>,
        msgs: Vec<Message>,
        w: f64,
    },
}

struct BruteForce<'m> {
    model: &'m Model,
    messages: HashMap<BeliefState, Message>,
    actions: HashMap<BeliefState, ActionId>,
    leaves: u64,
}

impl BruteForce<'_> {
    fn message_choices(&self, agent: AgentId) -> Vec<Message> {
        std::iter::once(None)
            .chain((0..self.model.agent(agent).messages.len()).map(|k| Some(MessageId(k as u16))))
            .collect()
    }

    /// Best achievable sum of the rewards still in `todo`, over all
    /// assignments to beliefs not yet decided. Leaves `todo` unchanged.
    fn search(&mut self, todo: &mut Vec<Task>) -> f64 {
        let Some(task) = todo.pop() else {
            self.leaves += 1;
            return 0.0;
        };
        let result = match &task {
            Task::Expand { t, s, prev, beliefs, w } => {
                let before = todo.len();
                for (obs, p) in self.model.joint_observations(*s, *prev) {
                    let pre = beliefs.iter().zip(&obs).map(|(b, o)| b.se_pre(*o).unwrap()).collect();
                    todo.push(Task::Comm {
                        t: *t,
                        s: *s,
                        pre,
                        w: w * p,
                    });
                }
                let r = self.search(todo);
                todo.truncate(before);
                r
            }
            Task::Comm { t, s, pre, w } => {
                if let Some(b) = pre.iter().find(|b| !self.messages.contains_key(*b)) {
                    let b = b.clone();
                    let mut best = f64::NEG_INFINITY;
                    for m in self.message_choices(b.owner()) {
                        self.messages.insert(b.clone(), m);
                        todo.push(task.clone());
                        best = best.max(self.search(todo));
                        todo.pop();
                    }
                    self.messages.remove(&b);
                    best
                } else {
                    let msgs: Vec<Message> = pre.iter().map(|b| self.messages[b]).collect();
                    let jm = JointMessage::from(msgs.clone());
                    let post = pre.iter().map(|b| b.se_post(jm.clone()).unwrap()).collect();
                    todo.push(Task::Act {
                        t: *t,
                        s: *s,
                        post,
                        msgs,
                        w: *w,
                    });
                    let r = self.search(todo);
                    todo.pop();
                    r
                }
            }
            Task::Act { t, s, post, msgs, w } => {
                if let Some(b) = post.iter().find(|b| !self.actions.contains_key(*b)) {
                    let b = b.clone();
                    let mut best = f64::NEG_INFINITY;
                    for a in 0..self.model.agent(b.owner()).actions.len() {
                        self.actions.insert(b.clone(), ActionId(a as u16));
                        todo.push(task.clone());
                        best = best.max(self.search(todo));
                        todo.pop();
                    }
                    self.actions.remove(&b);
                    best
                } else {
                    let acts: Vec<ActionId> = post.iter().map(|b| self.actions[b]).collect();
                    let a = self.model.joint_action(&acts);
                    let r = w * self.model.reward(*s, a, msgs);
                    let before = todo.len();
                    if *t < self.model.horizon() {
                        for (s2, q) in self.model.transitions(*s, a) {
                            todo.push(Task::Expand {
                                t: t + 1,
                                s: *s2,
                                prev: Some(a),
                                beliefs: post.clone(),
                                w: w * q,
                            });
                        }
                    }
                    let rest = self.search(todo);
                    todo.truncate(before);
                    r + rest
                }
            }
        };
        todo.push(task);
        result
    }
}

/// Largest value over every deterministic (domain, communication) policy
/// pair, and the number of distinct reachable policy pairs visited.
pub fn best_pair_value(model: &Model) -> (f64, u64) {
    let roots: Vec<BeliefState> = (0..model.agent_count())
        .map(|i| BeliefState::initial(AgentId(i)))
        .collect();
    let mut todo: Vec<Task> = model
        .initial()
        .iter()
        .map(|(s, w)| Task::Expand {
            t: 0,
            s: *s,
            prev: None,
            beliefs: roots.clone(),
            w: *w,
        })
        .collect();
    let mut bf = BruteForce {
        model,
        messages: HashMap::new(),
        actions: HashMap::new(),
        leaves: 0,
    };
    let v = bf.search(&mut todo);
    (v, bf.leaves)
}

// ---------------------------------------------------------------------------
// Communication oracles

/// Δ as the difference of two unconditioned evaluations, rescaled by the
/// event probability.
pub fn delta_by_difference<B: CommPolicy + Clone>(
    model: &Model,
    domain: &dyn DomainPolicy,
    base: &B,
    ev: &FirstKnowledgeEvent,
    sigma: &GoalMessage,
) -> f64 {
    let send = OverridePolicy::new(base.clone()).with(ev.belief.clone(), sigma.for_agent(ev.agent));
    let null = OverridePolicy::new(base.clone()).with(ev.belief.clone(), None);
    let vs = evaluate(model, domain, &send).unwrap().value;
    let vn = evaluate(model, domain, &null).unwrap().value;
    (vs - vn) / ev.probability
}

/// Silent and Jennings values of the benchmark when the transport never
/// sees the radar's destruction, by direct simulation of each radar position.
pub fn helicopter_without_sightings(r_e: f64, r_t: f64, horizon: usize, r_sigma: f64) -> (f64, f64) {
    // escort reaches the destination at epoch 10 whatever happens
    let escort = r_e * (horizon + 1).saturating_sub(10) as f64;
    // transport position in half-steps; the destination is reached from 18 or 19
    let arrival = |switch_at: Option<usize>| {
        let mut h = 0usize;
        for t in 0.. {
            if h >= 20 {
                return t;
            }
            let normal = switch_at.is_some_and(|k| t >= k);
            h = if normal {
                if h >= 18 { 20 } else { h + 2 }
            } else if h == 19 {
                20
            } else {
                h + 1
            };
        }
        unreachable!()
    };
    let collected = |t: usize| r_t * (horizon + 1).saturating_sub(t) as f64;
    let silent = escort + collected(arrival(None));
    let mut jennings = escort - r_sigma;
    for radar in 1..=8 {
        // destroyed at epoch `radar`, announced one epoch later
        jennings += 0.125 * collected(arrival(Some(radar + 1)));
    }
    (silent, jennings)
}
