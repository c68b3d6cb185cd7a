//! Value-preserving transformations between COM-MTDPs, DEC-POMDPs and
//! single-agent POMDPs.
//!
//! * [`lift_dec_pomdp`] embeds a DEC-POMDP as a COM-MTDP without messages.
//! * [`collapse_free_comm`] turns a free-communication COM-MTDP into a POMDP
//!   over joint actions and joint observations.
//! * [`dominance_transform`] rewrites any domain/communication policy pair
//!   into a domain policy that earns the same value under full communication.
//!
//! The DEC-POMDP and POMDP types carry their own evaluators, written against
//! their own tables, so each translation can be checked against an
//! independent computation.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    classify_communication, ActionId, Agent, AgentId, BeliefState, CommCostClass, CommReward,
    Epoch, Feature, JointAction, JointMessage, Model, ModelError, ModelParts, ObservationId,
    ObservationTable, StateId, NORMALIZATION_TOLERANCE,
};
use crate::numeric::CompensatedSum;
use crate::policy::{CommContext, CommPolicy, DomainPolicy, FullCommPolicy, PolicyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("model has {0}; the reduction needs free communication")]
    NotFree(CommCostClass),
    #[error("communication policy depends on knowledge and cannot be replayed from observations")]
    KnowledgeDependent,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("policy undefined at epoch {epoch} for history {history:?}")]
    PolicyUndefined {
        epoch: usize,
        history: Vec<ObservationId>,
    },
    #[error("{0}")]
    Invalid(String),
}

/// A per-agent table from observation histories to actions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryPolicy {
    pub tables: Vec<HashMap<Vec<ObservationId>, ActionId>>,
}

impl HistoryPolicy {
    pub fn new(agents: usize) -> Self {
        Self {
            tables: vec![HashMap::new(); agents],
        }
    }

    pub fn set(&mut self, agent: AgentId, history: Vec<ObservationId>, action: ActionId) {
        self.tables[agent.0].insert(history, action);
    }

    pub fn action(&self, agent: AgentId, history: &[ObservationId]) -> Option<ActionId> {
        self.tables.get(agent.0)?.get(history).copied()
    }
}

/// Single-agent policy over observation histories.
pub trait PomdpPolicy: Send + Sync {
    fn action(&self, history: &[ObservationId]) -> Option<ActionId>;
}

impl PomdpPolicy for HistoryPolicy {
    fn action(&self, history: &[ObservationId]) -> Option<ActionId> {
        HistoryPolicy::action(self, AgentId(0), history)
    }
}

impl<T: PomdpPolicy + ?Sized> PomdpPolicy for &T {
    fn action(&self, history: &[ObservationId]) -> Option<ActionId> {
        (**self).action(history)
    }
}

pub struct FnPomdpPolicy<F>(pub F);

impl<F> PomdpPolicy for FnPomdpPolicy<F>
where
    F: Fn(&[ObservationId]) -> Option<ActionId> + Send + Sync,
{
    fn action(&self, history: &[ObservationId]) -> Option<ActionId> {
        (self.0)(history)
    }
}

/// Deterministic pseudo-random policy: each history maps to an action through
/// a seeded hash, so arbitrarily large history spaces need no table.
#[derive(Debug, Clone, Copy)]
pub struct HashedPomdpPolicy {
    pub seed: u64,
    pub actions: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl PomdpPolicy for HashedPomdpPolicy {
    fn action(&self, history: &[ObservationId]) -> Option<ActionId> {
        let h = history
            .iter()
            .fold(splitmix(self.seed), |h, o| splitmix(h ^ u64::from(o.0)));
        Some(ActionId((h % self.actions as u64) as u16))
    }
}

fn check_distribution(rows: &[Vec<(StateId, f64)>], states: usize, what: &str) -> Result<(), ReductionError> {
    for (k, row) in rows.iter().enumerate() {
        let mut sum = 0.0;
        for (s, p) in row {
            if s.0 as usize >= states || !(0.0..=1.0).contains(p) {
                return Err(ReductionError::Invalid(format!("{what} row {k} has an invalid entry")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(ReductionError::Invalid(format!("{what} row {k} sums to {sum}")));
        }
    }
    Ok(())
}

fn radix_index(sizes: &[usize], digits: impl Iterator<Item = usize>) -> usize {
    digits.zip(sizes).fold(0, |acc, (d, n)| acc * n + d)
}

fn radix_split(sizes: &[usize], mut index: usize) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (d, n) in out.iter_mut().zip(sizes).rev() {
        *d = index % n;
        index /= n;
    }
    out
}

// ---------------------------------------------------------------------------
// DEC-POMDP

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecAgent {
    pub name: String,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
}

/// `⟨S, {A_i}, P, {Ω_i}, O, R⟩` with a horizon and an initial distribution.
/// Agents act at epoch 0 with an empty history and observe after each
/// transition.
#[derive(Debug, Clone, PartialEq)]
pub struct DecPomdp {
    pub states: Vec<String>,
    pub agents: Vec<DecAgent>,
    /// `transition[s * |A| + a]`.
    pub transition: Vec<Vec<(StateId, f64)>>,
    /// `observation[s' * |A| + a]`, joint outcomes.
    pub observation: Vec<Vec<(Box<[ObservationId]>, f64)>>,
    /// `reward[s * |A| + a]`.
    pub reward: Vec<f64>,
    pub initial: Vec<(StateId, f64)>,
    pub horizon: usize,
}

impl DecPomdp {
    fn action_sizes(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.actions.len()).collect()
    }

    pub fn action_count(&self) -> usize {
        self.action_sizes().iter().product()
    }

    /// Mixed-radix joint action, agent 0 most significant.
    pub fn joint_action(&self, actions: &[ActionId]) -> JointAction {
        let sizes = self.action_sizes();
        JointAction(radix_index(&sizes, actions.iter().map(|a| a.0 as usize)) as u32)
    }

    pub fn check(&self) -> Result<(), ReductionError> {
        let (ns, na) = (self.states.len(), self.action_count());
        if self.agents.is_empty() || ns == 0 || na == 0 {
            return Err(ReductionError::Invalid("empty state, agent or action set".into()));
        }
        if self.transition.len() != ns * na
            || self.observation.len() != ns * na
            || self.reward.len() != ns * na
        {
            return Err(ReductionError::Invalid("table shape does not match |S|·|A|".into()));
        }
        check_distribution(&self.transition, ns, "transition")?;
        check_distribution(std::slice::from_ref(&self.initial), ns, "initial")?;
        for (k, row) in self.observation.iter().enumerate() {
            let mut sum = 0.0;
            for (o, p) in row {
                let ok = o.len() == self.agents.len()
                    && o.iter()
                        .zip(&self.agents)
                        .all(|(x, ag)| (x.0 as usize) < ag.observations.len());
                if !ok || !(0.0..=1.0).contains(p) {
                    return Err(ReductionError::Invalid(format!("observation row {k} has an invalid entry")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(ReductionError::Invalid(format!("observation row {k} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Expected total reward over epochs `0..=horizon` of a joint policy.
    pub fn evaluate(&self, policy: &HistoryPolicy) -> Result<f64, ReductionError> {
        let mut acc = CompensatedSum::new();
        let histories = vec![Vec::new(); self.agents.len()];
        self.eval_rec(0, self.initial.clone(), histories, policy, &mut acc)?;
        Ok(acc.value())
    }

    fn eval_rec(
        &self,
        t: usize,
        dist: Vec<(StateId, f64)>,
        histories: Vec<Vec<ObservationId>>,
        policy: &HistoryPolicy,
        acc: &mut CompensatedSum,
    ) -> Result<(), ReductionError> {
        let mut actions = Vec::with_capacity(self.agents.len());
        for (i, h) in histories.iter().enumerate() {
            let a = policy
                .action(AgentId(i), h)
                .ok_or_else(|| ReductionError::PolicyUndefined {
                    epoch: t,
                    history: h.clone(),
                })?;
            actions.push(a);
        }
        let a = self.joint_action(&actions).0 as usize;
        let na = self.action_count();
        for (s, w) in &dist {
            acc.add(w * self.reward[s.0 as usize * na + a]);
        }
        if t == self.horizon {
            return Ok(());
        }
        let mut next: BTreeMap<&[ObservationId], BTreeMap<StateId, f64>> = BTreeMap::new();
        for (s, w) in &dist {
            for (s2, p) in &self.transition[s.0 as usize * na + a] {
                for (o, q) in &self.observation[s2.0 as usize * na + a] {
                    let x = w * p * q;
                    if x > 0.0 {
                        *next.entry(o).or_default().entry(*s2).or_insert(0.0) += x;
                    }
                }
            }
        }
        for (o, d) in next {
            let mut h = histories.clone();
            for (hi, oi) in h.iter_mut().zip(o.iter()) {
                hi.push(*oi);
            }
            self.eval_rec(t + 1, d.into_iter().collect(), h, policy, acc)?;
        }
        Ok(())
    }
}

/// Label of the observation every agent receives in the lifted model's first
/// epoch, where a DEC-POMDP has none.
pub const START_OBSERVATION: &str = "start";

/// A DEC-POMDP embedded as a COM-MTDP with empty message alphabets.
#[derive(Debug, Clone)]
pub struct LiftedDecPomdp {
    pub model: Model,
    /// Id of the start observation for each agent.
    pub start: Vec<ObservationId>,
}

pub fn lift_dec_pomdp(d: &DecPomdp) -> Result<LiftedDecPomdp, ReductionError> {
    d.check()?;
    let na = d.action_count();
    let mut start = Vec::new();
    let agents: Vec<Agent> = d
        .agents
        .iter()
        .map(|ag| {
            let mut label = START_OBSERVATION.to_string();
            while ag.observations.contains(&label) {
                label.push('\'');
            }
            let mut observations = ag.observations.clone();
            start.push(ObservationId(observations.len() as u32));
            observations.push(label);
            Agent {
                name: ag.name.clone(),
                actions: ag.actions.clone(),
                messages: Vec::new(),
                observations,
            }
        })
        .collect();
    let start_joint: Box<[ObservationId]> = start.clone().into_boxed_slice();
    let mut observation = Vec::with_capacity(d.states.len() * (na + 1));
    for s in 0..d.states.len() {
        for a in 0..na {
            observation.push(d.observation[s * na + a].clone());
        }
        observation.push(vec![(start_joint.clone(), 1.0)]);
    }
    let model = Model::from_parts(ModelParts {
        features: vec![Feature {
            name: "S".into(),
            values: d.states.clone(),
        }],
        agents,
        transition: d.transition.clone(),
        observation: ObservationTable::Joint(observation),
        reward_domain: d.reward.clone(),
        reward_comm: CommReward::new(),
        initial: d.initial.clone(),
        horizon: d.horizon,
    })?;
    Ok(LiftedDecPomdp { model, start })
}

/// A DEC-POMDP joint policy read as a COM-MTDP domain policy: the start
/// observation is dropped and the (always null) messages are ignored.
#[derive(Debug, Clone)]
pub struct LiftedPolicy {
    pub policy: HistoryPolicy,
}

impl DomainPolicy for LiftedPolicy {
    fn action(&self, belief: &BeliefState) -> Option<ActionId> {
        let h: Vec<ObservationId> = belief.observations().skip(1).collect();
        self.policy.action(belief.owner(), &h)
    }
}

impl LiftedDecPomdp {
    pub fn domain_policy(&self, delta: &HistoryPolicy) -> LiftedPolicy {
        LiftedPolicy {
            policy: delta.clone(),
        }
    }

    /// The DEC-POMDP joint policy a domain policy induces, tabulated over
    /// every observation history up to the horizon.
    pub fn dec_policy(&self, pi: &dyn DomainPolicy) -> Result<HistoryPolicy, ReductionError> {
        let n = self.model.agent_count();
        let null = JointMessage::from(vec![None; n]);
        let mut out = HistoryPolicy::new(n);
        for i in 0..n {
            let omega = self.start[i].0;
            let mut layer: Vec<Vec<ObservationId>> = vec![Vec::new()];
            for t in 0..=self.model.horizon() {
                let mut next_layer = Vec::new();
                for h in &layer {
                    let history = std::iter::once(self.start[i])
                        .chain(h.iter().copied())
                        .map(|o| Epoch {
                            observation: o,
                            messages: Some(null.clone()),
                        })
                        .collect();
                    let b = BeliefState::from_history(AgentId(i), history);
                    let a = pi.action(&b).ok_or_else(|| ReductionError::PolicyUndefined {
                        epoch: t,
                        history: h.clone(),
                    })?;
                    out.set(AgentId(i), h.clone(), a);
                    if t < self.model.horizon() {
                        for o in 0..omega {
                            let mut g = h.clone();
                            g.push(ObservationId(o));
                            next_layer.push(g);
                        }
                    }
                }
                layer = next_layer;
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// POMDP

/// Single-agent `⟨S, A, P, Ω, O, R⟩`. Like a COM-MTDP, it observes once
/// before the first action (the null-action row of `observation`).
#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    pub features: Vec<Feature>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// `transition[s * |A| + a]`.
    pub transition: Vec<Vec<(StateId, f64)>>,
    /// `observation[s' * (|A| + 1) + a]`, `a = |A|` for the first epoch.
    pub observation: Vec<Vec<(ObservationId, f64)>>,
    pub reward: Vec<f64>,
    pub initial: Vec<(StateId, f64)>,
    pub horizon: usize,
}

/// Observation history paired with the action taken after it.
type PlanRows = Vec<(Vec<ObservationId>, ActionId)>;

struct Branch {
    dist: Vec<(StateId, f64)>,
    history: Vec<ObservationId>,
}

impl Pomdp {
    pub fn state_count(&self) -> usize {
        self.transition.len() / self.actions.len()
    }

    fn observe(&self, dist: &[(StateId, f64)], a: Option<usize>) -> BTreeMap<ObservationId, Vec<(StateId, f64)>> {
        let na = self.actions.len();
        let mut next: BTreeMap<ObservationId, BTreeMap<StateId, f64>> = BTreeMap::new();
        for (s, w) in dist {
            let row: Vec<(StateId, f64)> = match a {
                Some(a) => self.transition[s.0 as usize * na + a].clone(),
                None => vec![(*s, 1.0)],
            };
            for (s2, p) in row {
                let k = s2.0 as usize * (na + 1) + a.unwrap_or(na);
                for (o, q) in &self.observation[k] {
                    let x = w * p * q;
                    if x > 0.0 {
                        *next.entry(*o).or_default().entry(s2).or_insert(0.0) += x;
                    }
                }
            }
        }
        next.into_iter()
            .map(|(o, d)| (o, d.into_iter().collect()))
            .collect()
    }

    fn roots(&self) -> Vec<Branch> {
        self.observe(&self.initial, None)
            .into_iter()
            .map(|(o, dist)| Branch {
                dist,
                history: vec![o],
            })
            .collect()
    }

    fn children(&self, b: &Branch, a: usize) -> Vec<Branch> {
        self.observe(&b.dist, Some(a))
            .into_iter()
            .map(|(o, dist)| {
                let mut history = b.history.clone();
                history.push(o);
                Branch { dist, history }
            })
            .collect()
    }

    fn immediate(&self, b: &Branch, a: usize) -> f64 {
        let na = self.actions.len();
        b.dist
            .iter()
            .map(|(s, w)| w * self.reward[s.0 as usize * na + a])
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn evaluate(&self, policy: &dyn PomdpPolicy) -> Result<f64, ReductionError> {
        let mut acc = CompensatedSum::new();
        let mut stack: Vec<(usize, Branch)> = self.roots().into_iter().rev().map(|b| (0, b)).collect();
        while let Some((t, b)) = stack.pop() {
            let a = policy
                .action(&b.history)
                .ok_or_else(|| ReductionError::PolicyUndefined {
                    epoch: t,
                    history: b.history.clone(),
                })?;
            let a = a.0 as usize;
            if a >= self.actions.len() {
                return Err(ReductionError::Invalid(format!("action {a} out of range")));
            }
            acc.add(self.immediate(&b, a));
            if t < self.horizon {
                for c in self.children(&b, a).into_iter().rev() {
                    stack.push((t + 1, c));
                }
            }
        }
        Ok(acc.value())
    }

    /// Optimal value and an optimal history policy, by exhaustive dynamic
    /// programming over the observation-history tree. Ties go to the lowest
    /// action index. Exponential in the horizon; meant for small instances.
    pub fn solve(&self) -> (f64, HistoryPolicy) {
        let mut policy = HistoryPolicy::new(1);
        let mut total = CompensatedSum::new();
        for b in self.roots() {
            let (v, table) = self.solve_rec(0, &b);
            total.add(v);
            for (h, a) in table {
                policy.set(AgentId(0), h, a);
            }
        }
        (total.value(), policy)
    }

    fn solve_rec(&self, t: usize, b: &Branch) -> (f64, PlanRows) {
        let mut best: Option<(f64, PlanRows)> = None;
        for a in 0..self.actions.len() {
            let mut v = CompensatedSum::new();
            v.add(self.immediate(b, a));
            let mut table = vec![(b.history.clone(), ActionId(a as u16))];
            if t < self.horizon {
                for c in self.children(b, a) {
                    let (cv, ct) = self.solve_rec(t + 1, &c);
                    v.add(cv);
                    table.extend(ct);
                }
            }
            let v = v.value();
            if best.as_ref().is_none_or(|(bv, _)| v > *bv + 1e-12) {
                best = Some((v, table));
            }
        }
        best.expect("at least one action")
    }

    /// The POMDP as a one-agent COM-MTDP without messages.
    pub fn to_model(&self) -> Result<Model, ReductionError> {
        Ok(Model::from_parts(ModelParts {
            features: self.features.clone(),
            agents: vec![Agent {
                name: "team".into(),
                actions: self.actions.clone(),
                messages: Vec::new(),
                observations: self.observations.clone(),
            }],
            transition: self.transition.clone(),
            observation: ObservationTable::Factored(vec![self.observation.clone()]),
            reward_domain: self.reward.clone(),
            reward_comm: CommReward::new(),
            initial: self.initial.clone(),
            horizon: self.horizon,
        })?)
    }
}

/// A POMDP policy acting as the domain policy of [`Pomdp::to_model`].
pub struct PomdpDomainPolicy<P>(pub P);

impl<P: PomdpPolicy> DomainPolicy for PomdpDomainPolicy<P> {
    fn action(&self, belief: &BeliefState) -> Option<ActionId> {
        let h: Vec<ObservationId> = belief.observations().collect();
        self.0.action(&h)
    }
}

// ---------------------------------------------------------------------------
// Free communication

/// Extends every message alphabet with one message per observation label, so
/// that full communication is expressible. Only allowed when messages cost
/// nothing; existing message ids are kept.
pub fn widen_messages(m: &Model) -> Result<Model, ReductionError> {
    match classify_communication(m) {
        CommCostClass::General => return Err(ReductionError::NotFree(CommCostClass::General)),
        CommCostClass::Free | CommCostClass::None => {}
    }
    let mut parts = m.clone().into_parts();
    for ag in &mut parts.agents {
        for o in &ag.observations {
            if !ag.messages.contains(o) {
                ag.messages.push(o.clone());
            }
        }
    }
    Ok(Model::from_parts(parts)?)
}

/// For each agent, the observation a message id stands for under full
/// communication.
fn message_decoder(widened: &Model) -> Vec<Vec<Option<ObservationId>>> {
    widened
        .agents()
        .iter()
        .enumerate()
        .map(|(i, ag)| {
            ag.messages
                .iter()
                .map(|label| widened.observation_id(AgentId(i), label))
                .collect()
        })
        .collect()
}

/// Joint observations of every epoch of a post-communication belief formed
/// under full communication.
fn decode_history(
    decode: &[Vec<Option<ObservationId>>],
    belief: &BeliefState,
) -> Option<Vec<Vec<ObservationId>>> {
    belief
        .history()
        .iter()
        .map(|e| {
            e.messages
                .as_ref()?
                .0
                .iter()
                .enumerate()
                .map(|(j, m)| decode[j].get(m.as_ref()?.0 as usize).copied().flatten())
                .collect()
        })
        .collect()
}

/// A free-communication model collapsed to a POMDP over joint actions and
/// joint observations.
#[derive(Debug, Clone)]
pub struct Collapsed {
    pub pomdp: Pomdp,
    /// The source model with widened message alphabets.
    pub model: Model,
    decode: Vec<Vec<Option<ObservationId>>>,
    observation_sizes: Vec<usize>,
    action_sizes: Vec<usize>,
}

pub fn collapse_free_comm(m: &Model) -> Result<Collapsed, ReductionError> {
    let model = widen_messages(m)?;
    let action_sizes: Vec<usize> = model.agents().iter().map(|a| a.actions.len()).collect();
    let observation_sizes: Vec<usize> =
        model.agents().iter().map(|a| a.observations.len()).collect();
    let na = model.joint_action_count();
    let no: u128 = observation_sizes.iter().map(|n| *n as u128).product();
    if na > u16::MAX as usize || no > u32::MAX as u128 {
        return Err(ReductionError::Invalid(format!(
            "{na} joint actions or {no} joint observations exceed the POMDP id range"
        )));
    }
    let joint_label = |parts: Vec<&str>| parts.join("+");
    let actions = (0..na)
        .map(|a| {
            let split = radix_split(&action_sizes, a);
            joint_label(
                split
                    .iter()
                    .enumerate()
                    .map(|(i, x)| model.agents()[i].actions[*x].as_str())
                    .collect(),
            )
        })
        .collect();
    let observations = (0..no as usize)
        .map(|o| {
            let split = radix_split(&observation_sizes, o);
            joint_label(
                split
                    .iter()
                    .enumerate()
                    .map(|(i, x)| model.agents()[i].observations[*x].as_str())
                    .collect(),
            )
        })
        .collect();
    let ns = model.state_count();
    let mut transition = Vec::with_capacity(ns * na);
    let mut reward = Vec::with_capacity(ns * na);
    let mut observation = Vec::with_capacity(ns * (na + 1));
    for s in 0..ns {
        let s = StateId(s as u32);
        for a in 0..na {
            let a = JointAction(a as u32);
            transition.push(model.transitions(s, a).to_vec());
            reward.push(model.reward_domain(s, a));
        }
        for a in 0..=na {
            let prev = (a < na).then_some(JointAction(a as u32));
            let row = model
                .joint_observations(s, prev)
                .into_iter()
                .map(|(o, p)| {
                    let k = radix_index(&observation_sizes, o.iter().map(|x| x.0 as usize));
                    (ObservationId(k as u32), p)
                })
                .collect();
            observation.push(row);
        }
    }
    let pomdp = Pomdp {
        features: model.features().to_vec(),
        actions,
        observations,
        transition,
        observation,
        reward,
        initial: model.initial().to_vec(),
        horizon: model.horizon(),
    };
    Ok(Collapsed {
        pomdp,
        decode: message_decoder(&model),
        model,
        observation_sizes,
        action_sizes,
    })
}

/// A POMDP policy executed by one team member under full communication:
/// the member rebuilds the joint observation history from the messages and
/// takes its own component of the joint action.
pub struct CollapsedPolicy<P> {
    policy: P,
    decode: Vec<Vec<Option<ObservationId>>>,
    observation_sizes: Vec<usize>,
    action_sizes: Vec<usize>,
}

impl<P: PomdpPolicy> DomainPolicy for CollapsedPolicy<P> {
    fn action(&self, belief: &BeliefState) -> Option<ActionId> {
        let joint = decode_history(&self.decode, belief)?;
        let h: Vec<ObservationId> = joint
            .iter()
            .map(|o| {
                let k = radix_index(&self.observation_sizes, o.iter().map(|x| x.0 as usize));
                ObservationId(k as u32)
            })
            .collect();
        let a = self.policy.action(&h)?;
        let split = radix_split(&self.action_sizes, a.0 as usize);
        Some(ActionId(split[belief.owner().0] as u16))
    }
}

impl Collapsed {
    /// The full-communication policy of the widened model.
    pub fn full_comm(&self) -> FullCommPolicy {
        FullCommPolicy::new(&self.model).expect("widened alphabets cover every observation")
    }

    pub fn domain_policy<P: PomdpPolicy>(&self, policy: P) -> CollapsedPolicy<P> {
        CollapsedPolicy {
            policy,
            decode: self.decode.clone(),
            observation_sizes: self.observation_sizes.clone(),
            action_sizes: self.action_sizes.clone(),
        }
    }
}

/// A domain policy that, given every agent's observations, replays what a
/// different policy pair would have done.
pub struct DominanceTransform<A, C> {
    domain: A,
    comm: C,
    decode: Vec<Vec<Option<ObservationId>>>,
}

/// Builds the domain policy that, run under full communication on
/// [`widen_messages`]`(m)`, earns exactly the value of `(domain, comm)` on `m`.
pub fn dominance_transform<A: DomainPolicy, C: CommPolicy>(
    m: &Model,
    domain: A,
    comm: C,
) -> Result<DominanceTransform<A, C>, ReductionError> {
    if comm.needs_knowledge() {
        return Err(ReductionError::KnowledgeDependent);
    }
    let widened = widen_messages(m)?;
    Ok(DominanceTransform {
        domain,
        comm,
        decode: message_decoder(&widened),
    })
}

impl<A: DomainPolicy, C: CommPolicy> DominanceTransform<A, C> {
    /// The belief the owner would hold under the original policy pair.
    pub fn map_belief(&self, belief: &BeliefState) -> Option<BeliefState> {
        let joint = decode_history(&self.decode, belief)?;
        let n = self.decode.len();
        let ctx = CommContext { knowledge: None };
        let mut beliefs: Vec<BeliefState> = (0..n).map(|j| BeliefState::initial(AgentId(j))).collect();
        for obs in &joint {
            let pre: Vec<BeliefState> = beliefs
                .iter()
                .zip(obs)
                .map(|(b, o)| b.se_pre(*o).ok())
                .collect::<Option<_>>()?;
            let msgs = pre
                .iter()
                .map(|b| self.comm.message(b, &ctx))
                .collect::<Option<Vec<_>>>()?;
            let joint_msg = JointMessage::from(msgs);
            beliefs = pre
                .iter()
                .map(|b| b.se_post(joint_msg.clone()).ok())
                .collect::<Option<_>>()?;
        }
        beliefs.into_iter().nth(belief.owner().0)
    }
}

impl<A: DomainPolicy, C: CommPolicy> DomainPolicy for DominanceTransform<A, C> {
    fn action(&self, belief: &BeliefState) -> Option<ActionId> {
        self.domain.action(&self.map_belief(belief)?)
    }
}
