//! Exact policy evaluation by forward enumeration of reachable
//! (world state, joint belief) nodes.
//!
//! Each epoch runs observe → pre-update → communicate → post-update → act →
//! reward → transition. Nodes with equal state and beliefs are merged, so the
//! work per epoch is bounded by the number of distinct reachable histories.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    ActionId, AgentId, BeliefId, BeliefInterner, BeliefState, JointAction, JointMessage, Message,
    Model, StateId,
};
use crate::numeric::CompensatedSum;
use crate::policy::{CommContext, CommPolicy, DomainPolicy, Knowledge};

/// Nodes lighter than this are dropped; their mass is reported.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{kind} policy undefined for agent `{agent}` at epoch {epoch}, belief {belief}")]
    PolicyUndefined {
        kind: &'static str,
        agent: String,
        epoch: usize,
        belief: String,
    },
    #[error("agent `{agent}` chose {kind} {index}, outside its alphabet")]
    OutOfAlphabet {
        kind: &'static str,
        agent: String,
        index: usize,
    },
    #[error("conditioning event has zero probability")]
    ZeroProbabilityEvent,
    #[error("sample count must be at least 1")]
    NoSamples,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub prune_threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    /// Expected cumulative reward over epochs `0..=T`.
    pub value: f64,
    pub per_epoch_reward: Vec<f64>,
    /// Expected number of epochs in which some agent sends each symbol.
    pub expected_messages: BTreeMap<String, f64>,
    /// Total nodes enumerated over all epochs.
    pub node_count: usize,
    /// Probability mass lost to pruning.
    pub pruned_mass: f64,
}

impl EvalResult {
    pub fn messages(&self, symbol: &str) -> f64 {
        self.expected_messages.get(symbol).copied().unwrap_or(0.0)
    }

    pub fn total_messages(&self) -> f64 {
        crate::numeric::sum(self.expected_messages.values().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct NodeKey {
    pub state: StateId,
    pub beliefs: Box<[BeliefId]>,
}

#[derive(Debug, Clone)]
pub(crate) struct Frontier {
    pub epoch: usize,
    pub nodes: IndexMap<NodeKey, f64>,
}

#[derive(Debug, Default)]
pub(crate) struct Memo {
    messages: HashMap<BeliefId, Message>,
    actions: HashMap<BeliefId, ActionId>,
}

/// Consistent-state sets per pending belief, indexed by epoch.
#[derive(Debug, Clone, Default)]
pub(crate) struct KnowledgeMaps {
    initial: Vec<StateId>,
    by_epoch: Vec<HashMap<BeliefId, Vec<StateId>>>,
}

impl KnowledgeMaps {
    pub fn new(model: &Model) -> Self {
        let mut initial: Vec<StateId> = model
            .initial()
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(s, _)| *s)
            .collect();
        initial.sort();
        initial.dedup();
        Self {
            initial,
            by_epoch: Vec::new(),
        }
    }

    pub fn extend(&mut self, frontier: &Frontier) {
        debug_assert_eq!(self.by_epoch.len(), frontier.epoch);
        let mut map: HashMap<BeliefId, Vec<StateId>> = HashMap::new();
        for key in frontier.nodes.keys() {
            for b in key.beliefs.iter() {
                map.entry(*b).or_default().push(key.state);
            }
        }
        for v in map.values_mut() {
            v.sort();
            v.dedup();
        }
        self.by_epoch.push(map);
    }
}

pub(crate) struct KnowledgeView<'a> {
    pub interner: &'a BeliefInterner,
    pub maps: &'a KnowledgeMaps,
}

impl Knowledge for KnowledgeView<'_> {
    fn consistent_states(&self, belief: &BeliefState) -> Option<&[StateId]> {
        if belief.is_empty() {
            return Some(&self.maps.initial);
        }
        let id = self.interner.lookup(belief)?;
        self.maps
            .by_epoch
            .get(belief.len() - 1)?
            .get(&id)
            .map(Vec::as_slice)
    }
}

/// What the engine did at one node during a step.
pub(crate) struct NodeStep<'a> {
    pub index: usize,
    pub key: &'a NodeKey,
    pub weight: f64,
    pub messages: &'a [Message],
    pub action: JointAction,
    pub reward_domain: f64,
    pub reward_comm: f64,
}

pub(crate) struct StepOutput {
    pub next: Frontier,
    pub pruned: f64,
    /// `(parent index, child index, transition × observation probability)`.
    pub edges: Vec<(u32, u32, f64)>,
}

pub(crate) struct Enumerator<'m> {
    pub model: &'m Model,
    pub interner: BeliefInterner,
    pub prune: f64,
}

impl<'m> Enumerator<'m> {
    pub fn new(model: &'m Model, prune: f64) -> Self {
        Self {
            model,
            interner: BeliefInterner::new(model.agent_count()),
            prune,
        }
    }

    pub fn with_interner(model: &'m Model, interner: BeliefInterner, prune: f64) -> Self {
        Self {
            model,
            interner,
            prune,
        }
    }

    /// Epoch-0 nodes: initial states with observations drawn under the null
    /// action.
    pub fn initial_frontier(&mut self) -> (Frontier, f64) {
        let n = self.model.agent_count();
        let roots: Vec<BeliefId> = (0..n).map(|i| self.interner.root(AgentId(i))).collect();
        let mut nodes: IndexMap<NodeKey, f64> = IndexMap::new();
        for (s, p) in self.model.initial() {
            if *p <= 0.0 {
                continue;
            }
            for (obs, q) in self.model.joint_observations(*s, None) {
                let beliefs: Box<[BeliefId]> = (0..n)
                    .map(|i| self.interner.pre(roots[i], obs[i]).expect("root is complete"))
                    .collect();
                *nodes
                    .entry(NodeKey { state: *s, beliefs })
                    .or_insert(0.0) += p * q;
            }
        }
        let (nodes, pruned, _) = prune(nodes, self.prune);
        (Frontier { epoch: 0, nodes }, pruned)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        frontier: &Frontier,
        domain: &dyn DomainPolicy,
        comm: &dyn CommPolicy,
        memo: &mut Memo,
        knowledge: Option<&KnowledgeMaps>,
        expand: bool,
        visit: &mut dyn FnMut(NodeStep<'_>),
    ) -> Result<StepOutput, EvalError> {
        let model = self.model;
        let n = model.agent_count();
        let epoch = frontier.epoch;
        let mut next: IndexMap<NodeKey, f64> = IndexMap::new();
        let mut edges = Vec::new();
        let mut messages: Vec<Message> = vec![None; n];
        let mut posts: Vec<BeliefId> = Vec::with_capacity(n);
        let mut actions: Vec<ActionId> = Vec::with_capacity(n);
        for (index, (key, &weight)) in frontier.nodes.iter().enumerate() {
            for (i, slot) in messages.iter_mut().enumerate() {
                let b = key.beliefs[i];
                *slot = match memo.messages.get(&b) {
                    Some(m) => *m,
                    None => {
                        let belief = self.interner.get(b);
                        let view = knowledge.map(|maps| KnowledgeView {
                            interner: &self.interner,
                            maps,
                        });
                        let ctx = CommContext {
                            knowledge: view.as_ref().map(|v| v as &dyn Knowledge),
                        };
                        let m = comm.message(belief, &ctx).ok_or_else(|| {
                            EvalError::PolicyUndefined {
                                kind: "communication",
                                agent: model.agent(AgentId(i)).name.clone(),
                                epoch,
                                belief: model.describe_belief(belief),
                            }
                        })?;
                        if let Some(id) = m {
                            if id.0 as usize >= model.agent(AgentId(i)).messages.len() {
                                return Err(EvalError::OutOfAlphabet {
                                    kind: "message",
                                    agent: model.agent(AgentId(i)).name.clone(),
                                    index: id.0 as usize,
                                });
                            }
                        }
                        memo.messages.insert(b, m);
                        m
                    }
                };
            }
            let joint = JointMessage::from(messages.clone());
            posts.clear();
            for i in 0..n {
                posts.push(
                    self.interner
                        .post(key.beliefs[i], &joint)
                        .expect("frontier beliefs are pending"),
                );
            }
            actions.clear();
            for (i, post) in posts.iter().enumerate() {
                let a = match memo.actions.get(post) {
                    Some(a) => *a,
                    None => {
                        let belief = self.interner.get(*post);
                        let a = domain.action(belief).ok_or_else(|| EvalError::PolicyUndefined {
                            kind: "domain",
                            agent: model.agent(AgentId(i)).name.clone(),
                            epoch,
                            belief: model.describe_belief(belief),
                        })?;
                        if a.0 as usize >= model.agent(AgentId(i)).actions.len() {
                            return Err(EvalError::OutOfAlphabet {
                                kind: "action",
                                agent: model.agent(AgentId(i)).name.clone(),
                                index: a.0 as usize,
                            });
                        }
                        memo.actions.insert(*post, a);
                        a
                    }
                };
                actions.push(a);
            }
            let action = model.joint_action(&actions);
            let reward_domain = model.reward_domain(key.state, action);
            let reward_comm = model.reward_comm(key.state, &messages);
            visit(NodeStep {
                index,
                key,
                weight,
                messages: &messages,
                action,
                reward_domain,
                reward_comm,
            });
            if !expand {
                continue;
            }
            for (s2, p) in model.transitions(key.state, action) {
                if *p <= 0.0 {
                    continue;
                }
                for (obs, q) in model.joint_observations(*s2, Some(action)) {
                    let beliefs: Box<[BeliefId]> = (0..n)
                        .map(|i| self.interner.pre(posts[i], obs[i]).expect("post is complete"))
                        .collect();
                    let entry = next.entry(NodeKey {
                        state: *s2,
                        beliefs,
                    });
                    let child = entry.index();
                    *entry.or_insert(0.0) += weight * p * q;
                    edges.push((index as u32, child as u32, p * q));
                }
            }
        }
        let (nodes, pruned, remap) = prune(next, self.prune);
        if let Some(remap) = remap {
            edges = edges
                .into_iter()
                .filter_map(|(p, c, w)| remap[c as usize].map(|c| (p, c, w)))
                .collect();
        }
        Ok(StepOutput {
            next: Frontier {
                epoch: epoch + 1,
                nodes,
            },
            pruned,
            edges,
        })
    }
}

/// Drops light nodes. Returns the kept nodes, the dropped mass, and (when
/// anything was dropped) the old→new index map.
#[allow(clippy::type_complexity)]
fn prune(
    nodes: IndexMap<NodeKey, f64>,
    threshold: f64,
) -> (IndexMap<NodeKey, f64>, f64, Option<Vec<Option<u32>>>) {
    if nodes.values().all(|w| *w >= threshold) {
        return (nodes, 0.0, None);
    }
    let mut pruned = CompensatedSum::new();
    let mut remap = Vec::with_capacity(nodes.len());
    let mut kept = IndexMap::with_capacity(nodes.len());
    for (k, w) in nodes {
        if w >= threshold {
            remap.push(Some(kept.len() as u32));
            kept.insert(k, w);
        } else {
            pruned.add(w);
            remap.push(None);
        }
    }
    (kept, pruned.value(), Some(remap))
}

/// Exact expected value of a policy pair.
pub fn evaluate(
    model: &Model,
    domain: &dyn DomainPolicy,
    comm: &dyn CommPolicy,
) -> Result<EvalResult, EvalError> {
    evaluate_with(model, domain, comm, &EvalOptions::default())
}

pub fn evaluate_with(
    model: &Model,
    domain: &dyn DomainPolicy,
    comm: &dyn CommPolicy,
    options: &EvalOptions,
) -> Result<EvalResult, EvalError> {
    let mut en = Enumerator::new(model, options.prune_threshold);
    let (mut frontier, pruned0) = en.initial_frontier();
    let mut pruned = CompensatedSum::new();
    pruned.add(pruned0);
    let mut knowledge = comm.needs_knowledge().then(|| KnowledgeMaps::new(model));
    let mut memo = Memo::default();
    let mut per_epoch = Vec::with_capacity(model.horizon() + 1);
    let mut messages: BTreeMap<String, CompensatedSum> = BTreeMap::new();
    for agent in model.agents() {
        for m in &agent.messages {
            messages.entry(m.clone()).or_default();
        }
    }
    let mut node_count = 0;
    let horizon = model.horizon();
    for t in 0..=horizon {
        node_count += frontier.nodes.len();
        if let Some(k) = knowledge.as_mut() {
            k.extend(&frontier);
        }
        let mut epoch_sum = CompensatedSum::new();
        let mut symbols: Vec<&str> = Vec::new();
        let out = en.step(
            &frontier,
            domain,
            comm,
            &mut memo,
            knowledge.as_ref(),
            t < horizon,
            &mut |node| {
                epoch_sum.add(node.weight * (node.reward_domain + node.reward_comm));
                symbols.clear();
                for (i, m) in node.messages.iter().enumerate() {
                    if m.is_some() {
                        let label = model.message_label(AgentId(i), *m);
                        if !symbols.contains(&label) {
                            symbols.push(label);
                        }
                    }
                }
                for s in &symbols {
                    messages
                        .get_mut(*s)
                        .expect("symbol registered")
                        .add(node.weight);
                }
            },
        )?;
        per_epoch.push(epoch_sum.value());
        pruned.add(out.pruned);
        frontier = out.next;
    }
    Ok(EvalResult {
        value: crate::numeric::sum(per_epoch.iter().copied()),
        per_epoch_reward: per_epoch,
        expected_messages: messages.into_iter().map(|(k, v)| (k, v.value())).collect(),
        node_count,
        pruned_mass: pruned.value(),
    })
}

/// Expected number of epochs at which any agent emits `symbol`.
pub fn expected_messages(
    model: &Model,
    domain: &dyn DomainPolicy,
    comm: &dyn CommPolicy,
    symbol: &str,
) -> Result<f64, EvalError> {
    Ok(evaluate(model, domain, comm)?.messages(symbol))
}

/// Conditioning event: agent `agent` holds pending belief `belief` at `epoch`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub epoch: usize,
    pub agent: AgentId,
    pub belief: BeliefState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryNode {
    pub epoch: usize,
    pub state: StateId,
    /// Pending (pre-communication) beliefs, interned in [`Reach::interner`].
    #[serde(skip)]
    pub beliefs: Box<[BeliefId]>,
    pub weight: f64,
    /// Expected reward collected before this epoch given the node
    /// (unconditional on any event for epochs preceding it).
    pub reward_to_date: f64,
    #[serde(skip)]
    pub messages: Box<[Message]>,
    pub action: JointAction,
}

/// Every reachable node per epoch.
#[derive(Debug, Clone)]
pub struct Reach {
    pub interner: BeliefInterner,
    pub epochs: Vec<Vec<TrajectoryNode>>,
    pub pruned_mass: f64,
    /// Probability of the conditioning event (1 when unconditioned).
    pub condition_probability: f64,
    edges: Vec<Vec<(u32, u32, f64)>>,
}

impl Reach {
    pub fn belief(&self, id: BeliefId) -> &BeliefState {
        self.interner.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.epochs.iter().map(Vec::len).sum()
    }

    /// Consistent-state sets of every pending belief, by epoch.
    pub(crate) fn knowledge(&self, model: &Model) -> KnowledgeMaps {
        let mut maps = KnowledgeMaps::new(model);
        for (t, nodes) in self.epochs.iter().enumerate() {
            let frontier = Frontier {
                epoch: t,
                nodes: nodes
                    .iter()
                    .map(|n| {
                        (
                            NodeKey {
                                state: n.state,
                                beliefs: n.beliefs.clone(),
                            },
                            n.weight,
                        )
                    })
                    .collect(),
            };
            maps.extend(&frontier);
        }
        maps
    }
}

/// Enumerates all reachable nodes, optionally conditioned on an event and
/// renormalized.
pub fn reach(
    model: &Model,
    domain: &dyn DomainPolicy,
    comm: &dyn CommPolicy,
    condition: Option<&Condition>,
) -> Result<Reach, EvalError> {
    let full = reach_all(model, domain, comm, DEFAULT_PRUNE_THRESHOLD)?;
    match condition {
        None => Ok(full),
        Some(c) => condition_reach(full, c),
    }
}

pub(crate) fn reach_all(
    model: &Model,
    domain: &dyn DomainPolicy,
    comm: &dyn CommPolicy,
    prune_threshold: f64,
) -> Result<Reach, EvalError> {
    let mut en = Enumerator::new(model, prune_threshold);
    let (mut frontier, pruned0) = en.initial_frontier();
    let mut pruned = CompensatedSum::new();
    pruned.add(pruned0);
    let mut knowledge = comm.needs_knowledge().then(|| KnowledgeMaps::new(model));
    let mut memo = Memo::default();
    let horizon = model.horizon();
    let mut epochs: Vec<Vec<TrajectoryNode>> = Vec::new();
    let mut all_edges = Vec::new();
    let mut reward_mass: Vec<f64> = vec![0.0; frontier.nodes.len()];
    for t in 0..=horizon {
        if let Some(k) = knowledge.as_mut() {
            k.extend(&frontier);
        }
        let mut nodes = Vec::with_capacity(frontier.nodes.len());
        let mut step_reward = vec![0.0; frontier.nodes.len()];
        let out = en.step(
            &frontier,
            domain,
            comm,
            &mut memo,
            knowledge.as_ref(),
            t < horizon,
            &mut |node| {
                step_reward[node.index] = node.reward_domain + node.reward_comm;
                nodes.push(TrajectoryNode {
                    epoch: t,
                    state: node.key.state,
                    beliefs: node.key.beliefs.clone(),
                    weight: node.weight,
                    reward_to_date: reward_mass[node.index] / node.weight,
                    messages: node.messages.into(),
                    action: node.action,
                });
            },
        )?;
        let mut next_mass = vec![0.0; out.next.nodes.len()];
        for (p, c, w) in &out.edges {
            let parent = &nodes[*p as usize];
            next_mass[*c as usize] +=
                (reward_mass[*p as usize] + parent.weight * step_reward[*p as usize]) * w;
        }
        reward_mass = next_mass;
        epochs.push(nodes);
        all_edges.push(out.edges);
        pruned.add(out.pruned);
        frontier = out.next;
    }
    Ok(Reach {
        interner: en.interner,
        epochs,
        pruned_mass: pruned.value(),
        condition_probability: 1.0,
        edges: all_edges,
    })
}

/// Restricts `full` to trajectories through the event and renormalizes.
pub(crate) fn condition_reach(mut full: Reach, c: &Condition) -> Result<Reach, EvalError> {
    let t0 = c.epoch;
    let target = match (full.interner.lookup(&c.belief), full.epochs.get(t0)) {
        (Some(id), Some(_)) => id,
        _ => return Err(EvalError::ZeroProbabilityEvent),
    };
    let in_event: Vec<bool> = full.epochs[t0]
        .iter()
        .map(|n| n.beliefs[c.agent.0] == target)
        .collect();
    let prob = crate::numeric::sum(
        full.epochs[t0]
            .iter()
            .zip(&in_event)
            .filter(|(_, e)| **e)
            .map(|(n, _)| n.weight),
    );
    if prob <= 0.0 {
        return Err(EvalError::ZeroProbabilityEvent);
    }
    // Probability of reaching the event from each earlier node.
    let mut to_event: Vec<f64> = in_event.iter().map(|e| if *e { 1.0 } else { 0.0 }).collect();
    let mut factors: Vec<Vec<f64>> = vec![Vec::new(); full.epochs.len()];
    for t in (0..t0).rev() {
        let mut m = vec![0.0; full.epochs[t].len()];
        for (p, ch, w) in &full.edges[t] {
            m[*p as usize] += w * to_event[*ch as usize];
        }
        factors[t] = m.clone();
        to_event = m;
    }
    factors[t0] = in_event.iter().map(|e| if *e { 1.0 } else { 0.0 }).collect();
    // Descendants of the event nodes.
    for t in t0 + 1..full.epochs.len() {
        let mut f = vec![0.0; full.epochs[t].len()];
        for (p, ch, _) in &full.edges[t - 1] {
            if factors[t - 1][*p as usize] > 0.0 {
                f[*ch as usize] = 1.0;
            }
        }
        factors[t] = f;
    }
    for (t, nodes) in full.epochs.iter_mut().enumerate() {
        let kept: Vec<TrajectoryNode> = nodes
            .drain(..)
            .zip(&factors[t])
            .filter(|(_, f)| **f > 0.0)
            .map(|(mut n, f)| {
                n.weight = n.weight * f / prob;
                n
            })
            .collect();
        *nodes = kept;
    }
    full.edges.clear();
    full.condition_probability = prob;
    Ok(full)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{
        Agent, CommReward, Feature, MessageId, ModelParts, ObservationId, ObservationTable,
    };
    use crate::policy::{FnCommPolicy, FnDomainPolicy, SilentPolicy};

    /// One agent guessing a coin: state is the coin, the agent sees it with
    /// probability `acc`, acts `guess-h`/`guess-t`, and the coin re-flips.
    pub(crate) fn coin(acc: f64, horizon: usize) -> Model {
        let agents = vec![Agent {
            name: "A".into(),
            actions: vec!["guess-h".into(), "guess-t".into()],
            messages: vec!["ping".into()],
            observations: vec!["see-h".into(), "see-t".into()],
        }];
        let features = vec![Feature {
            name: "coin".into(),
            values: vec!["h".into(), "t".into()],
        }];
        let transition = vec![vec![(StateId(0), 0.5), (StateId(1), 0.5)]; 4];
        let mut obs = Vec::new();
        for s in 0..2 {
            for _ in 0..3 {
                let right = ObservationId(s);
                let wrong = ObservationId(1 - s);
                obs.push(vec![(right, acc), (wrong, 1.0 - acc)]);
            }
        }
        let mut reward_comm = CommReward::new();
        reward_comm.set(JointMessage::from(vec![Some(MessageId(0))]), vec![-0.25, -0.25]);
        Model::from_parts(ModelParts {
            features,
            agents,
            transition,
            observation: ObservationTable::Factored(vec![obs]),
            reward_domain: vec![1.0, 0.0, 0.0, 1.0],
            reward_comm,
            initial: vec![(StateId(0), 0.5), (StateId(1), 0.5)],
            horizon,
        })
        .unwrap()
    }

    fn follow_eyes() -> impl DomainPolicy {
        FnDomainPolicy(|b: &BeliefState| b.latest_observation().map(|o| ActionId(o.0 as u16)))
    }

    #[test]
    fn single_epoch_value() {
        let m = coin(0.8, 0);
        let r = evaluate(&m, &follow_eyes(), &SilentPolicy).unwrap();
        assert!((r.value - 0.8).abs() < 1e-15);
        assert_eq!(r.per_epoch_reward.len(), 1);
    }

    #[test]
    fn value_sums_every_epoch() {
        let m = coin(0.8, 3);
        let r = evaluate(&m, &follow_eyes(), &SilentPolicy).unwrap();
        assert!((r.value - 3.2).abs() < 1e-12, "{}", r.value);
        assert_eq!(r.messages("ping"), 0.0);
    }

    #[test]
    fn message_cost_and_count() {
        let m = coin(1.0, 2);
        let ping = FnCommPolicy(|b: &BeliefState| Some((b.len() == 2).then_some(MessageId(0))));
        let r = evaluate(&m, &follow_eyes(), &ping).unwrap();
        assert!((r.value - (3.0 - 0.25)).abs() < 1e-12);
        assert!((r.messages("ping") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_policy_names_agent_and_epoch() {
        let m = coin(1.0, 2);
        let partial = FnDomainPolicy(|b: &BeliefState| (b.len() < 2).then_some(ActionId(0)));
        match evaluate(&m, &partial, &SilentPolicy) {
            Err(EvalError::PolicyUndefined {
                kind, agent, epoch, ..
            }) => {
                assert_eq!(kind, "domain");
                assert_eq!(agent, "A");
                assert_eq!(epoch, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn epoch_weights_sum_to_one() {
        let m = coin(0.7, 3);
        let r = reach(&m, &follow_eyes(), &SilentPolicy, None).unwrap();
        for nodes in &r.epochs {
            let total: f64 = nodes.iter().map(|n| n.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conditioning_renormalizes() {
        let m = coin(0.7, 2);
        let full = reach(&m, &follow_eyes(), &SilentPolicy, None).unwrap();
        let target = full.epochs[1][0].clone();
        let belief = full.belief(target.beliefs[0]).clone();
        let c = Condition {
            epoch: 1,
            agent: AgentId(0),
            belief: belief.clone(),
        };
        let cond = reach(&m, &follow_eyes(), &SilentPolicy, Some(&c)).unwrap();
        for nodes in &cond.epochs {
            let total: f64 = nodes.iter().map(|n| n.weight).sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
        }
        assert!(cond.epochs[1]
            .iter()
            .all(|n| cond.belief(n.beliefs[0]) == &belief));
        assert!(cond.condition_probability < 1.0);
    }

    #[test]
    fn zero_probability_condition_is_an_error() {
        let m = coin(1.0, 1);
        let b = BeliefState::initial(AgentId(0))
            .se_pre(ObservationId(0))
            .unwrap()
            .se_post(JointMessage::from(vec![None]))
            .unwrap()
            .se_pre(ObservationId(0))
            .unwrap();
        let c = Condition {
            epoch: 0,
            agent: AgentId(0),
            belief: b,
        };
        assert_eq!(
            reach(&m, &follow_eyes(), &SilentPolicy, Some(&c)).unwrap_err(),
            EvalError::ZeroProbabilityEvent
        );
    }

    #[test]
    fn reward_to_date_accumulates() {
        let m = coin(1.0, 2);
        let r = reach(&m, &follow_eyes(), &SilentPolicy, None).unwrap();
        for n in &r.epochs[2] {
            assert!((n.reward_to_date - 2.0).abs() < 1e-12);
        }
    }
}
