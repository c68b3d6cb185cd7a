//! Deterministic domain-level and communication policies.
//!
//! Domain policies map completed (post-communication) beliefs to actions;
//! communication policies map pending (pre-communication) beliefs to a
//! message or null. Returning `None` means "undefined here", which the engine
//! reports as an error if the belief is reachable.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionId, AgentId, BeliefState, Message, MessageId, Model, StateId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no agent can send message `{0}`")]
    UnknownMessage(String),
    #[error("agent `{agent}` cannot send its observations {missing:?}")]
    AlphabetTooSmall { agent: String, missing: Vec<String> },
    #[error("belief belongs to agent {actual}, not agent {expected}")]
    OwnerMismatch { expected: usize, actual: usize },
    #[error("message index {0} is outside the agent's alphabet")]
    MessageOutOfRange(u16),
    #[error("invalid STEAM parameters: {0}")]
    InvalidSteam(String),
    #[error("policy file: {0}")]
    File(String),
}

/// What an agent can know with certainty: the set of world states consistent
/// with a pending belief, gathered over every reachable trajectory.
pub trait Knowledge {
    fn consistent_states(&self, belief: &BeliefState) -> Option<&[StateId]>;
}

/// Read-only context handed to communication policies.
#[derive(Clone, Copy, Default)]
pub struct CommContext<'a> {
    pub knowledge: Option<&'a dyn Knowledge>,
}

pub trait DomainPolicy: Send + Sync {
    fn action(&self, belief: &BeliefState) -> Option<ActionId>;
}

pub trait CommPolicy: Send + Sync {
    fn message(&self, belief: &BeliefState, ctx: &CommContext<'_>) -> Option<Message>;

    /// Whether [`CommContext::knowledge`] must be populated.
    fn needs_knowledge(&self) -> bool {
        false
    }
}

macro_rules! forward_policies {
    ($($ptr:ty),*) => {$(
        impl<T: DomainPolicy + ?Sized> DomainPolicy for $ptr {
            fn action(&self, belief: &BeliefState) -> Option<ActionId> {
                (**self).action(belief)
            }
        }
        impl<T: CommPolicy + ?Sized> CommPolicy for $ptr {
            fn message(&self, belief: &BeliefState, ctx: &CommContext<'_>) -> Option<Message> {
                (**self).message(belief, ctx)
            }
            fn needs_knowledge(&self) -> bool {
                (**self).needs_knowledge()
            }
        }
    )*};
}
forward_policies!(&T, Box<T>, Arc<T>);

/// A goal as a subset of world states.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    members: Vec<bool>,
}

impl GoalSet {
    pub fn from_predicate(model: &Model, pred: impl Fn(StateId) -> bool) -> Self {
        Self {
            members: (0..model.state_count())
                .map(|s| pred(StateId(s as u32)))
                .collect(),
        }
    }

    pub fn from_states(model: &Model, states: &[StateId]) -> Self {
        let mut members = vec![false; model.state_count()];
        for s in states {
            members[s.0 as usize] = true;
        }
        Self { members }
    }

    /// States where feature `feature` takes value `value`.
    pub fn feature_equals(model: &Model, feature: &str, value: &str) -> Option<Self> {
        let f = model.feature_index(feature)?;
        let v = model.features()[f].values.iter().position(|x| x == value)?;
        Some(Self::from_predicate(model, |s| model.feature_value(s, f) == v))
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.members[s.0 as usize]
    }

    /// Certain belief in the goal: a non-empty consistent set inside G.
    pub fn implied_by(&self, states: &[StateId]) -> bool {
        !states.is_empty() && states.iter().all(|s| self.contains(*s))
    }
}

/// Per-agent id of the goal-achievement message, `None` where the agent
/// lacks it.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalMessage {
    pub label: String,
    pub ids: Vec<Option<MessageId>>,
}

impl GoalMessage {
    pub fn resolve(model: &Model, label: &str) -> Result<Self, PolicyError> {
        let ids: Vec<_> = (0..model.agent_count())
            .map(|i| model.message_id(AgentId(i), label))
            .collect();
        if ids.iter().all(|m| m.is_none()) {
            return Err(PolicyError::UnknownMessage(label.to_string()));
        }
        Ok(Self {
            label: label.to_string(),
            ids,
        })
    }

    pub fn for_agent(&self, agent: AgentId) -> Option<MessageId> {
        self.ids[agent.0]
    }

    pub fn is_goal_message(&self, agent: AgentId, m: Message) -> bool {
        m.is_some() && m == self.ids[agent.0]
    }
}

/// Knowledge test shared by the goal-driven policies.
pub fn believes(goal: &GoalSet, knowledge: &dyn Knowledge, belief: &BeliefState) -> Option<bool> {
    Some(goal.implied_by(knowledge.consistent_states(belief)?))
}

/// True when `belief` implies the goal but its one-epoch-shorter prefix does not.
pub fn first_believes(
    goal: &GoalSet,
    knowledge: &dyn Knowledge,
    belief: &BeliefState,
) -> Option<bool> {
    if !believes(goal, knowledge, belief)? {
        return Some(false);
    }
    match belief.previous_pre() {
        None => Some(true),
        Some(prev) => Some(!believes(goal, knowledge, &prev)?),
    }
}

/// Never communicates.
#[derive(Debug, Clone, Copy, Default)]
pub struct SilentPolicy;

impl CommPolicy for SilentPolicy {
    fn message(&self, _: &BeliefState, _: &CommContext<'_>) -> Option<Message> {
        Some(None)
    }
}

/// Announces the goal exactly once, when the agent first believes it.
#[derive(Debug, Clone)]
pub struct JenningsPolicy {
    goal: GoalSet,
    sigma: GoalMessage,
}

impl JenningsPolicy {
    pub fn new(goal: GoalSet, sigma: GoalMessage) -> Self {
        Self { goal, sigma }
    }

    pub fn goal(&self) -> &GoalSet {
        &self.goal
    }

    pub fn sigma(&self) -> &GoalMessage {
        &self.sigma
    }
}

impl CommPolicy for JenningsPolicy {
    fn message(&self, belief: &BeliefState, ctx: &CommContext<'_>) -> Option<Message> {
        let Some(id) = self.sigma.for_agent(belief.owner()) else {
            return Some(None);
        };
        let first = first_believes(&self.goal, ctx.knowledge?, belief)?;
        Some(first.then_some(id))
    }

    fn needs_knowledge(&self) -> bool {
        true
    }
}

/// STEAM's monolithic selectivity parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteamParams {
    /// Probability of miscoordinated termination.
    pub tau: f64,
    /// Cost of miscoordinated termination.
    pub c_mt: f64,
    /// Communication cost.
    pub c_c: f64,
}

impl SteamParams {
    pub fn new(tau: f64, c_mt: f64, c_c: f64) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(PolicyError::InvalidSteam(format!("tau = {tau} outside [0, 1]")));
        }
        if !(c_mt >= 0.0 && c_c >= 0.0) {
            return Err(PolicyError::InvalidSteam("costs must be non-negative".into()));
        }
        Ok(Self { tau, c_mt, c_c })
    }

    /// The strict STEAM test `τ·C_mt > C_c`.
    pub fn communicates(&self) -> bool {
        self.tau * self.c_mt > self.c_c
    }
}

/// Jennings when the STEAM inequality holds, silent otherwise.
#[derive(Debug, Clone)]
pub struct SteamPolicy {
    params: SteamParams,
    inner: Option<JenningsPolicy>,
}

impl SteamPolicy {
    pub fn new(params: SteamParams, goal: GoalSet, sigma: GoalMessage) -> Self {
        Self {
            params,
            inner: params
                .communicates()
                .then(|| JenningsPolicy::new(goal, sigma)),
        }
    }

    pub fn params(&self) -> SteamParams {
        self.params
    }

    pub fn communicates(&self) -> bool {
        self.inner.is_some()
    }
}

impl CommPolicy for SteamPolicy {
    fn message(&self, belief: &BeliefState, ctx: &CommContext<'_>) -> Option<Message> {
        match &self.inner {
            Some(j) => j.message(belief, ctx),
            None => Some(None),
        }
    }

    fn needs_knowledge(&self) -> bool {
        self.inner.is_some()
    }
}

/// Every agent broadcasts its latest observation verbatim.
#[derive(Debug, Clone)]
pub struct FullCommPolicy {
    /// `table[agent][observation]` is the message carrying that observation.
    table: Vec<Vec<MessageId>>,
}

impl FullCommPolicy {
    /// Requires each agent's message alphabet to contain a message labelled
    /// like each of its observations.
    pub fn new(model: &Model) -> Result<Self, PolicyError> {
        let mut table = Vec::new();
        for (i, agent) in model.agents().iter().enumerate() {
            let mut row = Vec::new();
            let mut missing = Vec::new();
            for o in &agent.observations {
                match model.message_id(AgentId(i), o) {
                    Some(m) => row.push(m),
                    None => missing.push(o.clone()),
                }
            }
            if !missing.is_empty() {
                return Err(PolicyError::AlphabetTooSmall {
                    agent: agent.name.clone(),
                    missing,
                });
            }
            table.push(row);
        }
        Ok(Self { table })
    }

    pub fn message_for(&self, agent: AgentId, o: crate::model::ObservationId) -> MessageId {
        self.table[agent.0][o.0 as usize]
    }
}

impl CommPolicy for FullCommPolicy {
    fn message(&self, belief: &BeliefState, _: &CommContext<'_>) -> Option<Message> {
        let o = belief.latest_observation()?;
        Some(Some(self.message_for(belief.owner(), o)))
    }
}

/// A base policy with a table of per-belief exceptions.
#[derive(Clone)]
pub struct OverridePolicy<P> {
    base: P,
    overrides: HashMap<BeliefState, Message>,
}

impl<P: CommPolicy> OverridePolicy<P> {
    pub fn new(base: P) -> Self {
        Self {
            base,
            overrides: HashMap::new(),
        }
    }

    /// Replaces the output at one belief (the belief carries its owner).
    pub fn set(&mut self, belief: BeliefState, message: Message) {
        self.overrides.insert(belief, message);
    }

    pub fn with(mut self, belief: BeliefState, message: Message) -> Self {
        self.set(belief, message);
        self
    }

    pub fn base(&self) -> &P {
        &self.base
    }

    pub fn overrides(&self) -> &HashMap<BeliefState, Message> {
        &self.overrides
    }
}

impl<P: CommPolicy> CommPolicy for OverridePolicy<P> {
    fn message(&self, belief: &BeliefState, ctx: &CommContext<'_>) -> Option<Message> {
        match self.overrides.get(belief) {
            Some(m) => Some(*m),
            None => self.base.message(belief, ctx),
        }
    }

    fn needs_knowledge(&self) -> bool {
        self.base.needs_knowledge()
    }
}

/// `base` everywhere except at (`agent`, `belief`), where it sends `message`.
pub fn override_at<P: CommPolicy>(
    model: &Model,
    base: P,
    agent: AgentId,
    belief: BeliefState,
    message: Message,
) -> Result<OverridePolicy<P>, PolicyError> {
    if belief.owner() != agent {
        return Err(PolicyError::OwnerMismatch {
            expected: agent.0,
            actual: belief.owner().0,
        });
    }
    if let Some(m) = message {
        if m.0 as usize >= model.agent(agent).messages.len() {
            return Err(PolicyError::MessageOutOfRange(m.0));
        }
    }
    Ok(OverridePolicy::new(base).with(belief, message))
}

/// Domain policy backed by a closure.
pub struct FnDomainPolicy<F>(pub F);

impl<F> DomainPolicy for FnDomainPolicy<F>
where
    F: Fn(&BeliefState) -> Option<ActionId> + Send + Sync,
{
    fn action(&self, belief: &BeliefState) -> Option<ActionId> {
        (self.0)(belief)
    }
}

/// Communication policy backed by a closure that ignores knowledge.
pub struct FnCommPolicy<F>(pub F);

impl<F> CommPolicy for FnCommPolicy<F>
where
    F: Fn(&BeliefState) -> Option<Message> + Send + Sync,
{
    fn message(&self, belief: &BeliefState, _: &CommContext<'_>) -> Option<Message> {
        (self.0)(belief)
    }
}

/// Explicit belief → action table with an optional per-agent fallback.
#[derive(Debug, Clone, Default)]
pub struct TableDomainPolicy {
    table: HashMap<BeliefState, ActionId>,
    default: Vec<Option<ActionId>>,
}

impl TableDomainPolicy {
    pub fn new(agents: usize) -> Self {
        Self {
            table: HashMap::new(),
            default: vec![None; agents],
        }
    }

    pub fn insert(&mut self, belief: BeliefState, action: ActionId) {
        self.table.insert(belief, action);
    }

    pub fn set_default(&mut self, agent: AgentId, action: ActionId) {
        self.default[agent.0] = Some(action);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl DomainPolicy for TableDomainPolicy {
    fn action(&self, belief: &BeliefState) -> Option<ActionId> {
        self.table
            .get(belief)
            .copied()
            .or_else(|| self.default.get(belief.owner().0).copied().flatten())
    }
}

/// Explicit belief → message table; unlisted beliefs are silent.
#[derive(Debug, Clone, Default)]
pub struct TableCommPolicy {
    table: HashMap<BeliefState, Message>,
}

impl TableCommPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, belief: BeliefState, message: Message) {
        self.table.insert(belief, message);
    }
}

impl CommPolicy for TableCommPolicy {
    fn message(&self, belief: &BeliefState, _: &CommContext<'_>) -> Option<Message> {
        Some(self.table.get(belief).copied().flatten())
    }
}

/// Acts on the latest observation only, with a per-agent fallback.
///
/// Loaded from TOML with one table per agent mapping observation labels to
/// action labels; the key `default` covers every other observation:
///
/// ```toml
/// [A]
/// default = "listen"
/// see-h = "guess-h"
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ReactivePolicy {
    /// `rules[agent][observation]`.
    rules: Vec<Vec<Option<ActionId>>>,
}

impl ReactivePolicy {
    pub fn from_toml(model: &Model, text: &str) -> Result<Self, PolicyError> {
        let doc: HashMap<String, HashMap<String, String>> =
            toml::from_str(text).map_err(|e| PolicyError::File(e.to_string()))?;
        let mut rules: Vec<Vec<Option<ActionId>>> = model
            .agents()
            .iter()
            .map(|a| vec![None; a.observations.len()])
            .collect();
        for (name, table) in &doc {
            let agent = model
                .agent_id(name)
                .ok_or_else(|| PolicyError::File(format!("unknown agent `{name}`")))?;
            let spec = model.agent(agent);
            let action = |label: &str| {
                spec.actions
                    .iter()
                    .position(|a| a == label)
                    .map(|k| ActionId(k as u16))
                    .ok_or_else(|| PolicyError::File(format!("agent `{name}` has no action `{label}`")))
            };
            if let Some(d) = table.get("default") {
                let d = action(d)?;
                rules[agent.0].iter_mut().for_each(|r| *r = Some(d));
            }
            for (obs, act) in table {
                if obs == "default" {
                    continue;
                }
                let o = model.observation_id(agent, obs).ok_or_else(|| {
                    PolicyError::File(format!("agent `{name}` has no observation `{obs}`"))
                })?;
                rules[agent.0][o.0 as usize] = Some(action(act)?);
            }
        }
        Ok(Self { rules })
    }
}

impl DomainPolicy for ReactivePolicy {
    fn action(&self, belief: &BeliefState) -> Option<ActionId> {
        let o = belief.latest_observation()?;
        self.rules.get(belief.owner().0)?.get(o.0 as usize).copied().flatten()
    }
}
