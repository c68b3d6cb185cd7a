//! The team decision problem itself: finite world states built from named
//! features, per-agent action/message/observation alphabets, and the
//! transition, observation and reward tables that drive the engine.

mod belief;
pub mod format;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use belief::{BeliefError, BeliefId, BeliefInterner, BeliefState, Epoch, JointMessage};
pub use format::{parse_model, print_model, FormatError, ModelSpec};

/// Tolerance used for every "sums to one" check.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Reserved label for the empty message and for the absent action before the
/// first epoch.
pub const NULL_TOKEN: &str = "null";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StateId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AgentId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ActionId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ObservationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct MessageId(pub u16);

/// Index of a combined action in the mixed-radix product of the agents'
/// action sets (agent 0 most significant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct JointAction(pub u32);

/// A single agent's message choice; `None` is the null message.
pub type Message = Option<MessageId>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model must have at least one agent")]
    NoAgents,
    #[error("feature `{0}` has an empty domain")]
    EmptyFeature(String),
    #[error("agent `{0}` has no actions")]
    NoActions(String),
    #[error("table `{table}` has {actual} rows, expected {expected}")]
    TableShape {
        table: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("table `{table}` references {what} {index} out of range at {key}")]
    IndexOutOfRange {
        table: &'static str,
        what: &'static str,
        index: usize,
        key: String,
    },
    #[error("state space of {0} states is too large")]
    StateSpaceTooLarge(u128),
    #[error("{0}")]
    Invalid(String),
}

/// A named finite feature domain; the world state is the cross product of all
/// features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agent {
    pub name: String,
    pub actions: Vec<String>,
    /// Proper messages, excluding the always-available null message.
    pub messages: Vec<String>,
    pub observations: Vec<String>,
}

/// Observation function `O(s', a, ω)`, keyed by the resulting state and the
/// previous joint action (or the null action before the first epoch).
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationTable {
    /// One table per agent; the joint probability is the product.
    Factored(Vec<Vec<Vec<(ObservationId, f64)>>>),
    /// Joint outcomes listed explicitly.
    Joint(Vec<Vec<(Box<[ObservationId]>, f64)>>),
}

/// Communication reward `R_Σ(s, σ)`. Joint messages that are absent cost zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommReward {
    entries: BTreeMap<JointMessage, Vec<f64>>,
}

impl CommReward {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the per-state reward vector for one joint message.
    pub fn set(&mut self, message: JointMessage, per_state: Vec<f64>) {
        if per_state.iter().all(|v| *v == 0.0) {
            self.entries.remove(&message);
        } else {
            self.entries.insert(message, per_state);
        }
    }

    pub fn get(&self, state: StateId, message: &[Message]) -> f64 {
        self.entries
            .get(message)
            .map(|v| v[state.0 as usize])
            .unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&JointMessage, &Vec<f64>)> {
        self.entries.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|v| v.iter().all(|x| *x == 0.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|x| x * factor).collect()))
                .collect(),
        }
    }
}

/// Everything needed to assemble a [`Model`]. Tables are indexed as follows:
///
/// * `transition[s * |A| + a]` lists `(s', p)`.
/// * observation rows are indexed `s' * (|A| + 1) + a`, with `a = |A|`
///   standing for the null action of the first epoch.
/// * `reward_domain[s * |A| + a]`.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub features: Vec<Feature>,
    pub agents: Vec<Agent>,
    pub transition: Vec<Vec<(StateId, f64)>>,
    pub observation: ObservationTable,
    pub reward_domain: Vec<f64>,
    pub reward_comm: CommReward,
    pub initial: Vec<(StateId, f64)>,
    pub horizon: usize,
}

/// A validated-shape COM-MTDP instance. Immutable once built.
#[derive(Debug, Clone)]
pub struct Model {
    features: Vec<Feature>,
    agents: Vec<Agent>,
    state_count: usize,
    action_count: usize,
    feature_strides: Vec<usize>,
    action_strides: Vec<usize>,
    transition: Vec<Vec<(StateId, f64)>>,
    observation: ObservationTable,
    reward_domain: Vec<f64>,
    reward_comm: CommReward,
    initial: Vec<(StateId, f64)>,
    horizon: usize,
}

fn strides(sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![1; sizes.len()];
    for i in (0..sizes.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * sizes[i + 1];
    }
    out
}

impl Model {
    pub fn from_parts(parts: ModelParts) -> Result<Self, ModelError> {
        let ModelParts {
            features,
            agents,
            transition,
            observation,
            reward_domain,
            reward_comm,
            initial,
            horizon,
        } = parts;
        if agents.is_empty() {
            return Err(ModelError::NoAgents);
        }
        let mut states: u128 = 1;
        for f in &features {
            if f.values.is_empty() {
                return Err(ModelError::EmptyFeature(f.name.clone()));
            }
            states *= f.values.len() as u128;
        }
        if states > u32::MAX as u128 {
            return Err(ModelError::StateSpaceTooLarge(states));
        }
        let state_count = states as usize;
        let mut actions: u128 = 1;
        for a in &agents {
            if a.actions.is_empty() {
                return Err(ModelError::NoActions(a.name.clone()));
            }
            if a.messages.len() >= u16::MAX as usize || a.actions.len() >= u16::MAX as usize {
                return Err(ModelError::Invalid(format!(
                    "agent `{}` has too many actions or messages",
                    a.name
                )));
            }
            actions *= a.actions.len() as u128;
        }
        if actions > u32::MAX as u128 {
            return Err(ModelError::Invalid("joint action space too large".into()));
        }
        let action_count = actions as usize;
        let feature_strides = strides(&features.iter().map(|f| f.values.len()).collect::<Vec<_>>());
        let action_strides = strides(&agents.iter().map(|a| a.actions.len()).collect::<Vec<_>>());

        let sa = state_count * action_count;
        let so = state_count * (action_count + 1);
        check_shape("transition", sa, transition.len())?;
        check_shape("reward_domain", sa, reward_domain.len())?;
        for (row, entries) in transition.iter().enumerate() {
            for (s, _) in entries {
                check_state("transition", *s, state_count, row)?;
            }
        }
        for (s, _) in &initial {
            check_state("initial", *s, state_count, 0)?;
        }
        match &observation {
            ObservationTable::Factored(tables) => {
                check_shape("observation agents", agents.len(), tables.len())?;
                for (i, table) in tables.iter().enumerate() {
                    check_shape("observation", so, table.len())?;
                    let n = agents[i].observations.len();
                    for (row, entries) in table.iter().enumerate() {
                        for (o, _) in entries {
                            check_obs(*o, n, row)?;
                        }
                    }
                }
            }
            ObservationTable::Joint(table) => {
                check_shape("observation", so, table.len())?;
                for (row, entries) in table.iter().enumerate() {
                    for (joint, _) in entries {
                        check_shape("observation outcome", agents.len(), joint.len())?;
                        for (i, o) in joint.iter().enumerate() {
                            check_obs(*o, agents[i].observations.len(), row)?;
                        }
                    }
                }
            }
        }
        for (msg, values) in reward_comm.entries() {
            check_shape("reward_comm message", agents.len(), msg.0.len())?;
            check_shape("reward_comm", state_count, values.len())?;
            for (i, m) in msg.0.iter().enumerate() {
                if let Some(id) = m {
                    if id.0 as usize >= agents[i].messages.len() {
                        return Err(ModelError::IndexOutOfRange {
                            table: "reward_comm",
                            what: "message",
                            index: id.0 as usize,
                            key: agents[i].name.clone(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            features,
            agents,
            state_count,
            action_count,
            feature_strides,
            action_strides,
            transition,
            observation,
            reward_domain,
            reward_comm,
            initial,
            horizon,
        })
    }

    pub fn into_parts(self) -> ModelParts {
        ModelParts {
            features: self.features,
            agents: self.agents,
            transition: self.transition,
            observation: self.observation,
            reward_domain: self.reward_domain,
            reward_comm: self.reward_comm,
            initial: self.initial,
            horizon: self.horizon,
        }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> &Agent {
        &self.agents[id.0]
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_id(&self, name: &str) -> Option<AgentId> {
        self.agents.iter().position(|a| a.name == name).map(AgentId)
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn joint_action_count(&self) -> usize {
        self.action_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> &[(StateId, f64)] {
        &self.initial
    }

    pub fn observation_table(&self) -> &ObservationTable {
        &self.observation
    }

    pub fn reward_comm_table(&self) -> &CommReward {
        &self.reward_comm
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Value index of feature `feature` in state `s`.
    pub fn feature_value(&self, s: StateId, feature: usize) -> usize {
        (s.0 as usize / self.feature_strides[feature]) % self.features[feature].values.len()
    }

    pub fn state_values(&self, s: StateId) -> Vec<usize> {
        (0..self.features.len())
            .map(|f| self.feature_value(s, f))
            .collect()
    }

    pub fn state_id(&self, values: &[usize]) -> StateId {
        debug_assert_eq!(values.len(), self.features.len());
        StateId(
            values
                .iter()
                .zip(&self.feature_strides)
                .map(|(v, s)| v * s)
                .sum::<usize>() as u32,
        )
    }

    pub fn state_label(&self, s: StateId) -> String {
        if self.features.is_empty() {
            return "()".into();
        }
        let parts: Vec<&str> = (0..self.features.len())
            .map(|f| self.features[f].values[self.feature_value(s, f)].as_str())
            .collect();
        format!("<{}>", parts.join(","))
    }

    pub fn joint_action(&self, actions: &[ActionId]) -> JointAction {
        debug_assert_eq!(actions.len(), self.agents.len());
        JointAction(
            actions
                .iter()
                .zip(&self.action_strides)
                .map(|(a, s)| a.0 as usize * s)
                .sum::<usize>() as u32,
        )
    }

    pub fn split_action(&self, a: JointAction) -> Vec<ActionId> {
        (0..self.agents.len())
            .map(|i| self.agent_action(a, AgentId(i)))
            .collect()
    }

    pub fn agent_action(&self, a: JointAction, agent: AgentId) -> ActionId {
        let i = agent.0;
        ActionId(((a.0 as usize / self.action_strides[i]) % self.agents[i].actions.len()) as u16)
    }

    pub fn action_label(&self, a: JointAction) -> String {
        let parts: Vec<&str> = self
            .split_action(a)
            .iter()
            .enumerate()
            .map(|(i, x)| self.agents[i].actions[x.0 as usize].as_str())
            .collect();
        format!("<{}>", parts.join(","))
    }

    pub fn message_id(&self, agent: AgentId, label: &str) -> Option<MessageId> {
        self.agents[agent.0]
            .messages
            .iter()
            .position(|m| m == label)
            .map(|i| MessageId(i as u16))
    }

    pub fn message_label(&self, agent: AgentId, m: Message) -> &str {
        match m {
            None => NULL_TOKEN,
            Some(id) => &self.agents[agent.0].messages[id.0 as usize],
        }
    }

    pub fn observation_label(&self, agent: AgentId, o: ObservationId) -> &str {
        &self.agents[agent.0].observations[o.0 as usize]
    }

    pub fn observation_id(&self, agent: AgentId, label: &str) -> Option<ObservationId> {
        self.agents[agent.0]
            .observations
            .iter()
            .position(|o| o == label)
            .map(|i| ObservationId(i as u32))
    }

    pub fn transitions(&self, s: StateId, a: JointAction) -> &[(StateId, f64)] {
        &self.transition[s.0 as usize * self.action_count + a.0 as usize]
    }

    fn obs_row(&self, s: StateId, prev: Option<JointAction>) -> usize {
        let a = prev.map(|a| a.0 as usize).unwrap_or(self.action_count);
        s.0 as usize * (self.action_count + 1) + a
    }

    /// Joint observation outcomes with positive probability for the resulting
    /// state `s` reached by `prev` (`None` before the first epoch). Factored
    /// tables are expanded here on demand.
    pub fn joint_observations(
        &self,
        s: StateId,
        prev: Option<JointAction>,
    ) -> Vec<(Vec<ObservationId>, f64)> {
        let row = self.obs_row(s, prev);
        match &self.observation {
            ObservationTable::Joint(table) => table[row]
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(o, p)| (o.to_vec(), *p))
                .collect(),
            ObservationTable::Factored(tables) => {
                let mut out: Vec<(Vec<ObservationId>, f64)> = vec![(Vec::new(), 1.0)];
                for table in tables {
                    let mut next = Vec::with_capacity(out.len() * table[row].len());
                    for (prefix, p) in &out {
                        for (o, q) in &table[row] {
                            if *q > 0.0 {
                                let mut v = prefix.clone();
                                v.push(*o);
                                next.push((v, p * q));
                            }
                        }
                    }
                    out = next;
                }
                out
            }
        }
    }

    /// Marginal observation distribution of a single agent.
    pub fn agent_observations(
        &self,
        agent: AgentId,
        s: StateId,
        prev: Option<JointAction>,
    ) -> Vec<(ObservationId, f64)> {
        let row = self.obs_row(s, prev);
        match &self.observation {
            ObservationTable::Factored(tables) => tables[agent.0][row].clone(),
            ObservationTable::Joint(table) => {
                let mut acc: BTreeMap<ObservationId, f64> = BTreeMap::new();
                for (o, p) in &table[row] {
                    *acc.entry(o[agent.0]).or_insert(0.0) += p;
                }
                acc.into_iter().collect()
            }
        }
    }

    pub fn reward_domain(&self, s: StateId, a: JointAction) -> f64 {
        self.reward_domain[s.0 as usize * self.action_count + a.0 as usize]
    }

    pub fn reward_comm(&self, s: StateId, message: &[Message]) -> f64 {
        self.reward_comm.get(s, message)
    }

    /// Full reward `R(s, a, σ) = R_A(s, a) + R_Σ(s, σ)`.
    pub fn reward(&self, s: StateId, a: JointAction, message: &[Message]) -> f64 {
        self.reward_domain(s, a) + self.reward_comm(s, message)
    }

    /// A copy of this model with every reward multiplied by `factor`.
    pub fn with_scaled_rewards(&self, factor: f64) -> Model {
        let mut m = self.clone();
        for r in &mut m.reward_domain {
            *r *= factor;
        }
        m.reward_comm = m.reward_comm.scaled(factor);
        m
    }

    pub fn with_horizon(&self, horizon: usize) -> Model {
        let mut m = self.clone();
        m.horizon = horizon;
        m
    }

    /// Human-readable rendering of a belief state.
    pub fn describe_belief(&self, b: &BeliefState) -> String {
        let agent = b.owner();
        let mut out = String::from("<");
        for (t, e) in b.history().iter().enumerate() {
            if t > 0 {
                out.push(' ');
            }
            out.push('(');
            out.push_str(self.observation_label(agent, e.observation));
            out.push_str(", ");
            match &e.messages {
                None => out.push('.'),
                Some(msg) => {
                    let labels: Vec<&str> = msg
                        .0
                        .iter()
                        .enumerate()
                        .map(|(j, m)| self.message_label(AgentId(j), *m))
                        .collect();
                    out.push('<');
                    out.push_str(&labels.join(","));
                    out.push('>');
                }
            }
            out.push(')');
        }
        out.push('>');
        out
    }

    /// All joint message vectors (null included), in lexicographic order.
    pub fn joint_messages(&self) -> Vec<JointMessage> {
        let mut out: Vec<Vec<Message>> = vec![Vec::new()];
        for agent in &self.agents {
            let mut next = Vec::new();
            for prefix in &out {
                for m in std::iter::once(None)
                    .chain((0..agent.messages.len()).map(|i| Some(MessageId(i as u16))))
                {
                    let mut v = prefix.clone();
                    v.push(m);
                    next.push(v);
                }
            }
            out = next;
        }
        out.into_iter().map(JointMessage::from).collect()
    }

    pub fn null_message(&self) -> JointMessage {
        JointMessage::from(vec![None; self.agents.len()])
    }
}

fn check_shape(table: &'static str, expected: usize, actual: usize) -> Result<(), ModelError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ModelError::TableShape {
            table,
            expected,
            actual,
        })
    }
}

fn check_state(table: &'static str, s: StateId, n: usize, row: usize) -> Result<(), ModelError> {
    if (s.0 as usize) < n {
        Ok(())
    } else {
        Err(ModelError::IndexOutOfRange {
            table,
            what: "state",
            index: s.0 as usize,
            key: format!("row {row}"),
        })
    }
}

fn check_obs(o: ObservationId, n: usize, row: usize) -> Result<(), ModelError> {
    if (o.0 as usize) < n {
        Ok(())
    } else {
        Err(ModelError::IndexOutOfRange {
            table: "observation",
            what: "observation",
            index: o.0 as usize,
            key: format!("row {row}"),
        })
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub table: &'static str,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.table, self.key, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, table: &'static str, key: String, message: String) {
        self.violations.push(Violation {
            table,
            key,
            message,
        });
    }
}

fn check_probabilities<'a>(
    report: &mut ValidationReport,
    table: &'static str,
    key: impl Fn() -> String,
    probs: impl Iterator<Item = &'a f64>,
    what: &str,
) {
    let mut sum = 0.0;
    for p in probs {
        if !(0.0..=1.0).contains(p) || p.is_nan() {
            report.push(table, key(), format!("probability {p} outside [0, 1]"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        report.push(table, key(), format!("{what} row not normalized (sum = {sum})"));
    }
}

/// Checks the distributional and reward-sign constraints. Violations are
/// returned as data, never as an error.
pub fn validate(model: &Model) -> ValidationReport {
    let mut report = ValidationReport::default();
    let na = model.action_count;
    for s in 0..model.state_count {
        let s = StateId(s as u32);
        for a in 0..na {
            let a = JointAction(a as u32);
            check_probabilities(
                &mut report,
                "transition",
                || format!("s={}, a={}", model.state_label(s), model.action_label(a)),
                model.transitions(s, a).iter().map(|(_, p)| p),
                "transition",
            );
        }
    }
    let prev_key = |s: StateId, a: usize| {
        let a = if a == na {
            NULL_TOKEN.to_string()
        } else {
            model.action_label(JointAction(a as u32))
        };
        format!("s={}, a={}", model.state_label(s), a)
    };
    match &model.observation {
        ObservationTable::Factored(tables) => {
            for (i, table) in tables.iter().enumerate() {
                for (row, entries) in table.iter().enumerate() {
                    let s = StateId((row / (na + 1)) as u32);
                    let a = row % (na + 1);
                    check_probabilities(
                        &mut report,
                        "observation",
                        || format!("agent={}, {}", model.agents[i].name, prev_key(s, a)),
                        entries.iter().map(|(_, p)| p),
                        "observation",
                    );
                }
            }
        }
        ObservationTable::Joint(table) => {
            for (row, entries) in table.iter().enumerate() {
                let s = StateId((row / (na + 1)) as u32);
                let a = row % (na + 1);
                check_probabilities(
                    &mut report,
                    "observation",
                    || prev_key(s, a),
                    entries.iter().map(|(_, p)| p),
                    "observation",
                );
            }
        }
    }
    check_probabilities(
        &mut report,
        "initial",
        || "S0".to_string(),
        model.initial.iter().map(|(_, p)| p),
        "initial",
    );
    for (msg, values) in model.reward_comm.entries() {
        let null = msg.0.iter().all(|m| m.is_none());
        let label = || {
            let parts: Vec<&str> = msg
                .0
                .iter()
                .enumerate()
                .map(|(j, m)| model.message_label(AgentId(j), *m))
                .collect();
            format!("<{}>", parts.join(","))
        };
        for (s, v) in values.iter().enumerate() {
            let key = || format!("s={}, sigma={}", model.state_label(StateId(s as u32)), label());
            if *v > 0.0 {
                report.push(
                    "reward_comm",
                    key(),
                    format!("communication reward must be non-positive (got {v})"),
                );
            }
            if null && *v != 0.0 {
                report.push(
                    "reward_comm",
                    key(),
                    format!("communication reward of the null message must be zero (got {v})"),
                );
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Class predicates

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObservabilityClass {
    IndividuallyObservable,
    CollectivelyObservable,
    CollectivelyPartiallyObservable,
    NonObservable,
}

impl fmt::Display for ObservabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::IndividuallyObservable => "individually observable",
            Self::CollectivelyObservable => "collectively observable",
            Self::CollectivelyPartiallyObservable => "collectively partially observable",
            Self::NonObservable => "non-observable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CommCostClass {
    Free,
    None,
    General,
}

impl fmt::Display for CommCostClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Free => "free communication",
            Self::None => "no communication",
            Self::General => "general communication",
        };
        f.write_str(s)
    }
}

/// True when every agent has some observation that occurs with certainty in
/// every (state, previous action) row.
pub fn is_non_observable(model: &Model) -> bool {
    let na = model.action_count;
    (0..model.agent_count()).all(|i| {
        let n = model.agents[i].observations.len();
        let mut candidates = vec![true; n];
        for s in 0..model.state_count {
            for a in 0..=na {
                let prev = (a < na).then_some(JointAction(a as u32));
                let dist = model.agent_observations(AgentId(i), StateId(s as u32), prev);
                for (o, c) in candidates.iter_mut().enumerate() {
                    if *c {
                        let p: f64 = dist
                            .iter()
                            .filter(|(x, _)| x.0 as usize == o)
                            .map(|(_, p)| p)
                            .sum();
                        if (p - 1.0).abs() > NORMALIZATION_TOLERANCE {
                            *c = false;
                        }
                    }
                }
            }
        }
        candidates.iter().any(|c| *c)
    })
}

/// Every positive-probability individual observation identifies a unique state.
pub fn is_individually_observable(model: &Model) -> bool {
    let na = model.action_count;
    for i in 0..model.agent_count() {
        let mut owner: Vec<Option<u32>> = vec![None; model.agents[i].observations.len()];
        for s in 0..model.state_count {
            for a in 0..=na {
                let prev = (a < na).then_some(JointAction(a as u32));
                for (o, p) in model.agent_observations(AgentId(i), StateId(s as u32), prev) {
                    if p > 0.0 {
                        match owner[o.0 as usize] {
                            None => owner[o.0 as usize] = Some(s as u32),
                            Some(x) if x != s as u32 => return false,
                            _ => {}
                        }
                    }
                }
            }
        }
    }
    true
}

/// Every positive-probability joint observation identifies a unique state.
pub fn is_collectively_observable(model: &Model) -> bool {
    let na = model.action_count;
    let mut owner: std::collections::HashMap<Vec<ObservationId>, u32> =
        std::collections::HashMap::new();
    for s in 0..model.state_count {
        for a in 0..=na {
            let prev = (a < na).then_some(JointAction(a as u32));
            for (o, _) in model.joint_observations(StateId(s as u32), prev) {
                match owner.get(&o) {
                    None => {
                        owner.insert(o, s as u32);
                    }
                    Some(x) if *x != s as u32 => return false,
                    _ => {}
                }
            }
        }
    }
    true
}

/// Reports the most specific observability class that holds.
pub fn classify_observability(model: &Model) -> ObservabilityClass {
    if is_non_observable(model) {
        ObservabilityClass::NonObservable
    } else if is_individually_observable(model) {
        ObservabilityClass::IndividuallyObservable
    } else if is_collectively_observable(model) {
        ObservabilityClass::CollectivelyObservable
    } else {
        ObservabilityClass::CollectivelyPartiallyObservable
    }
}

pub fn classify_communication(model: &Model) -> CommCostClass {
    if model.agents.iter().all(|a| a.messages.is_empty()) {
        CommCostClass::None
    } else if model.reward_comm.is_zero() {
        CommCostClass::Free
    } else {
        CommCostClass::General
    }
}
