use std::collections::HashMap;

use thiserror::Error;

use super::{AgentId, Message, ObservationId};

/// The messages sent by all agents in one epoch, indexed by agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointMessage(pub Box<[Message]>);

impl JointMessage {
    pub fn is_null(&self) -> bool {
        self.0.iter().all(|m| m.is_none())
    }
}

impl From<Vec<Message>> for JointMessage {
    fn from(v: Vec<Message>) -> Self {
        Self(v.into_boxed_slice())
    }
}

impl std::borrow::Borrow<[Message]> for JointMessage {
    fn borrow(&self) -> &[Message] {
        &self.0
    }
}

/// One epoch of an agent's history: what it observed and, once the exchange
/// has happened, every message it received (its own included).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Epoch {
    pub observation: ObservationId,
    pub messages: Option<JointMessage>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BeliefError {
    #[error("belief already awaits this epoch's messages")]
    AlreadyPending,
    #[error("belief has no pending epoch to complete")]
    NotPending,
}

/// Perfect-recall belief state: the full observation and message history.
///
/// A belief is *pending* between `se_pre` and `se_post`, i.e. its last epoch
/// carries an observation but no messages yet. Communication policies see
/// pending beliefs; domain policies see completed ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BeliefState {
    owner: AgentId,
    history: Vec<Epoch>,
}

impl BeliefState {
    /// The empty history every agent starts with.
    pub fn initial(owner: AgentId) -> Self {
        Self {
            owner,
            history: Vec::new(),
        }
    }

    pub fn from_history(owner: AgentId, history: Vec<Epoch>) -> Self {
        Self { owner, history }
    }

    pub fn owner(&self) -> AgentId {
        self.owner
    }

    pub fn history(&self) -> &[Epoch] {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn is_pending(&self) -> bool {
        self.history.last().is_some_and(|e| e.messages.is_none())
    }

    /// Records a new observation before communication.
    pub fn se_pre(&self, observation: ObservationId) -> Result<Self, BeliefError> {
        if self.is_pending() {
            return Err(BeliefError::AlreadyPending);
        }
        let mut history = Vec::with_capacity(self.history.len() + 1);
        history.extend_from_slice(&self.history);
        history.push(Epoch {
            observation,
            messages: None,
        });
        Ok(Self {
            owner: self.owner,
            history,
        })
    }

    /// Fills in the messages exchanged in the current epoch.
    pub fn se_post(&self, messages: JointMessage) -> Result<Self, BeliefError> {
        if !self.is_pending() {
            return Err(BeliefError::NotPending);
        }
        let mut history = self.history.clone();
        history.last_mut().expect("pending").messages = Some(messages);
        Ok(Self {
            owner: self.owner,
            history,
        })
    }

    pub fn latest_observation(&self) -> Option<ObservationId> {
        self.history.last().map(|e| e.observation)
    }

    /// The pre-communication belief one epoch earlier: the history minus its
    /// last epoch, with that earlier epoch's messages stripped. For a belief
    /// of length one this is the empty history.
    pub fn previous_pre(&self) -> Option<Self> {
        if self.history.is_empty() {
            return None;
        }
        let mut history = self.history[..self.history.len() - 1].to_vec();
        if let Some(last) = history.last_mut() {
            last.messages = None;
        }
        Some(Self {
            owner: self.owner,
            history,
        })
    }

    /// Observations only, oldest first.
    pub fn observations(&self) -> impl Iterator<Item = ObservationId> + '_ {
        self.history.iter().map(|e| e.observation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BeliefId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Edge {
    Observe(ObservationId),
    Receive(JointMessage),
}

/// Hash-consing trie over belief states so the engine can key nodes by small
/// integers while policies still receive full histories.
#[derive(Debug, Clone)]
pub struct BeliefInterner {
    beliefs: Vec<BeliefState>,
    edges: HashMap<(BeliefId, Edge), BeliefId>,
    roots: Vec<BeliefId>,
}

impl BeliefInterner {
    pub fn new(agents: usize) -> Self {
        let mut out = Self {
            beliefs: Vec::new(),
            edges: HashMap::new(),
            roots: Vec::new(),
        };
        for i in 0..agents {
            let id = out.push(BeliefState::initial(AgentId(i)));
            out.roots.push(id);
        }
        out
    }

    fn push(&mut self, b: BeliefState) -> BeliefId {
        let id = BeliefId(self.beliefs.len() as u32);
        self.beliefs.push(b);
        id
    }

    pub fn root(&self, agent: AgentId) -> BeliefId {
        self.roots[agent.0]
    }

    pub fn get(&self, id: BeliefId) -> &BeliefState {
        &self.beliefs[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn pre(&mut self, id: BeliefId, o: ObservationId) -> Result<BeliefId, BeliefError> {
        let key = (id, Edge::Observe(o));
        if let Some(child) = self.edges.get(&key) {
            return Ok(*child);
        }
        let b = self.get(id).se_pre(o)?;
        let child = self.push(b);
        self.edges.insert(key, child);
        Ok(child)
    }

    pub fn post(&mut self, id: BeliefId, m: &JointMessage) -> Result<BeliefId, BeliefError> {
        let key = (id, Edge::Receive(m.clone()));
        if let Some(child) = self.edges.get(&key) {
            return Ok(*child);
        }
        let b = self.get(id).se_post(m.clone())?;
        let child = self.push(b);
        self.edges.insert(key, child);
        Ok(child)
    }

    /// Interns an arbitrary belief by replaying its history from the root.
    pub fn intern(&mut self, b: &BeliefState) -> BeliefId {
        let mut id = self.root(b.owner());
        for e in b.history() {
            id = self.pre(id, e.observation).expect("replayed history");
            if let Some(m) = &e.messages {
                id = self.post(id, m).expect("replayed history");
            }
        }
        id
    }

    /// Finds an already interned belief without inserting.
    pub fn lookup(&self, b: &BeliefState) -> Option<BeliefId> {
        let mut id = *self.roots.get(b.owner().0)?;
        for e in b.history() {
            id = *self.edges.get(&(id, Edge::Observe(e.observation)))?;
            if let Some(m) = &e.messages {
                id = *self.edges.get(&(id, Edge::Receive(m.clone())))?;
            }
        }
        Some(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MessageId;

    #[test]
    fn pre_then_post_round() {
        let b = BeliefState::initial(AgentId(0));
        assert!(b.is_empty());
        let p = b.se_pre(ObservationId(3)).unwrap();
        assert!(p.is_pending());
        assert_eq!(p.se_pre(ObservationId(1)), Err(BeliefError::AlreadyPending));
        let q = p
            .se_post(JointMessage::from(vec![None, Some(MessageId(0))]))
            .unwrap();
        assert!(!q.is_pending());
        assert_eq!(q.se_post(JointMessage::from(vec![None])), Err(BeliefError::NotPending));
        assert_eq!(q.len(), 1);
        assert_eq!(q.previous_pre(), Some(b));
    }

    #[test]
    fn previous_pre_strips_messages() {
        let m = JointMessage::from(vec![None]);
        let b = BeliefState::initial(AgentId(0))
            .se_pre(ObservationId(0))
            .unwrap()
            .se_post(m.clone())
            .unwrap()
            .se_pre(ObservationId(1))
            .unwrap();
        let prev = b.previous_pre().unwrap();
        assert_eq!(prev.len(), 1);
        assert!(prev.is_pending());
    }

    #[test]
    fn interner_shares_prefixes() {
        let mut int = BeliefInterner::new(2);
        let r = int.root(AgentId(1));
        let a = int.pre(r, ObservationId(0)).unwrap();
        let b = int.pre(r, ObservationId(0)).unwrap();
        assert_eq!(a, b);
        let m = JointMessage::from(vec![None, None]);
        let c = int.post(a, &m).unwrap();
        let belief = int.get(c).clone();
        assert_eq!(int.lookup(&belief), Some(c));
        assert_eq!(int.intern(&belief), c);
        assert_eq!(int.len(), 4);
    }
}
