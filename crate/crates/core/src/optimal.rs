//! Locally optimal communication of goal achievement.
//!
//! At each first-knowledge event (epoch `t0`, agent `i`, pending belief `β`)
//! the send/withhold decision is scored by
//!
//! ```text
//! Δ = E[Σ_{t≥t0} R_A | send] − E[Σ_{t≥t0} R_A | null]
//!     + E[R_Σ(s, σ_send) − R_Σ(s, σ_null) | β at t0]
//! ```
//!
//! with both expectations taken over the world states and other agents'
//! beliefs consistent with the event. Sending is locally optimal iff Δ ≥ 0.

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::eval::{
    reach_all, EvalError, Frontier, Enumerator, KnowledgeMaps, KnowledgeView, Memo, NodeKey, Reach,
    DEFAULT_PRUNE_THRESHOLD,
};
use crate::model::{AgentId, BeliefId, BeliefState, Model};
use crate::numeric::CompensatedSum;
use crate::policy::{
    first_believes, CommPolicy, DomainPolicy, GoalMessage, GoalSet, OverridePolicy, PolicyError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimalError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("base policy already sends the goal message (agent `{agent}`, epoch {epoch})")]
    BaseSendsGoal { agent: String, epoch: usize },
    #[error("base policy depends on knowledge; the decision needs a knowledge-free base")]
    KnowledgeDependentBase,
    #[error(
        "communication reward of {0} after the decision epoch; the criterion assumes no further messages"
    )]
    PremiseViolated(f64),
    #[error("{points} decision points exceed the search budget of {budget}")]
    BudgetExceeded { points: usize, budget: usize },
}

/// The earliest epoch at which an agent's belief implies the goal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstKnowledgeEvent {
    pub t0: usize,
    pub agent: AgentId,
    #[serde(skip)]
    pub belief: BeliefState,
    pub probability: f64,
}

/// Δ split into its domain-reward and communication-cost parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaBreakdown {
    pub domain_gain: f64,
    pub comm_cost: f64,
    pub delta: f64,
}

/// Shared enumeration state for scoring many events under one base policy.
pub(crate) struct Analysis<'m> {
    pub model: &'m Model,
    pub reach: Reach,
    pub knowledge: KnowledgeMaps,
}

impl<'m> Analysis<'m> {
    pub fn new(
        model: &'m Model,
        domain: &dyn DomainPolicy,
        base: &dyn CommPolicy,
        sigma: &GoalMessage,
    ) -> Result<Self, OptimalError> {
        if base.needs_knowledge() {
            return Err(OptimalError::KnowledgeDependentBase);
        }
        let reach = reach_all(model, domain, base, DEFAULT_PRUNE_THRESHOLD)?;
        for nodes in &reach.epochs {
            for n in nodes {
                for (i, m) in n.messages.iter().enumerate() {
                    if sigma.is_goal_message(AgentId(i), *m) {
                        return Err(OptimalError::BaseSendsGoal {
                            agent: model.agent(AgentId(i)).name.clone(),
                            epoch: n.epoch,
                        });
                    }
                }
            }
        }
        let knowledge = reach.knowledge(model);
        Ok(Self {
            model,
            reach,
            knowledge,
        })
    }

    fn view(&self) -> KnowledgeView<'_> {
        KnowledgeView {
            interner: &self.reach.interner,
            maps: &self.knowledge,
        }
    }

    pub fn events(&self, goal: &GoalSet, sigma: &GoalMessage) -> Vec<FirstKnowledgeEvent> {
        let view = self.view();
        let mut found: IndexMap<(usize, usize, BeliefId), f64> = IndexMap::new();
        let mut verdict: std::collections::HashMap<BeliefId, bool> = Default::default();
        for (t, nodes) in self.reach.epochs.iter().enumerate() {
            for n in nodes {
                for (i, b) in n.beliefs.iter().enumerate() {
                    if sigma.for_agent(AgentId(i)).is_none() {
                        continue;
                    }
                    let first = *verdict.entry(*b).or_insert_with(|| {
                        first_believes(goal, &view, self.reach.belief(*b)).unwrap_or(false)
                    });
                    if first {
                        *found.entry((t, i, *b)).or_insert(0.0) += n.weight;
                    }
                }
            }
        }
        found
            .into_iter()
            .map(|((t0, i, b), probability)| FirstKnowledgeEvent {
                t0,
                agent: AgentId(i),
                belief: self.reach.belief(b).clone(),
                probability,
            })
            .collect()
    }

    /// The event's nodes at its epoch, renormalized.
    fn event_frontier(&self, ev: &FirstKnowledgeEvent) -> Result<Frontier, OptimalError> {
        let id = self
            .reach
            .interner
            .lookup(&ev.belief)
            .ok_or(EvalError::ZeroProbabilityEvent)?;
        let nodes = self
            .reach
            .epochs
            .get(ev.t0)
            .ok_or(EvalError::ZeroProbabilityEvent)?;
        let mut total = CompensatedSum::new();
        let mut frontier: IndexMap<NodeKey, f64> = IndexMap::new();
        for n in nodes.iter().filter(|n| n.beliefs[ev.agent.0] == id) {
            total.add(n.weight);
            frontier.insert(
                NodeKey {
                    state: n.state,
                    beliefs: n.beliefs.clone(),
                },
                n.weight,
            );
        }
        let total = total.value();
        if total <= 0.0 {
            return Err(EvalError::ZeroProbabilityEvent.into());
        }
        for w in frontier.values_mut() {
            *w /= total;
        }
        Ok(Frontier {
            epoch: ev.t0,
            nodes: frontier,
        })
    }

    /// Expected domain reward from `t0` on, and communication reward at
    /// `t0`, for the event's conditional distribution under `policy`.
    fn branch(
        &mut self,
        start: &Frontier,
        domain: &dyn DomainPolicy,
        policy: &dyn CommPolicy,
    ) -> Result<(f64, f64), OptimalError> {
        let interner = std::mem::replace(
            &mut self.reach.interner,
            crate::model::BeliefInterner::new(0),
        );
        let mut en = Enumerator::with_interner(self.model, interner, DEFAULT_PRUNE_THRESHOLD);
        let result = (|| {
            let mut memo = Memo::default();
            let mut domain_sum = CompensatedSum::new();
            let mut comm_now = CompensatedSum::new();
            let mut comm_later = CompensatedSum::new();
            let mut frontier = start.clone();
            let horizon = self.model.horizon();
            for t in start.epoch..=horizon {
                let out = en.step(
                    &frontier,
                    domain,
                    policy,
                    &mut memo,
                    None,
                    t < horizon,
                    &mut |node| {
                        domain_sum.add(node.weight * node.reward_domain);
                        if t == start.epoch {
                            comm_now.add(node.weight * node.reward_comm);
                        } else {
                            comm_later.add(node.weight * node.reward_comm);
                        }
                    },
                )?;
                frontier = out.next;
            }
            let later = comm_later.value();
            if later != 0.0 {
                return Err(OptimalError::PremiseViolated(later));
            }
            Ok((domain_sum.value(), comm_now.value()))
        })();
        self.reach.interner = en.interner;
        result
    }

    pub fn delta<B: CommPolicy + Clone>(
        &mut self,
        domain: &dyn DomainPolicy,
        base: &B,
        ev: &FirstKnowledgeEvent,
        sigma: &GoalMessage,
    ) -> Result<DeltaBreakdown, OptimalError> {
        let send = sigma
            .for_agent(ev.agent)
            .ok_or_else(|| PolicyError::UnknownMessage(sigma.label.clone()))?;
        let start = self.event_frontier(ev)?;
        let send_policy = OverridePolicy::new(base.clone()).with(ev.belief.clone(), Some(send));
        let null_policy = OverridePolicy::new(base.clone()).with(ev.belief.clone(), None);
        let (a_send, c_send) = self.branch(&start, domain, &send_policy)?;
        let (a_null, c_null) = self.branch(&start, domain, &null_policy)?;
        let domain_gain = a_send - a_null;
        let comm_cost = c_send - c_null;
        Ok(DeltaBreakdown {
            domain_gain,
            comm_cost,
            delta: domain_gain + comm_cost,
        })
    }
}

/// All first-knowledge events of agents able to send the goal message.
pub fn first_knowledge_events(
    model: &Model,
    domain: &dyn DomainPolicy,
    base: &dyn CommPolicy,
    goal: &GoalSet,
    sigma: &GoalMessage,
) -> Result<Vec<FirstKnowledgeEvent>, OptimalError> {
    Ok(Analysis::new(model, domain, base, sigma)?.events(goal, sigma))
}

/// Expected reward difference between sending and withholding the goal
/// message at one event.
pub fn delta<B: CommPolicy + Clone>(
    model: &Model,
    domain: &dyn DomainPolicy,
    base: &B,
    ev: &FirstKnowledgeEvent,
    sigma: &GoalMessage,
) -> Result<f64, OptimalError> {
    Ok(delta_breakdown(model, domain, base, ev, sigma)?.delta)
}

pub fn delta_breakdown<B: CommPolicy + Clone>(
    model: &Model,
    domain: &dyn DomainPolicy,
    base: &B,
    ev: &FirstKnowledgeEvent,
    sigma: &GoalMessage,
) -> Result<DeltaBreakdown, OptimalError> {
    Analysis::new(model, domain, base, sigma)?.delta(domain, base, ev, sigma)
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalDecision {
    pub event: FirstKnowledgeEvent,
    pub breakdown: DeltaBreakdown,
    pub send: bool,
}

pub struct LocalOptimum<B> {
    pub policy: OverridePolicy<B>,
    pub decisions: Vec<LocalDecision>,
}

/// The base policy, overridden to send the goal message at every
/// first-knowledge event whose Δ is non-negative.
pub fn locally_optimal_policy<B: CommPolicy + Clone>(
    model: &Model,
    domain: &dyn DomainPolicy,
    base: B,
    goal: &GoalSet,
    sigma: &GoalMessage,
) -> Result<LocalOptimum<B>, OptimalError> {
    let mut analysis = Analysis::new(model, domain, &base, sigma)?;
    let events = analysis.events(goal, sigma);
    let mut policy = OverridePolicy::new(base.clone());
    let mut decisions = Vec::with_capacity(events.len());
    for ev in events {
        let breakdown = analysis.delta(domain, &base, &ev, sigma)?;
        let send = breakdown.delta >= 0.0;
        if send {
            policy.set(ev.belief.clone(), sigma.for_agent(ev.agent));
        }
        decisions.push(LocalDecision {
            event: ev,
            breakdown,
            send,
        });
    }
    Ok(LocalOptimum { policy, decisions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use crate::helicopter::{Helicopter, HelicopterParams, ESCORT};
    use crate::policy::SilentPolicy;

    #[test]
    fn helicopter_events_follow_radar_position() {
        let h = Helicopter::new(HelicopterParams::cell(0.5, 0.3)).unwrap();
        let events =
            first_knowledge_events(&h.model, &h.domain, &SilentPolicy, &h.goal, &h.sigma).unwrap();
        assert_eq!(events.len(), 8);
        for (k, ev) in events.iter().enumerate() {
            assert_eq!(ev.t0, k + 2);
            assert_eq!(ev.agent, crate::helicopter::ESCORT);
            assert!((ev.probability - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_matches_difference_of_evaluations() {
        let h = Helicopter::new(HelicopterParams::cell(0.5, 0.3)).unwrap();
        let events =
            first_knowledge_events(&h.model, &h.domain, &SilentPolicy, &h.goal, &h.sigma).unwrap();
        let ev = &events[0];
        let d = delta(&h.model, &h.domain, &SilentPolicy, ev, &h.sigma).unwrap();
        let send = OverridePolicy::new(SilentPolicy).with(ev.belief.clone(), h.sigma.for_agent(ev.agent));
        let null = OverridePolicy::new(SilentPolicy).with(ev.belief.clone(), None);
        let vs = evaluate(&h.model, &h.domain, &send).unwrap().value;
        let vn = evaluate(&h.model, &h.domain, &null).unwrap().value;
        assert!((d - (vs - vn) / ev.probability).abs() < 1e-9);
    }

    #[test]
    fn base_sending_goal_is_rejected() {
        let h = Helicopter::new(HelicopterParams::cell(0.5, 0.3)).unwrap();
        let always = crate::policy::FnCommPolicy(|b: &BeliefState| {
            Some((b.owner() == ESCORT).then_some(crate::model::MessageId(0)))
        });
        assert!(matches!(
            Analysis::new(&h.model, &h.domain, &always, &h.sigma),
            Err(OptimalError::BaseSendsGoal { .. })
        ));
        assert!(matches!(
            Analysis::new(&h.model, &h.domain, &h.jennings(), &h.sigma),
            Err(OptimalError::KnowledgeDependentBase)
        ));
    }

    #[test]
    fn zero_observability_always_sends() {
        let h = Helicopter::new(HelicopterParams::cell(0.0, 0.3)).unwrap();
        let local =
            locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma).unwrap();
        assert!(local.decisions.iter().all(|d| d.send));
    }

    #[test]
    fn full_observability_never_sends_when_costly() {
        let h = Helicopter::new(HelicopterParams::cell(1.0, 0.1)).unwrap();
        let local =
            locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma).unwrap();
        assert!(local.decisions.iter().all(|d| !d.send));
        assert!(local
            .decisions
            .iter()
            .all(|d| (d.breakdown.delta + 0.1).abs() < 1e-12));
    }
}
