//! Monte Carlo simulation, used as a statistical cross-check of [`evaluate`].
//!
//! [`evaluate`]: crate::eval::evaluate

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eval::{reach_all, EvalError, KnowledgeMaps, KnowledgeView, DEFAULT_PRUNE_THRESHOLD};
use crate::model::{
    ActionId, AgentId, BeliefId, BeliefInterner, JointAction, JointMessage, Message, Model,
    StateId,
};
use crate::policy::{CommContext, CommPolicy, DomainPolicy, Knowledge};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloutEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl RolloutEstimate {
    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error + 1e-12
    }
}

fn sample<T: Copy>(rng: &mut ChaCha8Rng, items: impl Iterator<Item = (T, f64)>) -> Option<T> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (x, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(x);
        if u < acc {
            return Some(x);
        }
    }
    last
}

/// Mean return of `n` simulated episodes, reproducible for a given seed.
///
/// Knowledge-dependent communication policies get their consistent-state
/// sets from one exact enumeration pass before sampling starts.
pub fn rollout(
    model: &Model,
    domain: &dyn DomainPolicy,
    comm: &dyn CommPolicy,
    n: usize,
    seed: u64,
) -> Result<RolloutEstimate, EvalError> {
    if n == 0 {
        return Err(EvalError::NoSamples);
    }
    let (mut interner, knowledge): (BeliefInterner, Option<KnowledgeMaps>) =
        if comm.needs_knowledge() {
            let r = reach_all(model, domain, comm, DEFAULT_PRUNE_THRESHOLD)?;
            let k = r.knowledge(model);
            (r.interner, Some(k))
        } else {
            (BeliefInterner::new(model.agent_count()), None)
        };
    let agents = model.agent_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut msg_memo: HashMap<BeliefId, Message> = HashMap::new();
    let mut act_memo: HashMap<BeliefId, ActionId> = HashMap::new();
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n {
        let mut state: StateId = sample(&mut rng, model.initial().iter().copied())
            .expect("initial distribution has support");
        let mut prev: Option<JointAction> = None;
        let mut beliefs: Vec<BeliefId> = (0..agents).map(|i| interner.root(AgentId(i))).collect();
        let mut total = 0.0;
        for t in 0..=model.horizon() {
            let outcomes = model.joint_observations(state, prev);
            let obs = sample(
                &mut rng,
                outcomes.iter().enumerate().map(|(i, (_, p))| (i, *p)),
            )
            .expect("observation row has support");
            for (b, &o) in beliefs.iter_mut().zip(outcomes[obs].0.iter()) {
                *b = interner.pre(*b, o).expect("complete belief");
            }
            let mut messages = Vec::with_capacity(agents);
            for (i, b) in beliefs.iter().enumerate() {
                let m = match msg_memo.get(b) {
                    Some(m) => *m,
                    None => {
                        let belief = interner.get(*b);
                        let view = knowledge.as_ref().map(|maps| KnowledgeView {
                            interner: &interner,
                            maps,
                        });
                        let ctx = CommContext {
                            knowledge: view.as_ref().map(|v| v as &dyn Knowledge),
                        };
                        let m = comm.message(belief, &ctx).ok_or_else(|| {
                            EvalError::PolicyUndefined {
                                kind: "communication",
                                agent: model.agent(AgentId(i)).name.clone(),
                                epoch: t,
                                belief: model.describe_belief(belief),
                            }
                        })?;
                        msg_memo.insert(*b, m);
                        m
                    }
                };
                messages.push(m);
            }
            let joint = JointMessage::from(messages.clone());
            let mut actions = Vec::with_capacity(agents);
            for (i, b) in beliefs.iter_mut().enumerate() {
                *b = interner.post(*b, &joint).expect("pending belief");
                let a = match act_memo.get(b) {
                    Some(a) => *a,
                    None => {
                        let belief = interner.get(*b);
                        let a = domain.action(belief).ok_or_else(|| EvalError::PolicyUndefined {
                            kind: "domain",
                            agent: model.agent(AgentId(i)).name.clone(),
                            epoch: t,
                            belief: model.describe_belief(belief),
                        })?;
                        act_memo.insert(*b, a);
                        a
                    }
                };
                actions.push(a);
            }
            let a = model.joint_action(&actions);
            total += model.reward(state, a, &messages);
            if t < model.horizon() {
                state = sample(&mut rng, model.transitions(state, a).iter().copied())
                    .expect("transition row has support");
                prev = Some(a);
            }
        }
        // Welford update
        let delta = total - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (total - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    Ok(RolloutEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate, tests::coin};
    use crate::model::BeliefState;
    use crate::policy::{FnDomainPolicy, SilentPolicy};

    fn follow() -> impl DomainPolicy {
        FnDomainPolicy(|b: &BeliefState| b.latest_observation().map(|o| ActionId(o.0 as u16)))
    }

    #[test]
    fn deterministic_model_matches_exactly() {
        // perfect sensing makes every episode return the same total
        let m = coin(1.0, 3);
        let est = rollout(&m, &follow(), &SilentPolicy, 200, 7).unwrap();
        let exact = evaluate(&m, &follow(), &SilentPolicy).unwrap().value;
        assert_eq!(est.mean, exact);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn same_seed_same_estimate() {
        let m = coin(0.6, 4);
        let a = rollout(&m, &follow(), &SilentPolicy, 1000, 42).unwrap();
        let b = rollout(&m, &follow(), &SilentPolicy, 1000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn agrees_with_exact_value() {
        let m = coin(0.6, 4);
        let est = rollout(&m, &follow(), &SilentPolicy, 20000, 3).unwrap();
        let exact = evaluate(&m, &follow(), &SilentPolicy).unwrap().value;
        assert!(est.agrees_with(exact, 4.0), "{est:?} vs {exact}");
    }

    #[test]
    fn zero_samples_rejected() {
        let m = coin(0.6, 1);
        assert_eq!(
            rollout(&m, &follow(), &SilentPolicy, 0, 1).unwrap_err(),
            EvalError::NoSamples
        );
    }
}
