//! Exhaustive search over send/withhold assignments at a bounded set of
//! decision points.
//!
//! Decision points are the beliefs of goal-capable agents that imply the goal
//! and lie at most `window` epochs after that agent first believed it, as
//! reached under the base policy. Points that never share a trajectory are
//! independent, so each connected group is enumerated on its own and the
//! best assignments are combined.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::eval::{evaluate, EvalResult};
use crate::model::{AgentId, BeliefId, BeliefState, Model};
use crate::optimal::{Analysis, OptimalError};
use crate::policy::{believes, CommPolicy, DomainPolicy, GoalMessage, GoalSet, OverridePolicy};

pub const DEFAULT_WINDOW: usize = 2;
pub const DEFAULT_MAX_POINTS: usize = 20;
/// Values closer than this are treated as equal when choosing an assignment.
pub const VALUE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommSearchSpace {
    /// Epochs after first knowledge at which sending is still considered.
    pub window: usize,
    /// Largest group of interacting points enumerated exhaustively.
    pub max_points: usize,
}

impl Default for CommSearchSpace {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionPoint {
    pub epoch: usize,
    pub agent: AgentId,
    #[serde(skip)]
    pub belief: BeliefState,
    /// Epoch at which this history first implied the goal.
    pub knowledge_epoch: usize,
    pub probability: f64,
}

pub struct GlobalOptimum<B> {
    pub policy: OverridePolicy<B>,
    pub result: EvalResult,
    pub points: Vec<DecisionPoint>,
    /// Indices into `points`, one group per independent block.
    pub blocks: Vec<Vec<usize>>,
    /// Indices of points where the chosen policy sends.
    pub sends: Vec<usize>,
}

impl<B> GlobalOptimum<B> {
    pub fn value(&self) -> f64 {
        self.result.value
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Decision points and their grouping into independent blocks.
pub fn decision_points(
    model: &Model,
    domain: &dyn DomainPolicy,
    base: &dyn CommPolicy,
    goal: &GoalSet,
    sigma: &GoalMessage,
    window: usize,
) -> Result<(Vec<DecisionPoint>, Vec<Vec<usize>>), OptimalError> {
    let analysis = Analysis::new(model, domain, base, sigma)?;
    let view = crate::eval::KnowledgeView {
        interner: &analysis.reach.interner,
        maps: &analysis.knowledge,
    };
    let reach = &analysis.reach;
    // first-knowledge epoch of each pending belief's history, if it knows
    let mut known_since: HashMap<BeliefId, Option<usize>> = HashMap::new();
    let mut index: HashMap<BeliefId, usize> = HashMap::new();
    let mut points: Vec<DecisionPoint> = Vec::new();
    for (t, nodes) in reach.epochs.iter().enumerate() {
        for n in nodes {
            for (i, b) in n.beliefs.iter().enumerate() {
                if sigma.for_agent(AgentId(i)).is_none() {
                    continue;
                }
                let since = match known_since.get(b) {
                    Some(s) => *s,
                    None => {
                        let belief = reach.belief(*b);
                        let s = if believes(goal, &view, belief).unwrap_or(false) {
                            let prev = belief
                                .previous_pre()
                                .and_then(|p| reach.interner.lookup(&p))
                                .and_then(|p| known_since.get(&p).copied().flatten());
                            Some(prev.unwrap_or(t))
                        } else {
                            None
                        };
                        known_since.insert(*b, s);
                        s
                    }
                };
                let Some(k) = since else { continue };
                if t - k > window {
                    continue;
                }
                match index.get(b) {
                    Some(&p) => points[p].probability += n.weight,
                    None => {
                        index.insert(*b, points.len());
                        points.push(DecisionPoint {
                            epoch: t,
                            agent: AgentId(i),
                            belief: reach.belief(*b).clone(),
                            knowledge_epoch: k,
                            probability: n.weight,
                        });
                    }
                }
            }
        }
    }
    // Points sharing a trajectory interact. Every trajectory through a node
    // passes through the points that are prefixes of its beliefs.
    let mut uf = UnionFind((0..points.len()).collect());
    for nodes in &reach.epochs {
        for n in nodes {
            let mut on_path: Vec<usize> = Vec::new();
            for b in n.beliefs.iter() {
                let mut cur = Some(reach.belief(*b).clone());
                while let Some(belief) = cur {
                    if let Some(p) = reach
                        .interner
                        .lookup(&belief)
                        .and_then(|id| index.get(&id))
                    {
                        on_path.push(*p);
                    }
                    cur = belief.previous_pre();
                }
            }
            for w in on_path.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
    }
    let mut groups: indexmap::IndexMap<usize, Vec<usize>> = indexmap::IndexMap::new();
    for p in 0..points.len() {
        let r = uf.find(p);
        groups.entry(r).or_default().push(p);
    }
    Ok((points, groups.into_values().collect()))
}

fn policy_with<B: CommPolicy + Clone>(
    base: &B,
    points: &[DecisionPoint],
    sigma: &GoalMessage,
    sends: impl Iterator<Item = usize>,
) -> OverridePolicy<B> {
    let mut p = OverridePolicy::new(base.clone());
    for i in sends {
        p.set(points[i].belief.clone(), sigma.for_agent(points[i].agent));
    }
    p
}

/// Best communication policy within the window-restricted space.
///
/// Each block is enumerated in lexicographic assignment order (all-withhold
/// first); ties within [`VALUE_TIE`] go to fewer expected messages, then to
/// the earlier assignment.
pub fn globally_optimal_comm<B: CommPolicy + Clone>(
    model: &Model,
    domain: &dyn DomainPolicy,
    base: B,
    goal: &GoalSet,
    sigma: &GoalMessage,
    space: &CommSearchSpace,
) -> Result<GlobalOptimum<B>, OptimalError> {
    let (points, blocks) = decision_points(model, domain, &base, goal, sigma, space.window)?;
    if let Some(b) = blocks.iter().find(|b| b.len() > space.max_points) {
        return Err(OptimalError::BudgetExceeded {
            points: b.len(),
            budget: space.max_points,
        });
    }
    let mut sends = Vec::new();
    for block in &blocks {
        let n = block.len();
        let scored: Vec<(u64, f64, f64)> = (0..1u64 << n)
            .into_par_iter()
            .map(|mask| {
                let chosen = (0..n)
                    .filter(|k| mask >> (n - 1 - k) & 1 == 1)
                    .map(|k| block[k]);
                let p = policy_with(&base, &points, sigma, chosen);
                evaluate(model, domain, &p).map(|r| (mask, r.value, r.total_messages()))
            })
            .collect::<Result<_, _>>()?;
        let mut best = scored[0];
        for cand in &scored[1..] {
            let better = cand.1 > best.1 + VALUE_TIE
                || ((cand.1 - best.1).abs() <= VALUE_TIE && cand.2 < best.2 - VALUE_TIE);
            if better {
                best = *cand;
            }
        }
        sends.extend(
            (0..n)
                .filter(|k| best.0 >> (n - 1 - k) & 1 == 1)
                .map(|k| block[k]),
        );
    }
    sends.sort_unstable();
    let policy = policy_with(&base, &points, sigma, sends.iter().copied());
    let result = evaluate(model, domain, &policy)?;
    Ok(GlobalOptimum {
        policy,
        result,
        points,
        blocks,
        sends,
    })
}
