//! Finite-horizon communicative multiagent team decision problems.

pub mod eval;
pub mod experiment;
pub mod helicopter;
pub mod model;
pub mod numeric;
pub mod optimal;
pub mod policy;
pub mod reductions;
pub mod rollout;
pub mod search;
