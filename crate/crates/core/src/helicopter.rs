//! The escort/transport helicopter benchmark.
//!
//! An escort and a transport fly from position 0 to a destination past a
//! radar at an unknown position 1..8. The escort destroys the radar when it
//! reaches it; the transport must fly slowly (nap-of-the-earth) until it
//! learns the radar is gone, either by seeing it or from the escort's `clear`
//! message.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::format::{AgentDecl, Factor, FormatError, ModelSpec};
use crate::model::{ActionId, AgentId, BeliefState, Feature, Model, ObservationId};
use crate::policy::{DomainPolicy, GoalMessage, GoalSet, PolicyError, SteamParams};

pub const ESCORT: AgentId = AgentId(0);
pub const TRANSPORT: AgentId = AgentId(1);
pub const GOAL_MESSAGE: &str = "clear";
pub const DEST: &str = "Dest";
pub const DESTROYED: &str = "Destroyed";

/// Calibrated miscoordination costs for the two STEAM settings.
pub const DEFAULT_CMT_LOW: f64 = 0.05;
pub const DEFAULT_CMT_MEDIUM: f64 = 3.05;
pub const DEFAULT_REWARD: f64 = 0.1;
/// Calibrated alongside the STEAM costs.
pub const DEFAULT_HORIZON: usize = 23;
/// Last epoch of nap-of-the-earth flight is 19; arrival at 20.
pub const MIN_HORIZON: usize = 20;

#[derive(Debug, Error)]
pub enum HelicopterError {
    #[error("invalid helicopter parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelicopterParams {
    /// Observability of the radar's destruction to the transport.
    pub lambda: f64,
    /// Cost of the `clear` message.
    pub r_sigma: f64,
    /// Per-epoch reward for the escort at the destination.
    pub r_e: f64,
    /// Per-epoch reward for the transport at the destination.
    pub r_t: f64,
    pub horizon: usize,
}

impl Default for HelicopterParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            r_sigma: 0.0,
            r_e: DEFAULT_REWARD,
            r_t: DEFAULT_REWARD,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl HelicopterParams {
    pub fn cell(lambda: f64, r_sigma: f64) -> Self {
        Self {
            lambda,
            r_sigma,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), HelicopterError> {
        let bad = |m: String| Err(HelicopterError::InvalidParams(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda = {} outside [0, 1]", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.r_sigma) {
            return bad(format!("r_sigma = {} outside [0, 1]", self.r_sigma));
        }
        if !(self.r_e > 0.0 && self.r_t > 0.0) {
            return bad("destination rewards must be positive".into());
        }
        if self.horizon < MIN_HORIZON {
            return bad(format!("horizon {} is below {MIN_HORIZON}", self.horizon));
        }
        Ok(())
    }
}

fn escort_positions() -> Vec<String> {
    (0..=9).map(|k| k.to_string()).chain([DEST.to_string()]).collect()
}

fn transport_positions() -> Vec<String> {
    (0..20)
        .map(half_label)
        .chain([DEST.to_string(), DESTROYED.to_string()])
        .collect()
}

/// Label of position `k / 2`.
fn half_label(k: usize) -> String {
    if k.is_multiple_of(2) {
        (k / 2).to_string()
    } else {
        format!("{}.5", k / 2)
    }
}

fn radar_positions() -> Vec<String> {
    (1..=8).map(|k| k.to_string()).chain([DESTROYED.to_string()]).collect()
}

/// Probability that the transport sees the destruction, with the radar's
/// former position recovered as one step behind the escort.
pub fn transport_sighting_probability(lambda: f64, radar: f64, transport: f64) -> f64 {
    (lambda * (-(radar - transport) * (1.0 - lambda)).exp()).clamp(0.0, 1.0)
}

/// The factored model description.
pub fn helicopter_spec(p: &HelicopterParams) -> Result<ModelSpec, HelicopterError> {
    p.check()?;
    let xe = escort_positions();
    let xt = transport_positions();
    let features = vec![
        Feature {
            name: "XiE".into(),
            values: xe.clone(),
        },
        Feature {
            name: "XiT".into(),
            values: xt.clone(),
        },
        Feature {
            name: "XiR".into(),
            values: radar_positions(),
        },
    ];
    let agents = vec![
        AgentDecl {
            name: "Escort".into(),
            actions: vec!["fly".into(), "destroy".into(), "wait".into()],
            messages: vec![GOAL_MESSAGE.into()],
            observations: vec![],
        },
        AgentDecl {
            name: "Transport".into(),
            actions: vec!["fly-NOE".into(), "fly-normal".into(), "wait".into()],
            messages: vec![],
            observations: vec![],
        },
    ];

    let mut pe = Factor::new(&["XiE", "Escort"], &["XiE"]);
    pe.row(&[DEST, "."], &[DEST], 1.0);
    for k in 0..9 {
        pe.row(&[&k.to_string(), "fly,destroy"], &[&(k + 1).to_string()], 1.0);
    }
    pe.row(&["9", "fly,destroy"], &[DEST], 1.0);
    pe.row(&[".", "wait"], &["."], 1.0);

    let mut pt = Factor::new(&["XiT", "XiR", "Transport"], &["XiT"]);
    pt.row(&[DEST, ".", "."], &[DEST], 1.0);
    pt.row(&[DESTROYED, ".", "."], &[DESTROYED], 1.0);
    for k in 0..19 {
        pt.row(&[&half_label(k), ".", "fly-NOE"], &[&half_label(k + 1)], 1.0);
    }
    pt.row(&["9.5", ".", "fly-NOE"], &[DEST], 1.0);
    for k in 0..18 {
        pt.row(&[&half_label(k), DESTROYED, "fly-normal"], &[&half_label(k + 2)], 1.0);
    }
    pt.row(&["9,9.5", DESTROYED, "fly-normal"], &[DEST], 1.0);
    pt.row(&[".", &format!("!{DESTROYED}"), "fly-normal"], &[DESTROYED], 1.0);
    pt.row(&[".", ".", "wait"], &["."], 1.0);

    let mut pr = Factor::new(&["XiE", "XiR", "Escort"], &["XiR"]);
    pr.row(&[".", "@XiE", "destroy"], &[DESTROYED], 1.0);
    pr.row(&[".", ".", "!destroy"], &["."], 1.0);
    pr.row(&[".", "!@XiE", "."], &["."], 1.0);

    let obs_label = |r: &str| format!("{{XiE}}/{{XiT}}/{r}");
    let mut oe = Factor::new(&["XiE", "XiT", "XiR", "Escort"], &["Escort"]);
    oe.row(&[".", ".", DESTROYED, "destroy"], &[&obs_label("destroyed")], 1.0);
    oe.row(&[".", ".", DESTROYED, "!destroy"], &[&obs_label("null")], 1.0);
    oe.row(&[".", ".", "@XiE", "."], &[&obs_label("present")], 1.0);
    oe.row(&[".", ".", "!@XiE", "."], &[&obs_label("null")], 1.0);

    let mut ot = Factor::new(&["XiE", "XiT", "XiR", "Escort"], &["Transport"]);
    for (ei, e) in xe.iter().enumerate() {
        // the escort moved one step past the radar it destroyed
        let radar = ei as f64 - 1.0;
        for (ti, t) in xt.iter().enumerate().take(20) {
            let q = transport_sighting_probability(p.lambda, radar, ti as f64 / 2.0);
            let pattern = [e.as_str(), t.as_str(), DESTROYED, "destroy"];
            ot.row(&pattern, &[&obs_label("destroyed")], q);
            ot.row(&pattern, &[&obs_label("null")], 1.0 - q);
        }
    }
    ot.row(&[".", ".", ".", "."], &[&obs_label("null")], 1.0);

    let mut rd = Factor::new(&["XiE", "XiT"], &[]);
    let not_dest = format!("!{DEST}");
    rd.row(&[&not_dest, &not_dest], &[], 0.0);
    rd.row(&[&not_dest, DEST], &[], p.r_t);
    rd.row(&[DEST, &not_dest], &[], p.r_e);
    rd.row(&[DEST, DEST], &[], p.r_e + p.r_t);

    let mut rc = Factor::new(&["Escort"], &[]);
    rc.row(&[GOAL_MESSAGE], &[], -p.r_sigma);

    let mut ie = Factor::new(&[], &["XiE"]);
    ie.row(&[], &["0"], 1.0);
    let mut it = Factor::new(&[], &["XiT"]);
    it.row(&[], &["0"], 1.0);
    let mut ir = Factor::new(&[], &["XiR"]);
    for k in 1..=8 {
        ir.row(&[], &[&k.to_string()], 0.125);
    }

    Ok(ModelSpec {
        features,
        agents,
        transition: vec![pe, pt, pr],
        observation: vec![oe, ot],
        reward_domain: vec![rd],
        reward_comm: vec![rc],
        initial: vec![ie, it, ir],
        horizon: p.horizon,
    })
}

pub fn build_helicopter(p: &HelicopterParams) -> Result<Model, HelicopterError> {
    Ok(helicopter_spec(p)?.compile()?)
}

/// Radar component of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadarSighting {
    Present,
    Destroyed,
    Nothing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedObservation {
    pub escort: String,
    pub transport: String,
    pub radar: RadarSighting,
}

/// Splits `"<escort>/<transport>/<radar>"` labels.
pub fn decode_observation(label: &str) -> Option<DecodedObservation> {
    let mut parts = label.split('/');
    let escort = parts.next()?.to_string();
    let transport = parts.next()?.to_string();
    let radar = match parts.next()? {
        "present" => RadarSighting::Present,
        "destroyed" => RadarSighting::Destroyed,
        "null" => RadarSighting::Nothing,
        _ => return None,
    };
    Some(DecodedObservation {
        escort,
        transport,
        radar,
    })
}

/// Fixed domain-level behaviour of both helicopters.
#[derive(Debug, Clone)]
pub struct ScenarioPolicy {
    decoded: [Vec<DecodedObservation>; 2],
    clear: crate::model::MessageId,
}

const FLY: ActionId = ActionId(0);
const DESTROY: ActionId = ActionId(1);
const WAIT: ActionId = ActionId(2);
const FLY_NOE: ActionId = ActionId(0);
const FLY_NORMAL: ActionId = ActionId(1);

impl ScenarioPolicy {
    pub fn new(model: &Model) -> Result<Self, HelicopterError> {
        let decode = |agent: AgentId| {
            model
                .agent(agent)
                .observations
                .iter()
                .map(|o| {
                    decode_observation(o).ok_or_else(|| {
                        HelicopterError::InvalidParams(format!("unexpected observation `{o}`"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let clear = model
            .message_id(ESCORT, GOAL_MESSAGE)
            .ok_or_else(|| PolicyError::UnknownMessage(GOAL_MESSAGE.into()))?;
        Ok(Self {
            decoded: [decode(ESCORT)?, decode(TRANSPORT)?],
            clear,
        })
    }

    fn obs(&self, agent: AgentId, o: ObservationId) -> &DecodedObservation {
        &self.decoded[agent.0][o.0 as usize]
    }

    /// Whether the transport's history shows the radar is gone.
    pub fn transport_knows(&self, b: &BeliefState) -> bool {
        b.history().iter().any(|e| {
            self.obs(TRANSPORT, e.observation).radar == RadarSighting::Destroyed
                || e
                    .messages
                    .as_ref()
                    .is_some_and(|m| m.0[ESCORT.0] == Some(self.clear))
        })
    }
}

impl DomainPolicy for ScenarioPolicy {
    fn action(&self, b: &BeliefState) -> Option<ActionId> {
        let last = self.obs(b.owner(), b.latest_observation()?);
        if b.owner() == ESCORT {
            Some(if last.escort == DEST {
                WAIT
            } else if last.radar == RadarSighting::Present {
                DESTROY
            } else {
                FLY
            })
        } else if last.transport == DEST || last.transport == DESTROYED {
            Some(WAIT)
        } else if self.transport_knows(b) {
            Some(FLY_NORMAL)
        } else {
            Some(FLY_NOE)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteamLevel {
    Low,
    Medium,
}

impl std::str::FromStr for SteamLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            other => Err(format!("unknown STEAM level `{other}`")),
        }
    }
}

/// Miscoordination costs used for the two STEAM settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteamCosts {
    pub low: f64,
    pub medium: f64,
}

impl Default for SteamCosts {
    fn default() -> Self {
        Self {
            low: DEFAULT_CMT_LOW,
            medium: DEFAULT_CMT_MEDIUM,
        }
    }
}

/// Maps the domain parameters onto STEAM's: τ = 1 − λ, C_c = r_Σ.
pub fn steam_params_for(
    lambda: f64,
    r_sigma: f64,
    level: SteamLevel,
    costs: SteamCosts,
) -> Result<SteamParams, PolicyError> {
    let c_mt = match level {
        SteamLevel::Low => costs.low,
        SteamLevel::Medium => costs.medium,
    };
    SteamParams::new(1.0 - lambda, c_mt, r_sigma)
}

/// A built benchmark instance with its goal and fixed domain policy.
#[derive(Debug, Clone)]
pub struct Helicopter {
    pub params: HelicopterParams,
    pub model: Model,
    pub goal: GoalSet,
    pub sigma: GoalMessage,
    pub domain: ScenarioPolicy,
}

impl Helicopter {
    pub fn new(params: HelicopterParams) -> Result<Self, HelicopterError> {
        let model = build_helicopter(&params)?;
        let goal = GoalSet::feature_equals(&model, "XiR", DESTROYED)
            .expect("radar feature present");
        let sigma = GoalMessage::resolve(&model, GOAL_MESSAGE)?;
        let domain = ScenarioPolicy::new(&model)?;
        Ok(Self {
            params,
            model,
            goal,
            sigma,
            domain,
        })
    }

    pub fn jennings(&self) -> crate::policy::JenningsPolicy {
        crate::policy::JenningsPolicy::new(self.goal.clone(), self.sigma.clone())
    }

    pub fn steam(&self, level: SteamLevel, costs: SteamCosts) -> crate::policy::SteamPolicy {
        let params = steam_params_for(self.params.lambda, self.params.r_sigma, level, costs)
            .expect("grid parameters are in range");
        crate::policy::SteamPolicy::new(params, self.goal.clone(), self.sigma.clone())
    }
}
