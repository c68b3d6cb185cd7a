use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commtdp::eval::evaluate;
use commtdp::experiment::{
    calibrate, report, run_sweep, write_sweep, CalibrationGrid, CalibrationTargets, SweepConfig,
    COMPARED, GLOBAL, LOCAL, POLICIES,
};
use commtdp::helicopter::{
    Helicopter, HelicopterParams, ScenarioPolicy, SteamCosts, SteamLevel, DEFAULT_CMT_LOW,
    DEFAULT_CMT_MEDIUM, DEFAULT_HORIZON, DEFAULT_REWARD,
};
use commtdp::model::{
    classify_communication, classify_observability, parse_model, print_model, validate, Model,
};
use commtdp::numeric::fmt_sig12;
use commtdp::optimal::{first_knowledge_events, locally_optimal_policy};
use commtdp::policy::{
    CommPolicy, DomainPolicy, FullCommPolicy, GoalMessage, GoalSet, JenningsPolicy,
    ReactivePolicy, SilentPolicy, SteamParams, SteamPolicy,
};
use commtdp::reductions::{collapse_free_comm, HashedPomdpPolicy, PomdpDomainPolicy};
use commtdp::rollout::rollout;
use commtdp::search::{globally_optimal_comm, CommSearchSpace, DEFAULT_MAX_POINTS, DEFAULT_WINDOW};

/// Exit status for a failed invariant or ordering check.
const INVARIANT: u8 = 1;
/// Exit status for bad input; clap uses the same code for usage errors.
const INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "commtdp", version, about = "Communicative multiagent team decision problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a model file.
    Validate { model: PathBuf },
    /// Exact expected reward of a policy pair.
    Evaluate {
        model: PathBuf,
        #[command(flatten)]
        policies: PolicyArgs,
        /// Also estimate by simulation with this many episodes.
        #[arg(long, default_value_t = 0)]
        rollout: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Locally optimal announcement of goal achievement.
    LocalOpt {
        model: PathBuf,
        #[command(flatten)]
        goal: GoalArgs,
        #[command(flatten)]
        domain: DomainArgs,
    },
    /// Exhaustive search over deferred announcements.
    GlobalOpt {
        model: PathBuf,
        #[command(flatten)]
        goal: GoalArgs,
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_POINTS)]
        max_points: usize,
    },
    /// Collapse a free-communication model into a single-agent model.
    Reduce {
        model: PathBuf,
        /// Where to write the reduced model (stdout if absent).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Pseudo-random policies used for the equivalence check.
        #[arg(long, default_value_t = 5)]
        checks: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Build one benchmark cell and compare every policy on it.
    Helicopter(HelicopterArgs),
    /// Run the full observability × cost grid.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a sweep directory and write plot data.
    Report { dir: PathBuf },
    /// Fit free benchmark constants to reference summary statistics.
    Calibrate {
        #[arg(long, default_value_t = 11)]
        grid_steps: usize,
        /// Write the fitted values as a sweep config.
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DomainArgs {
    /// Built-in domain policy (`helicopter`) or a TOML reactive policy file.
    #[arg(long, default_value = "helicopter")]
    domain: String,
}

#[derive(Args)]
struct GoalArgs {
    /// Goal as `Feature=value`.
    #[arg(long)]
    goal: String,
    /// Label of the achievement message.
    #[arg(long)]
    goal_message: String,
}

#[derive(Args)]
struct PolicyArgs {
    #[command(flatten)]
    domain: DomainArgs,
    /// silent, full, jennings or steam.
    #[arg(long, default_value = "silent")]
    comm: String,
    #[arg(long)]
    goal: Option<String>,
    #[arg(long)]
    goal_message: Option<String>,
    /// STEAM parameters `tau,c_mt,c_c`.
    #[arg(long)]
    steam: Option<String>,
}

#[derive(Args)]
struct HelicopterArgs {
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    rsigma: f64,
    #[arg(long, default_value_t = DEFAULT_REWARD)]
    rt: f64,
    #[arg(long, default_value_t = DEFAULT_REWARD)]
    re: f64,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    #[arg(long, default_value_t = DEFAULT_CMT_LOW)]
    steam_cmt_low: f64,
    #[arg(long, default_value_t = DEFAULT_CMT_MEDIUM)]
    steam_cmt_medium: f64,
    /// Write the generated model file here.
    #[arg(long)]
    emit_model: Option<PathBuf>,
    /// Skip the global search.
    #[arg(long)]
    no_global: bool,
}

struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(INPUT, e.to_string())
    }
}

fn load(path: &Path) -> Result<Model, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(INPUT, format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure(INPUT, format!("{}: {e}", path.display())))
}

fn domain_policy(model: &Model, args: &DomainArgs) -> Result<Box<dyn DomainPolicy>, Failure> {
    if args.domain == "helicopter" {
        return Ok(Box::new(ScenarioPolicy::new(model)?));
    }
    let text = fs::read_to_string(&args.domain).map_err(|e| Failure(INPUT, format!("{}: {e}", args.domain)))?;
    Ok(Box::new(ReactivePolicy::from_toml(model, &text)?))
}

fn goal(model: &Model, spec: &str, message: &str) -> Result<(GoalSet, GoalMessage), Failure> {
    let (f, v) = spec
        .split_once('=')
        .ok_or_else(|| Failure(INPUT, format!("goal `{spec}` is not Feature=value")))?;
    let g = GoalSet::feature_equals(model, f.trim(), v.trim())
        .ok_or_else(|| Failure(INPUT, format!("no feature value {spec}")))?;
    Ok((g, GoalMessage::resolve(model, message)?))
}

fn comm_policy(model: &Model, args: &PolicyArgs) -> Result<Box<dyn CommPolicy>, Failure> {
    let need_goal = || -> Result<(GoalSet, GoalMessage), Failure> {
        match (&args.goal, &args.goal_message) {
            (Some(g), Some(m)) => goal(model, g, m),
            _ => Err(Failure(INPUT, format!("--comm {} needs --goal and --goal-message", args.comm))),
        }
    };
    Ok(match args.comm.as_str() {
        "silent" => Box::new(SilentPolicy),
        "full" => Box::new(FullCommPolicy::new(model)?),
        "jennings" => {
            let (g, m) = need_goal()?;
            Box::new(JenningsPolicy::new(g, m))
        }
        "steam" => {
            let (g, m) = need_goal()?;
            let raw = args
                .steam
                .as_deref()
                .ok_or_else(|| Failure(INPUT, "--comm steam needs --steam tau,c_mt,c_c".into()))?;
            let xs: Vec<f64> = raw
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure(INPUT, format!("--steam: {e}")))?;
            let [tau, c_mt, c_c] = xs[..] else {
                return Err(Failure(INPUT, "--steam takes three numbers".into()));
            };
            Box::new(SteamPolicy::new(SteamParams::new(tau, c_mt, c_c)?, g, m))
        }
        other => return Err(Failure(INPUT, format!("unknown communication policy `{other}`"))),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { model } => {
            let m = load(&model)?;
            let r = validate(&m);
            println!("states: {}", m.state_count());
            println!("joint actions: {}", m.joint_action_count());
            println!("horizon: {}", m.horizon());
            println!("observability: {}", classify_observability(&m));
            println!("communication: {}", classify_communication(&m));
            if !r.is_ok() {
                for v in &r.violations {
                    println!("violation in {} at {}: {}", v.table, v.key, v.message);
                }
                return Err(Failure(INVARIANT, format!("{} violations", r.violations.len())));
            }
            println!("ok");
        }
        Command::Evaluate {
            model,
            policies,
            rollout: samples,
            seed,
        } => {
            let m = load(&model)?;
            let d = domain_policy(&m, &policies.domain)?;
            let c = comm_policy(&m, &policies)?;
            let r = evaluate(&m, d.as_ref(), c.as_ref())?;
            println!("value: {}", fmt_sig12(r.value));
            for (sym, n) in &r.expected_messages {
                println!("messages {sym}: {}", fmt_sig12(*n));
            }
            println!("nodes: {}", r.node_count);
            if r.pruned_mass > 0.0 {
                println!("pruned mass: {:e}", r.pruned_mass);
            }
            if samples > 0 {
                let est = rollout(&m, d.as_ref(), c.as_ref(), samples, seed)?;
                println!(
                    "rollout: {} ± {} ({} samples)",
                    fmt_sig12(est.mean),
                    fmt_sig12(est.std_error),
                    est.samples
                );
            }
        }
        Command::LocalOpt { model, goal: g, domain } => {
            let m = load(&model)?;
            let d = domain_policy(&m, &domain)?;
            let (gs, sigma) = goal(&m, &g.goal, &g.goal_message)?;
            let local = locally_optimal_policy(&m, d.as_ref(), SilentPolicy, &gs, &sigma)?;
            println!("epoch agent probability domain_gain comm_cost delta send");
            for dec in &local.decisions {
                println!(
                    "{} {} {} {} {} {} {}",
                    dec.event.t0,
                    m.agent(dec.event.agent).name,
                    fmt_sig12(dec.event.probability),
                    fmt_sig12(dec.breakdown.domain_gain),
                    fmt_sig12(dec.breakdown.comm_cost),
                    fmt_sig12(dec.breakdown.delta),
                    dec.send
                );
            }
            let r = evaluate(&m, d.as_ref(), &local.policy)?;
            println!("value: {}", fmt_sig12(r.value));
            println!("expected messages: {}", fmt_sig12(r.total_messages()));
        }
        Command::GlobalOpt {
            model,
            goal: g,
            domain,
            window,
            max_points,
        } => {
            let m = load(&model)?;
            let d = domain_policy(&m, &domain)?;
            let (gs, sigma) = goal(&m, &g.goal, &g.goal_message)?;
            let space = CommSearchSpace { window, max_points };
            let res = globally_optimal_comm(&m, d.as_ref(), SilentPolicy, &gs, &sigma, &space)?;
            println!(
                "decision points: {} in {} blocks",
                res.points.len(),
                res.blocks.len()
            );
            for i in &res.sends {
                let p = &res.points[*i];
                println!(
                    "send at epoch {} (first knowledge {}) with probability {}",
                    p.epoch,
                    p.knowledge_epoch,
                    fmt_sig12(p.probability)
                );
            }
            let events = first_knowledge_events(&m, d.as_ref(), &SilentPolicy, &gs, &sigma)?;
            let local = locally_optimal_policy(&m, d.as_ref(), SilentPolicy, &gs, &sigma)?;
            let lv = evaluate(&m, d.as_ref(), &local.policy)?.value;
            println!("first-knowledge events: {}", events.len());
            println!("value: {}", fmt_sig12(res.value()));
            println!("local value: {}", fmt_sig12(lv));
            println!("expected messages: {}", fmt_sig12(res.result.total_messages()));
            if res.value() < lv - 1e-9 {
                return Err(Failure(INVARIANT, "global value below local value".into()));
            }
        }
        Command::Reduce {
            model,
            output,
            checks,
            seed,
        } => {
            let m = load(&model)?;
            let c = collapse_free_comm(&m)?;
            let single = c.pomdp.to_model()?;
            let text = print_model(&single)?;
            match &output {
                Some(p) => fs::write(p, &text).map_err(|e| Failure(INPUT, format!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
            let full = c.full_comm();
            let mut worst: f64 = 0.0;
            for k in 0..checks {
                let p = HashedPomdpPolicy {
                    seed: seed.wrapping_add(k as u64),
                    actions: c.pomdp.actions.len(),
                };
                let direct = c.pomdp.evaluate(&p)?;
                let team = evaluate(&c.model, &c.domain_policy(p), &full)?.value;
                let flat = evaluate(&single, &PomdpDomainPolicy(p), &SilentPolicy)?.value;
                worst = worst.max((direct - team).abs()).max((direct - flat).abs());
                eprintln!(
                    "check {k}: pomdp {} team {} reduced {}",
                    fmt_sig12(direct),
                    fmt_sig12(team),
                    fmt_sig12(flat)
                );
            }
            eprintln!(
                "reduced: {} actions, {} observations; max value difference {:e}",
                c.pomdp.actions.len(),
                c.pomdp.observations.len(),
                worst
            );
            if worst > 1e-9 {
                return Err(Failure(INVARIANT, "reduction changed policy values".into()));
            }
        }
        Command::Helicopter(a) => {
            let params = HelicopterParams {
                lambda: a.lambda,
                r_sigma: a.rsigma,
                r_e: a.re,
                r_t: a.rt,
                horizon: a.horizon,
            };
            let h = Helicopter::new(params)?;
            if let Some(p) = &a.emit_model {
                fs::write(p, print_model(&h.model)?).map_err(|e| Failure(INPUT, format!("{}: {e}", p.display())))?;
            }
            let config = SweepConfig {
                r_e: a.re,
                r_t: a.rt,
                horizon: a.horizon,
                steam_cmt_low: a.steam_cmt_low,
                steam_cmt_medium: a.steam_cmt_medium,
                policies: POLICIES
                    .iter()
                    .filter(|p| !(a.no_global && **p == GLOBAL))
                    .map(|p| p.to_string())
                    .collect(),
                ..SweepConfig::default()
            };
            let cell = commtdp::experiment::run_cell(&config, a.lambda, a.rsigma)?;
            let costs = SteamCosts {
                low: a.steam_cmt_low,
                medium: a.steam_cmt_medium,
            };
            for level in [SteamLevel::Low, SteamLevel::Medium] {
                let s = h.steam(level, costs);
                println!("steam {level:?}: communicates = {}", s.communicates());
            }
            println!("{:<14} {:>14} {:>14}", "policy", "value", "messages");
            for p in POLICIES {
                match cell.outcome(p) {
                    Some(o) => println!("{:<14} {:>14} {:>14}", p, fmt_sig12(o.value), fmt_sig12(o.messages)),
                    None => println!("{:<14} {:>14}", p, "-"),
                }
            }
            if let Some(e) = &cell.global_error {
                println!("global search: {e}");
            }
            let local = cell.value(LOCAL).expect("local is always computed");
            let mut bad = COMPARED
                .iter()
                .filter(|p| cell.value(p).is_some_and(|v| v > local + 1e-9))
                .count();
            bad += cell.value(GLOBAL).is_some_and(|g| g < local - 1e-9) as usize;
            if bad > 0 {
                return Err(Failure(INVARIANT, format!("{bad} ordering violations")));
            }
        }
        Command::Sweep { config, out } => {
            let cfg = match &config {
                Some(p) => SweepConfig::from_toml(
                    &fs::read_to_string(p).map_err(|e| Failure(INPUT, format!("{}: {e}", p.display())))?,
                )?,
                None => SweepConfig::default(),
            };
            let sweep = run_sweep(&cfg)?;
            let summary = write_sweep(&sweep, &out)?;
            println!("{} cells in {:.1} s -> {}", sweep.cells.len(), sweep.seconds, out.display());
            if !summary.violations.is_empty() {
                return Err(Failure(
                    INVARIANT,
                    format!("{} ordering violations; see report", summary.violations.len()),
                ));
            }
        }
        Command::Report { dir } => {
            let r = report(&dir)?;
            print!("{}", r.text);
            if !r.summary.violations.is_empty() {
                return Err(Failure(INVARIANT, "ordering violations".into()));
            }
        }
        Command::Calibrate {
            grid_steps,
            write_config,
        } => {
            let c = calibrate(&CalibrationGrid::default(), &CalibrationTargets::default(), grid_steps)?;
            println!("r_t = r_e = {}", c.r_t);
            println!("horizon = {}", c.horizon);
            println!("steam c_mt low = {}", c.c_mt_low);
            println!("steam c_mt medium = {}", c.c_mt_medium);
            println!("loss = {:.6}", c.loss);
            for (k, v) in &c.residuals {
                println!("residual {k} = {v:+.4}");
            }
            if let Some(p) = write_config {
                let cfg = SweepConfig {
                    r_e: c.r_t,
                    r_t: c.r_t,
                    horizon: c.horizon,
                    steam_cmt_low: c.c_mt_low,
                    steam_cmt_medium: c.c_mt_medium,
                    grid_steps,
                    ..SweepConfig::default()
                };
                let text = toml::to_string(&cfg)?;
                fs::write(&p, text).map_err(|e| Failure(INPUT, format!("{}: {e}", p.display())))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
