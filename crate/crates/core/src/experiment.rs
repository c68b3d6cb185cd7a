//! The helicopter sweep: every policy on an observability × message-cost
//! grid, summary statistics, plot data and a calibration search.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{evaluate, EvalError, EvalResult};
use crate::helicopter::{
    Helicopter, HelicopterError, HelicopterParams, SteamCosts, SteamLevel, DEFAULT_CMT_LOW,
    DEFAULT_CMT_MEDIUM, DEFAULT_HORIZON, DEFAULT_REWARD,
};
use crate::numeric::{fmt_sig12, CompensatedSum};
use crate::optimal::{locally_optimal_policy, OptimalError};
use crate::policy::SilentPolicy;
use crate::rollout::rollout;
use crate::search::{globally_optimal_comm, CommSearchSpace, DEFAULT_MAX_POINTS, DEFAULT_WINDOW};

pub const SILENT: &str = "silent";
pub const JENNINGS: &str = "jennings";
pub const STEAM_LOW: &str = "steam:low";
pub const STEAM_MEDIUM: &str = "steam:medium";
pub const LOCAL: &str = "local-opt";
pub const GLOBAL: &str = "global-opt";
/// Column order of every per-policy table.
pub const POLICIES: [&str; 6] = [SILENT, JENNINGS, STEAM_LOW, STEAM_MEDIUM, LOCAL, GLOBAL];
/// Policies whose suboptimality is measured against the local optimum.
pub const COMPARED: [&str; 4] = [SILENT, JENNINGS, STEAM_LOW, STEAM_MEDIUM];
/// Slack for the ordering checks; values come from different enumerations.
pub const ORDER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Helicopter(#[from] HelicopterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Optimal(#[from] OptimalError),
    #[error("config: {0}")]
    Config(String),
    #[error("missing input file {0}")]
    MissingInput(PathBuf),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub r_e: f64,
    pub r_t: f64,
    pub horizon: usize,
    pub steam_cmt_low: f64,
    pub steam_cmt_medium: f64,
    /// Points per axis; 11 gives the 0.0, 0.1, …, 1.0 grid.
    pub grid_steps: usize,
    /// Policies to evaluate, from [`POLICIES`]. The local optimum is always
    /// computed since suboptimality is measured against it.
    pub policies: Vec<String>,
    pub window: usize,
    pub max_points: usize,
    /// Rollout samples per cell for the local policy; 0 disables.
    pub rollout_samples: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            r_e: DEFAULT_REWARD,
            r_t: DEFAULT_REWARD,
            horizon: DEFAULT_HORIZON,
            steam_cmt_low: DEFAULT_CMT_LOW,
            steam_cmt_medium: DEFAULT_CMT_MEDIUM,
            grid_steps: 11,
            policies: POLICIES.iter().map(|p| p.to_string()).collect(),
            window: DEFAULT_WINDOW,
            max_points: DEFAULT_MAX_POINTS,
            rollout_samples: 0,
            seed: 1,
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let c: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        if c.grid_steps < 2 {
            return Err(ExperimentError::Config("grid_steps must be at least 2".into()));
        }
        if let Some(p) = c.policies.iter().find(|p| !POLICIES.contains(&p.as_str())) {
            return Err(ExperimentError::Config(format!("unknown policy `{p}`")));
        }
        Ok(c)
    }

    pub fn includes(&self, policy: &str) -> bool {
        policy == LOCAL || self.policies.iter().any(|p| p == policy)
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_steps - 1;
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    pub fn params(&self, lambda: f64, r_sigma: f64) -> HelicopterParams {
        HelicopterParams {
            lambda,
            r_sigma,
            r_e: self.r_e,
            r_t: self.r_t,
            horizon: self.horizon,
        }
    }

    pub fn steam_costs(&self) -> SteamCosts {
        SteamCosts {
            low: self.steam_cmt_low,
            medium: self.steam_cmt_medium,
        }
    }

    pub fn search_space(&self) -> CommSearchSpace {
        CommSearchSpace {
            window: self.window,
            max_points: self.max_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub value: f64,
    pub messages: f64,
}

impl From<&EvalResult> for Outcome {
    fn from(r: &EvalResult) -> Self {
        Self {
            value: r.value,
            messages: r.total_messages(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub lambda: f64,
    pub r_sigma: f64,
    /// Indexed like [`POLICIES`]; the global entry is absent when the search
    /// is disabled or failed.
    pub outcomes: Vec<Option<Outcome>>,
    pub global_error: Option<String>,
    /// Probability that the global policy sends after the epoch of first
    /// knowledge.
    pub deferred_sends: f64,
    pub rollout: Option<(f64, f64)>,
    pub local_seconds: f64,
    pub global_seconds: f64,
}

impl CellResult {
    pub fn outcome(&self, policy: &str) -> Option<Outcome> {
        let k = POLICIES.iter().position(|p| *p == policy)?;
        self.outcomes[k]
    }

    pub fn value(&self, policy: &str) -> Option<f64> {
        self.outcome(policy).map(|o| o.value)
    }
}

/// Evaluates every policy on one grid cell.
pub fn run_cell(config: &SweepConfig, lambda: f64, r_sigma: f64) -> Result<CellResult, ExperimentError> {
    let h = Helicopter::new(config.params(lambda, r_sigma))?;
    let costs = config.steam_costs();
    let eval = |name: &str, c: &dyn crate::policy::CommPolicy| -> Result<Option<Outcome>, ExperimentError> {
        if !config.includes(name) {
            return Ok(None);
        }
        Ok(Some(Outcome::from(&evaluate(&h.model, &h.domain, c)?)))
    };
    let mut outcomes = vec![
        eval(SILENT, &SilentPolicy)?,
        eval(JENNINGS, &h.jennings())?,
        eval(STEAM_LOW, &h.steam(SteamLevel::Low, costs))?,
        eval(STEAM_MEDIUM, &h.steam(SteamLevel::Medium, costs))?,
    ];
    let start = Instant::now();
    let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma)?;
    outcomes.push(eval(LOCAL, &local.policy)?);
    let local_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (mut global_error, mut deferred_sends) = (None, 0.0);
    if config.includes(GLOBAL) {
        let space = config.search_space();
        match globally_optimal_comm(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma, &space) {
            Ok(g) => {
                deferred_sends = g
                    .sends
                    .iter()
                    .map(|i| &g.points[*i])
                    .filter(|p| p.epoch > p.knowledge_epoch)
                    .map(|p| p.probability)
                    .collect::<CompensatedSum>()
                    .value();
                outcomes.push(Some(Outcome::from(&g.result)));
            }
            Err(e @ OptimalError::BudgetExceeded { .. }) => {
                global_error = Some(e.to_string());
                outcomes.push(None);
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        outcomes.push(None);
    }
    let global_seconds = start.elapsed().as_secs_f64();

    let rollout = if config.rollout_samples > 0 {
        let r = rollout(&h.model, &h.domain, &local.policy, config.rollout_samples, config.seed)?;
        Some((r.mean, r.std_error))
    } else {
        None
    };
    Ok(CellResult {
        lambda,
        r_sigma,
        outcomes,
        global_error,
        deferred_sends,
        rollout,
        local_seconds,
        global_seconds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Sweep {
    pub config: SweepConfig,
    /// Row-major in (λ, r_Σ).
    pub cells: Vec<CellResult>,
    pub seconds: f64,
}

/// Runs all cells in parallel; results come back in grid order.
pub fn run_sweep(config: &SweepConfig) -> Result<Sweep, ExperimentError> {
    let start = Instant::now();
    let grid = config.grid();
    let coords: Vec<(f64, f64)> = grid
        .iter()
        .flat_map(|l| grid.iter().map(move |r| (*l, *r)))
        .collect();
    let cells = coords
        .par_iter()
        .map(|(l, r)| run_cell(config, *l, *r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sweep {
        config: config.clone(),
        cells,
        seconds: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
        let var = xs
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<CompensatedSum>()
            .value()
            / n;
        Some(Self {
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
            count: xs.len(),
        })
    }
}

/// Per-cell values, the only input the statistics need. Both a fresh sweep
/// and a results directory reduce to this.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub lambda: f64,
    pub r_sigma: f64,
    pub values: Vec<Option<f64>>,
    pub messages: Vec<Option<f64>>,
}

impl Surface {
    fn get(&self, policy: &str) -> Option<f64> {
        self.values[POLICIES.iter().position(|p| *p == policy)?]
    }

    fn messages(&self, policy: &str) -> Option<f64> {
        self.messages[POLICIES.iter().position(|p| *p == policy)?]
    }
}

impl From<&CellResult> for Surface {
    fn from(c: &CellResult) -> Self {
        Self {
            lambda: c.lambda,
            r_sigma: c.r_sigma,
            values: c.outcomes.iter().map(|o| o.map(|o| o.value)).collect(),
            messages: c.outcomes.iter().map(|o| o.map(|o| o.messages)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// `value(local) − value(π)` over the grid.
    pub suboptimality: BTreeMap<String, Stat>,
    pub global_minus_local: Option<Stat>,
    pub global_missing: usize,
    pub violations: Vec<String>,
}

pub fn summarize(cells: &[Surface]) -> Summary {
    let mut suboptimality = BTreeMap::new();
    for p in COMPARED {
        let xs: Vec<f64> = cells
            .iter()
            .filter_map(|c| Some(c.get(LOCAL)? - c.get(p)?))
            .collect();
        if let Some(s) = Stat::of(&xs) {
            suboptimality.insert(p.to_string(), s);
        }
    }
    let gl: Vec<f64> = cells
        .iter()
        .filter_map(|c| Some(c.get(GLOBAL)? - c.get(LOCAL)?))
        .collect();
    let global_missing = cells.iter().filter(|c| c.get(GLOBAL).is_none()).count();
    Summary {
        suboptimality,
        global_minus_local: Stat::of(&gl),
        global_missing,
        violations: check_ordering(cells),
    }
}

/// Every failure of global ≥ local ≥ {STEAM, silent, Jennings}.
pub fn check_ordering(cells: &[Surface]) -> Vec<String> {
    let mut out = Vec::new();
    for c in cells {
        let Some(local) = c.get(LOCAL) else {
            out.push(format!("λ={} r_Σ={}: local value missing", c.lambda, c.r_sigma));
            continue;
        };
        if let Some(g) = c.get(GLOBAL) {
            if g < local - ORDER_TOLERANCE {
                out.push(format!(
                    "λ={} r_Σ={}: global {} < local {}",
                    c.lambda, c.r_sigma, g, local
                ));
            }
        }
        for p in COMPARED {
            if let Some(v) = c.get(p) {
                if v > local + ORDER_TOLERANCE {
                    out.push(format!(
                        "λ={} r_Σ={}: {p} {} > local {}",
                        c.lambda, c.r_sigma, v, local
                    ));
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Output files

pub const VALUES_CSV: &str = "values.csv";
pub const MESSAGES_CSV: &str = "messages.csv";
pub const SUBOPTIMALITY_CSV: &str = "suboptimality.csv";
pub const SUBOPTIMALITY_GLOBAL_CSV: &str = "suboptimality_global.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const TIMING_LOG: &str = "timing.log";
pub const ROLLOUT_CSV: &str = "rollout.csv";

fn cell_or_blank(x: Option<f64>) -> String {
    x.map(fmt_sig12).unwrap_or_default()
}

fn csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a SweepConfig,
    grid: Vec<f64>,
    policies: [&'static str; 6],
    cells: usize,
}

/// Writes the CSV surfaces, summary, manifest and timing log. Everything
/// except the timing log is identical across reruns of the same config.
pub fn write_sweep(sweep: &Sweep, dir: &Path) -> Result<Summary, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut header = vec!["lambda", "r_sigma"];
    header.extend(POLICIES);
    let coords = |c: &CellResult| vec![fmt_sig12(c.lambda), fmt_sig12(c.r_sigma)];
    write(
        dir,
        VALUES_CSV,
        &csv(
            &header,
            sweep.cells.iter().map(|c| {
                let mut r = coords(c);
                r.extend(c.outcomes.iter().map(|o| cell_or_blank(o.map(|o| o.value))));
                r
            }),
        ),
    )?;
    write(
        dir,
        MESSAGES_CSV,
        &csv(
            &header,
            sweep.cells.iter().map(|c| {
                let mut r = coords(c);
                r.extend(c.outcomes.iter().map(|o| cell_or_blank(o.map(|o| o.messages))));
                r
            }),
        ),
    )?;
    let mut sub_header = vec!["lambda", "r_sigma"];
    sub_header.extend(COMPARED);
    sub_header.push("global-minus-local");
    sub_header.push("deferred-sends");
    write(
        dir,
        SUBOPTIMALITY_CSV,
        &csv(
            &sub_header,
            sweep.cells.iter().map(|c| {
                let local = c.value(LOCAL);
                let mut r = coords(c);
                for p in COMPARED {
                    r.push(cell_or_blank(local.zip(c.value(p)).map(|(l, v)| l - v)));
                }
                r.push(cell_or_blank(c.value(GLOBAL).zip(local).map(|(g, l)| g - l)));
                r.push(cell_or_blank(c.value(GLOBAL).map(|_| c.deferred_sends)));
                r
            }),
        ),
    )?;
    let mut glob_header = vec!["lambda", "r_sigma"];
    glob_header.extend(&POLICIES[..5]);
    write(
        dir,
        SUBOPTIMALITY_GLOBAL_CSV,
        &csv(
            &glob_header,
            sweep.cells.iter().map(|c| {
                let g = c.value(GLOBAL);
                let mut r = coords(c);
                for p in &POLICIES[..5] {
                    r.push(cell_or_blank(g.zip(c.value(p)).map(|(g, v)| g - v)));
                }
                r
            }),
        ),
    )?;
    if sweep.config.rollout_samples > 0 {
        write(
            dir,
            ROLLOUT_CSV,
            &csv(
                &["lambda", "r_sigma", "exact", "rollout-mean", "rollout-std-error"],
                sweep.cells.iter().map(|c| {
                    let mut r = coords(c);
                    r.push(cell_or_blank(c.value(LOCAL)));
                    r.push(cell_or_blank(c.rollout.map(|x| x.0)));
                    r.push(cell_or_blank(c.rollout.map(|x| x.1)));
                    r
                }),
            ),
        )?;
    }
    let surfaces: Vec<Surface> = sweep.cells.iter().map(Surface::from).collect();
    let summary = summarize(&surfaces);
    write(dir, SUMMARY_JSON, &(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &sweep.config,
        grid: sweep.config.grid(),
        policies: POLICIES,
        cells: sweep.cells.len(),
    };
    write(dir, MANIFEST_JSON, &(serde_json::to_string_pretty(&manifest).expect("serializable") + "\n"))?;
    let mut log = String::new();
    for c in &sweep.cells {
        let _ = write!(
            log,
            "lambda={} r_sigma={} local_s={:.4} global_s={:.4}",
            fmt_sig12(c.lambda),
            fmt_sig12(c.r_sigma),
            c.local_seconds,
            c.global_seconds
        );
        if let Some(e) = &c.global_error {
            let _ = write!(log, " global_error=\"{e}\"");
        }
        log.push('\n');
    }
    let _ = writeln!(log, "total_s={:.3}", sweep.seconds);
    write(dir, TIMING_LOG, &log)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Report

fn read_table(path: &Path) -> Result<Vec<Vec<Option<f64>>>, ExperimentError> {
    if !path.exists() {
        return Err(ExperimentError::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| ExperimentError::Parse {
        path: path.to_path_buf(),
        message: "empty file".into(),
    })?;
    let width = header.split(',').count();
    lines
        .enumerate()
        .map(|(k, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(ExperimentError::Parse {
                    path: path.to_path_buf(),
                    message: format!("line {} has {} fields, expected {width}", k + 2, fields.len()),
                });
            }
            fields
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse().map(Some).map_err(|_| ExperimentError::Parse {
                            path: path.to_path_buf(),
                            message: format!("line {}: bad number `{f}`", k + 2),
                        })
                    }
                })
                .collect()
        })
        .collect()
}

/// Reads the value and message surfaces back from a results directory.
pub fn load_surfaces(dir: &Path) -> Result<Vec<Surface>, ExperimentError> {
    let values = read_table(&dir.join(VALUES_CSV))?;
    let messages = read_table(&dir.join(MESSAGES_CSV))?;
    if values.len() != messages.len() {
        return Err(ExperimentError::Parse {
            path: dir.join(MESSAGES_CSV),
            message: "row count differs from values.csv".into(),
        });
    }
    values
        .into_iter()
        .zip(messages)
        .map(|(v, m)| {
            let (Some(lambda), Some(r_sigma)) = (v[0], v[1]) else {
                return Err(ExperimentError::Parse {
                    path: dir.join(VALUES_CSV),
                    message: "missing grid coordinate".into(),
                });
            };
            Ok(Surface {
                lambda,
                r_sigma,
                values: v[2..].to_vec(),
                messages: m[2..].to_vec(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Report {
    pub text: String,
    pub summary: Summary,
    /// Plot-data files written, relative to the results directory.
    pub plots: Vec<PathBuf>,
}

fn surface_dat(cells: &[Surface], f: impl Fn(&Surface) -> Option<f64>) -> String {
    let mut s = String::from("# lambda r_sigma z\n");
    let mut last = None;
    for c in cells {
        if last.is_some_and(|l| l != c.lambda) {
            s.push('\n');
        }
        last = Some(c.lambda);
        let z = f(c).map(fmt_sig12).unwrap_or_else(|| "?".into());
        let _ = writeln!(s, "{} {} {}", fmt_sig12(c.lambda), fmt_sig12(c.r_sigma), z);
    }
    s
}

fn messages_dat(cells: &[Surface], lambda: f64) -> Option<String> {
    let rows: Vec<&Surface> = cells.iter().filter(|c| (c.lambda - lambda).abs() < 1e-9).collect();
    if rows.is_empty() {
        return None;
    }
    let mut s = format!("# lambda = {lambda}\n# r_sigma {STEAM_LOW} {STEAM_MEDIUM} {LOCAL}\n");
    for c in rows {
        let col = |p| c.messages(p).map(fmt_sig12).unwrap_or_else(|| "?".into());
        let _ = writeln!(
            s,
            "{} {} {} {}",
            fmt_sig12(c.r_sigma),
            col(STEAM_LOW),
            col(STEAM_MEDIUM),
            col(LOCAL)
        );
    }
    Some(s)
}

/// Summary table, ordering check and gnuplot data for each figure analog.
pub fn report(dir: &Path) -> Result<Report, ExperimentError> {
    let cells = load_surfaces(dir)?;
    let summary = summarize(&cells);
    let plot_dir = dir.join("plots");
    fs::create_dir_all(&plot_dir).map_err(io_err(&plot_dir))?;
    let mut plots = Vec::new();
    let mut emit = |name: &str, body: String| -> Result<(), ExperimentError> {
        let rel = PathBuf::from("plots").join(name);
        let path = dir.join(&rel);
        fs::write(&path, body).map_err(io_err(&path))?;
        plots.push(rel);
        Ok(())
    };
    let sub = |p: &'static str| move |c: &Surface| Some(c.get(LOCAL)? - c.get(p)?);
    emit("loss_silent.dat", surface_dat(&cells, sub(SILENT)))?;
    emit("loss_jennings.dat", surface_dat(&cells, sub(JENNINGS)))?;
    emit("loss_steam_low.dat", surface_dat(&cells, sub(STEAM_LOW)))?;
    emit("loss_steam_medium.dat", surface_dat(&cells, sub(STEAM_MEDIUM)))?;
    if let Some(s) = messages_dat(&cells, 0.3) {
        emit("messages_lambda_0.3.dat", s)?;
    }
    if let Some(s) = messages_dat(&cells, 0.7) {
        emit("messages_lambda_0.7.dat", s)?;
    }
    emit(
        "gain_global_minus_local.dat",
        surface_dat(&cells, |c| Some(c.get(GLOBAL)? - c.get(LOCAL)?)),
    )?;

    let mut text = String::new();
    let _ = writeln!(text, "{} cells", cells.len());
    let _ = writeln!(text, "\nsuboptimality relative to the locally optimal policy");
    let _ = writeln!(text, "{:<14} {:>10} {:>10} {:>10}", "policy", "max", "mean", "std");
    for p in COMPARED {
        if let Some(s) = summary.suboptimality.get(p) {
            let _ = writeln!(text, "{:<14} {:>10.4} {:>10.4} {:>10.4}", p, s.max, s.mean, s.std);
        }
    }
    match &summary.global_minus_local {
        Some(s) => {
            let _ = writeln!(
                text,
                "\nglobal - local: max {:.4} mean {:.4} std {:.4} over {} cells",
                s.max, s.mean, s.std, s.count
            );
        }
        None => {
            let _ = writeln!(text, "\nglobal - local: no global results");
        }
    }
    if summary.global_missing > 0 {
        let _ = writeln!(text, "global search missing on {} cells", summary.global_missing);
    }
    if summary.violations.is_empty() {
        let _ = writeln!(text, "\nordering checks: all cells pass");
    } else {
        let _ = writeln!(text, "\nordering checks: {} violations", summary.violations.len());
        for v in &summary.violations {
            let _ = writeln!(text, "  {v}");
        }
    }
    let _ = writeln!(text, "\nplot data:");
    for p in &plots {
        let _ = writeln!(text, "  {}", p.display());
    }
    let path = dir.join("report.txt");
    fs::write(&path, &text).map_err(io_err(&path))?;
    Ok(Report {
        text,
        summary,
        plots,
    })
}

// ---------------------------------------------------------------------------
// Calibration

/// Reference summary statistics the calibration aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub silent_max: f64,
    pub jennings_max: f64,
    pub steam_max: f64,
    pub silent_mean: f64,
    pub jennings_mean: f64,
    pub steam_low_mean: f64,
    pub steam_medium_mean: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            silent_max: 0.700,
            jennings_max: 1.000,
            steam_max: 0.587,
            silent_mean: 0.160,
            jennings_mean: 0.161,
            steam_low_mean: 0.063,
            steam_medium_mean: 0.083,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub r_t: Vec<f64>,
    pub horizon: Vec<usize>,
    pub c_mt: Vec<f64>,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self {
            r_t: vec![0.06, 0.08, 0.1, 0.12, 0.14],
            horizon: (20..=26).collect(),
            c_mt: (0..=100).map(|k| k as f64 / 20.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub r_t: f64,
    pub horizon: usize,
    pub c_mt_low: f64,
    pub c_mt_medium: f64,
    pub loss: f64,
    /// Achieved minus target, per statistic.
    pub residuals: BTreeMap<String, f64>,
}

struct BaseCell {
    lambda: f64,
    r_sigma: f64,
    silent: f64,
    jennings: f64,
    local: f64,
}

/// STEAM sends at first knowledge either always or never on a cell, so its
/// value there is the Jennings or the silent value.
fn steam_stats(cells: &[BaseCell], c_mt: f64) -> Stat {
    let xs: Vec<f64> = cells
        .iter()
        .map(|c| {
            let sends = (1.0 - c.lambda) * c_mt > c.r_sigma;
            c.local - if sends { c.jennings } else { c.silent }
        })
        .collect();
    Stat::of(&xs).expect("non-empty grid")
}

/// Grid search over `(r_T, T, C_mt-low, C_mt-medium)`, minimizing squared
/// error against the targets. Escort reward tracks `r_T`; it shifts every
/// policy's value equally and does not affect suboptimality.
pub fn calibrate(
    grid: &CalibrationGrid,
    targets: &CalibrationTargets,
    grid_steps: usize,
) -> Result<Calibration, ExperimentError> {
    let mut best: Option<Calibration> = None;
    for &r_t in &grid.r_t {
        for &horizon in &grid.horizon {
            let config = SweepConfig {
                r_e: r_t,
                r_t,
                horizon,
                grid_steps,
                policies: vec![SILENT.into(), JENNINGS.into()],
                ..SweepConfig::default()
            };
            let g = config.grid();
            let coords: Vec<(f64, f64)> = g.iter().flat_map(|l| g.iter().map(move |r| (*l, *r))).collect();
            let cells = coords
                .par_iter()
                .map(|(l, r)| -> Result<BaseCell, ExperimentError> {
                    let h = Helicopter::new(config.params(*l, *r))?;
                    let v = |c: &dyn crate::policy::CommPolicy| -> Result<f64, ExperimentError> {
                        Ok(evaluate(&h.model, &h.domain, c)?.value)
                    };
                    let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma)?;
                    Ok(BaseCell {
                        lambda: *l,
                        r_sigma: *r,
                        silent: v(&SilentPolicy)?,
                        jennings: v(&h.jennings())?,
                        local: v(&local.policy)?,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let silent = Stat::of(&cells.iter().map(|c| c.local - c.silent).collect::<Vec<_>>())
                .expect("non-empty grid");
            let jennings = Stat::of(&cells.iter().map(|c| c.local - c.jennings).collect::<Vec<_>>())
                .expect("non-empty grid");
            // the medium level must keep communicating at λ = 0 whatever the
            // message cost, so it shows no threshold along that axis
            let max_r_sigma = g.last().copied().unwrap_or(0.0);
            let pick = |mean_target: f64, min_c: f64| {
                let mut choice: Option<(f64, f64, Stat)> = None;
                for &c in grid.c_mt.iter().filter(|c| **c > min_c) {
                    let s = steam_stats(&cells, c);
                    let loss = (s.max - targets.steam_max).powi(2) + (s.mean - mean_target).powi(2);
                    if choice.as_ref().is_none_or(|(l, _, _)| loss < *l) {
                        choice = Some((loss, c, s));
                    }
                }
                choice.ok_or_else(|| ExperimentError::Config("no admissible STEAM cost".into()))
            };
            let (_, c_low, low) = pick(targets.steam_low_mean, f64::NEG_INFINITY)?;
            let (_, c_med, med) = pick(targets.steam_medium_mean, max_r_sigma)?;
            let residuals: BTreeMap<String, f64> = [
                ("silent_max", silent.max - targets.silent_max),
                ("silent_mean", silent.mean - targets.silent_mean),
                ("jennings_max", jennings.max - targets.jennings_max),
                ("jennings_mean", jennings.mean - targets.jennings_mean),
                ("steam_low_max", low.max - targets.steam_max),
                ("steam_low_mean", low.mean - targets.steam_low_mean),
                ("steam_medium_max", med.max - targets.steam_max),
                ("steam_medium_mean", med.mean - targets.steam_medium_mean),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            let loss = residuals.values().map(|r| r * r).sum::<f64>();
            if best.as_ref().is_none_or(|b| loss < b.loss) {
                best = Some(Calibration {
                    r_t,
                    horizon,
                    c_mt_low: c_low,
                    c_mt_medium: c_med,
                    loss,
                    residuals,
                });
            }
        }
    }
    best.ok_or_else(|| ExperimentError::Config("empty calibration grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            grid_steps: 3,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c = SweepConfig::from_toml("horizon = 24\n").unwrap();
        assert_eq!(c.horizon, 24);
        assert_eq!(c.grid().len(), 11);
        assert!((c.grid()[3] - 0.3).abs() < 1e-15);
        assert!(SweepConfig::from_toml("colour = 1\n").is_err());
        assert!(SweepConfig::from_toml("policies = [\"psychic\"]\n").is_err());
        let c = SweepConfig::from_toml("policies = [\"silent\"]\n").unwrap();
        assert!(c.includes(SILENT) && c.includes(LOCAL) && !c.includes(GLOBAL));
    }

    #[test]
    fn stat_matches_hand_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(s.max, 6.0);
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 3.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sweep_writes_identical_files() {
        let sweep = run_sweep(&small()).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_sweep(&sweep, a.path()).unwrap();
        write_sweep(&run_sweep(&small()).unwrap(), b.path()).unwrap();
        for f in [VALUES_CSV, MESSAGES_CSV, SUBOPTIMALITY_CSV, SUMMARY_JSON, MANIFEST_JSON] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let r = report(a.path()).unwrap();
        assert!(r.summary.violations.is_empty(), "{:?}", r.summary.violations);
        assert_eq!(load_surfaces(a.path()).unwrap().len(), 9);
        assert!(a.path().join("plots/gain_global_minus_local.dat").exists());
    }

    #[test]
    fn report_requires_inputs() {
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(report(d.path()), Err(ExperimentError::MissingInput(_))));
    }
}
