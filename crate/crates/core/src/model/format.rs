//! Plain-text model files.
//!
//! A file is a list of `[section]` blocks. Tables are written as factors whose
//! rows list conditioning values then an outcome:
//!
//! ```text
//! [transition]
//! factor XiE Escort -> XiE
//! Dest   .            -> Dest 1
//! 0,1,2  fly,destroy  -> @XiE 1
//! ```
//!
//! Input tokens: `.` matches anything (including the null action/message),
//! `a,b` matches any listed label, `!tok` negates, `@Col` matches when this
//! column has the same label as column `Col`. Consecutive rows with identical
//! input tokens form one case and the first matching case wins. Factors are
//! multiplied (probability tables) or summed (reward tables).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use indexmap::IndexSet;
use thiserror::Error;

use super::{
    Agent, CommReward, Feature, JointAction, JointMessage, Message, MessageId, Model, ModelError,
    ModelParts, ObservationId, ObservationTable, StateId, NULL_TOKEN,
};

const SECTIONS: [&str; 11] = [
    "features",
    "agents",
    "actions",
    "messages",
    "observations",
    "transition",
    "observation",
    "reward_domain",
    "reward_comm",
    "initial",
    "horizon",
];

/// Upper bound on `|S| * |Σ_α|` rows materialized for communication rewards.
const COMM_REWARD_LIMIT: usize = 50_000_000;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Compile(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn syntax(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        line,
        message: message.into(),
    }
}

fn compile_err(message: impl Into<String>) -> FormatError {
    FormatError::Compile(message.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentDecl {
    pub name: String,
    pub actions: Vec<String>,
    pub messages: Vec<String>,
    /// Optional; when empty, observations are numbered in order of first
    /// appearance in the observation tables.
    pub observations: Vec<String>,
}

/// One row: input tokens, output tokens, and a probability or reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub pattern: Vec<String>,
    pub outcome: Vec<String>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Factor {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub rows: Vec<Row>,
}

impl Factor {
    pub fn new(inputs: &[&str], outputs: &[&str]) -> Self {
        Self {
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, pattern: &[&str], outcome: &[&str], value: f64) -> &mut Self {
        self.rows.push(Row {
            pattern: pattern.iter().map(|s| s.to_string()).collect(),
            outcome: outcome.iter().map(|s| s.to_string()).collect(),
            value,
        });
        self
    }
}

/// Uncompiled model description; round-trips through text exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelSpec {
    pub features: Vec<Feature>,
    pub agents: Vec<AgentDecl>,
    pub transition: Vec<Factor>,
    pub observation: Vec<Factor>,
    pub reward_domain: Vec<Factor>,
    pub reward_comm: Vec<Factor>,
    pub initial: Vec<Factor>,
    pub horizon: usize,
}

fn parse_number(tok: &str, line: usize) -> Result<f64, FormatError> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok),
    };
    let v = if let Some((n, d)) = body.split_once('/') {
        let n: f64 = n
            .parse()
            .map_err(|_| syntax(line, format!("bad number `{tok}`")))?;
        let d: f64 = d
            .parse()
            .map_err(|_| syntax(line, format!("bad number `{tok}`")))?;
        if d == 0.0 {
            return Err(syntax(line, format!("zero denominator in `{tok}`")));
        }
        n / d
    } else {
        body.parse::<f64>()
            .map_err(|_| syntax(line, format!("bad number `{tok}`")))?
    };
    Ok(if neg { -v } else { v })
}

fn is_valid_label(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != "->"
        && s != NULL_TOKEN
        && !s.starts_with('!')
        && !s.starts_with('@')
        && !s
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, ',' | '#' | '{' | '}' | '[' | ']' | '='))
}

impl FromStr for ModelSpec {
    type Err = FormatError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut spec = ModelSpec::default();
        let mut section: Option<&str> = None;
        let mut horizon_seen = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|s| **s == name)
                        .ok_or_else(|| syntax(line_no, format!("unknown section `{name}`")))?,
                );
                continue;
            }
            let Some(sec) = section else {
                return Err(syntax(line_no, "content before the first section"));
            };
            match sec {
                "features" => {
                    let (name, values) = split_decl(line, line_no)?;
                    spec.features.push(Feature { name, values });
                }
                "agents" => {
                    for name in line.split_whitespace() {
                        spec.agents.push(AgentDecl {
                            name: name.to_string(),
                            actions: Vec::new(),
                            messages: Vec::new(),
                            observations: Vec::new(),
                        });
                    }
                }
                "actions" | "messages" | "observations" => {
                    let (name, values) = split_decl(line, line_no)?;
                    let agent = spec
                        .agents
                        .iter_mut()
                        .find(|a| a.name == name)
                        .ok_or_else(|| syntax(line_no, format!("unknown agent `{name}`")))?;
                    match sec {
                        "actions" => agent.actions = values,
                        "messages" => agent.messages = values,
                        _ => agent.observations = values,
                    }
                }
                "horizon" => {
                    if horizon_seen {
                        return Err(syntax(line_no, "horizon given twice"));
                    }
                    spec.horizon = line
                        .parse()
                        .map_err(|_| syntax(line_no, format!("bad horizon `{line}`")))?;
                    horizon_seen = true;
                }
                table => {
                    let factors = match table {
                        "transition" => &mut spec.transition,
                        "observation" => &mut spec.observation,
                        "reward_domain" => &mut spec.reward_domain,
                        "reward_comm" => &mut spec.reward_comm,
                        _ => &mut spec.initial,
                    };
                    if let Some(rest) = line.strip_prefix("factor") {
                        if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
                            return Err(syntax(line_no, "expected `factor`"));
                        }
                        let toks: Vec<&str> = rest.split_whitespace().collect();
                        let (inputs, outputs) = match toks.iter().position(|t| *t == "->") {
                            Some(p) => (&toks[..p], &toks[p + 1..]),
                            None => (&toks[..], &toks[..0]),
                        };
                        factors.push(Factor {
                            inputs: inputs.iter().map(|s| s.to_string()).collect(),
                            outputs: outputs.iter().map(|s| s.to_string()).collect(),
                            rows: Vec::new(),
                        });
                        continue;
                    }
                    let factor = factors
                        .last_mut()
                        .ok_or_else(|| syntax(line_no, "row before any `factor` header"))?;
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    let arrow = toks
                        .iter()
                        .position(|t| *t == "->")
                        .ok_or_else(|| syntax(line_no, "row is missing `->`"))?;
                    let pattern = &toks[..arrow];
                    let right = &toks[arrow + 1..];
                    if pattern.len() != factor.inputs.len() {
                        return Err(syntax(
                            line_no,
                            format!(
                                "row has {} input tokens, factor declares {}",
                                pattern.len(),
                                factor.inputs.len()
                            ),
                        ));
                    }
                    if right.len() != factor.outputs.len() + 1 {
                        return Err(syntax(
                            line_no,
                            format!(
                                "row has {} output tokens, expected {} plus a value",
                                right.len().saturating_sub(1),
                                factor.outputs.len()
                            ),
                        ));
                    }
                    let value = parse_number(right[right.len() - 1], line_no)?;
                    factor.rows.push(Row {
                        pattern: pattern.iter().map(|s| s.to_string()).collect(),
                        outcome: right[..right.len() - 1]
                            .iter()
                            .map(|s| s.to_string())
                            .collect(),
                        value,
                    });
                }
            }
        }
        if !horizon_seen {
            return Err(syntax(text.lines().count(), "missing [horizon] section"));
        }
        Ok(spec)
    }
}

fn split_decl(line: &str, line_no: usize) -> Result<(String, Vec<String>), FormatError> {
    let (name, rest) = line
        .split_once('=')
        .ok_or_else(|| syntax(line_no, "expected `Name = values...`"))?;
    let name = name.trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(syntax(line_no, format!("bad name `{name}`")));
    }
    Ok((
        name.to_string(),
        rest.split_whitespace().map(|s| s.to_string()).collect(),
    ))
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[features]")?;
        for feat in &self.features {
            writeln!(f, "{} = {}", feat.name, feat.values.join(" "))?;
        }
        writeln!(f, "\n[agents]")?;
        for a in &self.agents {
            writeln!(f, "{}", a.name)?;
        }
        writeln!(f, "\n[actions]")?;
        for a in &self.agents {
            writeln!(f, "{} = {}", a.name, a.actions.join(" "))?;
        }
        writeln!(f, "\n[messages]")?;
        for a in &self.agents {
            writeln!(f, "{} = {}", a.name, a.messages.join(" "))?;
        }
        if self.agents.iter().any(|a| !a.observations.is_empty()) {
            writeln!(f, "\n[observations]")?;
            for a in &self.agents {
                writeln!(f, "{} = {}", a.name, a.observations.join(" "))?;
            }
        }
        let tables: [(&str, &Vec<Factor>); 5] = [
            ("transition", &self.transition),
            ("observation", &self.observation),
            ("reward_domain", &self.reward_domain),
            ("reward_comm", &self.reward_comm),
            ("initial", &self.initial),
        ];
        for (name, factors) in tables {
            writeln!(f, "\n[{name}]")?;
            for factor in factors {
                let mut header = String::from("factor");
                for i in &factor.inputs {
                    write!(header, " {i}")?;
                }
                if !factor.outputs.is_empty() {
                    header.push_str(" ->");
                    for o in &factor.outputs {
                        write!(header, " {o}")?;
                    }
                }
                writeln!(f, "{header}")?;
                for row in &factor.rows {
                    let mut line = row.pattern.join(" ");
                    if !line.is_empty() {
                        line.push(' ');
                    }
                    line.push_str("->");
                    for o in &row.outcome {
                        write!(line, " {o}")?;
                    }
                    write!(line, " {}", row.value)?;
                    writeln!(f, "{line}")?;
                }
            }
        }
        writeln!(f, "\n[horizon]\n{}", self.horizon)
    }
}

// ---------------------------------------------------------------------------
// Compilation

#[derive(Debug, Clone, Copy, PartialEq)]
enum ColumnRef {
    Feature(usize),
    Agent(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AgentRole {
    Action,
    Message,
}

struct Columns<'a> {
    features: &'a [Feature],
    agents: &'a [AgentDecl],
    role: AgentRole,
}

/// Values of every column in one evaluation context. `None` on an agent
/// column is the null action or message.
struct Ctx<'a> {
    state: &'a [usize],
    agent: &'a [Option<u16>],
}

impl Columns<'_> {
    fn resolve(&self, name: &str) -> Result<ColumnRef, FormatError> {
        if let Some(i) = self.features.iter().position(|f| f.name == name) {
            return Ok(ColumnRef::Feature(i));
        }
        if let Some(i) = self.agents.iter().position(|a| a.name == name) {
            return Ok(ColumnRef::Agent(i));
        }
        Err(compile_err(format!("unknown column `{name}`")))
    }

    fn domain(&self, col: ColumnRef) -> &[String] {
        match col {
            ColumnRef::Feature(i) => &self.features[i].values,
            ColumnRef::Agent(i) => match self.role {
                AgentRole::Action => &self.agents[i].actions,
                AgentRole::Message => &self.agents[i].messages,
            },
        }
    }

    fn label<'c>(&'c self, col: ColumnRef, ctx: &Ctx<'_>) -> &'c str {
        match col {
            ColumnRef::Feature(i) => &self.features[i].values[ctx.state[i]],
            ColumnRef::Agent(i) => match ctx.agent[i] {
                None => NULL_TOKEN,
                Some(v) => &self.domain(col)[v as usize],
            },
        }
    }
}

#[derive(Debug, Clone)]
enum Matcher {
    Any,
    Not(Box<Matcher>),
    /// Accepted value indices; the final slot is the null value.
    Set(Vec<bool>),
    Same(ColumnRef),
}

impl Matcher {
    fn compile(tok: &str, col: ColumnRef, cols: &Columns<'_>) -> Result<Self, FormatError> {
        if tok == "." {
            return Ok(Matcher::Any);
        }
        if let Some(rest) = tok.strip_prefix('!') {
            return Ok(Matcher::Not(Box::new(Matcher::compile(rest, col, cols)?)));
        }
        if let Some(name) = tok.strip_prefix('@') {
            return Ok(Matcher::Same(cols.resolve(name)?));
        }
        let domain = cols.domain(col);
        let mut set = vec![false; domain.len() + 1];
        for label in tok.split(',') {
            if label == NULL_TOKEN && matches!(col, ColumnRef::Agent(_)) {
                set[domain.len()] = true;
                continue;
            }
            let idx = domain
                .iter()
                .position(|v| v == label)
                .ok_or_else(|| compile_err(format!("`{label}` is not a value of its column")))?;
            set[idx] = true;
        }
        Ok(Matcher::Set(set))
    }

    fn matches(&self, col: ColumnRef, cols: &Columns<'_>, ctx: &Ctx<'_>) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Not(inner) => !inner.matches(col, cols, ctx),
            Matcher::Set(set) => match col {
                ColumnRef::Feature(i) => set[ctx.state[i]],
                ColumnRef::Agent(i) => match ctx.agent[i] {
                    None => set[set.len() - 1],
                    Some(v) => set[v as usize],
                },
            },
            Matcher::Same(other) => cols.label(col, ctx) == cols.label(*other, ctx),
        }
    }
}

#[derive(Debug, Clone)]
enum Output {
    Keep,
    Fixed(usize),
    Copy(ColumnRef),
    Template(Vec<Segment>),
}

#[derive(Debug, Clone)]
enum Segment {
    Text(String),
    Column(ColumnRef),
}

struct Case {
    matchers: Vec<Matcher>,
    outcomes: Vec<(Vec<Output>, f64)>,
}

struct CompiledFactor {
    inputs: Vec<ColumnRef>,
    outputs: Vec<ColumnRef>,
    cases: Vec<Case>,
}

impl CompiledFactor {
    fn compile(
        factor: &Factor,
        in_cols: &Columns<'_>,
        out_cols: &Columns<'_>,
        output_kind: OutputKind,
    ) -> Result<Self, FormatError> {
        let inputs = factor
            .inputs
            .iter()
            .map(|n| in_cols.resolve(n))
            .collect::<Result<Vec<_>, _>>()?;
        let outputs = factor
            .outputs
            .iter()
            .map(|n| out_cols.resolve(n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cases: Vec<Case> = Vec::new();
        let mut last_pattern: Option<&Vec<String>> = None;
        for row in &factor.rows {
            let outs = row
                .outcome
                .iter()
                .zip(&outputs)
                .map(|(tok, col)| compile_output(tok, *col, in_cols, out_cols, output_kind))
                .collect::<Result<Vec<_>, _>>()?;
            if last_pattern == Some(&row.pattern) {
                cases.last_mut().expect("case").outcomes.push((outs, row.value));
                continue;
            }
            let matchers = row
                .pattern
                .iter()
                .zip(&inputs)
                .map(|(tok, col)| Matcher::compile(tok, *col, in_cols))
                .collect::<Result<Vec<_>, _>>()?;
            cases.push(Case {
                matchers,
                outcomes: vec![(outs, row.value)],
            });
            last_pattern = Some(&row.pattern);
        }
        Ok(Self {
            inputs,
            outputs,
            cases,
        })
    }

    fn first_case(&self, cols: &Columns<'_>, ctx: &Ctx<'_>) -> Option<&Case> {
        self.cases.iter().find(|c| {
            c.matchers
                .iter()
                .zip(&self.inputs)
                .all(|(m, col)| m.matches(*col, cols, ctx))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum OutputKind {
    State { allow_keep: bool },
    Observation,
}

fn compile_output(
    tok: &str,
    col: ColumnRef,
    in_cols: &Columns<'_>,
    out_cols: &Columns<'_>,
    kind: OutputKind,
) -> Result<Output, FormatError> {
    match kind {
        OutputKind::State { allow_keep } => {
            let ColumnRef::Feature(f) = col else {
                return Err(compile_err("state tables must output features"));
            };
            if tok == "." {
                return if allow_keep {
                    Ok(Output::Keep)
                } else {
                    Err(compile_err("`.` is not allowed as an initial-state output"))
                };
            }
            if let Some(name) = tok.strip_prefix('@') {
                return Ok(Output::Copy(in_cols.resolve(name)?));
            }
            out_cols.features[f]
                .values
                .iter()
                .position(|v| v == tok)
                .map(Output::Fixed)
                .ok_or_else(|| compile_err(format!("`{tok}` is not a value of feature `{}`", out_cols.features[f].name)))
        }
        OutputKind::Observation => {
            if !matches!(col, ColumnRef::Agent(_)) {
                return Err(compile_err("observation tables must output agents"));
            }
            let mut segments = Vec::new();
            let mut rest = tok;
            while let Some(open) = rest.find('{') {
                if open > 0 {
                    segments.push(Segment::Text(rest[..open].to_string()));
                }
                let close = rest[open..]
                    .find('}')
                    .ok_or_else(|| compile_err(format!("unterminated `{{` in `{tok}`")))?;
                let name = &rest[open + 1..open + close];
                segments.push(Segment::Column(in_cols.resolve(name)?));
                rest = &rest[open + close + 1..];
            }
            if !rest.is_empty() {
                segments.push(Segment::Text(rest.to_string()));
            }
            if segments.is_empty() {
                return Err(compile_err("empty observation label"));
            }
            Ok(Output::Template(segments))
        }
    }
}

fn resolve_state_output(
    out: &Output,
    feature: usize,
    current: Option<usize>,
    cols: &Columns<'_>,
    ctx: &Ctx<'_>,
) -> Result<usize, FormatError> {
    match out {
        Output::Keep => current.ok_or_else(|| compile_err("`.` output without a current state")),
        Output::Fixed(v) => Ok(*v),
        Output::Copy(col) => {
            let label = cols.label(*col, ctx);
            cols.features[feature]
                .values
                .iter()
                .position(|v| v == label)
                .ok_or_else(|| {
                    compile_err(format!(
                        "copied value `{label}` is not in feature `{}`",
                        cols.features[feature].name
                    ))
                })
        }
        Output::Template(_) => unreachable!("templates only appear in observation tables"),
    }
}

fn render_template(out: &Output, cols: &Columns<'_>, ctx: &Ctx<'_>) -> String {
    let Output::Template(segments) = out else {
        unreachable!("observation outputs are templates")
    };
    let mut s = String::new();
    for seg in segments {
        match seg {
            Segment::Text(t) => s.push_str(t),
            Segment::Column(c) => s.push_str(cols.label(*c, ctx)),
        }
    }
    s
}

fn mixed_radix(sizes: &[usize], mut index: usize) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for i in (0..sizes.len()).rev() {
        out[i] = index % sizes[i];
        index /= sizes[i];
    }
    out
}

/// Column assignment with its probability.
type Weighted<T> = (Vec<(usize, T)>, f64);

/// Product over factors of each factor's outcome list. Returns the combined
/// assignment for the listed output columns with its probability.
fn product<T: Clone>(parts: Vec<Vec<Weighted<T>>>) -> Vec<Weighted<T>> {
    let mut acc: Vec<Weighted<T>> = vec![(Vec::new(), 1.0)];
    for part in parts {
        let mut next = Vec::with_capacity(acc.len() * part.len());
        for (prefix, p) in &acc {
            for (assign, q) in &part {
                let mut v = prefix.clone();
                v.extend(assign.iter().cloned());
                next.push((v, p * q));
            }
        }
        acc = next;
    }
    acc
}

impl ModelSpec {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        text.parse()
    }

    fn check_names(&self) -> Result<(), FormatError> {
        let mut names = IndexSet::new();
        for n in self
            .features
            .iter()
            .map(|f| &f.name)
            .chain(self.agents.iter().map(|a| &a.name))
        {
            if !is_valid_label(n) {
                return Err(compile_err(format!("invalid name `{n}`")));
            }
            if !names.insert(n) {
                return Err(compile_err(format!("duplicate name `{n}`")));
            }
        }
        let domains = self
            .features
            .iter()
            .map(|f| (&f.name, &f.values))
            .chain(self.agents.iter().map(|a| (&a.name, &a.actions)))
            .chain(self.agents.iter().map(|a| (&a.name, &a.messages)))
            .chain(self.agents.iter().map(|a| (&a.name, &a.observations)));
        for (owner, values) in domains {
            let mut seen = IndexSet::new();
            for v in values {
                if !is_valid_label(v) {
                    return Err(compile_err(format!("invalid label `{v}` in `{owner}`")));
                }
                if !seen.insert(v) {
                    return Err(compile_err(format!("duplicate label `{v}` in `{owner}`")));
                }
            }
        }
        Ok(())
    }

    /// Expands the factored description into a [`Model`].
    pub fn compile(&self) -> Result<Model, FormatError> {
        self.check_names()?;
        let action_cols = Columns {
            features: &self.features,
            agents: &self.agents,
            role: AgentRole::Action,
        };
        let message_cols = Columns {
            features: &self.features,
            agents: &self.agents,
            role: AgentRole::Message,
        };
        let feature_sizes: Vec<usize> = self.features.iter().map(|f| f.values.len()).collect();
        let action_sizes: Vec<usize> = self.agents.iter().map(|a| a.actions.len()).collect();
        if self.agents.is_empty() {
            return Err(ModelError::NoAgents.into());
        }
        if let Some(a) = self.agents.iter().find(|a| a.actions.is_empty()) {
            return Err(ModelError::NoActions(a.name.clone()).into());
        }
        let ns: usize = feature_sizes.iter().product();
        let na: usize = action_sizes.iter().product();

        let state_kind = OutputKind::State { allow_keep: true };
        let compile_all = |factors: &[Factor], in_cols: &Columns<'_>, kind| {
            factors
                .iter()
                .map(|f| CompiledFactor::compile(f, in_cols, &action_cols, kind))
                .collect::<Result<Vec<_>, _>>()
        };

        // Transition.
        let trans = compile_all(&self.transition, &action_cols, state_kind)?;
        let mut owner = vec![None; self.features.len()];
        for (k, f) in trans.iter().enumerate() {
            for col in &f.outputs {
                let ColumnRef::Feature(i) = *col else { unreachable!() };
                if owner[i].replace(k).is_some() {
                    return Err(compile_err(format!(
                        "feature `{}` is produced by more than one transition factor",
                        self.features[i].name
                    )));
                }
            }
        }
        let mut transition = Vec::with_capacity(ns * na);
        let mut agent_vals: Vec<Option<u16>> = vec![None; self.agents.len()];
        for s in 0..ns {
            let state = mixed_radix(&feature_sizes, s);
            for a in 0..na {
                for (slot, v) in agent_vals.iter_mut().zip(mixed_radix(&action_sizes, a)) {
                    *slot = Some(v as u16);
                }
                let ctx = Ctx {
                    state: &state,
                    agent: &agent_vals,
                };
                let mut parts = Vec::with_capacity(trans.len());
                for f in &trans {
                    let Some(case) = f.first_case(&action_cols, &ctx) else {
                        parts.push(Vec::new());
                        continue;
                    };
                    let mut outcomes = Vec::with_capacity(case.outcomes.len());
                    for (outs, p) in &case.outcomes {
                        let mut assign = Vec::with_capacity(outs.len());
                        for (out, col) in outs.iter().zip(&f.outputs) {
                            let ColumnRef::Feature(i) = *col else { unreachable!() };
                            assign.push((
                                i,
                                resolve_state_output(out, i, Some(state[i]), &action_cols, &ctx)?,
                            ));
                        }
                        outcomes.push((assign, *p));
                    }
                    parts.push(outcomes);
                }
                let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
                for (assign, p) in product(parts) {
                    if p == 0.0 {
                        continue;
                    }
                    let mut next = state.clone();
                    for (i, v) in assign {
                        next[i] = v;
                    }
                    let id = next
                        .iter()
                        .zip(&feature_sizes)
                        .fold(0usize, |acc, (v, n)| acc * n + v);
                    *merged.entry(id as u32).or_insert(0.0) += p;
                }
                transition.push(merged.into_iter().map(|(s, p)| (StateId(s), p)).collect());
            }
        }

        // Observation.
        let obs = compile_all(&self.observation, &action_cols, OutputKind::Observation)?;
        let mut obs_owner = vec![None; self.agents.len()];
        for (k, f) in obs.iter().enumerate() {
            for col in &f.outputs {
                let ColumnRef::Agent(i) = *col else { unreachable!() };
                if obs_owner[i].replace(k).is_some() {
                    return Err(compile_err(format!(
                        "agent `{}` observed by more than one factor",
                        self.agents[i].name
                    )));
                }
            }
        }
        if let Some(i) = obs_owner.iter().position(|o| o.is_none()) {
            return Err(compile_err(format!(
                "agent `{}` has no observation factor",
                self.agents[i].name
            )));
        }
        let factored = obs.iter().all(|f| f.outputs.len() == 1);
        let mut vocab: Vec<IndexSet<String>> = self
            .agents
            .iter()
            .map(|a| a.observations.iter().cloned().collect())
            .collect();
        let mut factored_rows: Vec<Vec<Vec<(ObservationId, f64)>>> =
            vec![Vec::with_capacity(ns * (na + 1)); self.agents.len()];
        let mut joint_rows: Vec<Vec<(Box<[ObservationId]>, f64)>> = Vec::new();
        for s in 0..ns {
            let state = mixed_radix(&feature_sizes, s);
            for a in 0..=na {
                if a == na {
                    agent_vals.iter_mut().for_each(|v| *v = None);
                } else {
                    for (slot, v) in agent_vals.iter_mut().zip(mixed_radix(&action_sizes, a)) {
                        *slot = Some(v as u16);
                    }
                }
                let ctx = Ctx {
                    state: &state,
                    agent: &agent_vals,
                };
                let mut parts: Vec<Vec<Weighted<ObservationId>>> = Vec::new();
                for f in &obs {
                    let Some(case) = f.first_case(&action_cols, &ctx) else {
                        parts.push(Vec::new());
                        continue;
                    };
                    let mut outcomes = Vec::new();
                    for (outs, p) in &case.outcomes {
                        let mut assign = Vec::new();
                        for (out, col) in outs.iter().zip(&f.outputs) {
                            let ColumnRef::Agent(i) = *col else { unreachable!() };
                            let label = render_template(out, &action_cols, &ctx);
                            if !self.agents[i].observations.is_empty() && !vocab[i].contains(&label) {
                                return Err(compile_err(format!(
                                    "observation `{label}` is not declared for agent {}",
                                    self.agents[i].name
                                )));
                            }
                            let (id, _) = vocab[i].insert_full(label);
                            assign.push((i, ObservationId(id as u32)));
                        }
                        outcomes.push((assign, *p));
                    }
                    parts.push(outcomes);
                }
                if factored {
                    for (f, outcomes) in obs.iter().zip(parts) {
                        let ColumnRef::Agent(i) = f.outputs[0] else { unreachable!() };
                        let mut merged: BTreeMap<ObservationId, f64> = BTreeMap::new();
                        for (assign, p) in outcomes {
                            if p != 0.0 {
                                *merged.entry(assign[0].1).or_insert(0.0) += p;
                            }
                        }
                        factored_rows[i].push(merged.into_iter().collect());
                    }
                } else {
                    let mut merged: BTreeMap<Vec<ObservationId>, f64> = BTreeMap::new();
                    for (assign, p) in product(parts) {
                        if p == 0.0 {
                            continue;
                        }
                        let mut joint = vec![ObservationId(0); self.agents.len()];
                        for (i, o) in assign {
                            joint[i] = o;
                        }
                        *merged.entry(joint).or_insert(0.0) += p;
                    }
                    joint_rows.push(
                        merged
                            .into_iter()
                            .map(|(o, p)| (o.into_boxed_slice(), p))
                            .collect(),
                    );
                }
            }
        }
        let observation = if factored {
            ObservationTable::Factored(factored_rows)
        } else {
            ObservationTable::Joint(joint_rows)
        };

        // Domain reward.
        let rd = compile_reward(&self.reward_domain, &action_cols)?;
        let mut reward_domain = Vec::with_capacity(ns * na);
        for s in 0..ns {
            let state = mixed_radix(&feature_sizes, s);
            for a in 0..na {
                for (slot, v) in agent_vals.iter_mut().zip(mixed_radix(&action_sizes, a)) {
                    *slot = Some(v as u16);
                }
                let ctx = Ctx {
                    state: &state,
                    agent: &agent_vals,
                };
                reward_domain.push(sum_reward(&rd, &action_cols, &ctx));
            }
        }

        // Communication reward.
        let rc = compile_reward(&self.reward_comm, &message_cols)?;
        let mut reward_comm = CommReward::new();
        if !rc.is_empty() {
            let msg_sizes: Vec<usize> = self.agents.iter().map(|a| a.messages.len() + 1).collect();
            let nm: usize = msg_sizes.iter().product();
            if nm.saturating_mul(ns) > COMM_REWARD_LIMIT {
                return Err(compile_err("communication reward table is too large to expand"));
            }
            for m in 0..nm {
                let digits = mixed_radix(&msg_sizes, m);
                let msg: Vec<Option<u16>> = digits
                    .iter()
                    .map(|d| d.checked_sub(1).map(|x| x as u16))
                    .collect();
                let mut per_state = Vec::with_capacity(ns);
                for s in 0..ns {
                    let state = mixed_radix(&feature_sizes, s);
                    let ctx = Ctx {
                        state: &state,
                        agent: &msg,
                    };
                    per_state.push(sum_reward(&rc, &message_cols, &ctx));
                }
                let joint: Vec<Message> = msg.iter().map(|m| m.map(MessageId)).collect();
                reward_comm.set(JointMessage::from(joint), per_state);
            }
        }

        // Initial distribution.
        let init = compile_all(&self.initial, &action_cols, OutputKind::State { allow_keep: false })?;
        let mut covered = vec![false; self.features.len()];
        for f in &init {
            if !f.inputs.is_empty() {
                return Err(compile_err("initial factors take no inputs"));
            }
            for col in &f.outputs {
                let ColumnRef::Feature(i) = *col else { unreachable!() };
                if std::mem::replace(&mut covered[i], true) {
                    return Err(compile_err(format!(
                        "feature `{}` is initialized twice",
                        self.features[i].name
                    )));
                }
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(compile_err(format!(
                "feature `{}` has no initial distribution",
                self.features[i].name
            )));
        }
        let zero_state = vec![0; self.features.len()];
        let none_agents = vec![None; self.agents.len()];
        let ctx = Ctx {
            state: &zero_state,
            agent: &none_agents,
        };
        let mut parts = Vec::new();
        for f in &init {
            let mut outcomes = Vec::new();
            if let Some(case) = f.cases.first() {
                for (outs, p) in &case.outcomes {
                    let mut assign = Vec::new();
                    for (out, col) in outs.iter().zip(&f.outputs) {
                        let ColumnRef::Feature(i) = *col else { unreachable!() };
                        assign.push((i, resolve_state_output(out, i, None, &action_cols, &ctx)?));
                    }
                    outcomes.push((assign, *p));
                }
            }
            parts.push(outcomes);
        }
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for (assign, p) in product(parts) {
            if p == 0.0 {
                continue;
            }
            let mut st = zero_state.clone();
            for (i, v) in assign {
                st[i] = v;
            }
            let id = st
                .iter()
                .zip(&feature_sizes)
                .fold(0usize, |acc, (v, n)| acc * n + v);
            *merged.entry(id as u32).or_insert(0.0) += p;
        }
        let initial = merged.into_iter().map(|(s, p)| (StateId(s), p)).collect();

        let agents = self
            .agents
            .iter()
            .zip(vocab)
            .map(|(a, v)| Agent {
                name: a.name.clone(),
                actions: a.actions.clone(),
                messages: a.messages.clone(),
                observations: v.into_iter().collect(),
            })
            .collect();
        Ok(Model::from_parts(ModelParts {
            features: self.features.clone(),
            agents,
            transition,
            observation,
            reward_domain,
            reward_comm,
            initial,
            horizon: self.horizon,
        })?)
    }

    /// Writes a compiled model back out as flat, fully enumerated factors.
    /// Every label in the model must be a valid token.
    pub fn from_model(model: &Model) -> Result<Self, FormatError> {
        let features = model.features().to_vec();
        let agents: Vec<AgentDecl> = model
            .agents()
            .iter()
            .map(|a| AgentDecl {
                name: a.name.clone(),
                actions: a.actions.clone(),
                messages: a.messages.clone(),
                observations: a.observations.clone(),
            })
            .collect();
        for a in model.agents() {
            if let Some(o) = a.observations.iter().find(|o| !is_valid_label(o)) {
                return Err(compile_err(format!("observation `{o}` is not a valid token")));
            }
        }
        let fnames: Vec<&str> = features.iter().map(|f| f.name.as_str()).collect();
        let anames: Vec<&str> = agents.iter().map(|a| a.name.as_str()).collect();
        let all_inputs: Vec<&str> = fnames.iter().chain(&anames).copied().collect();
        let state_tokens = |s: StateId| -> Vec<String> {
            model
                .state_values(s)
                .iter()
                .enumerate()
                .map(|(f, v)| features[f].values[*v].clone())
                .collect()
        };
        let action_tokens = |a: JointAction| -> Vec<String> {
            model
                .split_action(a)
                .iter()
                .enumerate()
                .map(|(i, x)| agents[i].actions[x.0 as usize].clone())
                .collect()
        };
        let ns = model.state_count();
        let na = model.joint_action_count();

        let mut trans = Factor::new(&all_inputs, &fnames);
        let mut rd = Factor::new(&all_inputs, &[]);
        for s in 0..ns {
            let s = StateId(s as u32);
            for a in 0..na {
                let a = JointAction(a as u32);
                let mut pattern = state_tokens(s);
                pattern.extend(action_tokens(a));
                for (next, p) in &sorted(model.transitions(s, a)) {
                    trans.rows.push(Row {
                        pattern: pattern.clone(),
                        outcome: state_tokens(*next),
                        value: *p,
                    });
                }
                let r = model.reward_domain(s, a);
                if r != 0.0 {
                    rd.rows.push(Row {
                        pattern: pattern.clone(),
                        outcome: Vec::new(),
                        value: r,
                    });
                }
            }
        }

        let mut observation = Vec::new();
        let prev_tokens = |a: usize| -> Vec<String> {
            if a == na {
                vec![NULL_TOKEN.to_string(); agents.len()]
            } else {
                action_tokens(JointAction(a as u32))
            }
        };
        match model.observation_table() {
            ObservationTable::Factored(tables) => {
                for (i, table) in tables.iter().enumerate() {
                    let mut f = Factor::new(&all_inputs, &[anames[i]]);
                    for (row, entries) in table.iter().enumerate() {
                        let mut pattern = state_tokens(StateId((row / (na + 1)) as u32));
                        pattern.extend(prev_tokens(row % (na + 1)));
                        for (o, p) in &sorted(entries) {
                            f.rows.push(Row {
                                pattern: pattern.clone(),
                                outcome: vec![model.agents()[i].observations[o.0 as usize].clone()],
                                value: *p,
                            });
                        }
                    }
                    observation.push(f);
                }
            }
            ObservationTable::Joint(table) => {
                let mut f = Factor::new(&all_inputs, &anames);
                for (row, entries) in table.iter().enumerate() {
                    let mut pattern = state_tokens(StateId((row / (na + 1)) as u32));
                    pattern.extend(prev_tokens(row % (na + 1)));
                    for (o, p) in &sorted(entries) {
                        f.rows.push(Row {
                            pattern: pattern.clone(),
                            outcome: o
                                .iter()
                                .enumerate()
                                .map(|(i, x)| model.agents()[i].observations[x.0 as usize].clone())
                                .collect(),
                            value: *p,
                        });
                    }
                }
                observation.push(f);
            }
        }

        let mut reward_comm = Vec::new();
        let table = model.reward_comm_table();
        if !table.is_zero() {
            let mut f = Factor::new(&all_inputs, &[]);
            for (msg, values) in table.entries() {
                let msg_tokens: Vec<String> = msg
                    .0
                    .iter()
                    .enumerate()
                    .map(|(i, m)| match m {
                        None => NULL_TOKEN.to_string(),
                        Some(id) => agents[i].messages[id.0 as usize].clone(),
                    })
                    .collect();
                for (s, v) in values.iter().enumerate() {
                    if *v != 0.0 {
                        let mut pattern = state_tokens(StateId(s as u32));
                        pattern.extend(msg_tokens.iter().cloned());
                        f.rows.push(Row {
                            pattern,
                            outcome: Vec::new(),
                            value: *v,
                        });
                    }
                }
            }
            reward_comm.push(f);
        }

        let mut init = Factor::new(&[], &fnames);
        for (s, p) in &sorted(model.initial()) {
            init.rows.push(Row {
                pattern: Vec::new(),
                outcome: state_tokens(*s),
                value: *p,
            });
        }

        Ok(ModelSpec {
            features,
            agents,
            transition: vec![trans],
            observation,
            reward_domain: vec![rd],
            reward_comm,
            initial: vec![init],
            horizon: model.horizon(),
        })
    }
}

/// Outcomes in id order, so printing does not depend on how a table was built.
fn sorted<K: Ord + Clone>(row: &[(K, f64)]) -> Vec<(K, f64)> {
    let mut v = row.to_vec();
    v.sort_by(|x, y| x.0.cmp(&y.0));
    v
}

fn compile_reward(
    factors: &[Factor],
    cols: &Columns<'_>,
) -> Result<Vec<CompiledFactor>, FormatError> {
    factors
        .iter()
        .map(|f| {
            if !f.outputs.is_empty() {
                return Err(compile_err("reward factors have no outputs"));
            }
            CompiledFactor::compile(f, cols, cols, OutputKind::Observation)
        })
        .collect()
}

fn sum_reward(factors: &[CompiledFactor], cols: &Columns<'_>, ctx: &Ctx<'_>) -> f64 {
    factors
        .iter()
        .filter_map(|f| f.first_case(cols, ctx))
        .map(|c| c.outcomes[0].1)
        .sum()
}

/// Parses and compiles model text in one step.
pub fn parse_model(text: &str) -> Result<Model, FormatError> {
    ModelSpec::parse(text)?.compile()
}

/// Renders a compiled model as text.
pub fn print_model(model: &Model) -> Result<String, FormatError> {
    Ok(ModelSpec::from_model(model)?.to_string())
}
