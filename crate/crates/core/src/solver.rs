//! External MILP solvers driven through LP files.
//!
//! A solve writes `model.lp` into a fresh working directory, runs the
//! configured command with `{lp_file}`, `{sol_file}` and `{time_limit}`
//! substituted, and reads the solution file back. CBC and SCIP solution
//! formats are recognized. Every returned assignment is checked against
//! the model with exact arithmetic before it is reported.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{emit_lp_text, ZERO_COLUMN};
use crate::milp::MilpModel;

pub const DEFAULT_TIME_LIMIT: f64 = 500.0;

/// Values this close to 0 or 1 are rounded.
pub const INTEGRALITY_TOLERANCE: f64 = 1e-6;

const CBC_TEMPLATE: &str = "{exe} {lp_file} sec {time_limit} solve solu {sol_file}";
const SCIP_TEMPLATE: &str = "{exe} -c \"set limits time {time_limit}\" -c \"read {lp_file}\" -c optimize \
                             -c \"write solution {sol_file}\" -c quit";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverKind {
    Cbc,
    Scip,
    /// Full command line; the first token is the executable.
    Command(String),
}

impl SolverKind {
    fn env_override(&self) -> Option<&'static str> {
        match self {
            SolverKind::Cbc => Some("EON_CBC"),
            SolverKind::Scip => Some("EON_SCIP"),
            SolverKind::Command(_) => None,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Cbc => f.write_str("cbc"),
            SolverKind::Scip => f.write_str("scip"),
            SolverKind::Command(t) => write!(f, "cmd:{t}"),
        }
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cbc" => Ok(SolverKind::Cbc),
            "scip" => Ok(SolverKind::Scip),
            _ => match s.strip_prefix("cmd:") {
                Some(t) if !t.trim().is_empty() => Ok(SolverKind::Command(t.to_string())),
                _ => Err(format!("unknown solver `{s}` (expected cbc, scip or cmd:<template>)")),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub solver: SolverKind,
    pub time_limit: f64,
    /// Parent of the per-solve directory; the system temp dir if unset.
    pub work_dir: Option<PathBuf>,
    pub keep_files: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { solver: SolverKind::Cbc, time_limit: DEFAULT_TIME_LIMIT, work_dir: None, keep_files: false }
    }
}

impl SolverConfig {
    pub fn new(solver: SolverKind) -> Self {
        SolverConfig { solver, ..Default::default() }
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit = seconds;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// An incumbent without a proof of optimality.
    Feasible,
    Infeasible,
    TimeLimit,
    SolverError,
}

impl SolveStatus {
    pub fn has_assignment(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::SolverError => "solver_error",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Value per model variable; present iff the status carries one.
    pub assignment: Option<Vec<bool>>,
    /// Objective of the assignment, evaluated exactly.
    pub objective: Option<Decimal>,
    pub seconds: f64,
    /// Solver log, when files are kept.
    pub log_path: Option<PathBuf>,
    /// Diagnostic for [`SolveStatus::SolverError`]; includes the log tail.
    pub message: Option<String>,
}

impl SolveOutcome {
    fn without_solver(status: SolveStatus, model: &MilpModel) -> SolveOutcome {
        let assignment = status.has_assignment().then(|| vec![false; model.variables().len()]);
        let objective = assignment.as_ref().map(|a| model.objective_value(a));
        SolveOutcome { status, assignment, objective, seconds: 0.0, log_path: None, message: None }
    }

    fn error(message: String, seconds: f64) -> SolveOutcome {
        SolveOutcome {
            status: SolveStatus::SolverError,
            assignment: None,
            objective: None,
            seconds,
            log_path: None,
            message: Some(message),
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("time limit must be positive, got {0}")]
    InvalidTimeLimit(f64),
    #[error("solver executable `{executable}` for {solver} not found; {hint}")]
    NotFound { solver: String, executable: String, hint: String },
    #[error("malformed solver command `{0}`")]
    BadTemplate(String),
    #[error("i/o error in solver working directory: {0}")]
    Io(#[from] std::io::Error),
}

fn find_executable(name: &str) -> Option<PathBuf> {
    let p = Path::new(name);
    if p.components().count() > 1 {
        return p.is_file().then(|| p.to_path_buf());
    }
    std::env::split_paths(&std::env::var_os("PATH")?).map(|dir| dir.join(name)).find(|c| c.is_file())
}

fn format_seconds(s: f64) -> String {
    if s.fract() == 0.0 && s < 1e15 {
        format!("{}", s as u64)
    } else {
        format!("{s}")
    }
}

/// Resolves the command line for `config`, with the placeholders filled.
pub fn command_line(config: &SolverConfig, lp_file: &Path, sol_file: &Path) -> Result<Vec<String>, SolveError> {
    let (template, default_exe) = match &config.solver {
        SolverKind::Cbc => (CBC_TEMPLATE.to_string(), "cbc"),
        SolverKind::Scip => (SCIP_TEMPLATE.to_string(), "scip"),
        SolverKind::Command(t) => (t.clone(), ""),
    };
    let exe = config
        .solver
        .env_override()
        .and_then(|var| std::env::var(var).ok())
        .filter(|v| !v.is_empty())
        .unwrap_or_else(|| default_exe.to_string());
    let tokens =
        shlex::split(&template).filter(|t| !t.is_empty()).ok_or_else(|| SolveError::BadTemplate(template.clone()))?;
    let lp = lp_file.display().to_string();
    let sol = sol_file.display().to_string();
    let limit = format_seconds(config.time_limit);
    Ok(tokens
        .into_iter()
        .map(|t| {
            t.replace("{exe}", &exe)
                .replace("{lp_file}", &lp)
                .replace("{sol_file}", &sol)
                .replace("{time_limit}", &limit)
        })
        .collect())
}

/// Raw result parsed from a solution file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub values: Vec<(String, f64)>,
}

fn cbc_status(header: &str, has_values: bool) -> SolveStatus {
    let h = header.trim().to_ascii_lowercase();
    if h.starts_with("optimal") {
        SolveStatus::Optimal
    } else if h.starts_with("infeasible") || h.starts_with("integer infeasible") {
        SolveStatus::Infeasible
    } else if h.starts_with("stopped") {
        if has_values && !h.contains("no integer solution") {
            SolveStatus::Feasible
        } else {
            SolveStatus::TimeLimit
        }
    } else {
        SolveStatus::SolverError
    }
}

/// Parses a CBC `solu` file: a status line, then
/// `index name value reduced-cost` rows, optionally flagged with `**`.
pub fn parse_cbc_solution(text: &str) -> Option<RawSolution> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next()?;
    let mut values = Vec::new();
    for line in lines {
        let line = line.trim().trim_start_matches("**").trim();
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return None;
        }
        values.push((fields[1].to_string(), fields[2].parse().ok()?));
    }
    Some(RawSolution { status: cbc_status(header, !values.is_empty()), values })
}

/// Parses a SCIP solution file written by `write solution`.
pub fn parse_scip_solution(text: &str) -> Option<RawSolution> {
    let mut status_line = None;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("solution status:") {
            status_line = Some(rest.trim().to_ascii_lowercase());
        } else if line.is_empty() || line.starts_with("objective value:") || line.starts_with("no solution") {
            continue;
        } else {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 2 {
                return None;
            }
            values.push((fields[0].to_string(), fields[1].parse().ok()?));
        }
    }
    let s = status_line?;
    let status = if s.contains("optimal") {
        SolveStatus::Optimal
    } else if s.contains("infeasible") {
        SolveStatus::Infeasible
    } else if s.contains("limit") {
        if values.is_empty() {
            SolveStatus::TimeLimit
        } else {
            SolveStatus::Feasible
        }
    } else {
        SolveStatus::SolverError
    };
    Some(RawSolution { status, values })
}

fn parse_solution(text: &str) -> Option<RawSolution> {
    if text.trim_start().starts_with("solution status:") {
        parse_scip_solution(text)
    } else {
        parse_cbc_solution(text)
    }
}

/// Maps raw values onto model variables, rounding within tolerance.
fn to_assignment(names: &HashMap<&str, usize>, n: usize, values: &[(String, f64)]) -> Result<Vec<bool>, String> {
    let mut out = vec![false; n];
    for (name, v) in values {
        let bit = if v.abs() <= INTEGRALITY_TOLERANCE {
            false
        } else if (v - 1.0).abs() <= INTEGRALITY_TOLERANCE {
            true
        } else {
            return Err(format!("variable {name} has non-binary value {v}"));
        };
        match names.get(name.as_str()) {
            Some(&i) => out[i] = bit,
            None if name == ZERO_COLUMN => {}
            None => return Err(format!("solver reported undeclared variable {name}")),
        }
    }
    Ok(out)
}

fn log_tail(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap_or_default();
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(20)..].join("\n")
}

/// Solves `model` with the configured external solver.
///
/// A false constant row proves infeasibility and an empty model is
/// trivially optimal; neither reaches the solver.
pub fn solve(model: &MilpModel, config: &SolverConfig) -> Result<SolveOutcome, SolveError> {
    if config.time_limit.is_nan() || config.time_limit <= 0.0 || !config.time_limit.is_finite() {
        return Err(SolveError::InvalidTimeLimit(config.time_limit));
    }
    if model.constraints.iter().any(|c| c.terms.is_empty() && !c.relation.holds(Decimal::ZERO, c.rhs)) {
        return Ok(SolveOutcome::without_solver(SolveStatus::Infeasible, model));
    }
    if model.variables().is_empty() {
        return Ok(SolveOutcome::without_solver(SolveStatus::Optimal, model));
    }

    let mut builder = tempfile::Builder::new();
    builder.prefix("eon-solve-");
    let dir = match &config.work_dir {
        Some(parent) => {
            fs::create_dir_all(parent)?;
            builder.tempdir_in(parent)?
        }
        None => builder.tempdir()?,
    };
    let lp_file = dir.path().join("model.lp");
    let sol_file = dir.path().join("model.sol");
    let log_file = dir.path().join("solver.log");
    let doc = emit_lp_text(model);
    fs::write(&lp_file, &doc.text)?;

    let argv = command_line(config, &lp_file, &sol_file)?;
    let executable = find_executable(&argv[0]).ok_or_else(|| SolveError::NotFound {
        solver: config.solver.to_string(),
        executable: argv[0].clone(),
        hint: match &config.solver {
            SolverKind::Cbc => {
                "install it (`pip install pulp` ships a CBC binary) or point EON_CBC at the binary".to_string()
            }
            SolverKind::Scip => "install SCIP (`conda install scip`) or point EON_SCIP at the binary".to_string(),
            SolverKind::Command(_) => "check the command template".to_string(),
        },
    })?;

    let log = File::create(&log_file)?;
    let started = Instant::now();
    let mut child = Command::new(&executable)
        .args(&argv[1..])
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log)
        .spawn()?;
    let deadline = Duration::from_secs_f64(config.time_limit + (config.time_limit * 0.2).max(30.0));
    let mut killed = false;
    let exit = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if started.elapsed() > deadline {
            child.kill().ok();
            killed = true;
            break child.wait()?;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let seconds = started.elapsed().as_secs_f64();
    log::debug!("{} exited with {exit} after {seconds:.3}s", config.solver);

    let raw = fs::read_to_string(&sol_file).ok().and_then(|t| parse_solution(&t));
    let mut outcome = match raw {
        None if killed => {
            SolveOutcome { status: SolveStatus::TimeLimit, ..SolveOutcome::error(String::new(), seconds) }
        }
        None => SolveOutcome::error(
            format!("{} exited with {exit} and left no readable solution\n{}", config.solver, log_tail(&log_file)),
            seconds,
        ),
        Some(raw) => {
            let names: HashMap<&str, usize> =
                doc.variable_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
            match raw.status {
                s if s.has_assignment() => match to_assignment(&names, model.variables().len(), &raw.values) {
                    Ok(a) => match model.violated(&a).first() {
                        None => SolveOutcome {
                            status: s,
                            objective: Some(model.objective_value(&a)),
                            assignment: Some(a),
                            seconds,
                            log_path: None,
                            message: None,
                        },
                        Some(&row) => SolveOutcome::error(
                            format!("solver assignment violates row {}", model.constraints[row].name),
                            seconds,
                        ),
                    },
                    // a time-limited relaxation point is not an incumbent
                    Err(_) if s == SolveStatus::Feasible => {
                        SolveOutcome { status: SolveStatus::TimeLimit, ..SolveOutcome::error(String::new(), seconds) }
                    }
                    Err(e) => SolveOutcome::error(e, seconds),
                },
                SolveStatus::SolverError => {
                    SolveOutcome::error(format!("unrecognized solver status\n{}", log_tail(&log_file)), seconds)
                }
                s => SolveOutcome { status: s, ..SolveOutcome::error(String::new(), seconds) },
            }
        }
    };
    if outcome.status != SolveStatus::SolverError {
        outcome.message = None;
    }
    if config.keep_files {
        outcome.log_path = Some(dir.keep().join("solver.log"));
    }
    Ok(outcome)
}
