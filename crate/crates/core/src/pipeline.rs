//! Trim, build, solve, extract and verify in one call, plus the solution
//! document written by the command-line tool.

use std::collections::BTreeMap;
use std::time::Instant;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{extract_paths, verify_coverage, verify_solution, ExtractionError, VerificationReport};
use crate::milp::{build_model, BuildError, Mode, ModelStatistics, Variant};
use crate::model::{DemandId, RestorationInstance, RoutedPath};
use crate::oracle::OracleOutcome;
use crate::solver::{solve, SolveError, SolveOutcome, SolveStatus, SolverConfig};
use crate::trim::{compute_useful_triples, UsefulTripleSet};

pub const TOOL: &str = "eon-restore";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub mode: Mode,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub trim_seconds: f64,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub extract_seconds: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.trim_seconds + self.build_seconds + self.solve_seconds + self.extract_seconds
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub status: SolveStatus,
    pub triples: Option<UsefulTripleSet>,
    /// Set when trimming alone proved the instance infeasible.
    pub infeasible_by_trimming: bool,
    /// Demands dropped before a max-subset solve because trimming found
    /// them non re-routable.
    pub dropped: Vec<DemandId>,
    pub statistics: Option<ModelStatistics>,
    pub outcome: Option<SolveOutcome>,
    pub paths: BTreeMap<DemandId, RoutedPath>,
    pub restored: Option<Vec<DemandId>>,
    pub report: VerificationReport,
    pub timings: PhaseTimings,
}

impl PipelineResult {
    pub fn solver_invoked(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn objective(&self) -> Option<Decimal> {
        self.outcome.as_ref().and_then(|o| o.objective)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
}

/// Runs the full pipeline on `instance`.
///
/// The trimmed variant trims first. In feasibility mode a non re-routable
/// demand ends the run as infeasible before any model is built; in
/// max-subset mode such demands are dropped and the rest is solved.
pub fn run_pipeline(instance: &RestorationInstance, config: &PipelineConfig) -> Result<PipelineResult, PipelineError> {
    let mut timings = PhaseTimings::default();
    let mut result = PipelineResult {
        status: SolveStatus::Infeasible,
        triples: None,
        infeasible_by_trimming: false,
        dropped: Vec::new(),
        statistics: None,
        outcome: None,
        paths: BTreeMap::new(),
        restored: None,
        report: VerificationReport::default(),
        timings,
    };

    let mut working = instance.clone();
    if config.variant == Variant::Trimmed {
        let started = Instant::now();
        let triples = compute_useful_triples(instance);
        timings.trim_seconds = started.elapsed().as_secs_f64();
        if !triples.non_reroutable.is_empty() {
            match config.mode {
                Mode::Feasibility => {
                    result.infeasible_by_trimming = true;
                    result.triples = Some(triples);
                    result.timings = timings;
                    return Ok(result);
                }
                Mode::MaxSubset => {
                    result.dropped = triples.non_reroutable.iter().copied().collect();
                    working = instance.with_demands(|d| !triples.non_reroutable.contains(&d.id));
                }
            }
        }
        result.triples = Some(triples);
    }

    let started = Instant::now();
    let model = build_model(&working, result.triples.as_ref(), config.variant, config.mode)?;
    timings.build_seconds = started.elapsed().as_secs_f64();
    result.statistics = Some(model.statistics());
    log::info!(
        "{} {} model: {} variables, {} rows",
        config.variant.name(),
        config.mode.name(),
        model.variables().len(),
        model.constraints.len()
    );

    let outcome = solve(&model, &config.solver)?;
    timings.solve_seconds = outcome.seconds;
    result.status = outcome.status;

    if let Some(values) = &outcome.assignment {
        let started = Instant::now();
        let extraction = extract_paths(values, &model, &working)?;
        let mut report = verify_solution(&extraction.paths, instance);
        match &extraction.restored {
            Some(r) => verify_coverage(&extraction.paths, r.iter().copied(), &mut report),
            None => verify_coverage(&extraction.paths, instance.demands.iter().map(|d| d.id), &mut report),
        }
        timings.extract_seconds = started.elapsed().as_secs_f64();
        result.paths = extraction.paths;
        result.restored = extraction.restored.map(|r| r.into_iter().collect());
        result.report = report;
    }
    result.outcome = Some(outcome);
    result.timings = timings;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub mode: String,
    pub solver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
}

impl Provenance {
    pub fn new(variant: Option<Variant>, mode: Mode, solver: impl Into<String>) -> Self {
        Provenance {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            variant: variant.map(|v| v.name().to_string()),
            mode: mode.name().to_string(),
            solver: solver.into(),
            seed: None,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub demand: DemandId,
    pub links: Vec<crate::model::LinkId>,
    pub first_color: u32,
    pub width: u32,
}

/// The solution document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: SolveStatus,
    #[serde(with = "rust_decimal::serde::arbitrary_precision_option")]
    pub objective: Option<Decimal>,
    pub paths: Vec<PathRecord>,
    pub restored: Vec<DemandId>,
    pub violations: VerificationReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<DemandId>,
    #[serde(default)]
    pub infeasible_by_trimming: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<PhaseTimings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub min_total_slots: Option<u64>,
    pub max_subset_size: Option<usize>,
    pub optimum_count: u64,
}

fn records(paths: &BTreeMap<DemandId, RoutedPath>) -> Vec<PathRecord> {
    paths
        .iter()
        .map(|(&d, p)| PathRecord { demand: d, links: p.links.clone(), first_color: p.first_color, width: p.width })
        .collect()
}

impl SolutionFile {
    pub fn from_pipeline(result: &PipelineResult, provenance: Provenance) -> Self {
        SolutionFile {
            status: result.status,
            objective: result.objective(),
            paths: records(&result.paths),
            restored: result.restored.clone().unwrap_or_else(|| result.paths.keys().copied().collect()),
            violations: result.report.clone(),
            dropped: result.dropped.clone(),
            infeasible_by_trimming: result.infeasible_by_trimming,
            timings: Some(result.timings),
            oracle: None,
            provenance,
        }
    }

    pub fn from_oracle(outcome: &OracleOutcome, instance: &RestorationInstance, provenance: Provenance) -> Self {
        let mut report = verify_solution(&outcome.witness, instance);
        if outcome.mode == Mode::Feasibility && outcome.feasible {
            verify_coverage(&outcome.witness, instance.demands.iter().map(|d| d.id), &mut report);
        }
        let status = if outcome.feasible || outcome.mode == Mode::MaxSubset {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        };
        SolutionFile {
            status,
            objective: match outcome.mode {
                Mode::Feasibility => outcome.min_total_slots.map(Decimal::from),
                Mode::MaxSubset => None,
            },
            paths: records(&outcome.witness),
            restored: outcome.witness.keys().copied().collect(),
            violations: report,
            dropped: Vec::new(),
            infeasible_by_trimming: false,
            timings: None,
            oracle: Some(OracleSummary {
                min_total_slots: outcome.min_total_slots,
                max_subset_size: outcome.max_subset_size,
                optimum_count: outcome.optimum_count,
            }),
            provenance,
        }
    }

    pub fn path_map(&self) -> BTreeMap<DemandId, RoutedPath> {
        self.paths.iter().map(|r| (r.demand, RoutedPath::new(r.links.clone(), r.first_color, r.width))).collect()
    }

    /// Re-verifies the paths against `instance`: validity, intersections
    /// and, for a solved status, that every restored demand has a path.
    pub fn validate(&self, instance: &RestorationInstance) -> VerificationReport {
        let paths = self.path_map();
        let mut report = verify_solution(&paths, instance);
        if self.status.has_assignment() {
            verify_coverage(&paths, self.restored.iter().copied(), &mut report);
        }
        report
    }
}
