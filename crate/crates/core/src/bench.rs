//! Benchmark runs over a corpus of instances: one cell per (case,
//! variant, solver), reported as CSV and as a Markdown summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::Serialize;
use thiserror::Error;

use crate::io::{from_json_str, load_instance, InstanceError};
use crate::milp::{Mode, Variant};
use crate::model::RestorationInstance;
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineError};
use crate::solver::{SolveError, SolveStatus, SolverConfig, SolverKind};
use crate::testgen::ScenarioManifest;

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone)]
pub struct BenchCase {
    pub name: String,
    pub instance: RestorationInstance,
    pub manifest: Option<ScenarioManifest>,
}

impl BenchCase {
    /// Rows of the summary table group cases by topology, modulation and kind.
    pub fn group(&self) -> String {
        match &self.manifest {
            Some(m) => format!("{} {} {}", m.topology.as_deref().unwrap_or("-"), m.modulation, m.kind.name()),
            None => "unlabelled".to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read corpus directory {path}: {source}")]
    Dir { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Case { path: PathBuf, source: InstanceError },
    #[error("corpus directory {0} holds no instances")]
    Empty(PathBuf),
    #[error("jobs must be at least 1")]
    Jobs,
    #[error(transparent)]
    Solver(#[from] SolveError),
}

/// Loads every `*.json` instance of `dir` in name order, with its
/// `*.manifest.json` when present.
pub fn load_corpus(dir: &Path) -> Result<Vec<BenchCase>, BenchError> {
    let entries = std::fs::read_dir(dir).map_err(|source| BenchError::Dir { path: dir.to_path_buf(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(MANIFEST_SUFFIX)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(BenchError::Empty(dir.to_path_buf()));
    }
    files
        .into_iter()
        .map(|path| {
            let instance = load_instance(&path).map_err(|source| BenchError::Case { path: path.clone(), source })?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let manifest_path = path.with_file_name(format!("{name}{MANIFEST_SUFFIX}"));
            let manifest = match std::fs::read_to_string(&manifest_path) {
                Ok(text) => Some(
                    from_json_str(&text).map_err(|source| BenchError::Case { path: manifest_path.clone(), source })?,
                ),
                Err(_) => None,
            };
            Ok(BenchCase { name, instance, manifest })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub variants: Vec<Variant>,
    pub solvers: Vec<SolverKind>,
    pub time_limit: f64,
    pub jobs: usize,
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub case: String,
    pub group: String,
    pub kind: Option<String>,
    pub modulation: Option<String>,
    pub broken_link: Option<u64>,
    pub variant: Variant,
    pub solver: String,
    pub variables: Option<usize>,
    pub constraints: Option<usize>,
    pub trim_seconds: f64,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub status: String,
    pub objective: Option<Decimal>,
}

impl BenchRow {
    pub fn total_seconds(&self) -> f64 {
        self.trim_seconds + self.build_seconds + self.solve_seconds
    }
}

#[derive(Serialize)]
struct CsvRecord<'a> {
    case: &'a str,
    kind: &'a str,
    modulation: &'a str,
    broken_link: String,
    variant: &'a str,
    solver: &'a str,
    variables: String,
    constraints: String,
    trim_seconds: String,
    build_seconds: String,
    solve_seconds: String,
    status: &'a str,
    objective: String,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn run_cell(
    case: &BenchCase,
    variant: Variant,
    solver: &SolverKind,
    config: &BenchConfig,
) -> Result<BenchRow, SolveError> {
    let pipeline = PipelineConfig {
        variant,
        mode: Mode::Feasibility,
        solver: SolverConfig {
            solver: solver.clone(),
            time_limit: config.time_limit,
            work_dir: config.work_dir.clone(),
            keep_files: false,
        },
    };
    let m = case.manifest.as_ref();
    let mut row = BenchRow {
        case: case.name.clone(),
        group: case.group(),
        kind: m.map(|m| m.kind.name().to_string()),
        modulation: m.map(|m| m.modulation.to_string()),
        broken_link: m.map(|m| m.broken_link.0),
        variant,
        solver: solver.to_string(),
        variables: None,
        constraints: None,
        trim_seconds: 0.0,
        build_seconds: 0.0,
        solve_seconds: 0.0,
        status: String::new(),
        objective: None,
    };
    match run_pipeline(&case.instance, &pipeline) {
        Ok(r) => {
            row.variables = r.statistics.as_ref().map(|s| s.variables);
            row.constraints = r.statistics.as_ref().map(|s| s.constraints);
            row.trim_seconds = r.timings.trim_seconds;
            row.build_seconds = r.timings.build_seconds;
            row.solve_seconds = r.timings.solve_seconds;
            row.status = if r.infeasible_by_trimming { "infeasible_by_trimming".into() } else { r.status.to_string() };
            row.objective = r.objective();
            if r.status.has_assignment() && !r.report.is_clean() {
                log::error!("{} {}: solution failed verification: {:?}", case.name, variant.name(), r.report);
                row.status = "unverified".into();
            }
        }
        Err(PipelineError::Solve(e)) => return Err(e),
        Err(e) => {
            log::error!("{} {}: {e}", case.name, variant.name());
            row.status = SolveStatus::SolverError.to_string();
        }
    }
    Ok(row)
}

/// Runs every (case, variant, solver) cell, up to `jobs` at a time. Rows
/// come back in case, variant, solver order whatever the scheduling.
pub fn run_bench(cases: &[BenchCase], config: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    if config.jobs == 0 {
        return Err(BenchError::Jobs);
    }
    let cells: Vec<(&BenchCase, Variant, &SolverKind)> = cases
        .iter()
        .flat_map(|c| config.variants.iter().flat_map(move |&v| config.solvers.iter().map(move |s| (c, v, s))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build().expect("thread pool");
    let rows: Result<Vec<BenchRow>, SolveError> =
        pool.install(|| cells.par_iter().map(|&(c, v, s)| run_cell(c, v, s, config)).collect());
    Ok(rows?)
}

pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(CsvRecord {
            case: &r.case,
            kind: r.kind.as_deref().unwrap_or(""),
            modulation: r.modulation.as_deref().unwrap_or(""),
            broken_link: opt(&r.broken_link),
            variant: r.variant.name(),
            solver: &r.solver,
            variables: opt(&r.variables),
            constraints: opt(&r.constraints),
            trim_seconds: format!("{:.6}", r.trim_seconds),
            build_seconds: format!("{:.6}", r.build_seconds),
            solve_seconds: format!("{:.6}", r.solve_seconds),
            status: &r.status,
            objective: opt(&r.objective),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Summary table: one row per case group with mean variable counts per
/// variant and mean runtime per (solver, variant), repeated without the
/// hard cases. A case is hard when any of its cells hit the time limit or
/// ran longer than `hard_threshold` seconds.
pub fn render_markdown(rows: &[BenchRow], hard_threshold: f64) -> String {
    let mut variants: Vec<Variant> = rows.iter().map(|r| r.variant).collect();
    variants.sort();
    variants.dedup();
    let mut solvers: Vec<&str> = Vec::new();
    for r in rows {
        if !solvers.contains(&r.solver.as_str()) {
            solvers.push(&r.solver);
        }
    }
    let hard: std::collections::BTreeSet<&str> = rows
        .iter()
        .filter(|r| r.status == SolveStatus::TimeLimit.name() || r.total_seconds() > hard_threshold)
        .map(|r| r.case.as_str())
        .collect();
    let mut groups: BTreeMap<&str, Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.group).or_default().push(r);
    }

    let mut out = String::new();
    let mut header = vec!["case".to_string(), "#tests".to_string()];
    header.extend(variants.iter().map(|v| format!("vars {}", v.name())));
    for s in &solvers {
        header.extend(variants.iter().map(|v| format!("{s} {} (s)", v.name())));
    }
    writeln!(out, "| {} |", header.join(" | ")).unwrap();
    writeln!(out, "|{}", "---|".repeat(header.len())).unwrap();
    for (group, members) in &groups {
        for excluded in [false, true] {
            let kept: Vec<&&BenchRow> =
                members.iter().filter(|r| !excluded || !hard.contains(r.case.as_str())).collect();
            let mut cases: Vec<&str> = kept.iter().map(|r| r.case.as_str()).collect();
            cases.dedup();
            let label = if excluded { format!("{group} (excl. hard)") } else { group.to_string() };
            let mut cells = vec![label, cases.len().to_string()];
            for v in &variants {
                let m = mean(kept.iter().filter(|r| r.variant == *v).filter_map(|r| r.variables.map(|x| x as f64)));
                cells.push(m.map(|m| format!("{m:.0}")).unwrap_or_else(|| "-".into()));
            }
            for s in &solvers {
                for v in &variants {
                    let cell: Vec<&&&BenchRow> = kept.iter().filter(|r| r.variant == *v && r.solver == *s).collect();
                    let m = mean(cell.iter().map(|r| r.total_seconds()));
                    let timeouts = cell.iter().filter(|r| r.status == SolveStatus::TimeLimit.name()).count();
                    let mut text = m.map(|m| format!("{m:.2}")).unwrap_or_else(|| "-".into());
                    if timeouts > 0 {
                        write!(text, " ({timeouts} TL)").unwrap();
                    }
                    cells.push(text);
                }
            }
            writeln!(out, "| {} |", cells.join(" | ")).unwrap();
        }
    }
    writeln!(out, "\nHard-case threshold: {hard_threshold} s; hard cases: {}", hard.len()).unwrap();

    writeln!(
        out,
        "\n| case | variant | solver | variables | status | objective | total (s) |\n|---|---|---|---|---|---|---|"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "| {}{} | {} | {} | {} | {} | {} | {:.2} |",
            r.case,
            if hard.contains(r.case.as_str()) { " (hard)" } else { "" },
            r.variant.name(),
            r.solver,
            opt(&r.variables),
            r.status,
            opt(&r.objective),
            r.total_seconds()
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(case: &str, variant: Variant, vars: usize, secs: f64, status: &str) -> BenchRow {
        BenchRow {
            case: case.into(),
            group: "g".into(),
            kind: Some("first".into()),
            modulation: Some("qpsk".into()),
            broken_link: Some(3),
            variant,
            solver: "cbc".into(),
            variables: Some(vars),
            constraints: Some(1),
            trim_seconds: 0.0,
            build_seconds: 0.0,
            solve_seconds: secs,
            status: status.into(),
            objective: Some(Decimal::from(4)),
        }
    }

    #[test]
    fn csv_header_and_blank_fields() {
        let mut r = row("a", Variant::Trimmed, 10, 1.5, "optimal");
        r.objective = None;
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "case,kind,modulation,broken_link,variant,solver,variables,constraints,trim_seconds,build_seconds,solve_seconds,status,objective\n\
             a,first,qpsk,3,trimmed,cbc,10,1,0.000000,0.000000,1.500000,optimal,\n"
        );
    }

    #[test]
    fn markdown_excludes_hard_cases() {
        let rows = vec![
            row("a", Variant::Base, 100, 1.0, "optimal"),
            row("a", Variant::Trimmed, 10, 0.5, "optimal"),
            row("b", Variant::Base, 300, 9.0, "time_limit"),
            row("b", Variant::Trimmed, 30, 0.5, "optimal"),
        ];
        let md = render_markdown(&rows, 5.0);
        assert!(md.contains("| g | 2 | 200 | 20 | 5.00 (1 TL) | 0.50 |"), "{md}");
        assert!(md.contains("| g (excl. hard) | 1 | 100 | 10 | 1.00 | 0.50 |"), "{md}");
        assert!(md.contains("| b (hard) | base |"));
    }
}
