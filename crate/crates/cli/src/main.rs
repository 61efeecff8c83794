//! `eon-restore`: restoration of broken demands in flex-grid optical networks.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0    | success; `solve` and `oracle` found a solution, `trim` found every demand re-routable, `validate` found nothing wrong |
//! | 1    | unreadable or malformed input, or any other runtime error |
//! | 2    | bad command-line arguments |
//! | 3    | the solver is missing or failed |
//! | 10   | infeasible |
//! | 20   | time limit reached without a solution |
//! | 30   | a solution failed verification |

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use eon_restore::bench::{
    load_corpus, render_markdown, run_bench, write_csv, BenchConfig, BenchError, MANIFEST_SUFFIX,
};
use eon_restore::io::{from_json_str, instance_to_string, load_instance};
use eon_restore::milp::{Mode, Variant};
use eon_restore::model::{LinkId, RestorationInstance};
use eon_restore::oracle::{oracle_solve, OracleGuard};
use eon_restore::pipeline::{run_pipeline, PipelineConfig, PipelineError, Provenance, SolutionFile};
use eon_restore::solver::{SolveError, SolveStatus, SolverConfig, SolverKind, DEFAULT_TIME_LIMIT};
use eon_restore::testgen::{
    choose_link, eligible_links, generate_loaded_network, make_first_kind, make_second_kind, second_kind_eligible,
    Modulation, ScenarioKind, ScenarioManifest, DEFAULT_WIDTH_SCHEDULE,
};
use eon_restore::trim::compute_useful_triples;

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_SOLVER: u8 = 3;
const EXIT_INFEASIBLE: u8 = 10;
const EXIT_TIME_LIMIT: u8 = 20;
const EXIT_UNVERIFIED: u8 = 30;

#[derive(Parser)]
#[command(name = "eon-restore", version, about = "Restore broken demands in flex-grid optical networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute useful (demand, link, color) triples.
    Trim {
        instance: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Build and solve the restoration model.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "trimmed")]
        variant: Variant,
        #[arg(long, default_value = "feasibility")]
        mode: Mode,
        #[command(flatten)]
        solver: SolverArgs,
        /// Recorded in the provenance; defaults to the seed of a manifest next to the instance.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive search on small instances.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value = "feasibility")]
        mode: Mode,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Generate a restoration instance from a topology.
    Gen(GenArgs),
    /// Check a solution against an instance.
    Validate { instance: PathBuf, solution: PathBuf },
    /// Solve every instance of a corpus directory with several variants and solvers.
    Bench {
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "base,notrim,trimmed")]
        variants: Vec<Variant>,
        #[arg(long, value_delimiter = ',', default_value = "cbc")]
        solvers: Vec<SolverKind>,
        #[arg(long, default_value_t = DEFAULT_TIME_LIMIT)]
        time_limit: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        work_dir: Option<PathBuf>,
        /// Where to write the CSV; standard output if unset.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        markdown: Option<PathBuf>,
        /// Cases whose slowest cell takes at least this many seconds are hard.
        #[arg(long, default_value_t = 60.0)]
        hard_threshold: f64,
    },
}

#[derive(Args)]
struct SolverArgs {
    /// cbc, scip or cmd:<template> with {lp_file}, {sol_file} and {time_limit}.
    #[arg(long, default_value = "cbc")]
    solver: SolverKind,
    #[arg(long, default_value_t = DEFAULT_TIME_LIMIT)]
    time_limit: f64,
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// Keep the LP, solution and log files.
    #[arg(long)]
    keep_files: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            solver: self.solver.clone(),
            time_limit: self.time_limit,
            work_dir: self.work_dir.clone(),
            keep_files: self.keep_files,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    topology: PathBuf,
    #[arg(long)]
    modulation: Modulation,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "first")]
    kind: ScenarioKind,
    /// The broken link; for the second kind, the first break. Drawn from the seed if unset.
    #[arg(long = "break")]
    break_link: Option<u64>,
    /// Second kind: the second break. Drawn from the seed if unset.
    #[arg(long)]
    second_break: Option<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WIDTH_SCHEDULE.to_vec())]
    widths: Vec<u32>,
    /// Generate this many scenarios with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// File stem; `-<seed>` is appended when --count is above 1.
    #[arg(long)]
    name: Option<String>,
    /// Solve each first-kind scenario with the trimmed model and fail unless it is feasible.
    #[arg(long)]
    self_test: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let solver_failed = e.chain().any(|c| {
                c.downcast_ref::<SolveError>().is_some()
                    || matches!(c.downcast_ref::<BenchError>(), Some(BenchError::Solver(_)))
            });
            ExitCode::from(if solver_failed { EXIT_SOLVER } else { EXIT_ERROR })
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Trim { instance, out } => cmd_trim(&instance, out.as_deref()),
        Command::Solve { instance, variant, mode, solver, seed, out } => {
            cmd_solve(&instance, variant, mode, &solver, seed, out.as_deref())
        }
        Command::Oracle { instance, mode, out } => cmd_oracle(&instance, mode, out.as_deref()),
        Command::Gen(args) => cmd_gen(&args),
        Command::Validate { instance, solution } => cmd_validate(&instance, &solution),
        Command::Bench { corpus, variants, solvers, time_limit, jobs, work_dir, csv, markdown, hard_threshold } => {
            let cases = load_corpus(&corpus)?;
            let config = BenchConfig { variants, solvers, time_limit, jobs, work_dir };
            let rows = run_bench(&cases, &config)?;
            match csv {
                Some(path) => {
                    let file =
                        std::fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
                    write_csv(&rows, file)?;
                }
                None => write_csv(&rows, std::io::stdout().lock())?,
            }
            if let Some(path) = markdown {
                std::fs::write(&path, render_markdown(&rows, hard_threshold))
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn read_instance(path: &Path) -> Result<RestorationInstance> {
    load_instance(path).with_context(|| format!("invalid instance {}", path.display()))
}

fn emit(out: Option<&Path>, mut text: String) -> Result<()> {
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn cmd_trim(path: &Path, out: Option<&Path>) -> Result<u8> {
    let instance = read_instance(path)?;
    let report = compute_useful_triples(&instance).report(&instance);
    emit(out, to_json(&report))?;
    Ok(if report.infeasible { EXIT_INFEASIBLE } else { EXIT_OK })
}

fn manifest_seed(instance: &Path) -> Option<u64> {
    let stem = instance.file_stem()?.to_str()?;
    let text = std::fs::read_to_string(instance.with_file_name(format!("{stem}{MANIFEST_SUFFIX}"))).ok()?;
    from_json_str::<ScenarioManifest>(&text).ok().map(|m| m.seed)
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal | SolveStatus::Feasible => EXIT_OK,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::TimeLimit => EXIT_TIME_LIMIT,
        SolveStatus::SolverError => EXIT_SOLVER,
    }
}

fn cmd_solve(
    path: &Path,
    variant: Variant,
    mode: Mode,
    solver: &SolverArgs,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<u8> {
    let instance = read_instance(path)?;
    let config = PipelineConfig { variant, mode, solver: solver.config() };
    let result = run_pipeline(&instance, &config).map_err(|e| match e {
        PipelineError::Solve(s) => anyhow::Error::new(s),
        other => anyhow::Error::new(other).context("the solver returned an assignment that is not a set of paths"),
    })?;
    if let Some(o) = &result.outcome {
        if let Some(m) = &o.message {
            log::warn!("{m}");
        }
        if let Some(p) = &o.log_path {
            log::info!("solver files kept in {}", p.display());
        }
    }
    let mut provenance = Provenance::new(Some(variant), mode, solver.solver.to_string());
    provenance.seed = seed.or_else(|| manifest_seed(path));
    provenance.time_limit = Some(solver.time_limit);
    let solution = SolutionFile::from_pipeline(&result, provenance);
    emit(out, to_json(&solution))?;
    if !solution.violations.is_clean() {
        eprintln!("error: the extracted solution fails verification");
        return Ok(EXIT_UNVERIFIED);
    }
    Ok(status_code(solution.status))
}

fn cmd_oracle(path: &Path, mode: Mode, out: Option<&Path>) -> Result<u8> {
    let instance = read_instance(path)?;
    let outcome = oracle_solve(&instance, mode, &OracleGuard::default())?;
    let provenance = Provenance::new(None, mode, "oracle");
    let solution = SolutionFile::from_oracle(&outcome, &instance, provenance);
    emit(out, to_json(&solution))?;
    Ok(status_code(solution.status))
}

fn cmd_validate(instance: &Path, solution: &Path) -> Result<u8> {
    let instance = read_instance(instance)?;
    let text = std::fs::read_to_string(solution).with_context(|| format!("cannot read {}", solution.display()))?;
    let solution: SolutionFile =
        from_json_str(&text).with_context(|| format!("invalid solution {}", solution.display()))?;
    let report = solution.validate(&instance);
    emit(None, to_json(&report))?;
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_UNVERIFIED })
}

fn cmd_gen(args: &GenArgs) -> Result<u8> {
    if args.count == 0 {
        bail!("--count must be at least 1");
    }
    if args.widths.is_empty() || args.widths.contains(&0) {
        bail!("--widths needs at least one positive width");
    }
    let topology = read_instance(&args.topology)?;
    if !topology.demands.is_empty() {
        log::warn!("ignoring the demands of {}", args.topology.display());
    }
    let topology_name = args.topology.file_stem().and_then(|s| s.to_str()).unwrap_or("topology").to_string();
    let stem = args.name.clone().unwrap_or_else(|| format!("{topology_name}-{}-{}", args.modulation, args.kind.name()));
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    let mut code = EXIT_OK;
    for seed in args.seed..args.seed + args.count {
        let loaded = generate_loaded_network(&topology.network, args.modulation, &args.widths, seed)?;
        let report = loaded.verify();
        if !report.is_clean() {
            bail!("seed {seed}: the provisioned paths fail verification: {}", to_json(&report));
        }
        let eligible = eligible_links(loaded.provisioned.iter().map(|p| (&p.demand, &p.main)));
        let first = choose_link(&eligible, args.break_link.map(LinkId), seed)
            .with_context(|| format!("seed {seed}: cannot pick the broken link"))?;
        let scenario = match args.kind {
            ScenarioKind::First => make_first_kind(&loaded, first)?,
            ScenarioKind::Second => {
                let eligible = second_kind_eligible(&loaded, first)?;
                let second = choose_link(&eligible, args.second_break.map(LinkId), seed.wrapping_add(1))
                    .with_context(|| format!("seed {seed}: cannot pick the second broken link"))?;
                make_second_kind(&loaded, first, second)?
            }
        };
        let mut manifest = ScenarioManifest::new(&loaded, &scenario);
        manifest.topology = Some(topology_name.clone());

        let name = if args.count > 1 || args.name.is_none() { format!("{stem}-{seed}") } else { stem.clone() };
        let instance_path = args.out_dir.join(format!("{name}.json"));
        let manifest_path = args.out_dir.join(format!("{name}{MANIFEST_SUFFIX}"));
        std::fs::write(&instance_path, instance_to_string(&scenario.instance))
            .with_context(|| format!("cannot write {}", instance_path.display()))?;
        std::fs::write(&manifest_path, to_json(&manifest) + "\n")
            .with_context(|| format!("cannot write {}", manifest_path.display()))?;
        println!("{}", instance_path.display());

        if args.self_test && scenario.kind == ScenarioKind::First {
            let config =
                PipelineConfig { variant: Variant::Trimmed, mode: Mode::Feasibility, solver: args.solver.config() };
            let result = run_pipeline(&scenario.instance, &config)?;
            let ok = result.status.has_assignment() && result.report.is_clean();
            log::info!("seed {seed}: self-test {}", result.status.name());
            if !ok {
                eprintln!("error: seed {seed}: first-kind scenario not restored ({})", result.status.name());
                code =
                    code.max(if result.status == SolveStatus::TimeLimit { EXIT_TIME_LIMIT } else { EXIT_UNVERIFIED });
            }
        }
    }
    Ok(code)
}
