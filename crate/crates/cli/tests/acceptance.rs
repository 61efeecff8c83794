//! Acceptance checks. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use eon_restore::extract::verify_solution;
use eon_restore::fixtures;
use eon_restore::io::{instance_to_string, load_instance};
use eon_restore::lp::emit_lp_text;
use eon_restore::milp::{build_model, Mode, Variant};
use eon_restore::model::{DemandId, LinkId, RestorationInstance};
use eon_restore::oracle::{
    oracle_solve, oracle_useful_triples, random_instance, OracleGuard, OracleOutcome, RandomInstanceParams, Semantics,
};
use eon_restore::pipeline::{run_pipeline, PipelineConfig, PipelineResult};
use eon_restore::solver::{SolveStatus, SolverConfig, SolverKind};
use eon_restore::testgen::{
    choose_link, eligible_links, generate_loaded_network, make_first_kind, Modulation, DEFAULT_WIDTH_SCHEDULE,
};
use eon_restore::trim::compute_useful_triples;
use rust_decimal::Decimal;

const CORPUS_SEEDS: u64 = 200;
const MODULATIONS: [Modulation; 3] = [Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam8];

type Check = Result<String, String>;

fn corpus() -> Vec<(u64, RestorationInstance)> {
    (0..CORPUS_SEEDS).map(|s| (s, random_instance(s, &RandomInstanceParams::default()))).collect()
}

fn solver(time_limit: f64) -> SolverConfig {
    SolverConfig::default().with_time_limit(time_limit)
}

fn run(inst: &RestorationInstance, variant: Variant, mode: Mode) -> PipelineResult {
    let config = PipelineConfig { variant, mode, solver: solver(60.0) };
    run_pipeline(inst, &config).unwrap_or_else(|e| panic!("pipeline failed: {e}"))
}

fn topology(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../topologies").join(format!("{name}.json"))
}

fn expected_status(oracle: &OracleOutcome) -> SolveStatus {
    if oracle.feasible {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    }
}

fn first_failures(failures: &[String]) -> String {
    failures.iter().take(5).cloned().collect::<Vec<_>>().join("; ")
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("{what} took {:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs()))
    }
}

fn trimming_oracle_equivalence() -> Check {
    let started = Instant::now();
    let guard = OracleGuard::default();
    let mut failures = Vec::new();
    let mut triples = 0;
    for (seed, inst) in corpus() {
        let oracle = oracle_useful_triples(&inst, Semantics::Walk, &guard).map_err(|e| e.to_string())?;
        let trimmed = compute_useful_triples(&inst);
        triples += trimmed.len();
        if trimmed != oracle {
            failures.push(format!("seed {seed}"));
        }
    }
    let elapsed = started.elapsed();
    if !failures.is_empty() {
        return Err(format!("{} of {CORPUS_SEEDS} instances differ: {}", failures.len(), first_failures(&failures)));
    }
    within(elapsed, Duration::from_secs(120), "the corpus")?;
    Ok(format!("{CORPUS_SEEDS} instances, {triples} useful triples, {:.2} s", elapsed.as_secs_f64()))
}

fn feasibility_equivalence() -> Check {
    let started = Instant::now();
    let guard = OracleGuard::default();
    let mut failures = Vec::new();
    let mut feasible = 0;
    for (seed, inst) in corpus() {
        let oracle = oracle_solve(&inst, Mode::Feasibility, &guard).map_err(|e| e.to_string())?;
        let r = run(&inst, Variant::Trimmed, Mode::Feasibility);
        let objective = oracle.min_total_slots.map(Decimal::from);
        if r.status != expected_status(&oracle)
            || (oracle.feasible && r.objective() != objective)
            || !r.report.is_clean()
        {
            failures.push(format!("seed {seed}: {} {:?} vs oracle {:?}", r.status.name(), r.objective(), objective));
        }
        feasible += usize::from(oracle.feasible);
    }
    let elapsed = started.elapsed();
    if !failures.is_empty() {
        return Err(format!("{} mismatches: {}", failures.len(), first_failures(&failures)));
    }
    within(elapsed, Duration::from_secs(600), "the corpus")?;
    Ok(format!(
        "{CORPUS_SEEDS} instances ({feasible} feasible), status and objective match, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn variant_agreement() -> Check {
    let mut failures = Vec::new();
    for (seed, inst) in corpus() {
        let results: Vec<_> = Variant::ALL.iter().map(|&v| run(&inst, v, Mode::Feasibility)).collect();
        let first = (results[0].status, results[0].objective());
        if results.iter().any(|r| (r.status, r.objective()) != first || !r.report.is_clean()) {
            let seen: Vec<_> = results.iter().map(|r| format!("{} {:?}", r.status.name(), r.objective())).collect();
            failures.push(format!("seed {seed}: {}", seen.join(" / ")));
        }
    }
    if !failures.is_empty() {
        return Err(format!("{} disagreements: {}", failures.len(), first_failures(&failures)));
    }
    Ok(format!("base, notrim and trimmed agree on {CORPUS_SEEDS} instances"))
}

fn max_subset_optimality() -> Check {
    let guard = OracleGuard::default();
    let mut failures = Vec::new();
    let mut full = 0;
    for (seed, inst) in corpus() {
        let oracle = oracle_solve(&inst, Mode::MaxSubset, &guard).map_err(|e| e.to_string())?;
        let feasible = run(&inst, Variant::Trimmed, Mode::Feasibility).status == SolveStatus::Optimal;
        for variant in Variant::ALL {
            let r = run(&inst, variant, Mode::MaxSubset);
            let restored = r.restored.as_ref().map_or(0, Vec::len);
            let ok = r.status == SolveStatus::Optimal
                && Some(restored) == oracle.max_subset_size
                && (!feasible || restored == inst.demands.len())
                && r.report.is_clean();
            if !ok {
                failures.push(format!(
                    "seed {seed} {}: {} restored {restored} vs oracle {:?}",
                    variant.name(),
                    r.status.name(),
                    oracle.max_subset_size
                ));
            }
        }
        full += usize::from(feasible);
    }
    if !failures.is_empty() {
        return Err(format!("{} mismatches: {}", failures.len(), first_failures(&failures)));
    }
    Ok(format!("{CORPUS_SEEDS} instances on every variant, {full} with all demands restored"))
}

fn golden_fixtures() -> Check {
    let guard = OracleGuard::default();
    let mut notes = Vec::new();
    let check = |cond: bool, what: &str| if cond { Ok(()) } else { Err(what.to_string()) };
    for (name, inst) in [("T1", fixtures::t1()), ("T2", fixtures::t2()), ("T3", fixtures::t3()), ("T4", fixtures::t4())]
    {
        let walk = oracle_useful_triples(&inst, Semantics::Walk, &guard).map_err(|e| e.to_string())?;
        check(compute_useful_triples(&inst) == walk, &format!("{name}: trimming differs from the oracle"))?;
    }

    let t1 = fixtures::t1();
    let oracle = oracle_solve(&t1, Mode::Feasibility, &guard).map_err(|e| e.to_string())?;
    check(oracle.min_total_slots == Some(2), "T1: oracle minimum is not 2")?;
    for v in Variant::ALL {
        let r = run(&t1, v, Mode::Feasibility);
        check(r.status == SolveStatus::Optimal && r.objective() == Some(Decimal::from(2)), "T1: objective is not 2")?;
    }
    notes.push("T1 objective 2");

    let t2 = fixtures::t2();
    let d2 = DemandId(2);
    let trimmed = compute_useful_triples(&t2);
    for l in [LinkId(1), LinkId(2)] {
        check(trimmed.first_colors(d2, l).iter().eq([2]), "T2: firstColors(d2, .) is not {2}")?;
    }
    for v in Variant::ALL {
        let r = run(&t2, v, Mode::Feasibility);
        check(r.status == SolveStatus::Optimal, "T2: not feasible")?;
        check(r.paths[&d2].first_color == 2, "T2: first color is not 2")?;
    }
    notes.push("T2 first color 2");

    let t3 = fixtures::t3();
    let oracle = oracle_solve(&t3, Mode::MaxSubset, &guard).map_err(|e| e.to_string())?;
    check(oracle.max_subset_size == Some(1), "T3: oracle max subset is not 1")?;
    for v in Variant::ALL {
        check(run(&t3, v, Mode::Feasibility).status == SolveStatus::Infeasible, "T3: not infeasible")?;
        let r = run(&t3, v, Mode::MaxSubset);
        check(r.restored.as_ref().map(Vec::len) == Some(1), "T3: max subset is not 1")?;
    }
    notes.push("T3 infeasible, max subset 1");

    let t4 = fixtures::t4();
    let d4 = DemandId(4);
    let trimmed = compute_useful_triples(&t4);
    check(trimmed.is_useful(d4, LinkId(1), 4), "T4: (d4, L1, 4) is not useful")?;
    check(!trimmed.first_colors(d4, LinkId(1)).contains(4), "T4: 4 is a first color of (d4, L1)")?;
    for v in Variant::ALL {
        let r = run(&t4, v, Mode::Feasibility);
        check(r.status == SolveStatus::Optimal && r.report.is_clean(), "T4: not feasible")?;
        let p = &r.paths[&d4];
        check(p.width == 2 && p.last_color() == p.first_color + 1, "T4: range is not two contiguous slots")?;
    }
    notes.push("T4 contiguous width 2, (d4,L1,4) useful, 4 not a first color");
    Ok(notes.join(", "))
}

struct LargeCase {
    label: String,
    base_variables: usize,
    result: PipelineResult,
}

fn ring_cases() -> Result<Vec<LargeCase>, String> {
    let topo = load_instance(&topology("ring14")).map_err(|e| e.to_string())?;
    let net = &topo.network;
    if net.node_count() != 14 || net.links().len() != 21 || net.slot_count() != 80 {
        return Err("ring14 is not a 14-node, 21-link, 80-slot topology".into());
    }
    let mut cases = Vec::new();
    for modulation in MODULATIONS {
        let seed = 0;
        let loaded =
            generate_loaded_network(net, modulation, &DEFAULT_WIDTH_SCHEDULE, seed).map_err(|e| e.to_string())?;
        let eligible = eligible_links(loaded.provisioned.iter().map(|p| (&p.demand, &p.main)));
        let link = choose_link(&eligible, None, seed).map_err(|e| e.to_string())?;
        let scenario = make_first_kind(&loaded, link).map_err(|e| e.to_string())?;
        let inst = scenario.instance;
        let base = build_model(&inst, None, Variant::Base, Mode::Feasibility).map_err(|e| e.to_string())?;
        let config = PipelineConfig { variant: Variant::Trimmed, mode: Mode::Feasibility, solver: solver(120.0) };
        let result = run_pipeline(&inst, &config).map_err(|e| e.to_string())?;
        cases.push(LargeCase {
            label: format!("{modulation} link {link} ({} demands)", inst.demands.len()),
            base_variables: base.variables().len(),
            result,
        });
    }
    Ok(cases)
}

fn trimming_reduction(cases: &[LargeCase]) -> Check {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for c in cases {
        let trimmed = c.result.statistics.as_ref().map_or(0, |s| s.variables);
        let ratio = trimmed as f64 / c.base_variables as f64;
        let solve = c.result.timings.solve_seconds;
        notes.push(format!("{}: {trimmed}/{} = {:.1}%, solve {solve:.2} s", c.label, c.base_variables, 100.0 * ratio));
        if ratio > 0.25 || solve >= 120.0 || c.result.status != SolveStatus::Optimal {
            failures.push(c.label.clone());
        }
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("failed on {}: {}", failures.join(", "), notes.join("; ")))
    }
}

fn first_kind_feasibility() -> Check {
    let mut failures = Vec::new();
    let mut count = 0;
    for name in ["grid3x4", "ring14"] {
        let topo = load_instance(&topology(name)).map_err(|e| e.to_string())?;
        for seed in 0..10u64 {
            let modulation = MODULATIONS[seed as usize % 3];
            let loaded = generate_loaded_network(&topo.network, modulation, &DEFAULT_WIDTH_SCHEDULE, seed)
                .map_err(|e| e.to_string())?;
            if !loaded.verify().is_clean() {
                failures.push(format!("{name} seed {seed}: provisioning fails verification"));
                continue;
            }
            let eligible = eligible_links(loaded.provisioned.iter().map(|p| (&p.demand, &p.main)));
            let link = choose_link(&eligible, None, seed).map_err(|e| e.to_string())?;
            let scenario = make_first_kind(&loaded, link).map_err(|e| e.to_string())?;
            let config = PipelineConfig { variant: Variant::Trimmed, mode: Mode::Feasibility, solver: solver(120.0) };
            let r = run_pipeline(&scenario.instance, &config).map_err(|e| e.to_string())?;
            let certified = verify_solution(&r.paths, &scenario.instance).is_clean()
                && r.paths.len() == scenario.instance.demands.len();
            if !r.status.has_assignment() || !certified {
                failures.push(format!("{name} {modulation} seed {seed}: {}", r.status.name()));
            }
            count += 1;
        }
    }
    if failures.is_empty() {
        Ok(format!("{count} scenarios on grid3x4 and ring14, all restored"))
    } else {
        Err(format!("{} of {count} not restored: {}", failures.len(), first_failures(&failures)))
    }
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_eon-restore")
}

fn infeasibility_shortcut() -> Check {
    let guard = OracleGuard::default();
    // Any attempt to start this solver is an error, so success proves it was never called.
    let absent = SolverConfig::new(SolverKind::Command("/nonexistent/eon-solver {lp_file} {sol_file}".into()));
    let mut shortcut = Vec::new();
    for (seed, inst) in corpus() {
        if compute_useful_triples(&inst).non_reroutable.is_empty() {
            continue;
        }
        let config = PipelineConfig { variant: Variant::Trimmed, mode: Mode::Feasibility, solver: absent.clone() };
        let r = run_pipeline(&inst, &config).map_err(|e| format!("seed {seed}: {e}"))?;
        if r.status != SolveStatus::Infeasible || !r.infeasible_by_trimming || r.solver_invoked() {
            return Err(format!("seed {seed}: not decided by trimming"));
        }
        if oracle_solve(&inst, Mode::Feasibility, &guard).map_err(|e| e.to_string())?.feasible {
            return Err(format!("seed {seed}: trimming claims infeasible but the oracle restores it"));
        }
        shortcut.push((seed, inst));
    }
    let Some((seed, inst)) = shortcut.first() else {
        return Err("no corpus instance has a non re-routable demand".into());
    };

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join(format!("nonroutable-{seed}.json"));
    std::fs::write(&path, instance_to_string(inst)).map_err(|e| e.to_string())?;
    let trim = Command::new(binary()).arg("trim").arg(&path).output().map_err(|e| e.to_string())?;
    let solve = Command::new(binary())
        .args(["solve", "--solver", "cmd:/nonexistent/eon-solver {lp_file} {sol_file}"])
        .arg(&path)
        .output()
        .map_err(|e| e.to_string())?;
    let trim_json: serde_json::Value = serde_json::from_slice(&trim.stdout).map_err(|e| e.to_string())?;
    if trim.status.code() != Some(10) || trim_json["infeasible"] != serde_json::Value::Bool(true) {
        return Err(format!("`trim` exited {:?}", trim.status.code()));
    }
    if solve.status.code() != Some(10) {
        return Err(format!("`solve` with an absent solver exited {:?}", solve.status.code()));
    }
    Ok(format!(
        "{} corpus instances decided by trimming with no solver call, all oracle-infeasible; `trim` and `solve` exit 10",
        shortcut.len()
    ))
}

fn phase_attribution(cases: &[LargeCase]) -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for c in cases {
        let t = &c.result.timings;
        let share = t.trim_seconds / t.total();
        ok &= share < 0.10;
        notes.push(format!("{}: trim {:.4} s of {:.3} s = {:.2}%", c.label, t.trim_seconds, t.total(), 100.0 * share));
    }
    if ok {
        Ok(notes.join("; "))
    } else {
        Err(notes.join("; "))
    }
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn cli(args: &[&str], dirs: &[&Path]) -> Result<(), String> {
    let mut cmd = Command::new(binary());
    cmd.args(args);
    for d in dirs {
        cmd.arg(d);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn strip_timings(csv: &[u8]) -> String {
    String::from_utf8_lossy(csv)
        .lines()
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            cells
                .iter()
                .enumerate()
                .filter(|(i, _)| !(8..=10).contains(i))
                .map(|(_, c)| *c)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let grid = topology("grid3x4");
    let ring = topology("ring14");
    let gens: [(&Path, [&str; 6]); 3] = [
        (&grid, ["--modulation", "8qam", "--seed", "11", "--kind", "first"]),
        (&grid, ["--modulation", "8qam", "--seed", "12", "--kind", "second"]),
        (&ring, ["--modulation", "qpsk", "--seed", "13", "--kind", "first"]),
    ];
    let mut files = 0;
    for dir in [a.path(), b.path()] {
        for (topo, args) in &gens {
            let mut full = vec!["gen", topo.to_str().ok_or("path")?];
            full.extend_from_slice(args);
            full.push("--out-dir");
            cli(&full, &[dir])?;
        }
    }
    let mut names: Vec<_> =
        std::fs::read_dir(a.path()).map_err(|e| e.to_string())?.flatten().map(|e| e.file_name()).collect();
    names.sort();
    for name in &names {
        if read(&a.path().join(name))? != read(&b.path().join(name))? {
            return Err(format!("{} differs between runs", name.to_string_lossy()));
        }
        files += 1;
    }

    let mut lp_bytes = 0;
    for name in names.iter().filter_map(|n| n.to_str()).filter(|n| !n.ends_with(".manifest.json")) {
        let x = load_instance(&a.path().join(name)).map_err(|e| e.to_string())?;
        let y = load_instance(&b.path().join(name)).map_err(|e| e.to_string())?;
        for variant in Variant::ALL {
            for mode in [Mode::Feasibility, Mode::MaxSubset] {
                let lp = |inst: &RestorationInstance| {
                    if variant != Variant::Trimmed {
                        return build_model(inst, None, variant, mode).map(|m| emit_lp_text(&m).text);
                    }
                    let triples = compute_useful_triples(inst);
                    let kept = inst.with_demands(|d| !triples.non_reroutable.contains(&d.id));
                    build_model(&kept, Some(&triples), variant, mode).map(|m| emit_lp_text(&m).text)
                };
                let (p, q) = (lp(&x).map_err(|e| e.to_string())?, lp(&y).map_err(|e| e.to_string())?);
                if p != q {
                    return Err(format!("LP text of {name} {} {} differs", variant.name(), mode.name()));
                }
                lp_bytes += p.len();
            }
        }
    }

    let mut csvs = Vec::new();
    for (dir, jobs) in [(a.path(), "1"), (b.path(), "4")] {
        let csv = dir.join("bench.csv");
        let csv_arg = csv.to_str().ok_or("path")?.to_string();
        cli(&["bench", "--variants", "trimmed", "--jobs", jobs, "--time-limit", "120", "--csv", &csv_arg], &[dir])?;
        csvs.push(read(&csv)?);
    }
    let (x, y) = (strip_timings(&csvs[0]), strip_timings(&csvs[1]));
    if x != y {
        return Err("bench CSV differs outside the timing columns".into());
    }
    Ok(format!(
        "{files} generated files identical, {} KiB of LP text identical, bench CSV identical with 1 and 4 jobs ({} rows)",
        lp_bytes / 1024,
        x.lines().count() - 1
    ))
}

fn main() {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |id: u32, name: &str, outcome: Check| match outcome {
        Ok(detail) => println!("PASS [{id}] {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL [{id}] {name}: {detail}");
        }
    };
    report(1, "trimming matches the exhaustive oracle", trimming_oracle_equivalence());
    report(2, "trimmed model matches the oracle", feasibility_equivalence());
    report(3, "model variants agree", variant_agreement());
    report(4, "max-subset optimality", max_subset_optimality());
    report(5, "golden fixtures", golden_fixtures());
    match ring_cases() {
        Ok(cases) => {
            report(6, "trimming reduction on ring14", trimming_reduction(&cases));
            report(7, "first-kind scenarios are restorable", first_kind_feasibility());
            report(8, "infeasibility shown by trimming alone", infeasibility_shortcut());
            report(9, "trimming time share", phase_attribution(&cases));
        }
        Err(e) => {
            report(6, "trimming reduction on ring14", Err(e.clone()));
            report(7, "first-kind scenarios are restorable", first_kind_feasibility());
            report(8, "infeasibility shown by trimming alone", infeasibility_shortcut());
            report(9, "trimming time share", Err(e));
        }
    }
    report(10, "determinism", determinism());
    println!("acceptance: {} failed, {:.1} s", failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
