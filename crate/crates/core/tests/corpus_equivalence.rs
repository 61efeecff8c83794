use eon_restore::milp::{Mode, Variant};
use eon_restore::model::RestorationInstance;
use eon_restore::oracle::{
    oracle_solve, oracle_useful_triples, random_instance, OracleGuard, RandomInstanceParams, Semantics,
};
use eon_restore::pipeline::{run_pipeline, PipelineConfig, PipelineResult};
use eon_restore::solver::{SolveStatus, SolverConfig};
use eon_restore::trim::compute_useful_triples;
use rayon::prelude::*;
use rust_decimal::Decimal;

const SEEDS: u64 = 200;

fn corpus() -> Vec<(u64, RestorationInstance)> {
    (0..SEEDS).map(|s| (s, random_instance(s, &RandomInstanceParams::default()))).collect()
}

fn run(inst: &RestorationInstance, variant: Variant, mode: Mode) -> PipelineResult {
    let config = PipelineConfig { variant, mode, solver: SolverConfig::default().with_time_limit(60.0) };
    run_pipeline(inst, &config).expect("pipeline")
}

fn slots(r: &PipelineResult) -> Decimal {
    r.paths.values().map(|p| Decimal::from(p.width as usize * p.links.len())).sum()
}

#[test]
fn trimming_equals_walk_oracle() {
    let guard = OracleGuard::default();
    for (seed, inst) in corpus() {
        let oracle = oracle_useful_triples(&inst, Semantics::Walk, &guard).unwrap();
        assert_eq!(compute_useful_triples(&inst), oracle, "seed {seed}");
    }
}

#[test]
fn simple_path_usefulness_is_contained_in_trimming() {
    let guard = OracleGuard::default();
    for (seed, inst) in corpus() {
        let simple = oracle_useful_triples(&inst, Semantics::SimplePath, &guard).unwrap();
        let trimmed = compute_useful_triples(&inst);
        for (d, l, c) in simple.triples() {
            assert!(trimmed.is_useful(d, l, c), "seed {seed}: ({d}, {l}, {c}) trimmed away");
        }
        assert_eq!(simple.valid_first_colors, trimmed.valid_first_colors, "seed {seed}");
    }
}

#[test]
fn milp_matches_oracle_on_every_variant() {
    let guard = OracleGuard::default();
    let failures: Vec<String> = corpus()
        .par_iter()
        .flat_map_iter(|(seed, inst)| {
            let oracle = oracle_solve(inst, Mode::Feasibility, &guard).unwrap();
            Variant::ALL
                .into_iter()
                .filter_map(move |v| {
                    let r = run(inst, v, Mode::Feasibility);
                    let expected = if oracle.feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible };
                    let objective_ok = !oracle.feasible || r.objective() == oracle.min_total_slots.map(Decimal::from);
                    let ok = r.status == expected
                        && objective_ok
                        && r.report.is_clean()
                        && (!oracle.feasible || r.objective() == Some(slots(&r)));
                    (!ok).then(|| {
                        format!(
                            "seed {seed} {v:?}: {:?} {:?} vs oracle {:?}",
                            r.status,
                            r.objective(),
                            oracle.min_total_slots
                        )
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn max_subset_matches_oracle() {
    let guard = OracleGuard::default();
    let failures: Vec<String> = corpus()
        .par_iter()
        .filter_map(|(seed, inst)| {
            let oracle = oracle_solve(inst, Mode::MaxSubset, &guard).unwrap();
            let r = run(inst, Variant::Trimmed, Mode::MaxSubset);
            let restored = r.restored.as_ref().map_or(0, Vec::len);
            let ok = r.status == SolveStatus::Optimal
                && Some(restored) == oracle.max_subset_size
                && r.paths.len() == restored
                && r.report.is_clean()
                && (!oracle.feasible || restored == inst.demands.len());
            (!ok).then(|| format!("seed {seed}: restored {restored} vs oracle {:?}", oracle.max_subset_size))
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn wider_demands_match_oracle() {
    let guard = OracleGuard::default();
    let params = RandomInstanceParams { max_slots: 6, max_width: 3, ..Default::default() };
    let failures: Vec<String> = (1000..1150u64)
        .into_par_iter()
        .filter_map(|seed| {
            let inst = random_instance(seed, &params);
            assert_eq!(compute_useful_triples(&inst), oracle_useful_triples(&inst, Semantics::Walk, &guard).unwrap());
            let oracle = oracle_solve(&inst, Mode::Feasibility, &guard).unwrap();
            let r = run(&inst, Variant::Trimmed, Mode::Feasibility);
            let expected = if oracle.feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible };
            let ok = r.status == expected
                && (!oracle.feasible || r.objective() == oracle.min_total_slots.map(Decimal::from))
                && r.report.is_clean();
            (!ok).then(|| format!("seed {seed}: {:?} {:?} vs {:?}", r.status, r.objective(), oracle.min_total_slots))
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}
