//! From solver assignments back to routed paths, and independent
//! certification of routed paths against the instance.

use std::collections::{BTreeMap, BTreeSet};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{DirectedLink, Direction, MilpModel, Mode, VariableKey};
use crate::model::{is_valid_path, paths_intersect, Color, DemandId, LinkId, NodeId, RestorationInstance, RoutedPath};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractionViolation {
    NoFlow,
    /// More than one set variable leaves `node` at the tracer color.
    SplitFlow {
        node: String,
        color: Color,
    },
    DeadEnd {
        node: String,
    },
    Cycle {
        node: String,
    },
    /// The colors set on a path link differ from the traced range.
    WrongColors {
        link: LinkId,
        found: Vec<Color>,
    },
    /// Set variables not on the traced path.
    Leftover {
        count: usize,
    },
    FlowWithoutSelection,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("demand {demand}: assignment does not decompose into one path ({violation:?})")]
pub struct ExtractionError {
    pub demand: DemandId,
    pub violation: ExtractionViolation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub paths: BTreeMap<DemandId, RoutedPath>,
    /// Demands with `y_d = 1`; max-subset models only.
    pub restored: Option<BTreeSet<DemandId>>,
}

/// Decodes one path per routed demand from `values`.
pub fn extract_paths(
    values: &[bool],
    model: &MilpModel,
    instance: &RestorationInstance,
) -> Result<Extraction, ExtractionError> {
    let net = &instance.network;
    let mut set_flow: BTreeMap<DemandId, Vec<(DirectedLink, Color)>> = BTreeMap::new();
    let mut selected = BTreeSet::new();
    for (i, key) in model.variables().iter().enumerate() {
        if !values[i] {
            continue;
        }
        match *key {
            VariableKey::Flow { demand, link, color } => set_flow.entry(demand).or_default().push((link, color)),
            VariableKey::Select(d) => {
                selected.insert(d);
            }
        }
    }

    let mut out = Extraction::default();
    for d in &instance.demands {
        let fail = |violation| ExtractionError { demand: d.id, violation };
        let flow = set_flow.remove(&d.id).unwrap_or_default();
        if model.mode == Mode::MaxSubset && !selected.contains(&d.id) {
            if !flow.is_empty() {
                return Err(fail(ExtractionViolation::FlowWithoutSelection));
            }
            continue;
        }
        let ends = |dl: &DirectedLink| {
            let l = net.link(dl.link).expect("model link exists");
            match dl.direction {
                Direction::Forward => (l.u, l.v),
                Direction::Backward => (l.v, l.u),
            }
        };
        let tracer = flow.iter().filter(|(dl, _)| ends(dl).0 == d.source).map(|&(_, c)| c).min();
        let Some(tracer) = tracer else {
            return Err(fail(ExtractionViolation::NoFlow));
        };

        let mut links = Vec::new();
        let mut seen: BTreeSet<NodeId> = [d.source].into_iter().collect();
        let mut at = d.source;
        while at != d.target {
            let next: Vec<&DirectedLink> =
                flow.iter().filter(|&&(dl, c)| c == tracer && ends(&dl).0 == at).map(|(dl, _)| dl).collect();
            let label = net.label(at).to_string();
            let dl = match next.as_slice() {
                [one] => *one,
                [] => return Err(fail(ExtractionViolation::DeadEnd { node: label })),
                _ => return Err(fail(ExtractionViolation::SplitFlow { node: label, color: tracer })),
            };
            links.push(*dl);
            at = ends(dl).1;
            if !seen.insert(at) {
                return Err(fail(ExtractionViolation::Cycle { node: net.label(at).to_string() }));
            }
        }

        let expected: Vec<Color> = (tracer..tracer + d.width).collect();
        for dl in &links {
            let found: Vec<Color> = flow.iter().filter(|(x, _)| x == dl).map(|&(_, c)| c).collect();
            let mut sorted = found.clone();
            sorted.sort_unstable();
            if sorted != expected {
                return Err(fail(ExtractionViolation::WrongColors { link: dl.link, found: sorted }));
            }
        }
        let used = links.len() * d.width as usize;
        if flow.len() != used {
            return Err(fail(ExtractionViolation::Leftover { count: flow.len() - used }));
        }
        out.paths.insert(d.id, RoutedPath::new(links.iter().map(|dl| dl.link).collect(), tracer, d.width));
    }
    if model.mode == Mode::MaxSubset {
        out.restored = Some(selected);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownDemand {
        demand: DemandId,
    },
    MissingPath {
        demand: DemandId,
    },
    WidthMismatch {
        demand: DemandId,
        width: u32,
        expected: u32,
    },
    OutsideSpectrum {
        demand: DemandId,
    },
    /// Unknown link, or consecutive links not sharing exactly one endpoint.
    Malformed {
        demand: DemandId,
    },
    WrongEndpoints {
        demand: DemandId,
    },
    ReachExceeded {
        demand: DemandId,
        length: Decimal,
        reach: Decimal,
    },
    ColorUnavailable {
        demand: DemandId,
        link: LinkId,
        colors: Vec<Color>,
    },
    Intersection {
        demands: (DemandId, DemandId),
        links: Vec<LinkId>,
    },
}

/// Violations found by [`verify_solution`]; empty means certified.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerificationReport {
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every path for validity and every pair for intersection.
pub fn verify_solution(paths: &BTreeMap<DemandId, RoutedPath>, instance: &RestorationInstance) -> VerificationReport {
    let net = &instance.network;
    let mut v = Vec::new();
    for (&id, p) in paths {
        let Some(d) = instance.demand(id) else {
            v.push(Violation::UnknownDemand { demand: id });
            continue;
        };
        let before = v.len();
        if p.width != d.width {
            v.push(Violation::WidthMismatch { demand: id, width: p.width, expected: d.width });
        }
        let in_spectrum = p.first_color >= 1 && p.width >= 1 && p.last_color() <= net.slot_count();
        if !in_spectrum {
            v.push(Violation::OutsideSpectrum { demand: id });
        }
        match p.node_walk(net, d.source) {
            None => v.push(Violation::Malformed { demand: id }),
            Some(walk) if walk.last() != Some(&d.target) => v.push(Violation::WrongEndpoints { demand: id }),
            Some(_) => {}
        }
        if let Some(length) = p.length(net) {
            if length > d.reach {
                v.push(Violation::ReachExceeded { demand: id, length, reach: d.reach });
            }
        }
        if in_spectrum {
            for &l in &p.links {
                if let Some(free) = net.available(l) {
                    let missing: Vec<Color> = p.colors().filter(|&c| !free.contains(c)).collect();
                    if !missing.is_empty() {
                        v.push(Violation::ColorUnavailable { demand: id, link: l, colors: missing });
                    }
                }
            }
        }
        debug_assert_eq!(v.len() == before, is_valid_path(p, d, net));
    }
    let list: Vec<(&DemandId, &RoutedPath)> = paths.iter().collect();
    for (i, (a, p)) in list.iter().enumerate() {
        for (b, q) in &list[i + 1..] {
            if paths_intersect(p, q) {
                let mut links: Vec<LinkId> = p.links.iter().filter(|l| q.links.contains(l)).copied().collect();
                links.sort();
                links.dedup();
                v.push(Violation::Intersection { demands: (**a, **b), links });
            }
        }
    }
    VerificationReport { violations: v }
}

/// Adds a [`Violation::MissingPath`] for every expected demand without a path.
pub fn verify_coverage(
    paths: &BTreeMap<DemandId, RoutedPath>,
    expected: impl IntoIterator<Item = DemandId>,
    report: &mut VerificationReport,
) {
    for d in expected {
        if !paths.contains_key(&d) {
            report.violations.push(Violation::MissingPath { demand: d });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::milp::{build_model, Variant};
    use crate::trim::compute_useful_triples;

    fn assign(model: &MilpModel, names: &[&str]) -> Vec<bool> {
        let mut v = vec![false; model.variables().len()];
        for n in names {
            v[model.variable_index(&VariableKey::parse(n).unwrap()).unwrap()] = true;
        }
        v
    }

    fn t1_model() -> (RestorationInstance, MilpModel) {
        let inst = fixtures::t1();
        let t = compute_useful_triples(&inst);
        let m = build_model(&inst, Some(&t), Variant::Trimmed, Mode::Feasibility).unwrap();
        (inst, m)
    }

    #[test]
    fn t1_hand_assignment() {
        let (inst, m) = t1_model();
        let values = assign(&m, &["x_1_1_f_2", "x_1_2_f_2"]);
        assert!(m.violated(&values).is_empty());
        let e = extract_paths(&values, &m, &inst).unwrap();
        assert_eq!(e.paths[&DemandId(1)], RoutedPath::new(vec![LinkId(1), LinkId(2)], 2, 1));
        assert!(verify_solution(&e.paths, &inst).is_clean());
    }

    #[test]
    fn split_and_cycle_are_reported() {
        let (inst, m) = t1_model();
        let split = assign(&m, &["x_1_1_f_1", "x_1_2_f_1", "x_1_1_f_2", "x_1_2_f_2", "x_1_1_b_1"]);
        let err = extract_paths(&split, &m, &inst).unwrap_err();
        assert!(matches!(err.violation, ExtractionViolation::SplitFlow { .. }), "{err:?}");
        let leftover = assign(&m, &["x_1_1_f_1", "x_1_2_f_1", "x_1_2_b_2", "x_1_1_b_2"]);
        let err = extract_paths(&leftover, &m, &inst).unwrap_err();
        assert_eq!(err.violation, ExtractionViolation::Leftover { count: 2 });
        let none = assign(&m, &[]);
        assert_eq!(extract_paths(&none, &m, &inst).unwrap_err().violation, ExtractionViolation::NoFlow);
    }

    #[test]
    fn t4_width_two() {
        let inst = fixtures::t4();
        let t = compute_useful_triples(&inst);
        let m = build_model(&inst, Some(&t), Variant::Trimmed, Mode::Feasibility).unwrap();
        let ok = assign(&m, &["x_4_1_f_3", "x_4_1_f_4", "x_4_2_f_3", "x_4_2_f_4"]);
        assert!(m.violated(&ok).is_empty());
        let e = extract_paths(&ok, &m, &inst).unwrap();
        assert_eq!(e.paths[&DemandId(4)].first_color, 3);
        let gap = assign(&m, &["x_4_1_f_1", "x_4_1_f_3", "x_4_2_f_1", "x_4_2_f_2"]);
        let err = extract_paths(&gap, &m, &inst).unwrap_err();
        assert!(matches!(err.violation, ExtractionViolation::WrongColors { .. }));
    }

    #[test]
    fn empty_demand_set() {
        let inst = fixtures::t1().with_demands(|_| false);
        let m = build_model(&inst, None, Variant::NoTrim, Mode::Feasibility).unwrap();
        assert!(extract_paths(&[], &m, &inst).unwrap().paths.is_empty());
    }

    #[test]
    fn max_subset_respects_selection() {
        let inst = fixtures::t3();
        let t = compute_useful_triples(&inst);
        let m = build_model(&inst, Some(&t), Variant::Trimmed, Mode::MaxSubset).unwrap();
        let values = assign(&m, &["x_32_1_f_1", "y_32"]);
        assert!(m.violated(&values).is_empty());
        let e = extract_paths(&values, &m, &inst).unwrap();
        assert_eq!(e.restored, Some([DemandId(32)].into_iter().collect()));
        assert_eq!(e.paths.keys().copied().collect::<Vec<_>>(), vec![DemandId(32)]);
        let stray = assign(&m, &["x_31_1_f_1", "y_32"]);
        assert_eq!(extract_paths(&stray, &m, &inst).unwrap_err().violation, ExtractionViolation::FlowWithoutSelection);
    }

    #[test]
    fn intersection_violation() {
        let inst = fixtures::t3();
        let p = RoutedPath::new(vec![LinkId(1)], 1, 1);
        let paths = [(DemandId(31), p.clone()), (DemandId(32), p)].into_iter().collect();
        let r = verify_solution(&paths, &inst);
        assert_eq!(
            r.violations,
            vec![Violation::Intersection { demands: (DemandId(31), DemandId(32)), links: vec![LinkId(1)] }]
        );
    }

    #[test]
    fn reach_violation() {
        let inst = fixtures::t1();
        let p = RoutedPath::new(vec![LinkId(3)], 1, 1);
        let r = verify_solution(&[(DemandId(1), p)].into_iter().collect(), &inst);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::ReachExceeded { .. }));
    }

    #[test]
    fn occupied_color_violation() {
        let inst = fixtures::t2();
        let p = RoutedPath::new(vec![LinkId(1), LinkId(2)], 1, 2);
        let r = verify_solution(&[(DemandId(2), p)].into_iter().collect(), &inst);
        assert_eq!(
            r.violations,
            vec![Violation::ColorUnavailable { demand: DemandId(2), link: LinkId(2), colors: vec![1] }]
        );
    }

    #[test]
    fn coverage() {
        let inst = fixtures::t3();
        let mut r = VerificationReport::default();
        verify_coverage(&BTreeMap::new(), inst.demands.iter().map(|d| d.id), &mut r);
        assert_eq!(r.violations.len(), 2);
    }
}
