//! Congested restoration instances from shared path protection.
//!
//! Demands are provisioned between randomly ordered node pairs, each with
//! a main path and a link-disjoint recovery path; recovery paths whose
//! main paths are link-disjoint may share spectrum. Once no pair admits
//! both paths the recovery paths are released, leaving a loaded network
//! in which breaking a link yields a restorable set of broken demands.
//!
//! Routing is shortest valid path with first-fit spectrum: the lowest
//! first color whose range graph holds a path within reach.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{verify_solution, VerificationReport, Violation};
use crate::model::{
    paths_intersect, Color, ColorSet, ColoredGraph, Demand, DemandId, GraphEdge, Length, LinkId, ModelError, NodeId,
    OpticalNetwork, RestorationInstance, RoutedPath,
};
use crate::trim::shortest_distances;

pub const DEFAULT_SLOT_COUNT: u32 = 80;
pub const DEFAULT_WIDTH_SCHEDULE: [u32; 4] = [1, 4, 2, 1];
pub const ROUTER: &str = "shortest-valid-path first-fit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "bpsk")]
    Bpsk,
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "8qam")]
    Qam8,
}

impl Modulation {
    pub fn reach_km(self) -> Length {
        Decimal::from(match self {
            Modulation::Bpsk => 5000,
            Modulation::Qpsk => 2500,
            Modulation::Qam8 => 1250,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam8 => "8qam",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            "8qam" | "8-qam" => Ok(Modulation::Qam8),
            _ => Err(format!("unknown modulation `{s}` (expected bpsk, qpsk or 8qam)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("the topology must have every color free on every link")]
    NotEmpty,
    #[error("link {link} cannot be broken; eligible links: {eligible:?}")]
    Ineligible { link: LinkId, eligible: Vec<LinkId> },
    #[error("no link carries a demand of width greater than 1")]
    NothingEligible,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvisionedDemand {
    pub demand: Demand,
    pub main: RoutedPath,
    pub recovery: RoutedPath,
}

/// A network loaded by shared path protection. Recovery paths are kept
/// for inspection but no longer occupy spectrum.
#[derive(Debug, Clone)]
pub struct LoadedNetwork {
    pub topology: OpticalNetwork,
    /// In provisioning order.
    pub provisioned: Vec<ProvisionedDemand>,
    pub modulation: Modulation,
    pub width_schedule: Vec<u32>,
    pub seed: u64,
}

/// Which (link, color) pairs a path search may use.
struct Availability<'a> {
    network: &'a OpticalNetwork,
    free: Vec<ColorSet>,
}

impl<'a> Availability<'a> {
    fn new(network: &'a OpticalNetwork) -> Self {
        let free = (0..network.links().len()).map(|i| network.available_at(i).clone()).collect();
        Availability { network, free }
    }

    fn occupy(&mut self, path: &RoutedPath) {
        for l in &path.links {
            let i = self.network.link_index(*l).expect("known link");
            for c in path.colors() {
                self.free[i].remove(c);
            }
        }
    }
}

/// Shortest path within reach at the lowest feasible first color, using
/// only pairs accepted by `usable(link index, color)`.
fn first_fit(
    network: &OpticalNetwork,
    source: NodeId,
    target: NodeId,
    width: u32,
    reach: Length,
    usable: impl Fn(usize, Color) -> bool,
) -> Option<RoutedPath> {
    let top = (network.slot_count() + 1).checked_sub(width)?;
    for c in 1..=top {
        let edges: Vec<GraphEdge> = network
            .links()
            .iter()
            .enumerate()
            .filter(|&(i, _)| (c..c + width).all(|cc| usable(i, cc)))
            .map(|(_, l)| GraphEdge { link: l.id, u: l.u, v: l.v, length: l.length })
            .collect();
        let g = ColoredGraph { first_color: c, width, node_count: network.node_count(), edges };
        let dist = shortest_distances(&g, source).expect("source in graph");
        if dist.get(target).is_some_and(|d| d <= reach) {
            return Some(RoutedPath::new(dist.path_to(target)?, c, width));
        }
    }
    None
}

/// Provisions demands by shared path protection on an empty `topology`.
///
/// Each pass shuffles the node pairs and tries one demand per pair. The
/// first width of `width_schedule` is used for a single pass; later passes
/// cycle through the remaining widths (a lone width repeats) until a whole
/// cycle routes nothing.
pub fn generate_loaded_network(
    topology: &OpticalNetwork,
    modulation: Modulation,
    width_schedule: &[u32],
    seed: u64,
) -> Result<LoadedNetwork, GenError> {
    let slots = topology.slot_count();
    if (0..topology.links().len()).any(|i| topology.available_at(i).len() != slots as usize) {
        return Err(GenError::NotEmpty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = modulation.reach_km();
    let n = topology.node_count();
    let link_count = topology.links().len();
    let mut pairs: Vec<(NodeId, NodeId)> =
        (0..n).flat_map(|s| (s + 1..n).map(move |t| (NodeId(s), NodeId(t)))).collect();

    let mut main_used = vec![ColorSet::new(); link_count];
    // (link index, color) → provisioned indices whose recovery path uses it
    let mut recovery_used: BTreeMap<(usize, Color), Vec<usize>> = BTreeMap::new();
    let mut provisioned: Vec<ProvisionedDemand> = Vec::new();

    let widths: Vec<u32> = width_schedule.iter().copied().filter(|&w| w >= 1 && w <= slots).collect();
    let (head, cycle) = match widths.split_first() {
        Some((&h, rest)) if !rest.is_empty() => (Some(h), rest.to_vec()),
        Some((&h, _)) => (None, vec![h]),
        None => (None, Vec::new()),
    };
    let passes = head
        .into_iter()
        .map(|w| (w, false))
        .chain((0..).flat_map(|_| cycle.iter().enumerate().map(|(i, &w)| (w, i + 1 == cycle.len()))));
    let mut idle_in_cycle = true;
    for (width, ends_cycle) in passes.take_while(|_| !cycle.is_empty()) {
        pairs.shuffle(&mut rng);
        let mut routed_any = false;
        for &(s, t) in &pairs {
            let main = first_fit(topology, s, t, width, reach, |i, c| {
                !main_used[i].contains(c) && !recovery_used.contains_key(&(i, c))
            });
            let Some(main) = main else { continue };
            let main_links: BTreeSet<LinkId> = main.links.iter().copied().collect();
            let recovery = first_fit(topology, s, t, width, reach, |i, c| {
                let l = topology.links()[i].id;
                !main_links.contains(&l)
                    && !main_used[i].contains(c)
                    && recovery_used.get(&(i, c)).is_none_or(|users| {
                        users.iter().all(|&k| provisioned[k].main.links.iter().all(|x| !main_links.contains(x)))
                    })
            });
            let Some(recovery) = recovery else { continue };
            let k = provisioned.len();
            for l in &main.links {
                let i = topology.link_index(*l).expect("known link");
                for c in main.colors() {
                    main_used[i].insert(c);
                }
            }
            for l in &recovery.links {
                let i = topology.link_index(*l).expect("known link");
                for c in recovery.colors() {
                    recovery_used.entry((i, c)).or_default().push(k);
                }
            }
            let demand = Demand { id: DemandId(k as u64 + 1), source: s, target: t, width, reach };
            provisioned.push(ProvisionedDemand { demand, main, recovery });
            routed_any = true;
        }
        idle_in_cycle &= !routed_any;
        if ends_cycle {
            if idle_in_cycle {
                break;
            }
            idle_in_cycle = true;
        }
    }
    log::debug!("provisioned {} demands (seed {seed}, {modulation})", provisioned.len());
    Ok(LoadedNetwork {
        topology: topology.clone(),
        provisioned,
        modulation,
        width_schedule: width_schedule.to_vec(),
        seed,
    })
}

impl LoadedNetwork {
    pub fn demands(&self) -> Vec<Demand> {
        self.provisioned.iter().map(|p| p.demand.clone()).collect()
    }

    /// The topology with main-path spectrum occupied.
    pub fn occupied_network(&self) -> OpticalNetwork {
        let mut a = Availability::new(&self.topology);
        for p in &self.provisioned {
            a.occupy(&p.main);
        }
        let free = a.free;
        self.topology
            .with_availability(|l| free[self.topology.link_index(l.id).expect("known link")].clone())
            .expect("same topology")
    }

    /// Checks the protection discipline: mains valid and pairwise
    /// disjoint in spectrum, each recovery valid, link-disjoint from its
    /// main and clear of every main, and recoveries overlapping only when
    /// their mains share no link.
    pub fn verify(&self) -> VerificationReport {
        let inst =
            RestorationInstance::new(self.topology.clone(), self.demands()).expect("provisioned demands are valid");
        let mains: BTreeMap<DemandId, RoutedPath> =
            self.provisioned.iter().map(|p| (p.demand.id, p.main.clone())).collect();
        let mut report = verify_solution(&mains, &inst);
        for (i, p) in self.provisioned.iter().enumerate() {
            let alone = [(p.demand.id, p.recovery.clone())].into_iter().collect();
            report.violations.extend(verify_solution(&alone, &inst).violations);
            let shared: Vec<LinkId> = p.recovery.links.iter().filter(|l| p.main.links.contains(l)).copied().collect();
            if !shared.is_empty() {
                report.violations.push(Violation::Intersection { demands: (p.demand.id, p.demand.id), links: shared });
            }
            for (j, q) in self.provisioned.iter().enumerate() {
                let clash = (paths_intersect(&p.recovery, &q.main) && i != j)
                    || (j > i
                        && paths_intersect(&p.recovery, &q.recovery)
                        && p.main.links.iter().any(|l| q.main.links.contains(l)));
                if clash {
                    report
                        .violations
                        .push(Violation::Intersection { demands: (p.demand.id, q.demand.id), links: vec![] });
                }
            }
        }
        report
    }
}

/// Links whose paths carry at least one demand of width greater than 1.
pub fn eligible_links<'a>(paths: impl IntoIterator<Item = (&'a Demand, &'a RoutedPath)>) -> Vec<LinkId> {
    let set: BTreeSet<LinkId> =
        paths.into_iter().filter(|(d, _)| d.width > 1).flat_map(|(_, p)| p.links.iter().copied()).collect();
    set.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    First,
    Second,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::First => "first",
            ScenarioKind::Second => "second",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(ScenarioKind::First),
            "second" => Ok(ScenarioKind::Second),
            _ => Err(format!("unknown scenario kind `{s}` (expected first or second)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// The link whose failure defines the instance.
    pub broken_link: LinkId,
    /// Second kind: the earlier break repaired by re-routing.
    pub first_break: Option<LinkId>,
    pub instance: RestorationInstance,
    /// Second kind: broken demands the re-provisioning router could not place.
    pub unrouted: Vec<DemandId>,
}

/// Breaks `link` in a network carrying `paths` and returns the instance
/// of broken demands on the remaining, partially freed network.
fn break_link(
    network: &OpticalNetwork,
    paths: &[(Demand, RoutedPath)],
    link: LinkId,
) -> Result<RestorationInstance, GenError> {
    let mut a = Availability::new(network);
    let mut broken = Vec::new();
    for (d, p) in paths {
        if p.links.contains(&link) {
            broken.push(d.clone());
        } else {
            a.occupy(p);
        }
    }
    let free = a.free;
    let net = network
        .with_availability(|l| free[network.link_index(l.id).expect("known link")].clone())?
        .without_link(link)?;
    Ok(RestorationInstance::new(net, broken)?)
}

fn check_eligible(link: LinkId, eligible: Vec<LinkId>) -> Result<(), GenError> {
    if eligible.contains(&link) {
        Ok(())
    } else {
        Err(GenError::Ineligible { link, eligible })
    }
}

/// A first-kind scenario: break `link` in the loaded network.
pub fn make_first_kind(loaded: &LoadedNetwork, link: LinkId) -> Result<Scenario, GenError> {
    check_eligible(link, eligible_links(loaded.provisioned.iter().map(|p| (&p.demand, &p.main))))?;
    let paths: Vec<(Demand, RoutedPath)> =
        loaded.provisioned.iter().map(|p| (p.demand.clone(), p.main.clone())).collect();
    let instance = break_link(&loaded.topology, &paths, link)?;
    Ok(Scenario { kind: ScenarioKind::First, broken_link: link, first_break: None, instance, unrouted: Vec::new() })
}

/// The network after a repaired break.
#[derive(Debug, Clone)]
pub struct Reprovisioned {
    pub network: OpticalNetwork,
    pub paths: Vec<(Demand, RoutedPath)>,
    pub unrouted: Vec<DemandId>,
}

/// The network after `first_break` with every broken demand re-routed,
/// in provisioning order, by the first-fit router.
pub fn reprovision(loaded: &LoadedNetwork, first_break: LinkId) -> Result<Reprovisioned, GenError> {
    let net = loaded.topology.without_link(first_break)?;
    let mut a = Availability::new(&net);
    let mut paths = Vec::new();
    let mut pending = Vec::new();
    for p in &loaded.provisioned {
        if p.main.links.contains(&first_break) {
            pending.push(p.demand.clone());
        } else {
            a.occupy(&p.main);
            paths.push((p.demand.clone(), p.main.clone()));
        }
    }
    let mut unrouted = Vec::new();
    for d in pending {
        match first_fit(&net, d.source, d.target, d.width, d.reach, |i, c| a.free[i].contains(c)) {
            Some(path) => {
                a.occupy(&path);
                paths.push((d, path));
            }
            None => unrouted.push(d.id),
        }
    }
    Ok(Reprovisioned { network: net, paths, unrouted })
}

/// Links eligible as the second break after re-routing `first_break`.
pub fn second_kind_eligible(loaded: &LoadedNetwork, first_break: LinkId) -> Result<Vec<LinkId>, GenError> {
    let paths = reprovision(loaded, first_break)?.paths;
    Ok(eligible_links(paths.iter().map(|(d, p)| (d, p))))
}

/// A second-kind scenario: break `first_break`, re-route the broken
/// demands, then break `second_break` in the resulting network.
pub fn make_second_kind(
    loaded: &LoadedNetwork,
    first_break: LinkId,
    second_break: LinkId,
) -> Result<Scenario, GenError> {
    check_eligible(first_break, eligible_links(loaded.provisioned.iter().map(|p| (&p.demand, &p.main))))?;
    let Reprovisioned { network: net, paths, unrouted } = reprovision(loaded, first_break)?;
    check_eligible(second_break, eligible_links(paths.iter().map(|(d, p)| (d, p))))?;
    let instance = break_link(&net, &paths, second_break)?;
    Ok(Scenario {
        kind: ScenarioKind::Second,
        broken_link: second_break,
        first_break: Some(first_break),
        instance,
        unrouted,
    })
}

/// Picks an eligible link with `seed` when none is given.
pub fn choose_link(eligible: &[LinkId], requested: Option<LinkId>, seed: u64) -> Result<LinkId, GenError> {
    match requested {
        Some(l) => check_eligible(l, eligible.to_vec()).map(|_| l),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b4ea_u64);
            eligible.choose(&mut rng).copied().ok_or(GenError::NothingEligible)
        }
    }
}

/// Provenance written next to a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
    pub seed: u64,
    pub modulation: Modulation,
    #[serde(with = "rust_decimal::serde::arbitrary_precision")]
    pub reach_km: Length,
    pub slot_count: u32,
    pub width_schedule: Vec<u32>,
    pub router: String,
    pub provisioned_demands: usize,
    pub kind: ScenarioKind,
    pub broken_link: LinkId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_break: Option<LinkId>,
    pub broken_demands: Vec<DemandId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unrouted: Vec<DemandId>,
}

impl ScenarioManifest {
    pub fn new(loaded: &LoadedNetwork, scenario: &Scenario) -> Self {
        ScenarioManifest {
            tool: crate::pipeline::TOOL.to_string(),
            version: crate::pipeline::VERSION.to_string(),
            topology: None,
            seed: loaded.seed,
            modulation: loaded.modulation,
            reach_km: loaded.modulation.reach_km(),
            slot_count: loaded.topology.slot_count(),
            width_schedule: loaded.width_schedule.clone(),
            router: ROUTER.to_string(),
            provisioned_demands: loaded.provisioned.len(),
            kind: scenario.kind,
            broken_link: scenario.broken_link,
            first_break: scenario.first_break,
            broken_demands: scenario.instance.demands.iter().map(|d| d.id).collect(),
            unrouted: scenario.unrouted.clone(),
        }
    }
}
