//! Exhaustive ground truth for tiny instances.
//!
//! Nothing here shares code with [`crate::trim`] or [`crate::milp`]: paths
//! are enumerated by depth-first search, joint routings by backtracking,
//! and distances by plain relaxation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use thiserror::Error;

use crate::milp::Mode;
use crate::model::{
    is_valid_path, paths_intersect, range_graph, Color, ColorSet, ColoredGraph, Demand, DemandId, Length, LinkId,
    LinkSpec, NodeId, OpticalNetwork, RestorationInstance, RoutedPath,
};
use crate::trim::UsefulTripleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleGuard {
    pub max_nodes: usize,
    pub max_slots: u32,
    pub max_demands: usize,
}

impl Default for OracleGuard {
    fn default() -> Self {
        OracleGuard { max_nodes: 8, max_slots: 6, max_demands: 4 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance exceeds the oracle guard: {0}")]
    GuardExceeded(String),
}

impl OracleGuard {
    pub fn check(&self, instance: &RestorationInstance) -> Result<(), OracleError> {
        let net = &instance.network;
        let mut over = Vec::new();
        if net.node_count() > self.max_nodes {
            over.push(format!("{} nodes > {}", net.node_count(), self.max_nodes));
        }
        if net.slot_count() > self.max_slots {
            over.push(format!("{} slots > {}", net.slot_count(), self.max_slots));
        }
        if instance.demands.len() > self.max_demands {
            over.push(format!("{} demands > {}", instance.demands.len(), self.max_demands));
        }
        if over.is_empty() {
            Ok(())
        } else {
            Err(OracleError::GuardExceeded(over.join(", ")))
        }
    }
}

/// Distances to `root` by repeated relaxation.
fn relaxed_distances(g: &ColoredGraph, root: NodeId) -> Vec<Option<Length>> {
    let mut dist: Vec<Option<Length>> = vec![None; g.node_count];
    dist[root.0] = Some(Length::ZERO);
    loop {
        let mut changed = false;
        for e in &g.edges {
            for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                if let Some(da) = dist[a.0] {
                    let cand = da + e.length;
                    if dist[b.0].is_none_or(|db| cand < db) {
                        dist[b.0] = Some(cand);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

/// Every node-simple path from `from` of length at most `budget`,
/// reported as `(end, links, length)`. With `to` set only paths ending
/// there are reported, and branches that cannot reach it in budget are cut.
fn simple_paths(
    g: &ColoredGraph,
    from: NodeId,
    to: Option<NodeId>,
    budget: Length,
    mut visit: impl FnMut(NodeId, &[LinkId], Length),
) {
    let remaining = to.map(|t| relaxed_distances(g, t));
    let mut on_path = vec![false; g.node_count];
    let mut links = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        g: &ColoredGraph,
        at: NodeId,
        len: Length,
        to: Option<NodeId>,
        budget: Length,
        remaining: &Option<Vec<Option<Length>>>,
        on_path: &mut Vec<bool>,
        links: &mut Vec<LinkId>,
        visit: &mut dyn FnMut(NodeId, &[LinkId], Length),
    ) {
        if to.is_none_or(|t| t == at) {
            visit(at, links, len);
        }
        if to == Some(at) {
            return;
        }
        on_path[at.0] = true;
        for e in &g.edges {
            let next = if e.u == at {
                e.v
            } else if e.v == at {
                e.u
            } else {
                continue;
            };
            if on_path[next.0] {
                continue;
            }
            let next_len = len + e.length;
            let rest = match remaining {
                Some(r) => match r[next.0] {
                    Some(x) => x,
                    None => continue,
                },
                None => Length::ZERO,
            };
            if next_len + rest > budget {
                continue;
            }
            links.push(e.link);
            dfs(g, next, next_len, to, budget, remaining, on_path, links, visit);
            links.pop();
        }
        on_path[at.0] = false;
    }
    dfs(g, from, Length::ZERO, to, budget, &remaining, &mut on_path, &mut links, &mut visit);
}

/// All valid simple paths for `d`, over every first color.
pub fn enumerate_valid_paths(instance: &RestorationInstance, d: &Demand) -> Vec<RoutedPath> {
    let net = &instance.network;
    let mut out = Vec::new();
    if d.width > net.slot_count() {
        return out;
    }
    for c in 1..=net.slot_count() - d.width + 1 {
        let g = range_graph(net, c, d.width).expect("range within spectrum");
        simple_paths(&g, d.source, Some(d.target), d.reach, |_, links, _| {
            if !links.is_empty() {
                out.push(RoutedPath::new(links.to_vec(), c, d.width));
            }
        });
    }
    debug_assert!(out.iter().all(|p| is_valid_path(p, d, net)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub mode: Mode,
    pub feasible: bool,
    /// Minimum of `Σ w_d·|P_d|` over full solutions.
    pub min_total_slots: Option<u64>,
    /// Largest restorable subset; computed in max-subset mode only.
    pub max_subset_size: Option<usize>,
    /// Feasibility: number of full solutions attaining `min_total_slots`.
    /// Max-subset: number of distinct maximum subsets.
    pub optimum_count: u64,
    /// A minimum-slot full solution, or a minimum-slot routing of a
    /// maximum subset.
    pub witness: BTreeMap<DemandId, RoutedPath>,
}

struct Search<'a> {
    demands: &'a [Demand],
    candidates: Vec<Vec<RoutedPath>>,
    allow_skip: bool,
    chosen: Vec<Option<usize>>,
    full_min: Option<u64>,
    full_count: u64,
    full_witness: Vec<Option<usize>>,
    best_size: usize,
    best_subsets: BTreeSet<Vec<usize>>,
    best_slots: Option<u64>,
    best_witness: Vec<Option<usize>>,
}

impl Search<'_> {
    fn run(&mut self, i: usize, size: usize, slots: u64) {
        let n = self.demands.len();
        if size + (n - i) < self.best_size {
            return;
        }
        if i == n {
            if size == n {
                if self.full_min.is_none_or(|m| slots < m) {
                    self.full_min = Some(slots);
                    self.full_count = 0;
                    self.full_witness = self.chosen.clone();
                }
                if self.full_min == Some(slots) {
                    self.full_count += 1;
                }
            }
            if size > self.best_size {
                self.best_size = size;
                self.best_subsets.clear();
                self.best_slots = None;
            }
            if size == self.best_size {
                self.best_subsets.insert((0..n).filter(|&k| self.chosen[k].is_some()).collect());
                if self.best_slots.is_none_or(|m| slots < m) {
                    self.best_slots = Some(slots);
                    self.best_witness = self.chosen.clone();
                }
            }
            return;
        }
        for k in 0..self.candidates[i].len() {
            let p = &self.candidates[i][k];
            let clash = (0..i).any(|j| self.chosen[j].is_some_and(|q| paths_intersect(p, &self.candidates[j][q])));
            if clash {
                continue;
            }
            let cost = u64::from(p.width) * p.links.len() as u64;
            self.chosen[i] = Some(k);
            self.run(i + 1, size + 1, slots + cost);
            self.chosen[i] = None;
        }
        if self.allow_skip {
            self.run(i + 1, size, slots);
        }
    }

    fn witness(&self, pick: &[Option<usize>]) -> BTreeMap<DemandId, RoutedPath> {
        pick.iter()
            .enumerate()
            .filter_map(|(i, k)| k.map(|k| (self.demands[i].id, self.candidates[i][k].clone())))
            .collect()
    }
}

/// Solves `instance` by exhaustive search over simple valid paths.
pub fn oracle_solve(
    instance: &RestorationInstance,
    mode: Mode,
    guard: &OracleGuard,
) -> Result<OracleOutcome, OracleError> {
    guard.check(instance)?;
    let candidates = instance.demands.iter().map(|d| enumerate_valid_paths(instance, d)).collect();
    let n = instance.demands.len();
    let mut s = Search {
        demands: &instance.demands,
        candidates,
        allow_skip: mode == Mode::MaxSubset,
        chosen: vec![None; n],
        full_min: None,
        full_count: 0,
        full_witness: Vec::new(),
        best_size: 0,
        best_subsets: BTreeSet::new(),
        best_slots: None,
        best_witness: vec![None; n],
    };
    s.run(0, 0, 0);
    let feasible = s.full_min.is_some();
    Ok(match mode {
        Mode::Feasibility => OracleOutcome {
            mode,
            feasible,
            min_total_slots: s.full_min,
            max_subset_size: None,
            optimum_count: s.full_count,
            witness: if feasible { s.witness(&s.full_witness) } else { BTreeMap::new() },
        },
        Mode::MaxSubset => OracleOutcome {
            mode,
            feasible,
            min_total_slots: s.full_min,
            max_subset_size: Some(s.best_size),
            optimum_count: s.best_subsets.len() as u64,
            witness: s.witness(&s.best_witness),
        },
    })
}

/// What counts as a route through a link when judging usefulness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semantics {
    /// A simple path to one end of the link, the link, and a simple path
    /// from the other end; nodes and links may repeat across the parts.
    Walk,
    /// Only node-simple s-t paths.
    SimplePath,
}

/// Useful triples by enumeration.
///
/// Under [`Semantics::Walk`] this is the exact set the distance conditions
/// of trimming describe; under [`Semantics::SimplePath`] it is a subset.
pub fn oracle_useful_triples(
    instance: &RestorationInstance,
    semantics: Semantics,
    guard: &OracleGuard,
) -> Result<UsefulTripleSet, OracleError> {
    guard.check(instance)?;
    let net = &instance.network;
    let mut set = UsefulTripleSet::default();
    for d in &instance.demands {
        let mut valid = ColorSet::new();
        let mark = |set: &mut UsefulTripleSet, l: LinkId, c: Color| {
            set.first_colors.entry((d.id, l)).or_default().insert(c);
            let cs = set.useful.entry((d.id, l)).or_default();
            for cc in c..c + d.width {
                cs.insert(cc);
            }
        };
        let top = (net.slot_count() + 1).saturating_sub(d.width);
        for c in 1..=top {
            let g = range_graph(net, c, d.width).expect("range within spectrum");
            let mut st_paths: Vec<Vec<LinkId>> = Vec::new();
            simple_paths(&g, d.source, Some(d.target), d.reach, |_, links, _| st_paths.push(links.to_vec()));
            if st_paths.is_empty() {
                continue;
            }
            valid.insert(c);
            match semantics {
                Semantics::SimplePath => {
                    for l in st_paths.iter().flatten() {
                        mark(&mut set, *l, c);
                    }
                }
                Semantics::Walk => {
                    let best_from = |root: NodeId| {
                        let mut best: Vec<Option<Length>> = vec![None; g.node_count];
                        simple_paths(&g, root, None, d.reach, |end, _, len| {
                            if best[end.0].is_none_or(|b| len < b) {
                                best[end.0] = Some(len);
                            }
                        });
                        best
                    };
                    let from_s = best_from(d.source);
                    let from_t = best_from(d.target);
                    for e in &g.edges {
                        let through = [(e.u, e.v), (e.v, e.u)].iter().any(|&(a, b)| match (from_s[a.0], from_t[b.0]) {
                            (Some(x), Some(y)) => x + e.length + y <= d.reach,
                            _ => false,
                        });
                        if through {
                            mark(&mut set, e.link, c);
                        }
                    }
                }
            }
        }
        if valid.is_empty() {
            set.non_reroutable.insert(d.id);
        } else {
            set.valid_first_colors.insert(d.id, valid);
        }
    }
    Ok(set)
}

/// Shape of the random corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomInstanceParams {
    pub max_nodes: usize,
    pub max_links: usize,
    pub max_slots: u32,
    pub max_demands: usize,
    pub max_width: u32,
}

impl Default for RandomInstanceParams {
    fn default() -> Self {
        RandomInstanceParams { max_nodes: 6, max_links: 9, max_slots: 5, max_demands: 3, max_width: 2 }
    }
}

/// A connected multigraph with integer lengths 1-5, random free colors and
/// random demands; about half of the demands get a reach equal to their
/// shortest distance.
pub fn random_instance(seed: u64, p: &RandomInstanceParams) -> RestorationInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=p.max_nodes.max(2));
    let m = rng.gen_range(n - 1..=p.max_links.max(n - 1));
    let slots = rng.gen_range(1..=p.max_slots.max(1));
    let labels: Vec<String> = (1..=n).map(|i| format!("n{i}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut ends = Vec::with_capacity(m);
    for i in 1..n {
        ends.push((order[rng.gen_range(0..i)], order[i]));
    }
    while ends.len() < m {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n - 1);
        ends.push((u, if v >= u { v + 1 } else { v }));
    }
    let occupancy = rng.gen_range(0.0..0.6);
    let links: Vec<LinkSpec> = ends
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| LinkSpec {
            id: LinkId(i as u64 + 1),
            u: labels[u].clone(),
            v: labels[v].clone(),
            length: Decimal::from(rng.gen_range(1..=5)),
            colors: (1..=slots).filter(|_| !rng.gen_bool(occupancy)).collect(),
        })
        .collect();
    let net = OpticalNetwork::new(slots, labels, links).expect("generated network is well formed");

    let mut dist = vec![vec![None::<Length>; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = Some(Length::ZERO);
    }
    for _ in 0..n {
        for l in net.links() {
            for (a, b) in [(l.u.0, l.v.0), (l.v.0, l.u.0)] {
                for row in dist.iter_mut() {
                    if let Some(x) = row[a] {
                        let cand = x + l.length;
                        if row[b].is_none_or(|y| cand < y) {
                            row[b] = Some(cand);
                        }
                    }
                }
            }
        }
    }
    let k = rng.gen_range(1..=p.max_demands.max(1));
    let demands = (0..k)
        .map(|i| {
            let s = rng.gen_range(0..n);
            let t = (s + rng.gen_range(1..n)) % n;
            let width = rng.gen_range(1..=p.max_width.min(slots).max(1));
            let shortest = dist[s][t].expect("connected");
            let reach = if rng.gen_bool(0.5) { shortest } else { shortest + Decimal::from(rng.gen_range(1..=6)) };
            Demand { id: DemandId(i as u64 + 1), source: NodeId(s), target: NodeId(t), width, reach }
        })
        .collect();
    RestorationInstance::new(net, demands).expect("generated demands are well formed")
}
