//! Useful-triple trimming.
//!
//! For every demand and every admissible first color `c`, the range graph
//! of `c..c+w` is searched from both endpoints. A link `(u, v)` of length
//! `δ` lies on some walk of length at most `r` iff
//! `ρ(s,u) + δ + ρ(t,v) ≤ r` or `ρ(s,v) + δ + ρ(t,u) ≤ r`; such a link
//! gets `c` as a first color and all colors of the range as useful.
//! Everything else can never carry the demand and is dropped from the MILP.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    range_graph, Color, ColorSet, ColoredGraph, Demand, DemandId, Length, LinkId, NodeId, RestorationInstance,
};

#[derive(Debug, Error, PartialEq)]
pub enum TrimError {
    #[error("root node {0:?} is not part of the graph")]
    RootOutOfRange(NodeId),
}

/// Single-source shortest distances in a [`ColoredGraph`], with a
/// shortest-path tree for path reconstruction.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    root: NodeId,
    dist: Vec<Option<Length>>,
    pred: Vec<Option<(LinkId, NodeId)>>,
}

impl DistanceTable {
    pub fn root(&self) -> NodeId {
        self.root
    }

    /// `None` means unreachable.
    pub fn get(&self, n: NodeId) -> Option<Length> {
        self.dist.get(n.0).copied().flatten()
    }

    /// Links of a shortest root→`n` path, in walking order.
    pub fn path_to(&self, n: NodeId) -> Option<Vec<LinkId>> {
        self.get(n)?;
        let mut links = Vec::new();
        let mut at = n;
        while at != self.root {
            let (link, prev) = self.pred[at.0]?;
            links.push(link);
            at = prev;
        }
        links.reverse();
        Some(links)
    }
}

/// Dijkstra over the multigraph; parallel edges collapse to the shortest one
/// (lowest position on ties).
pub fn shortest_distances(graph: &ColoredGraph, root: NodeId) -> Result<DistanceTable, TrimError> {
    if root.0 >= graph.node_count {
        return Err(TrimError::RootOutOfRange(root));
    }
    let mut best: HashMap<(usize, usize), (Length, LinkId)> = HashMap::new();
    for e in &graph.edges {
        let key = (e.u.0.min(e.v.0), e.u.0.max(e.v.0));
        best.entry(key)
            .and_modify(|cur| {
                if e.length < cur.0 {
                    *cur = (e.length, e.link)
                }
            })
            .or_insert((e.length, e.link));
    }
    let mut adj: Vec<Vec<(usize, Length, LinkId)>> = vec![Vec::new(); graph.node_count];
    let mut pairs: Vec<_> = best.into_iter().collect();
    pairs.sort_unstable_by_key(|&((a, b), (_, l))| (a, b, l));
    for ((a, b), (len, link)) in pairs {
        adj[a].push((b, len, link));
        adj[b].push((a, len, link));
    }

    let mut dist: Vec<Option<Length>> = vec![None; graph.node_count];
    let mut pred = vec![None; graph.node_count];
    let mut heap = BinaryHeap::new();
    dist[root.0] = Some(Length::ZERO);
    heap.push(Reverse((Length::ZERO, root.0)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u].is_some_and(|best| d > best) {
            continue;
        }
        for &(v, len, link) in &adj[u] {
            let cand = d + len;
            if dist[v].is_none_or(|cur| cand < cur) {
                dist[v] = Some(cand);
                pred[v] = Some((link, NodeId(u)));
                heap.push(Reverse((cand, v)));
            }
        }
    }
    Ok(DistanceTable { root, dist, pred })
}

/// Output of trimming. All maps only hold non-empty sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsefulTripleSet {
    /// `(d, l) → {c : (d, l, c) useful}`.
    pub useful: BTreeMap<(DemandId, LinkId), ColorSet>,
    /// `(d, l) → {c : c may be the first color of d on l}`.
    pub first_colors: BTreeMap<(DemandId, LinkId), ColorSet>,
    /// `d → {c : the range graph of c..c+w holds an s-t path within reach}`.
    pub valid_first_colors: BTreeMap<DemandId, ColorSet>,
    pub non_reroutable: BTreeSet<DemandId>,
}

static EMPTY: std::sync::OnceLock<ColorSet> = std::sync::OnceLock::new();

fn empty() -> &'static ColorSet {
    EMPTY.get_or_init(ColorSet::new)
}

impl UsefulTripleSet {
    pub fn is_useful(&self, d: DemandId, l: LinkId, c: Color) -> bool {
        self.useful.get(&(d, l)).is_some_and(|cs| cs.contains(c))
    }

    pub fn useful_colors(&self, d: DemandId, l: LinkId) -> &ColorSet {
        self.useful.get(&(d, l)).unwrap_or_else(|| empty())
    }

    pub fn first_colors(&self, d: DemandId, l: LinkId) -> &ColorSet {
        self.first_colors.get(&(d, l)).unwrap_or_else(|| empty())
    }

    pub fn valid_first_colors(&self, d: DemandId) -> &ColorSet {
        self.valid_first_colors.get(&d).unwrap_or_else(|| empty())
    }

    /// `|U|`, the number of undirected useful triples.
    pub fn len(&self) -> usize {
        self.useful.values().map(ColorSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.useful.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = (DemandId, LinkId, Color)> + '_ {
        self.useful.iter().flat_map(|(&(d, l), cs)| cs.iter().map(move |c| (d, l, c)))
    }

    pub fn report(&self, instance: &RestorationInstance) -> TrimReport {
        let triples_total = instance.demands.len()
            * (0..instance.network.links().len()).map(|i| instance.network.available_at(i).len()).sum::<usize>();
        let mut first_colors: BTreeMap<String, BTreeMap<String, Vec<Color>>> = BTreeMap::new();
        for (&(d, l), cs) in &self.first_colors {
            first_colors.entry(d.0.to_string()).or_default().insert(l.0.to_string(), cs.iter().collect());
        }
        TrimReport {
            infeasible: is_infeasible_by_trimming(self, &instance.demands),
            useful: self.triples().map(|(d, l, c)| (d.0, l.0, c)).collect(),
            first_colors,
            valid_first_colors: self
                .valid_first_colors
                .iter()
                .map(|(d, cs)| (d.0.to_string(), cs.iter().collect()))
                .collect(),
            non_reroutable: self.non_reroutable.iter().map(|d| d.0).collect(),
            stats: TrimStats { triples_total, triples_useful: self.len() },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrimStats {
    pub triples_total: usize,
    pub triples_useful: usize,
}

/// JSON shape emitted by the `trim` command.
#[derive(Debug, Clone, Serialize)]
pub struct TrimReport {
    pub infeasible: bool,
    pub useful: Vec<(u64, u64, Color)>,
    pub first_colors: BTreeMap<String, BTreeMap<String, Vec<Color>>>,
    pub valid_first_colors: BTreeMap<String, Vec<Color>>,
    pub non_reroutable: Vec<u64>,
    pub stats: TrimStats,
}

#[derive(Default)]
struct DemandTrim {
    useful: BTreeMap<LinkId, ColorSet>,
    first: BTreeMap<LinkId, ColorSet>,
    valid_first: ColorSet,
}

fn trim_demand(instance: &RestorationInstance, d: &Demand) -> DemandTrim {
    let net = &instance.network;
    let mut out = DemandTrim::default();
    if d.width > net.slot_count() {
        return out;
    }
    for c in 1..=net.slot_count() - d.width + 1 {
        let g = range_graph(net, c, d.width).expect("range within spectrum");
        let from_s = shortest_distances(&g, d.source).expect("source in graph");
        if from_s.get(d.target).is_none_or(|st| st > d.reach) {
            continue;
        }
        let from_t = shortest_distances(&g, d.target).expect("target in graph");
        out.valid_first.insert(c);
        for e in &g.edges {
            let via = |a: NodeId, b: NodeId| match (from_s.get(a), from_t.get(b)) {
                (Some(x), Some(y)) => x + e.length + y <= d.reach,
                _ => false,
            };
            if via(e.u, e.v) || via(e.v, e.u) {
                out.first.entry(e.link).or_default().insert(c);
                let cs = out.useful.entry(e.link).or_default();
                for cc in c..c + d.width {
                    cs.insert(cc);
                }
            }
        }
    }
    out
}

/// Computes useful triples, first-color sets and non re-routable demands.
/// Demands are processed in parallel; the result does not depend on order.
pub fn compute_useful_triples(instance: &RestorationInstance) -> UsefulTripleSet {
    let per_demand: Vec<(DemandId, DemandTrim)> =
        instance.demands.par_iter().map(|d| (d.id, trim_demand(instance, d))).collect();
    let mut set = UsefulTripleSet::default();
    for (d, t) in per_demand {
        if t.valid_first.is_empty() {
            set.non_reroutable.insert(d);
        } else {
            set.valid_first_colors.insert(d, t.valid_first);
        }
        set.useful.extend(t.useful.into_iter().map(|(l, cs)| ((d, l), cs)));
        set.first_colors.extend(t.first.into_iter().map(|(l, cs)| ((d, l), cs)));
    }
    set
}

/// True iff some demand has no valid first color at all, which proves the
/// instance infeasible without a solver.
pub fn is_infeasible_by_trimming(set: &UsefulTripleSet, demands: &[Demand]) -> bool {
    demands.iter().any(|d| set.valid_first_colors(d.id).is_empty())
}

/// A concrete s-t walk through `link` occupying `color` that certifies a
/// useful triple: shortest s→endpoint, the link, shortest endpoint→t, all
/// inside the range graph of a recorded first color.
pub fn witness_walk(
    instance: &RestorationInstance,
    set: &UsefulTripleSet,
    demand: &Demand,
    link: LinkId,
    color: Color,
) -> Option<(Vec<LinkId>, Color)> {
    let l = instance.network.link(link)?;
    let firsts = set.first_colors(demand.id, link);
    for first in firsts.iter().filter(|&f| f <= color && color < f + demand.width) {
        let g = range_graph(&instance.network, first, demand.width).ok()?;
        let from_s = shortest_distances(&g, demand.source).ok()?;
        let from_t = shortest_distances(&g, demand.target).ok()?;
        for (a, b) in [(l.u, l.v), (l.v, l.u)] {
            let (Some(x), Some(y)) = (from_s.get(a), from_t.get(b)) else { continue };
            if x + l.length + y <= demand.reach {
                let mut walk = from_s.path_to(a)?;
                walk.push(link);
                let mut tail = from_t.path_to(b)?;
                tail.reverse();
                walk.extend(tail);
                return Some((walk, first));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{color_graph, ColorSet, LinkSpec, OpticalNetwork};
    use rust_decimal::Decimal;

    fn colors(cs: &[Color]) -> ColorSet {
        cs.iter().copied().collect()
    }

    fn bellman_ford(g: &ColoredGraph, root: NodeId) -> Vec<Option<Length>> {
        let mut dist = vec![None; g.node_count];
        dist[root.0] = Some(Length::ZERO);
        for _ in 0..g.node_count {
            for e in &g.edges {
                for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                    if let Some(da) = dist[a.0] {
                        let cand: Length = da + e.length;
                        if dist[b.0].is_none_or(|db: Length| cand < db) {
                            dist[b.0] = Some(cand);
                        }
                    }
                }
            }
        }
        dist
    }

    #[test]
    fn t1_distances_match_bellman_ford() {
        let inst = fixtures::t1();
        let g = color_graph(&inst.network, 1).unwrap();
        let table = shortest_distances(&g, NodeId(0)).unwrap();
        let oracle = bellman_ford(&g, NodeId(0));
        let got: Vec<_> = (0..3).map(|i| table.get(NodeId(i))).collect();
        assert_eq!(got, oracle);
        assert_eq!(got, vec![Some(0.into()), Some(1.into()), Some(2.into())]);
        assert_eq!(table.path_to(NodeId(2)).unwrap(), vec![LinkId(1), LinkId(2)]);
    }

    #[test]
    fn edgeless_graph_reaches_only_root() {
        let g = ColoredGraph { first_color: 1, width: 1, node_count: 3, edges: vec![] };
        let t = shortest_distances(&g, NodeId(1)).unwrap();
        assert_eq!(t.get(NodeId(1)), Some(Length::ZERO));
        assert_eq!(t.get(NodeId(0)), None);
        assert_eq!(t.get(NodeId(2)), None);
        assert_eq!(shortest_distances(&g, NodeId(3)).unwrap_err(), TrimError::RootOutOfRange(NodeId(3)));
    }

    #[test]
    fn parallel_edges_take_minimum() {
        let net = OpticalNetwork::new(
            1,
            vec!["u".into(), "v".into()],
            vec![
                LinkSpec { id: LinkId(1), u: "u".into(), v: "v".into(), length: 5.into(), colors: ColorSet::full(1) },
                LinkSpec { id: LinkId(2), u: "v".into(), v: "u".into(), length: 2.into(), colors: ColorSet::full(1) },
            ],
        )
        .unwrap();
        let g = color_graph(&net, 1).unwrap();
        let t = shortest_distances(&g, NodeId(0)).unwrap();
        assert_eq!(t.get(NodeId(1)), Some(2.into()));
        assert_eq!(t.path_to(NodeId(1)).unwrap(), vec![LinkId(2)]);
    }

    #[test]
    fn t1_trims_long_link() {
        let inst = fixtures::t1();
        let set = compute_useful_triples(&inst);
        let d = DemandId(1);
        let triples: Vec<_> = set.triples().collect();
        assert_eq!(triples, vec![(d, LinkId(1), 1), (d, LinkId(1), 2), (d, LinkId(2), 1), (d, LinkId(2), 2)]);
        assert!(set.non_reroutable.is_empty());
        assert!(!is_infeasible_by_trimming(&set, &inst.demands));
    }

    #[test]
    fn t2_first_color_is_two() {
        let inst = fixtures::t2();
        let set = compute_useful_triples(&inst);
        let d = DemandId(2);
        assert_eq!(set.first_colors(d, LinkId(1)), &colors(&[2]));
        assert_eq!(set.first_colors(d, LinkId(2)), &colors(&[2]));
        assert_eq!(set.useful_colors(d, LinkId(1)), &colors(&[2, 3]));
        assert_eq!(set.useful_colors(d, LinkId(2)), &colors(&[2, 3]));
        assert!(!set.is_useful(d, LinkId(1), 1));
    }

    #[test]
    fn short_reach_makes_t1_non_reroutable() {
        let inst = fixtures::t1_short_reach();
        let set = compute_useful_triples(&inst);
        assert!(set.is_empty());
        assert_eq!(set.non_reroutable, [DemandId(1)].into_iter().collect());
        assert!(is_infeasible_by_trimming(&set, &inst.demands));
        assert!(!is_infeasible_by_trimming(&set, &[]));
    }

    #[test]
    fn t4_tail_color_is_useful_but_not_first() {
        let inst = fixtures::t4();
        let set = compute_useful_triples(&inst);
        let d = DemandId(4);
        for l in [LinkId(1), LinkId(2)] {
            assert_eq!(set.first_colors(d, l), &colors(&[1, 2, 3]));
            assert_eq!(set.useful_colors(d, l), &colors(&[1, 2, 3, 4]));
        }
        assert!(set.is_useful(d, LinkId(1), 4));
        assert!(!set.first_colors(d, LinkId(1)).contains(4));
    }

    #[test]
    fn zero_length_links_are_fine() {
        let net = OpticalNetwork::new(
            2,
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                LinkSpec {
                    id: LinkId(1),
                    u: "a".into(),
                    v: "b".into(),
                    length: Decimal::ZERO,
                    colors: ColorSet::full(2),
                },
                LinkSpec {
                    id: LinkId(2),
                    u: "b".into(),
                    v: "c".into(),
                    length: Decimal::ONE,
                    colors: ColorSet::full(2),
                },
            ],
        )
        .unwrap();
        let inst = RestorationInstance::new(
            net,
            vec![Demand { id: DemandId(9), source: NodeId(0), target: NodeId(2), width: 2, reach: Decimal::ONE }],
        )
        .unwrap();
        let set = compute_useful_triples(&inst);
        assert_eq!(set.len(), 4);
        let (walk, first) = witness_walk(&inst, &set, &inst.demands[0], LinkId(2), 2).unwrap();
        assert_eq!((walk, first), (vec![LinkId(1), LinkId(2)], 1));
    }
}
