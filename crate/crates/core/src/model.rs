//! Network, demand and path data model.
//!
//! Links are undirected; direction only appears inside the MILP builder.
//! Colors (spectrum slots) are 1-based. Lengths and reaches are exact
//! decimals so that reach comparisons never suffer from binary rounding.

use std::collections::HashMap;
use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kilometres, exact decimal.
pub type Length = Decimal;

/// A spectrum slot index in `1..=C`.
pub type Color = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemandId(pub u64);

/// Dense index of a node inside one [`OpticalNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

impl fmt::Display for DemandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("slot count must be positive")]
    ZeroSlotCount,
    #[error("duplicate node label {0:?}")]
    DuplicateNode(String),
    #[error("link {link} references unknown node {label:?}")]
    UnknownLinkNode { link: LinkId, label: String },
    #[error("link {0} is a self-loop")]
    SelfLoop(LinkId),
    #[error("duplicate link id {0}")]
    DuplicateLink(LinkId),
    #[error("link {0} has a negative length")]
    NegativeLength(LinkId),
    #[error("link {link}: color {color} outside 1..={slot_count}")]
    LinkColorOutOfRange { link: LinkId, color: Color, slot_count: u32 },
    #[error("color range {first}..+{width} outside 1..={slot_count}")]
    ColorOutOfRange { first: Color, width: u32, slot_count: u32 },
    #[error("duplicate demand id {0}")]
    DuplicateDemand(DemandId),
    #[error("demand {demand} references unknown node {label:?}")]
    UnknownDemandNode { demand: DemandId, label: String },
    #[error("demand {0} has identical source and target")]
    DemandLoop(DemandId),
    #[error("demand {demand} has width {width}, expected 1..={slot_count}")]
    DemandWidth { demand: DemandId, width: u32, slot_count: u32 },
    #[error("demand {0} must have a positive reach")]
    DemandReach(DemandId),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
}

/// Set of colors backed by a bitset; cheap range queries.
#[derive(Clone, Default)]
pub struct ColorSet {
    words: Vec<u64>,
}

impl PartialEq for ColorSet {
    fn eq(&self, other: &Self) -> bool {
        let n = self.words.len().max(other.words.len());
        (0..n).all(|i| self.words.get(i).copied().unwrap_or(0) == other.words.get(i).copied().unwrap_or(0))
    }
}

impl Eq for ColorSet {}

impl ColorSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// All colors `1..=slot_count`.
    pub fn full(slot_count: u32) -> Self {
        (1..=slot_count).collect()
    }

    pub fn insert(&mut self, c: Color) -> bool {
        let (w, b) = Self::slot(c);
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }

    pub fn remove(&mut self, c: Color) -> bool {
        let (w, b) = Self::slot(c);
        match self.words.get_mut(w) {
            Some(word) if *word & (1 << b) != 0 => {
                *word &= !(1 << b);
                true
            }
            _ => false,
        }
    }

    pub fn contains(&self, c: Color) -> bool {
        let (w, b) = Self::slot(c);
        self.words.get(w).is_some_and(|word| word & (1 << b) != 0)
    }

    /// True iff every color of `first..first+width` is present.
    pub fn contains_range(&self, first: Color, width: u32) -> bool {
        width > 0 && (first..first + width).all(|c| self.contains(c))
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn max(&self) -> Option<Color> {
        self.iter().last()
    }

    pub fn iter(&self) -> impl Iterator<Item = Color> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            (0..64u32).filter(move |b| word & (1u64 << b) != 0).map(move |b| wi as u32 * 64 + b)
        })
    }

    fn slot(c: Color) -> (usize, u32) {
        ((c / 64) as usize, c % 64)
    }
}

impl FromIterator<Color> for ColorSet {
    fn from_iter<I: IntoIterator<Item = Color>>(iter: I) -> Self {
        let mut set = ColorSet::new();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Debug for ColorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub u: NodeId,
    pub v: NodeId,
    pub length: Length,
}

impl Link {
    pub fn touches(&self, n: NodeId) -> bool {
        self.u == n || self.v == n
    }

    /// The endpoint opposite `n`, if `n` is an endpoint.
    pub fn opposite(&self, n: NodeId) -> Option<NodeId> {
        if self.u == n {
            Some(self.v)
        } else if self.v == n {
            Some(self.u)
        } else {
            None
        }
    }

    /// Number of endpoints shared with `other` (0, 1 or 2).
    pub fn shared_endpoints(&self, other: &Link) -> usize {
        [self.u, self.v].iter().filter(|&&n| other.touches(n)).count()
    }
}

/// Input record for [`OpticalNetwork::new`].
#[derive(Debug, Clone)]
pub struct LinkSpec {
    pub id: LinkId,
    pub u: String,
    pub v: String,
    pub length: Length,
    pub colors: ColorSet,
}

/// Nodes, parallel-capable undirected links and per-link free colors.
#[derive(Debug, Clone)]
pub struct OpticalNetwork {
    slot_count: u32,
    labels: Vec<String>,
    by_label: HashMap<String, NodeId>,
    links: Vec<Link>,
    available: Vec<ColorSet>,
    by_id: HashMap<LinkId, usize>,
}

impl OpticalNetwork {
    pub fn new(slot_count: u32, nodes: Vec<String>, links: Vec<LinkSpec>) -> Result<Self, ModelError> {
        if slot_count == 0 {
            return Err(ModelError::ZeroSlotCount);
        }
        let mut by_label = HashMap::with_capacity(nodes.len());
        for (i, label) in nodes.iter().enumerate() {
            if by_label.insert(label.clone(), NodeId(i)).is_some() {
                return Err(ModelError::DuplicateNode(label.clone()));
            }
        }
        let mut net = OpticalNetwork {
            slot_count,
            labels: nodes,
            by_label,
            links: Vec::with_capacity(links.len()),
            available: Vec::with_capacity(links.len()),
            by_id: HashMap::with_capacity(links.len()),
        };
        for spec in links {
            net.push_link(spec)?;
        }
        Ok(net)
    }

    fn push_link(&mut self, spec: LinkSpec) -> Result<(), ModelError> {
        let lookup = |label: &String| {
            self.by_label
                .get(label)
                .copied()
                .ok_or_else(|| ModelError::UnknownLinkNode { link: spec.id, label: label.clone() })
        };
        let u = lookup(&spec.u)?;
        let v = lookup(&spec.v)?;
        if u == v {
            return Err(ModelError::SelfLoop(spec.id));
        }
        if spec.length.is_sign_negative() && !spec.length.is_zero() {
            return Err(ModelError::NegativeLength(spec.id));
        }
        if let Some(c) = spec.colors.iter().find(|&c| c == 0 || c > self.slot_count) {
            return Err(ModelError::LinkColorOutOfRange { link: spec.id, color: c, slot_count: self.slot_count });
        }
        if self.by_id.insert(spec.id, self.links.len()).is_some() {
            return Err(ModelError::DuplicateLink(spec.id));
        }
        self.links.push(Link { id: spec.id, u, v, length: spec.length });
        self.available.push(spec.colors);
        Ok(())
    }

    pub fn slot_count(&self) -> u32 {
        self.slot_count
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.labels.len()).map(NodeId)
    }

    pub fn label(&self, n: NodeId) -> &str {
        &self.labels[n.0]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node(&self, label: &str) -> Option<NodeId> {
        self.by_label.get(label).copied()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.by_id.get(&id).map(|&i| &self.links[i])
    }

    /// Position of a link in [`Self::links`].
    pub fn link_index(&self, id: LinkId) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    pub fn available(&self, id: LinkId) -> Option<&ColorSet> {
        self.by_id.get(&id).map(|&i| &self.available[i])
    }

    pub fn available_at(&self, index: usize) -> &ColorSet {
        &self.available[index]
    }

    /// Copy with `link` removed.
    pub fn without_link(&self, link: LinkId) -> Result<OpticalNetwork, ModelError> {
        if !self.by_id.contains_key(&link) {
            return Err(ModelError::UnknownLink(link));
        }
        let specs = self.link_specs().into_iter().filter(|s| s.id != link).collect();
        OpticalNetwork::new(self.slot_count, self.labels.clone(), specs)
    }

    /// Copy with different availability on every link.
    pub fn with_availability(&self, mut f: impl FnMut(&Link) -> ColorSet) -> Result<OpticalNetwork, ModelError> {
        let specs = self
            .links
            .iter()
            .map(|l| LinkSpec {
                id: l.id,
                u: self.labels[l.u.0].clone(),
                v: self.labels[l.v.0].clone(),
                length: l.length,
                colors: f(l),
            })
            .collect();
        OpticalNetwork::new(self.slot_count, self.labels.clone(), specs)
    }

    pub fn link_specs(&self) -> Vec<LinkSpec> {
        self.links
            .iter()
            .zip(&self.available)
            .map(|(l, colors)| LinkSpec {
                id: l.id,
                u: self.labels[l.u.0].clone(),
                v: self.labels[l.v.0].clone(),
                length: l.length,
                colors: colors.clone(),
            })
            .collect()
    }

    fn check_range(&self, first: Color, width: u32) -> Result<(), ModelError> {
        if first == 0 || width == 0 || first + width - 1 > self.slot_count {
            return Err(ModelError::ColorOutOfRange { first, width, slot_count: self.slot_count });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demand {
    pub id: DemandId,
    pub source: NodeId,
    pub target: NodeId,
    pub width: u32,
    pub reach: Length,
}

/// A network together with the demands to be routed on it.
#[derive(Debug, Clone)]
pub struct RestorationInstance {
    pub network: OpticalNetwork,
    pub demands: Vec<Demand>,
}

impl RestorationInstance {
    pub fn new(network: OpticalNetwork, demands: Vec<Demand>) -> Result<Self, ModelError> {
        let mut seen = std::collections::HashSet::new();
        for d in &demands {
            if !seen.insert(d.id) {
                return Err(ModelError::DuplicateDemand(d.id));
            }
            for n in [d.source, d.target] {
                if n.0 >= network.node_count() {
                    return Err(ModelError::UnknownDemandNode { demand: d.id, label: format!("#{}", n.0) });
                }
            }
            if d.source == d.target {
                return Err(ModelError::DemandLoop(d.id));
            }
            if d.width == 0 || d.width > network.slot_count() {
                return Err(ModelError::DemandWidth { demand: d.id, width: d.width, slot_count: network.slot_count() });
            }
            if d.reach <= Decimal::ZERO {
                return Err(ModelError::DemandReach(d.id));
            }
        }
        Ok(RestorationInstance { network, demands })
    }

    pub fn demand(&self, id: DemandId) -> Option<&Demand> {
        self.demands.iter().find(|d| d.id == id)
    }

    /// Same network, demand subset (in original order).
    pub fn with_demands(&self, keep: impl Fn(&Demand) -> bool) -> RestorationInstance {
        RestorationInstance {
            network: self.network.clone(),
            demands: self.demands.iter().filter(|d| keep(d)).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub link: LinkId,
    pub u: NodeId,
    pub v: NodeId,
    pub length: Length,
}

/// Undirected weighted multigraph of the links carrying a color (or a whole
/// color range) on all of them.
#[derive(Debug, Clone)]
pub struct ColoredGraph {
    pub first_color: Color,
    pub width: u32,
    pub node_count: usize,
    pub edges: Vec<GraphEdge>,
}

impl ColoredGraph {
    pub fn edge_ids(&self) -> Vec<LinkId> {
        self.edges.iter().map(|e| e.link).collect()
    }
}

/// Graph of the links where color `c` is free.
pub fn color_graph(network: &OpticalNetwork, c: Color) -> Result<ColoredGraph, ModelError> {
    range_graph(network, c, 1)
}

/// Graph of the links where every color of `c..c+w` is free.
pub fn range_graph(network: &OpticalNetwork, c: Color, w: u32) -> Result<ColoredGraph, ModelError> {
    network.check_range(c, w)?;
    let edges = network
        .links
        .iter()
        .zip(&network.available)
        .filter(|(_, colors)| colors.contains_range(c, w))
        .map(|(l, _)| GraphEdge { link: l.id, u: l.u, v: l.v, length: l.length })
        .collect();
    Ok(ColoredGraph { first_color: c, width: w, node_count: network.node_count(), edges })
}

/// A link sequence with the first occupied color and the width.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoutedPath {
    pub links: Vec<LinkId>,
    pub first_color: Color,
    pub width: u32,
}

impl RoutedPath {
    pub fn new(links: Vec<LinkId>, first_color: Color, width: u32) -> Self {
        RoutedPath { links, first_color, width }
    }

    pub fn last_color(&self) -> Color {
        self.first_color.saturating_add(self.width).saturating_sub(1)
    }

    pub fn colors(&self) -> std::ops::RangeInclusive<Color> {
        self.first_color..=self.last_color()
    }

    /// Node sequence of the walk from `source`, or `None` if the link
    /// sequence is not a well-formed path starting there: consecutive
    /// links must share exactly one endpoint and the walk may not bounce
    /// back through its first or last node.
    pub fn node_walk(&self, network: &OpticalNetwork, source: NodeId) -> Option<Vec<NodeId>> {
        let links: Vec<&Link> = self.links.iter().map(|&id| network.link(id)).collect::<Option<_>>()?;
        let first = links.first()?;
        for pair in links.windows(2) {
            if pair[0].shared_endpoints(pair[1]) != 1 {
                return None;
            }
        }
        let mut walk = vec![source];
        let mut at = first.opposite(source)?;
        walk.push(at);
        for l in &links[1..] {
            at = l.opposite(at)?;
            walk.push(at);
        }
        Some(walk)
    }

    pub fn length(&self, network: &OpticalNetwork) -> Option<Length> {
        self.links.iter().map(|&id| network.link(id).map(|l| l.length)).sum()
    }
}

/// True iff `path` starts at the source, ends at the target, stays within
/// reach and finds its whole color range free on every link.
pub fn is_valid_path(path: &RoutedPath, demand: &Demand, network: &OpticalNetwork) -> bool {
    if path.width != demand.width || path.first_color == 0 || path.last_color() > network.slot_count() {
        return false;
    }
    let Some(walk) = path.node_walk(network, demand.source) else {
        return false;
    };
    if walk.last() != Some(&demand.target) {
        return false;
    }
    let Some(length) = path.length(network) else {
        return false;
    };
    length <= demand.reach
        && path
            .links
            .iter()
            .all(|&id| network.available(id).is_some_and(|cs| cs.contains_range(path.first_color, path.width)))
}

/// True iff the color ranges overlap and the link sequences share a link.
pub fn paths_intersect(p1: &RoutedPath, p2: &RoutedPath) -> bool {
    let overlap = p1.first_color <= p2.last_color() && p2.first_color <= p1.last_color();
    overlap && p1.links.iter().any(|l| p2.links.contains(l))
}
