//! Flow-based MILP models for restoration.
//!
//! One binary `x[d, l→, c]` per demand, directed link and color. Every
//! demand pushes `w_d` units of flow out of its source, one unit per
//! occupied color; the contiguity rows force the occupied colors on each
//! link into runs of exactly `w_d` colors starting at an admissible first
//! color, which keeps the flow from splitting.
//!
//! Three variable sets are supported:
//! * [`Variant::Base`]: every color of every link; occupied colors are
//!   fixed to zero by explicit rows.
//! * [`Variant::NoTrim`]: only free colors.
//! * [`Variant::Trimmed`]: only useful triples from [`crate::trim`].
//!
//! Wherever a row template references a variable outside the set, the term
//! is the constant zero. Rows that become `0 = 0` are dropped; rows that
//! become a false constant (a demand without any outgoing variable) are
//! kept with an empty left-hand side.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Color, ColorSet, DemandId, LinkId, NodeId, RestorationInstance};
use crate::trim::UsefulTripleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// `u → v`
    Forward,
    /// `v → u`
    Backward,
}

impl Direction {
    pub fn tag(self) -> char {
        match self {
            Direction::Forward => 'f',
            Direction::Backward => 'b',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedLink {
    pub link: LinkId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariableKey {
    Flow { demand: DemandId, link: DirectedLink, color: Color },
    Select(DemandId),
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariableKey::Flow { demand, link, color } => {
                write!(f, "x_{}_{}_{}_{}", demand.0, link.link.0, link.direction.tag(), color)
            }
            VariableKey::Select(d) => write!(f, "y_{}", d.0),
        }
    }
}

impl VariableKey {
    /// Inverse of the `Display` form.
    pub fn parse(name: &str) -> Option<VariableKey> {
        let mut parts = name.split('_');
        match parts.next()? {
            "x" => {
                let demand = DemandId(parts.next()?.parse().ok()?);
                let link = LinkId(parts.next()?.parse().ok()?);
                let direction = match parts.next()? {
                    "f" => Direction::Forward,
                    "b" => Direction::Backward,
                    _ => return None,
                };
                let color = parts.next()?.parse().ok()?;
                parts.next().is_none().then_some(VariableKey::Flow {
                    demand,
                    link: DirectedLink { link, direction },
                    color,
                })
            }
            "y" => {
                let d = DemandId(parts.next()?.parse().ok()?);
                parts.next().is_none().then_some(VariableKey::Select(d))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    NoTrim,
    Trimmed,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::NoTrim, Variant::Trimmed];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::NoTrim => "notrim",
            Variant::Trimmed => "trimmed",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" | "basic" => Ok(Variant::Base),
            "notrim" => Ok(Variant::NoTrim),
            "trimmed" | "trim" => Ok(Variant::Trimmed),
            other => Err(format!("unknown variant {other:?} (base, notrim, trimmed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Feasibility,
    MaxSubset,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Feasibility => "feasibility",
            Mode::MaxSubset => "maxsubset",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "feasibility" => Ok(Mode::Feasibility),
            "maxsubset" | "max-subset" => Ok(Mode::MaxSubset),
            other => Err(format!("unknown mode {other:?} (feasibility, maxsubset)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    FlowConservation,
    SourceOut,
    SourceIn,
    Reach,
    Unicolor,
    /// `Σ x[c..c+w) ≥ w (x[c] − x[c−1])`
    ContiguityStart,
    /// `Σ x[c..c+w) ≥ w x[c]` where `x[c−1]` does not exist
    ContiguityFirst,
    /// `x[c] ≤ x[c−1]` for colors that cannot start a run
    ContiguityTail,
    /// occupied color in the base model
    FixZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: Decimal, rhs: Decimal) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ge => lhs >= rhs,
        }
    }
}

/// `Σ coef·var  rel  rhs`, coefficients keyed by variable index, sorted and
/// non-zero. `name` is the provenance tag and doubles as the LP row name.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub family: Family,
    pub terms: Vec<(usize, Decimal)>,
    pub relation: Relation,
    pub rhs: Decimal,
}

impl LinearConstraint {
    pub fn lhs(&self, values: &[bool]) -> Decimal {
        self.terms.iter().filter(|(i, _)| values[*i]).map(|(_, c)| *c).sum()
    }

    pub fn is_satisfied(&self, values: &[bool]) -> bool {
        self.relation.holds(self.lhs(values), self.rhs)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("the trimmed variant needs a useful-triple set")]
    MissingTriples,
    #[error("demands {0:?} are not re-routable; remove them before building a max-subset model")]
    NonReroutable(Vec<DemandId>),
}

/// A binary program: minimize `objective` subject to `constraints`.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub variant: Variant,
    pub mode: Mode,
    variables: Vec<VariableKey>,
    index: HashMap<VariableKey, usize>,
    pub constraints: Vec<LinearConstraint>,
    pub objective: Vec<(usize, Decimal)>,
    /// The max-subset weight on `Σ y`; zero in feasibility mode.
    pub subset_weight: Decimal,
}

impl MilpModel {
    pub fn variables(&self) -> &[VariableKey] {
        &self.variables
    }

    pub fn variable_index(&self, key: &VariableKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn flow_variable_count(&self) -> usize {
        self.variables.iter().filter(|k| matches!(k, VariableKey::Flow { .. })).count()
    }

    pub fn objective_value(&self, values: &[bool]) -> Decimal {
        self.objective.iter().filter(|(i, _)| values[*i]).map(|(_, c)| *c).sum()
    }

    /// Indices of constraints violated by `values`.
    pub fn violated(&self, values: &[bool]) -> Vec<usize> {
        self.constraints.iter().enumerate().filter(|(_, c)| !c.is_satisfied(values)).map(|(i, _)| i).collect()
    }

    /// Coefficients of one row keyed by variable.
    pub fn coefficient_map(&self, row: &LinearConstraint) -> BTreeMap<VariableKey, Decimal> {
        row.terms.iter().map(|&(i, c)| (self.variables[i], c)).collect()
    }

    /// Assembles a model from parts, re-indexing the variables. Used by
    /// readers that reconstruct a model from text.
    pub fn from_parts(
        variant: Variant,
        mode: Mode,
        variables: Vec<VariableKey>,
        constraints: Vec<LinearConstraint>,
        objective: Vec<(usize, Decimal)>,
        subset_weight: Decimal,
    ) -> MilpModel {
        let index = variables.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        MilpModel { variant, mode, variables, index, constraints, objective, subset_weight }
    }

    pub fn statistics(&self) -> ModelStatistics {
        model_statistics(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelStatistics {
    pub variant: Variant,
    pub mode: Mode,
    pub variables: usize,
    pub flow_variables: usize,
    pub select_variables: usize,
    pub constraints: usize,
    pub constraints_by_family: BTreeMap<Family, usize>,
}

pub fn model_statistics(model: &MilpModel) -> ModelStatistics {
    let mut by_family = BTreeMap::new();
    for c in &model.constraints {
        *by_family.entry(c.family).or_insert(0) += 1;
    }
    let flow = model.flow_variable_count();
    ModelStatistics {
        variant: model.variant,
        mode: model.mode,
        variables: model.variables.len(),
        flow_variables: flow,
        select_variables: model.variables.len() - flow,
        constraints: model.constraints.len(),
        constraints_by_family: by_family,
    }
}

/// Merges duplicate indices and drops zero coefficients.
fn normalize(terms: impl IntoIterator<Item = (usize, Decimal)>) -> Vec<(usize, Decimal)> {
    let mut acc: BTreeMap<usize, Decimal> = BTreeMap::new();
    for (i, c) in terms {
        *acc.entry(i).or_insert(Decimal::ZERO) += c;
    }
    acc.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

struct Builder {
    variables: Vec<VariableKey>,
    index: HashMap<VariableKey, usize>,
    constraints: Vec<LinearConstraint>,
}

impl Builder {
    fn var(&mut self, key: VariableKey) -> usize {
        let next = self.variables.len();
        *self.index.entry(key).or_insert_with(|| {
            self.variables.push(key);
            next
        })
    }

    fn lookup(&self, key: &VariableKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    fn push(&mut self, name: String, family: Family, terms: Vec<(usize, Decimal)>, relation: Relation, rhs: Decimal) {
        let terms = normalize(terms);
        if terms.is_empty() && relation.holds(Decimal::ZERO, rhs) {
            return;
        }
        self.constraints.push(LinearConstraint { name, family, terms, relation, rhs });
    }
}

/// Per (demand, link): the colors that get variables and the colors that may
/// start the demand's range.
struct ColorPlan {
    vars: ColorSet,
    firsts: ColorSet,
}

fn color_plan(
    instance: &RestorationInstance,
    triples: Option<&UsefulTripleSet>,
    variant: Variant,
    demand: DemandId,
    width: u32,
    link_index: usize,
) -> ColorPlan {
    let net = &instance.network;
    let link = net.links()[link_index].id;
    match variant {
        Variant::Base => {
            let all = ColorSet::full(net.slot_count());
            ColorPlan { vars: all.clone(), firsts: all }
        }
        Variant::NoTrim => {
            let free = net.available_at(link_index);
            let firsts =
                free.iter().filter(|&c| c + width - 1 <= net.slot_count() && free.contains_range(c, width)).collect();
            ColorPlan { vars: free.clone(), firsts }
        }
        Variant::Trimmed => {
            let t = triples.expect("checked by build_model");
            ColorPlan { vars: t.useful_colors(demand, link).clone(), firsts: t.first_colors(demand, link).clone() }
        }
    }
}

/// Builds the restoration model for `instance`.
///
/// `triples` is required for [`Variant::Trimmed`]; when present in
/// [`Mode::MaxSubset`], non re-routable demands are rejected since they
/// must be removed from the demand set first.
pub fn build_model(
    instance: &RestorationInstance,
    triples: Option<&UsefulTripleSet>,
    variant: Variant,
    mode: Mode,
) -> Result<MilpModel, BuildError> {
    if variant == Variant::Trimmed && triples.is_none() {
        return Err(BuildError::MissingTriples);
    }
    if mode == Mode::MaxSubset {
        if let Some(t) = triples {
            let bad: Vec<DemandId> =
                instance.demands.iter().filter(|d| t.valid_first_colors(d.id).is_empty()).map(|d| d.id).collect();
            if !bad.is_empty() {
                return Err(BuildError::NonReroutable(bad));
            }
        }
    }

    let net = &instance.network;
    let links = net.links();
    let mut b = Builder { variables: Vec::new(), index: HashMap::new(), constraints: Vec::new() };
    let one = Decimal::ONE;

    // Variables, per demand in instance order, then links, directions, colors.
    let mut plans: Vec<Vec<ColorPlan>> = Vec::with_capacity(instance.demands.len());
    for d in &instance.demands {
        let mut per_link = Vec::with_capacity(links.len());
        for (li, l) in links.iter().enumerate() {
            let plan = color_plan(instance, triples, variant, d.id, d.width, li);
            for direction in [Direction::Forward, Direction::Backward] {
                for c in plan.vars.iter() {
                    b.var(VariableKey::Flow { demand: d.id, link: DirectedLink { link: l.id, direction }, color: c });
                }
            }
            per_link.push(plan);
        }
        plans.push(per_link);
    }
    let flow_count = b.variables.len();
    let select: Vec<usize> = match mode {
        Mode::Feasibility => Vec::new(),
        Mode::MaxSubset => instance.demands.iter().map(|d| b.var(VariableKey::Select(d.id))).collect(),
    };

    let flow = |b: &Builder, d: DemandId, l: LinkId, direction: Direction, c: Color| {
        b.lookup(&VariableKey::Flow { demand: d, link: DirectedLink { link: l, direction }, color: c })
    };

    for (di, d) in instance.demands.iter().enumerate() {
        let w = Decimal::from(d.width);
        // (tail, head) of each directed variable, bucketed per color and node
        let mut out_at: BTreeMap<(Color, NodeId), Vec<usize>> = BTreeMap::new();
        let mut in_at: BTreeMap<(Color, NodeId), Vec<usize>> = BTreeMap::new();
        let mut src_out = Vec::new();
        let mut src_in = Vec::new();
        let mut reach = Vec::new();
        for (li, l) in links.iter().enumerate() {
            for c in plans[di][li].vars.iter() {
                for (direction, tail, head) in [(Direction::Forward, l.u, l.v), (Direction::Backward, l.v, l.u)] {
                    let x = flow(&b, d.id, l.id, direction, c).expect("declared");
                    out_at.entry((c, tail)).or_default().push(x);
                    in_at.entry((c, head)).or_default().push(x);
                    if tail == d.source {
                        src_out.push((x, one));
                    }
                    if head == d.source {
                        src_in.push((x, one));
                    }
                    reach.push((x, l.length));
                }
            }
        }

        let keys: BTreeSet<(Color, NodeId)> = out_at.keys().chain(in_at.keys()).copied().collect();
        for (c, u) in keys {
            if u == d.source || u == d.target {
                continue;
            }
            let terms = out_at
                .get(&(c, u))
                .into_iter()
                .flatten()
                .map(|&x| (x, one))
                .chain(in_at.get(&(c, u)).into_iter().flatten().map(|&x| (x, -one)))
                .collect();
            b.push(
                format!("div_d{}_c{}_n{}", d.id.0, c, u.0),
                Family::FlowConservation,
                terms,
                Relation::Eq,
                Decimal::ZERO,
            );
        }

        let (mut out_terms, out_rhs) = (src_out, w);
        if mode == Mode::MaxSubset {
            out_terms.push((select[di], -w));
        }
        let out_rhs = if mode == Mode::MaxSubset { Decimal::ZERO } else { out_rhs };
        b.push(format!("src_out_d{}", d.id.0), Family::SourceOut, out_terms, Relation::Eq, out_rhs);
        b.push(format!("src_in_d{}", d.id.0), Family::SourceIn, src_in, Relation::Eq, Decimal::ZERO);
        b.push(format!("reach_d{}", d.id.0), Family::Reach, reach, Relation::Le, d.reach * w);

        // contiguity is vacuous for single-slot demands
        if d.width < 2 {
            continue;
        }
        for (li, l) in links.iter().enumerate() {
            let plan = &plans[di][li];
            for direction in [Direction::Forward, Direction::Backward] {
                let tag = format!("d{}_l{}{}", d.id.0, l.id.0, direction.tag());
                let x = |c: Color| flow(&b, d.id, l.id, direction, c);
                let mut rows = Vec::new();
                for c in plan.vars.iter() {
                    let xc = x(c).expect("declared");
                    let prev = if c > 1 { x(c - 1) } else { None };
                    if plan.firsts.contains(c) {
                        let mut terms: Vec<(usize, Decimal)> =
                            (c..c + d.width).filter_map(&x).map(|i| (i, one)).collect();
                        terms.push((xc, -w));
                        match prev {
                            Some(p) => {
                                terms.push((p, w));
                                rows.push((format!("ca_{tag}_c{c}"), Family::ContiguityStart, terms, Relation::Ge));
                            }
                            None => rows.push((format!("cb_{tag}_c{c}"), Family::ContiguityFirst, terms, Relation::Ge)),
                        }
                    } else {
                        let mut terms = vec![(xc, one)];
                        if let Some(p) = prev {
                            terms.push((p, -one));
                        }
                        rows.push((format!("cc_{tag}_c{c}"), Family::ContiguityTail, terms, Relation::Le));
                    }
                }
                for (name, family, terms, rel) in rows {
                    b.push(name, family, terms, rel, Decimal::ZERO);
                }
            }
        }
    }

    // Unicolor rows per undirected link and color.
    for (li, l) in links.iter().enumerate() {
        let mut by_color: BTreeMap<Color, Vec<(usize, Decimal)>> = BTreeMap::new();
        for (di, d) in instance.demands.iter().enumerate() {
            for c in plans[di][li].vars.iter() {
                for direction in [Direction::Forward, Direction::Backward] {
                    by_color.entry(c).or_default().push((flow(&b, d.id, l.id, direction, c).expect("declared"), one));
                }
            }
        }
        for (c, terms) in by_color {
            b.push(format!("uni_l{}_c{}", l.id.0, c), Family::Unicolor, terms, Relation::Le, one);
        }
    }

    if variant == Variant::Base {
        for (li, l) in links.iter().enumerate() {
            let free = net.available_at(li);
            for d in &instance.demands {
                for c in (1..=net.slot_count()).filter(|&c| !free.contains(c)) {
                    for direction in [Direction::Forward, Direction::Backward] {
                        let x = flow(&b, d.id, l.id, direction, c).expect("declared");
                        b.push(
                            format!("fix_d{}_l{}{}_c{}", d.id.0, l.id.0, direction.tag(), c),
                            Family::FixZero,
                            vec![(x, one)],
                            Relation::Eq,
                            Decimal::ZERO,
                        );
                    }
                }
            }
        }
    }

    // Σ x is bounded by the number of undirected triples; one more than that
    // makes every additional restored demand strictly better.
    let subset_weight = match mode {
        Mode::Feasibility => Decimal::ZERO,
        Mode::MaxSubset => Decimal::from(flow_count / 2 + 1),
    };
    let objective = (0..flow_count).map(|i| (i, one)).chain(select.iter().map(|&y| (y, -subset_weight))).collect();

    Ok(MilpModel {
        variant,
        mode,
        variables: b.variables,
        index: b.index,
        constraints: b.constraints,
        objective,
        subset_weight,
    })
}
