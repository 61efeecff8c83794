//! JSON instance format.
//!
//! ```json
//! {
//!   "slot_count": 80,
//!   "nodes": ["n1", "n2"],
//!   "links": [{"id": 1, "u": "n1", "v": "n2", "length_km": 300.0, "colors": [1, 2, [5, 40]]}],
//!   "demands": [{"id": 1, "s": "n1", "t": "n2", "width": 2, "reach_km": 2500.0}]
//! }
//! ```
//!
//! A color entry is either a single slot or an inclusive `[first, last]`
//! range. A link without `colors` has the whole spectrum free; a file
//! without `demands` is a bare topology.

use std::path::Path;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{ColorSet, Demand, DemandId, LinkId, LinkSpec, OpticalNetwork, RestorationInstance};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// `pointer` is an RFC 6901 JSON pointer into the offending document.
    #[error("{pointer}: {message}")]
    Invalid { pointer: String, message: String },
}

impl InstanceError {
    fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        InstanceError::Invalid { pointer: pointer.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub slot_count: u32,
    pub nodes: Vec<Value>,
    pub links: Vec<LinkRecord>,
    #[serde(default)]
    pub demands: Vec<DemandRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkRecord {
    pub id: u64,
    pub u: Value,
    pub v: Value,
    #[serde(with = "rust_decimal::serde::arbitrary_precision")]
    pub length_km: Decimal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<Value>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandRecord {
    pub id: u64,
    pub s: Value,
    pub t: Value,
    pub width: u32,
    #[serde(with = "rust_decimal::serde::arbitrary_precision")]
    pub reach_km: Decimal,
}

/// Converts a JSON pointer-producing serde path into RFC 6901 form.
pub fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses JSON text into `T`, reporting failures with a JSON pointer.
pub fn from_json_str<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, InstanceError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        InstanceError::at(if pointer.is_empty() { "/".to_string() } else { pointer }, e.into_inner().to_string())
    })
}

fn node_label(v: &Value, pointer: &str) -> Result<String, InstanceError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) if n.as_u64().is_some() => Ok(n.to_string()),
        _ => Err(InstanceError::at(pointer, "node label must be a string or a non-negative integer")),
    }
}

fn color_value(v: &Value, pointer: &str) -> Result<u32, InstanceError> {
    v.as_u64()
        .and_then(|c| u32::try_from(c).ok())
        .ok_or_else(|| InstanceError::at(pointer, "color must be a positive integer"))
}

fn parse_colors(entries: &[Value], slot_count: u32, pointer: &str) -> Result<ColorSet, InstanceError> {
    let mut set = ColorSet::new();
    for (j, entry) in entries.iter().enumerate() {
        let here = format!("{pointer}/{j}");
        let (first, last) = match entry {
            Value::Array(pair) if pair.len() == 2 => {
                (color_value(&pair[0], &format!("{here}/0"))?, color_value(&pair[1], &format!("{here}/1"))?)
            }
            Value::Array(_) => return Err(InstanceError::at(here, "color range must be [first, last]")),
            single => {
                let c = color_value(single, &here)?;
                (c, c)
            }
        };
        if first == 0 || last > slot_count || first > last {
            return Err(InstanceError::at(here, format!("colors {first}..={last} outside 1..={slot_count}")));
        }
        for c in first..=last {
            set.insert(c);
        }
    }
    Ok(set)
}

/// Compact color list: singletons as numbers, runs as `[first, last]`.
pub fn encode_colors(colors: &ColorSet) -> Vec<Value> {
    let mut out = Vec::new();
    let mut run: Option<(u32, u32)> = None;
    let flush = |run: (u32, u32), out: &mut Vec<Value>| {
        if run.0 == run.1 {
            out.push(Value::from(run.0));
        } else {
            out.push(Value::from(vec![run.0, run.1]));
        }
    };
    for c in colors.iter() {
        run = match run {
            Some((a, b)) if b + 1 == c => Some((a, c)),
            Some(r) => {
                flush(r, &mut out);
                Some((c, c))
            }
            None => Some((c, c)),
        };
    }
    if let Some(r) = run {
        flush(r, &mut out);
    }
    out
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<RestorationInstance, InstanceError> {
        if self.slot_count == 0 {
            return Err(InstanceError::at("/slot_count", "must be positive"));
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut seen = std::collections::HashSet::new();
        for (i, v) in self.nodes.iter().enumerate() {
            let label = node_label(v, &format!("/nodes/{i}"))?;
            if !seen.insert(label.clone()) {
                return Err(InstanceError::at(format!("/nodes/{i}"), format!("duplicate node {label:?}")));
            }
            nodes.push(label);
        }
        let mut link_ids = std::collections::HashSet::new();
        let mut specs = Vec::with_capacity(self.links.len());
        for (i, rec) in self.links.iter().enumerate() {
            let base = format!("/links/{i}");
            let u = node_label(&rec.u, &format!("{base}/u"))?;
            let v = node_label(&rec.v, &format!("{base}/v"))?;
            for (field, label) in [("u", &u), ("v", &v)] {
                if !seen.contains(label) {
                    return Err(InstanceError::at(format!("{base}/{field}"), format!("unknown node {label:?}")));
                }
            }
            if u == v {
                return Err(InstanceError::at(format!("{base}/v"), "self-loop links are not allowed"));
            }
            if rec.length_km.is_sign_negative() && !rec.length_km.is_zero() {
                return Err(InstanceError::at(format!("{base}/length_km"), "length must be non-negative"));
            }
            if !link_ids.insert(rec.id) {
                return Err(InstanceError::at(format!("{base}/id"), format!("duplicate link id {}", rec.id)));
            }
            let colors = match &rec.colors {
                Some(entries) => parse_colors(entries, self.slot_count, &format!("{base}/colors"))?,
                None => ColorSet::full(self.slot_count),
            };
            specs.push(LinkSpec { id: LinkId(rec.id), u, v, length: rec.length_km, colors });
        }
        let network = OpticalNetwork::new(self.slot_count, nodes, specs)
            .map_err(|e| InstanceError::at("/links", e.to_string()))?;

        let mut demand_ids = std::collections::HashSet::new();
        let mut demands = Vec::with_capacity(self.demands.len());
        for (i, rec) in self.demands.iter().enumerate() {
            let base = format!("/demands/{i}");
            let mut ends = [None, None];
            for (k, (field, v)) in [("s", &rec.s), ("t", &rec.t)].into_iter().enumerate() {
                let label = node_label(v, &format!("{base}/{field}"))?;
                ends[k] =
                    Some(network.node(&label).ok_or_else(|| {
                        InstanceError::at(format!("{base}/{field}"), format!("unknown node {label:?}"))
                    })?);
            }
            let (source, target) = (ends[0].unwrap(), ends[1].unwrap());
            if source == target {
                return Err(InstanceError::at(format!("{base}/t"), "source and target coincide"));
            }
            if rec.width == 0 || rec.width > self.slot_count {
                return Err(InstanceError::at(
                    format!("{base}/width"),
                    format!("width must be in 1..={}", self.slot_count),
                ));
            }
            if rec.reach_km <= Decimal::ZERO {
                return Err(InstanceError::at(format!("{base}/reach_km"), "reach must be positive"));
            }
            if !demand_ids.insert(rec.id) {
                return Err(InstanceError::at(format!("{base}/id"), format!("duplicate demand id {}", rec.id)));
            }
            demands.push(Demand { id: DemandId(rec.id), source, target, width: rec.width, reach: rec.reach_km });
        }
        RestorationInstance::new(network, demands).map_err(|e| InstanceError::at("/demands", e.to_string()))
    }

    pub fn from_instance(inst: &RestorationInstance) -> Self {
        let net = &inst.network;
        let full = ColorSet::full(net.slot_count());
        InstanceFile {
            slot_count: net.slot_count(),
            nodes: net.labels().iter().map(|l| Value::from(l.as_str())).collect(),
            links: net
                .links()
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let colors = net.available_at(i);
                    LinkRecord {
                        id: l.id.0,
                        u: Value::from(net.label(l.u)),
                        v: Value::from(net.label(l.v)),
                        length_km: l.length,
                        colors: if *colors == full { None } else { Some(encode_colors(colors)) },
                    }
                })
                .collect(),
            demands: inst
                .demands
                .iter()
                .map(|d| DemandRecord {
                    id: d.id.0,
                    s: Value::from(net.label(d.source)),
                    t: Value::from(net.label(d.target)),
                    width: d.width,
                    reach_km: d.reach,
                })
                .collect(),
        }
    }
}

pub fn parse_instance(text: &str) -> Result<RestorationInstance, InstanceError> {
    from_json_str::<InstanceFile>(text)?.into_instance()
}

pub fn load_instance(path: &Path) -> Result<RestorationInstance, InstanceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| InstanceError::Io { path: path.display().to_string(), source })?;
    parse_instance(&text)
}

/// Pretty JSON with a trailing newline; byte-stable for equal instances.
pub fn instance_to_string(inst: &RestorationInstance) -> String {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_instance(inst)).expect("instance serializes");
    s.push('\n');
    s
}
