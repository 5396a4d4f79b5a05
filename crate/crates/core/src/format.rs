//! JSON network files.
//!
//! ```json
//! {
//!   "meta": { "units": "pressure", "name": "demo" },
//!   "nodes": [
//!     { "id": "src", "slack": true, "value": 2.0, "lower": 0.7, "upper": 2.0, "x_min": 0.0 },
//!     { "id": "city", "lower": 0.7, "upper": 2.0, "x_min": -3.0, "x_max": 0.0, "cost": 1.0 }
//!   ],
//!   "edges": [
//!     { "id": "pipe", "from": "src", "to": "city", "delta": 0.5, "b_min": 0.0, "b_max": 1.0 }
//!   ]
//! }
//! ```
//!
//! Node `value` is the fixed slack potential (or pressure), `lower`/`upper`
//! bound the potential (or pressure), `x_min`/`x_max` the injection; absent
//! bounds are unbounded. `injection` gives the load used by `solve-nf`.
//! Edges default to `alpha = 2` and a fixed boost `b = 0`; `b_min`/`b_max`
//! default to `b`. Boosts are always in potential (squared pressure) units.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dissipation::DissipationLaw;
use crate::error::ModelError;
use crate::gas::{self, GasNetworkInput, GasNode, GasPipe};
use crate::network::{validate, Edge, Injections, Network, NodeSpec, Scenario, SLACK};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("edge {edge} references unknown node {node:?}")]
    UnknownNode { edge: String, node: String },
    #[error("duplicate {what} id {id:?}")]
    DuplicateId { what: &'static str, id: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl FormatError {
    /// True for syntax errors, as opposed to content that fails validation.
    pub fn is_parse(&self) -> bool {
        matches!(self, FormatError::Parse { .. } | FormatError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Potential,
    Pressure,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    #[serde(default)]
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub slack: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub id: String,
    pub from: String,
    pub to: String,
    pub delta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_max: Option<f64>,
}

fn default_alpha() -> f64 {
    2.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default)]
    pub meta: Meta,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

/// A validated instance: network, scenario and optional load profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: Option<String>,
    pub units: Units,
    pub network: Network,
    pub scenario: Scenario,
    pub injections: Option<Injections>,
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Instance, FormatError> {
    from_file(&read_file(path)?)
}

pub fn parse_network(text: &str) -> Result<Instance, FormatError> {
    from_file(&parse_file(text)?)
}

/// The raw file, before validation.
pub fn read_file(path: impl AsRef<Path>) -> Result<NetworkFile, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_file(&text)
}

pub fn parse_file(text: &str) -> Result<NetworkFile, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn or_inf(v: Option<f64>, sign: f64) -> f64 {
    v.unwrap_or(sign * f64::INFINITY)
}

pub fn from_file(file: &NetworkFile) -> Result<Instance, FormatError> {
    let mut seen = std::collections::HashSet::new();
    for node in &file.nodes {
        if !seen.insert(node.id.as_str()) {
            return Err(FormatError::DuplicateId { what: "node", id: node.id.clone() });
        }
        if node.slack && node.value.is_none() {
            return Err(FormatError::Invalid(format!("slack node {} has no value", node.id)));
        }
        if node.slack && node.injection.is_some() {
            return Err(FormatError::Invalid(format!(
                "slack node {}: its injection is derived from the balance and cannot be given",
                node.id
            )));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for edge in &file.edges {
        if !seen.insert(edge.id.as_str()) {
            return Err(FormatError::DuplicateId { what: "edge", id: edge.id.clone() });
        }
        for end in [&edge.from, &edge.to] {
            if !file.nodes.iter().any(|n| &n.id == end) {
                return Err(FormatError::UnknownNode {
                    edge: edge.id.clone(),
                    node: end.clone(),
                });
            }
        }
    }

    let (network, mut scenario) = match file.meta.units {
        Units::Potential => potential_instance(file)?,
        Units::Pressure => pressure_instance(file)?,
    };
    // boosts stay fixed until a caller opts into compression
    scenario.b_variable = vec![false; network.num_edges()];
    validate(&network, &scenario)?;

    let injections = if file.nodes.iter().any(|n| n.injection.is_some()) {
        let mut full = vec![0.0; network.num_nodes()];
        for node in &file.nodes {
            let i = network.node_id(&node.id).expect("node present");
            full[i] = node.injection.unwrap_or(0.0);
        }
        Some(Injections::from_full(&full))
    } else {
        None
    };
    Ok(Instance {
        name: file.meta.name.clone(),
        units: file.meta.units,
        network,
        scenario,
        injections,
    })
}

fn node_index(file: &NetworkFile, id: &str) -> usize {
    file.nodes.iter().position(|n| n.id == id).expect("checked earlier")
}

fn potential_instance(file: &NetworkFile) -> Result<(Network, Scenario), FormatError> {
    let specs = file
        .nodes
        .iter()
        .map(|n| match (n.slack, n.value) {
            (true, Some(v)) => NodeSpec::slack(n.id.clone(), v),
            _ => NodeSpec::new(n.id.clone()),
        })
        .collect();
    let mut edges = Vec::with_capacity(file.edges.len());
    for rec in &file.edges {
        let mut edge = Edge::new(
            node_index(file, &rec.from),
            node_index(file, &rec.to),
            DissipationLaw::new(rec.delta, rec.alpha)?,
        );
        edge.b_fixed = Some(rec.b);
        edges.push(edge);
    }
    let network = Network::new(specs, edges)?.with_edge_names(file.edges.iter().map(|e| e.id.clone()).collect())?;
    let mut scenario = Scenario::unbounded(&network);
    for node in &file.nodes {
        let i = network.node_id(&node.id).expect("node present");
        scenario.pi_lo[i] = or_inf(node.lower, -1.0);
        scenario.pi_hi[i] = or_inf(node.upper, 1.0);
        scenario.x_lo[i] = or_inf(node.x_min, -1.0);
        scenario.x_hi[i] = or_inf(node.x_max, 1.0);
        scenario.cost[i] = node.cost;
    }
    for (e, rec) in file.edges.iter().enumerate() {
        scenario.b_lo[e] = rec.b_min.unwrap_or(rec.b);
        scenario.b_hi[e] = rec.b_max.unwrap_or(rec.b);
    }
    Ok((network, scenario))
}

fn pressure_instance(file: &NetworkFile) -> Result<(Network, Scenario), FormatError> {
    if let Some(e) = file.edges.iter().position(|e| e.alpha != 2.0) {
        return Err(ModelError::NotGasNetwork(e).into());
    }
    let input = GasNetworkInput {
        nodes: file
            .nodes
            .iter()
            .map(|n| GasNode {
                name: n.id.clone(),
                slack_pressure: if n.slack { n.value } else { None },
                p_min: n.lower.unwrap_or(0.0),
                p_max: or_inf(n.upper, 1.0),
                x_min: or_inf(n.x_min, -1.0),
                x_max: or_inf(n.x_max, 1.0),
            })
            .collect(),
        pipes: file
            .edges
            .iter()
            .map(|e| GasPipe {
                name: e.id.clone(),
                from: e.from.clone(),
                to: e.to.clone(),
                friction: e.delta,
                boost: e.b,
                boost_min: e.b_min.unwrap_or(e.b),
                boost_max: e.b_max.unwrap_or(e.b),
            })
            .collect(),
    };
    let costs: Vec<f64> = file.nodes.iter().map(|n| n.cost).collect();
    Ok(gas::to_dissipative(&input, &costs, None)?)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// The file form of an instance, in its original units.
pub fn to_file(instance: &Instance) -> NetworkFile {
    let net = &instance.network;
    let sc = &instance.scenario;
    let pressure = instance.units == Units::Pressure;
    let conv = |v: f64| if pressure && v.is_finite() { gas::potential_to_pressure(v) } else { v };
    let nodes = (0..net.num_nodes())
        .map(|i| {
            let lower = if pressure && sc.pi_lo[i] <= 0.0 { None } else { finite(conv(sc.pi_lo[i])) };
            NodeRecord {
                id: net.node_name(i).to_string(),
                slack: i == SLACK,
                value: (i == SLACK).then(|| conv(net.slack_potential())),
                lower,
                upper: finite(conv(sc.pi_hi[i])),
                x_min: finite(sc.x_lo[i]),
                x_max: finite(sc.x_hi[i]),
                cost: sc.cost[i],
                injection: instance
                    .injections
                    .as_ref()
                    .and_then(|q| (i != SLACK).then(|| q.get(i))),
            }
        })
        .collect();
    let edges = net
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let b = edge.b_fixed.unwrap_or(0.0);
            EdgeRecord {
                id: net.edge_name(e).to_string(),
                from: net.node_name(edge.from).to_string(),
                to: net.node_name(edge.to).to_string(),
                delta: edge.law.delta(),
                alpha: edge.law.alpha(),
                b,
                b_min: (sc.b_lo[e] != b).then_some(sc.b_lo[e]),
                b_max: (sc.b_hi[e] != b).then_some(sc.b_hi[e]),
            }
        })
        .collect();
    NetworkFile {
        meta: Meta {
            units: instance.units,
            name: instance.name.clone(),
        },
        nodes,
        edges,
    }
}

pub fn to_json(instance: &Instance) -> String {
    serde_json::to_string_pretty(&to_file(instance)).expect("network files serialize")
}

pub fn save_network(path: impl AsRef<Path>, instance: &Instance) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, to_json(instance) + "\n").map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}
