//! Graph, per-edge laws, scenario boxes and the flow/potential state shared by
//! every solver.
//!
//! Nodes and edges are dense indices. The slack node is always index 0; the
//! constructor reorders nodes so this holds, keeping the original names in a
//! side table.

use serde::{Deserialize, Serialize};

use crate::dissipation::DissipationLaw;
use crate::error::ModelError;

pub type NodeId = usize;
pub type EdgeId = usize;

/// Index of the slack node in every [`Network`].
pub const SLACK: NodeId = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub law: DissipationLaw,
    /// Nominal potential boost; used whenever the boost is not a decision variable.
    pub b_fixed: Option<f64>,
}

impl Edge {
    pub fn new(from: NodeId, to: NodeId, law: DissipationLaw) -> Self {
        Self {
            from,
            to,
            law,
            b_fixed: None,
        }
    }
}

/// A node as described by the caller, before reordering.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    /// `Some(potential)` marks the slack node.
    pub slack_potential: Option<f64>,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            slack_potential: None,
        }
    }

    pub fn slack(name: impl Into<String>, potential: f64) -> Self {
        Self {
            name: name.into(),
            slack_potential: Some(potential),
        }
    }
}

/// Validated, immutable network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    names: Vec<String>,
    edge_names: Vec<String>,
    edges: Vec<Edge>,
    slack_potential: f64,
    /// For each node, the incident edges and the sign with which their flow
    /// leaves the node.
    incidence: Vec<Vec<(EdgeId, f64)>>,
}

impl Network {
    /// Builds a network from caller-ordered nodes. The slack node is moved to
    /// index 0 and the remaining nodes keep their relative order; edge
    /// endpoints refer to the caller's indices and are remapped.
    pub fn new(nodes: Vec<NodeSpec>, edges: Vec<Edge>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::Empty);
        }
        let slacks: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.slack_potential.is_some())
            .map(|(i, _)| i)
            .collect();
        let slack = match slacks.as_slice() {
            [] => return Err(ModelError::NoSlack),
            [s] => *s,
            many => {
                return Err(ModelError::MultipleSlack(
                    many.iter().map(|&i| nodes[i].name.clone()).collect(),
                ))
            }
        };
        let slack_potential = nodes[slack].slack_potential.unwrap();
        if !slack_potential.is_finite() {
            return Err(ModelError::InvalidBounds(format!(
                "slack potential {slack_potential} is not finite"
            )));
        }

        let n = nodes.len();
        let mut new_index = vec![0; n];
        let mut names = Vec::with_capacity(n);
        names.push(nodes[slack].name.clone());
        for (i, node) in nodes.iter().enumerate() {
            if i != slack {
                new_index[i] = names.len();
                names.push(node.name.clone());
            }
        }

        let mut remapped = Vec::with_capacity(edges.len());
        for (e, mut edge) in edges.into_iter().enumerate() {
            for end in [edge.from, edge.to] {
                if end >= n {
                    return Err(ModelError::UnknownNode {
                        edge: e,
                        node: end,
                        num_nodes: n,
                    });
                }
            }
            edge.from = new_index[edge.from];
            edge.to = new_index[edge.to];
            remapped.push(edge);
        }
        let edge_names = (0..remapped.len()).map(|e| format!("e{e}")).collect();
        Self::from_parts(names, edge_names, remapped, slack_potential)
    }

    /// Network whose node 0 is the slack; nodes are named by their index.
    pub fn with_slack_first(
        num_nodes: usize,
        slack_potential: f64,
        edges: Vec<Edge>,
    ) -> Result<Self, ModelError> {
        if num_nodes == 0 {
            return Err(ModelError::Empty);
        }
        let names = (0..num_nodes).map(|i| i.to_string()).collect();
        let edge_names = (0..edges.len()).map(|e| format!("e{e}")).collect();
        for (e, edge) in edges.iter().enumerate() {
            for end in [edge.from, edge.to] {
                if end >= num_nodes {
                    return Err(ModelError::UnknownNode {
                        edge: e,
                        node: end,
                        num_nodes,
                    });
                }
            }
        }
        Self::from_parts(names, edge_names, edges, slack_potential)
    }

    fn from_parts(
        names: Vec<String>,
        edge_names: Vec<String>,
        edges: Vec<Edge>,
        slack_potential: f64,
    ) -> Result<Self, ModelError> {
        let n = names.len();
        let mut incidence = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            if edge.from == edge.to {
                return Err(ModelError::SelfLoop {
                    edge: e,
                    node: edge.from,
                });
            }
            if let Some(b) = edge.b_fixed {
                if !b.is_finite() {
                    return Err(ModelError::InvalidBounds(format!(
                        "edge {e} has non-finite boost {b}"
                    )));
                }
            }
            incidence[edge.from].push((e, 1.0));
            incidence[edge.to].push((e, -1.0));
        }
        let components = connected_components(n, &edges);
        if components.len() > 1 {
            return Err(ModelError::DisconnectedGraph { components });
        }
        Ok(Self {
            names,
            edge_names,
            edges,
            slack_potential,
            incidence,
        })
    }

    /// Replaces the display names of the edges.
    pub fn with_edge_names(mut self, names: Vec<String>) -> Result<Self, ModelError> {
        if names.len() != self.edges.len() {
            return Err(ModelError::Dimension {
                what: "edge names",
                expected: self.edges.len(),
                got: names.len(),
            });
        }
        self.edge_names = names;
        Ok(self)
    }

    /// Same graph and laws with a different slack potential.
    pub fn with_slack_potential(&self, potential: f64) -> Self {
        let mut net = self.clone();
        net.slack_potential = potential;
        net
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of nodes whose potential is free (all but the slack).
    pub fn num_free(&self) -> usize {
        self.names.len() - 1
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }

    pub fn slack_potential(&self) -> f64 {
        self.slack_potential
    }

    pub fn node_name(&self, i: NodeId) -> &str {
        &self.names[i]
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn edge_name(&self, e: EdgeId) -> &str {
        &self.edge_names[e]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    /// Incident edges of `i` with the sign of their flow leaving `i`.
    pub fn incident(&self, i: NodeId) -> &[(EdgeId, f64)] {
        &self.incidence[i]
    }

    /// Nominal boosts (`b_fixed`, or 0 where unset).
    pub fn nominal_boosts(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.b_fixed.unwrap_or(0.0)).collect()
    }

    /// `π_from − π_to + b` for every edge.
    pub fn drops(&self, pi: &[f64], b: &[f64]) -> Vec<f64> {
        self.edges
            .iter()
            .zip(b)
            .map(|(e, &bk)| pi[e.from] - pi[e.to] + bk)
            .collect()
    }

    /// Net flow leaving each node, `Σ_{j∈∂i} φ_ij`.
    pub fn outflow(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes()];
        for (edge, &f) in self.edges.iter().zip(phi) {
            out[edge.from] += f;
            out[edge.to] -= f;
        }
        out
    }

    /// True when every edge follows the quadratic law.
    pub fn is_gas(&self) -> bool {
        self.edges.iter().all(|e| e.law.alpha() == 2.0)
    }
}

fn connected_components(n: usize, edges: &[Edge]) -> Vec<Vec<NodeId>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in edges {
        if e.from < n && e.to < n {
            let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<NodeId>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Nodal injections. Only the non-slack entries are stored; the slack
/// injection follows from total balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injections {
    free: Vec<f64>,
}

impl Injections {
    pub fn zeros(network: &Network) -> Self {
        Self {
            free: vec![0.0; network.num_free()],
        }
    }

    /// From values for nodes `1..N`.
    pub fn from_free(free: Vec<f64>) -> Self {
        Self { free }
    }

    /// From a full per-node vector; the slack entry is ignored.
    pub fn from_full(full: &[f64]) -> Self {
        Self {
            free: full[1..].to_vec(),
        }
    }

    pub fn free(&self) -> &[f64] {
        &self.free
    }

    pub fn slack(&self) -> f64 {
        -self.free.iter().sum::<f64>()
    }

    pub fn get(&self, i: NodeId) -> f64 {
        if i == SLACK {
            self.slack()
        } else {
            self.free[i - 1]
        }
    }

    /// All `N` injections including the derived slack value.
    pub fn full(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.free.len() + 1);
        v.push(self.slack());
        v.extend_from_slice(&self.free);
        v
    }

    pub fn len_free(&self) -> usize {
        self.free.len()
    }
}

/// Edge flows and node potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
}

impl FlowState {
    /// Zero flows and all potentials at the slack value.
    pub fn flat(network: &Network) -> Self {
        Self {
            phi: vec![0.0; network.num_edges()],
            pi: vec![network.slack_potential(); network.num_nodes()],
        }
    }
}

/// Boxes, costs and compressor flags of a max-throughput instance.
///
/// Infinite entries mean "unbounded". All vectors are indexed by the
/// network's dense node/edge ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub pi_lo: Vec<f64>,
    pub pi_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub cost: Vec<f64>,
    pub b_lo: Vec<f64>,
    pub b_hi: Vec<f64>,
    pub b_variable: Vec<bool>,
}

impl Scenario {
    /// No bounds, zero cost, boosts fixed at their nominal values.
    pub fn unbounded(network: &Network) -> Self {
        let n = network.num_nodes();
        let b = network.nominal_boosts();
        Self {
            pi_lo: vec![f64::NEG_INFINITY; n],
            pi_hi: vec![f64::INFINITY; n],
            x_lo: vec![f64::NEG_INFINITY; n],
            x_hi: vec![f64::INFINITY; n],
            cost: vec![0.0; n],
            b_lo: b.clone(),
            b_hi: b,
            b_variable: vec![false; network.num_edges()],
        }
    }

    /// Edges whose boost is a decision variable with a nondegenerate range.
    pub fn variable_boosts(&self) -> Vec<EdgeId> {
        (0..self.b_variable.len())
            .filter(|&e| self.b_variable[e] && self.b_hi[e] > self.b_lo[e])
            .collect()
    }

    /// Boosts used when compression is not optimized: the network's nominal
    /// values clamped into the boost box.
    pub fn fixed_boosts(&self, network: &Network) -> Vec<f64> {
        network
            .nominal_boosts()
            .iter()
            .enumerate()
            .map(|(e, &b)| b.clamp(self.b_lo[e], self.b_hi[e]))
            .collect()
    }

    /// Copy with every boost box turned into a decision variable (or not).
    pub fn with_compression(&self, enabled: bool) -> Self {
        let mut s = self.clone();
        for e in 0..s.b_variable.len() {
            s.b_variable[e] = enabled && s.b_hi[e] > s.b_lo[e];
        }
        s
    }

    /// Full objective `Σ c_i x_i` with the slack injection derived.
    pub fn objective(&self, x: &Injections) -> f64 {
        x.full().iter().zip(&self.cost).map(|(a, c)| a * c).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub slack: String,
    pub slack_potential: f64,
    pub independent_loops: usize,
    pub variable_boosts: usize,
}

/// Checks connectivity and slack uniqueness of `network` again, and the
/// bound consistency of `scenario` against it.
pub fn validate(network: &Network, scenario: &Scenario) -> Result<ValidationReport, ModelError> {
    let n = network.num_nodes();
    let m = network.num_edges();
    let components = connected_components(n, network.edges());
    if components.len() > 1 {
        return Err(ModelError::DisconnectedGraph { components });
    }
    for (what, len, expected) in [
        ("pi_lo", scenario.pi_lo.len(), n),
        ("pi_hi", scenario.pi_hi.len(), n),
        ("x_lo", scenario.x_lo.len(), n),
        ("x_hi", scenario.x_hi.len(), n),
        ("cost", scenario.cost.len(), n),
        ("b_lo", scenario.b_lo.len(), m),
        ("b_hi", scenario.b_hi.len(), m),
        ("b_variable", scenario.b_variable.len(), m),
    ] {
        if len != expected {
            return Err(ModelError::Dimension {
                what,
                expected,
                got: len,
            });
        }
    }
    for i in 0..n {
        let name = network.node_name(i);
        check_interval("potential", name, scenario.pi_lo[i], scenario.pi_hi[i])?;
        check_interval("injection", name, scenario.x_lo[i], scenario.x_hi[i])?;
        if !scenario.cost[i].is_finite() {
            return Err(ModelError::InvalidBounds(format!(
                "node {name}: cost is not finite"
            )));
        }
    }
    for e in 0..m {
        let name = network.edge_name(e);
        check_interval("boost", name, scenario.b_lo[e], scenario.b_hi[e])?;
        if !(scenario.b_lo[e].is_finite() && scenario.b_hi[e].is_finite()) {
            return Err(ModelError::InvalidBounds(format!(
                "edge {name}: boost bounds must be finite"
            )));
        }
    }
    let s = network.slack_potential();
    if s < scenario.pi_lo[SLACK] || s > scenario.pi_hi[SLACK] {
        return Err(ModelError::InvalidBounds(format!(
            "slack node {}: potential {s} outside [{}, {}]",
            network.node_name(SLACK),
            scenario.pi_lo[SLACK],
            scenario.pi_hi[SLACK]
        )));
    }
    Ok(ValidationReport {
        num_nodes: n,
        num_edges: m,
        slack: network.node_name(SLACK).to_string(),
        slack_potential: s,
        independent_loops: m + 1 - n,
        variable_boosts: scenario.variable_boosts().len(),
    })
}

fn check_interval(what: &str, name: &str, lo: f64, hi: f64) -> Result<(), ModelError> {
    if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
        return Err(ModelError::InvalidBounds(format!(
            "{name}: {what} bounds [{lo}, {hi}] are inconsistent"
        )));
    }
    Ok(())
}

/// `q_i − Σ_{j∈∂i} φ_ij` for every node, the slack using its derived injection.
pub fn node_balance_residual(
    network: &Network,
    injections: &Injections,
    state: &FlowState,
) -> Vec<f64> {
    let out = network.outflow(&state.phi);
    injections
        .full()
        .iter()
        .zip(out)
        .map(|(q, o)| q - o)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gas() -> DissipationLaw {
        DissipationLaw::quadratic(1.0).unwrap()
    }

    fn path2() -> Network {
        Network::with_slack_first(2, 2.0, vec![Edge::new(0, 1, gas())]).unwrap()
    }

    #[test]
    fn minimal_network_validates() {
        let net = path2();
        let mut sc = Scenario::unbounded(&net);
        sc.pi_lo = vec![0.0, 0.0];
        sc.pi_hi = vec![4.0, 4.0];
        let report = validate(&net, &sc).unwrap();
        assert_eq!(report.num_nodes, 2);
        assert_eq!(report.independent_loops, 0);
    }

    #[test]
    fn two_components_are_reported() {
        let err = Network::with_slack_first(
            4,
            1.0,
            vec![Edge::new(0, 1, gas()), Edge::new(2, 3, gas())],
        )
        .unwrap_err();
        match err {
            ModelError::DisconnectedGraph { components } => {
                assert_eq!(components, vec![vec![0, 1], vec![2, 3]]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverted_potential_bounds() {
        let net = path2();
        let mut sc = Scenario::unbounded(&net);
        sc.pi_lo[1] = 5.0;
        sc.pi_hi[1] = 3.0;
        let err = validate(&net, &sc).unwrap_err();
        assert!(matches!(err, ModelError::InvalidBounds(ref m) if m.contains("1:")), "{err}");
    }

    #[test]
    fn slack_outside_its_box() {
        let net = path2();
        let mut sc = Scenario::unbounded(&net);
        sc.pi_hi[0] = 1.0;
        assert!(matches!(validate(&net, &sc), Err(ModelError::InvalidBounds(_))));
    }

    #[test]
    fn slack_uniqueness() {
        let e = vec![Edge::new(0, 1, gas())];
        assert_eq!(
            Network::new(vec![NodeSpec::new("a"), NodeSpec::new("b")], e.clone()).unwrap_err(),
            ModelError::NoSlack
        );
        assert!(matches!(
            Network::new(vec![NodeSpec::slack("a", 1.0), NodeSpec::slack("b", 1.0)], e),
            Err(ModelError::MultipleSlack(_))
        ));
    }

    #[test]
    fn self_loop_rejected() {
        assert!(matches!(
            Network::with_slack_first(2, 0.0, vec![Edge::new(0, 1, gas()), Edge::new(1, 1, gas())]),
            Err(ModelError::SelfLoop { edge: 1, node: 1 })
        ));
    }

    #[test]
    fn slack_is_moved_to_front() {
        let net = Network::new(
            vec![NodeSpec::new("a"), NodeSpec::new("b"), NodeSpec::slack("s", 3.0)],
            vec![Edge::new(0, 2, gas()), Edge::new(2, 1, gas())],
        )
        .unwrap();
        assert_eq!(net.node_names(), &["s", "a", "b"]);
        assert_eq!((net.edge(0).from, net.edge(0).to), (1, 0));
        assert_eq!((net.edge(1).from, net.edge(1).to), (0, 2));
        assert_eq!(net.slack_potential(), 3.0);
    }

    #[test]
    fn parallel_edges_are_distinct() {
        let net = Network::with_slack_first(2, 0.0, vec![Edge::new(0, 1, gas()), Edge::new(1, 0, gas())])
            .unwrap();
        assert_eq!(net.incident(0), &[(0, 1.0), (1, -1.0)]);
    }

    #[test]
    fn balance_residual_examples() {
        let net = path2();
        let zero = FlowState {
            phi: vec![0.0],
            pi: vec![2.0, 2.0],
        };
        assert_eq!(node_balance_residual(&net, &Injections::zeros(&net), &zero), vec![0.0, 0.0]);

        let state = FlowState {
            phi: vec![1.0],
            pi: vec![2.0, 1.0],
        };
        let q = Injections::from_full(&[1.0, -1.0]);
        assert_eq!(node_balance_residual(&net, &q, &state), vec![0.0, 0.0]);
        let q = Injections::from_full(&[2.0, -2.0]);
        assert_eq!(node_balance_residual(&net, &q, &state), vec![1.0, -1.0]);
    }

    #[test]
    fn slack_injection_is_derived() {
        let q = Injections::from_free(vec![-1.0, 0.5, -2.0]);
        assert_eq!(q.slack(), 2.5);
        assert_eq!(q.full(), vec![2.5, -1.0, 0.5, -2.0]);
        assert_eq!(q.get(0), 2.5);
        assert_eq!(q.get(2), 0.5);
    }

    proptest! {
        #[test]
        fn validation_is_order_independent(
            n in 2usize..9,
            extra in proptest::collection::vec((0usize..9, 0usize..9), 0..6),
            seed in any::<u64>(),
        ) {
            let mut edges: Vec<Edge> = (1..n).map(|i| Edge::new(i - 1, i, gas())).collect();
            for (a, b) in extra {
                let (a, b) = (a % n, b % n);
                if a != b {
                    edges.push(Edge::new(a, b, gas()));
                }
            }
            let mut shuffled = edges.clone();
            let len = shuffled.len();
            let mut s = seed;
            for i in (1..len).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = Network::with_slack_first(n, 1.0, edges).unwrap();
            let b = Network::with_slack_first(n, 1.0, shuffled).unwrap();
            let sa = Scenario::unbounded(&a);
            let ra = validate(&a, &sa).unwrap();
            prop_assert_eq!(&ra, &validate(&a, &sa).unwrap());
            prop_assert_eq!(ra, validate(&b, &Scenario::unbounded(&b)).unwrap());
        }
    }
}
