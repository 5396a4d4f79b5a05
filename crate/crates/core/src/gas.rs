//! Natural-gas front end: potentials are squared pressures, pipes follow
//! `π_i − π_j + b = δ φ|φ|`, and compressors add a boost `b` in squared
//! pressure units.

use serde::{Deserialize, Serialize};

use crate::dissipation::DissipationLaw;
use crate::error::ModelError;
use crate::linalg::SparseSymmetric;
use crate::network::{Edge, Network, NodeSpec, Scenario};

pub fn pressure_to_potential(p: f64) -> f64 {
    p * p
}

pub fn potential_to_pressure(pi: f64) -> f64 {
    pi.max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasNode {
    pub name: String,
    /// Fixed pressure of the slack node.
    pub slack_pressure: Option<f64>,
    pub p_min: f64,
    pub p_max: f64,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasPipe {
    pub name: String,
    pub from: String,
    pub to: String,
    pub friction: f64,
    /// Nominal boost; the compressor range is `[boost_min, boost_max]`.
    pub boost: f64,
    pub boost_min: f64,
    pub boost_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasNetworkInput {
    pub nodes: Vec<GasNode>,
    pub pipes: Vec<GasPipe>,
}

/// Maps a gas network onto the generic model (`α = 2`, `π = p²`). Costs
/// default to the nominal demands; pass `costs` to override them.
pub fn to_dissipative(
    input: &GasNetworkInput,
    demands: &[f64],
    costs: Option<&[f64]>,
) -> Result<(Network, Scenario), ModelError> {
    let n = input.nodes.len();
    for (what, v) in [("demands", demands.len()), ("costs", costs.map_or(n, <[f64]>::len))] {
        if v != n {
            return Err(ModelError::Dimension { what, expected: n, got: v });
        }
    }
    for node in &input.nodes {
        let negative = node.p_min < 0.0 || node.p_max < 0.0 || node.slack_pressure.is_some_and(|p| p < 0.0);
        if negative {
            return Err(ModelError::NegativePressureBound(node.name.clone()));
        }
    }
    let specs: Vec<NodeSpec> = input
        .nodes
        .iter()
        .map(|node| match node.slack_pressure {
            Some(p) => NodeSpec::slack(node.name.clone(), pressure_to_potential(p)),
            None => NodeSpec::new(node.name.clone()),
        })
        .collect();
    let index = |name: &str, edge: usize| {
        input
            .nodes
            .iter()
            .position(|node| node.name == name)
            .ok_or_else(|| ModelError::InvalidBounds(format!("pipe {edge} references unknown node {name}")))
    };
    let mut edges = Vec::with_capacity(input.pipes.len());
    for (k, pipe) in input.pipes.iter().enumerate() {
        if !(pipe.friction > 0.0) {
            return Err(ModelError::ZeroFriction(pipe.name.clone()));
        }
        let mut edge = Edge::new(index(&pipe.from, k)?, index(&pipe.to, k)?, DissipationLaw::quadratic(pipe.friction)?);
        edge.b_fixed = Some(pipe.boost);
        edges.push(edge);
    }
    let network = Network::new(specs, edges)?
        .with_edge_names(input.pipes.iter().map(|p| p.name.clone()).collect())?;

    // the network may reorder nodes to put the slack first
    let mut scenario = Scenario::unbounded(&network);
    for (k, node) in input.nodes.iter().enumerate() {
        let i = network.node_id(&node.name).expect("node kept by construction");
        scenario.pi_lo[i] = pressure_to_potential(node.p_min);
        scenario.pi_hi[i] = pressure_to_potential(node.p_max);
        scenario.x_lo[i] = node.x_min;
        scenario.x_hi[i] = node.x_max;
        scenario.cost[i] = costs.map_or(demands[k], |c| c[k]);
    }
    for (e, pipe) in input.pipes.iter().enumerate() {
        scenario.b_lo[e] = pipe.boost_min;
        scenario.b_hi[e] = pipe.boost_max;
    }
    Ok((network, scenario))
}

fn require_gas(network: &Network) -> Result<(), ModelError> {
    match network.edges().iter().position(|e| e.law.alpha() != 2.0) {
        Some(e) => Err(ModelError::NotGasNetwork(e)),
        None => Ok(()),
    }
}

/// `E(π, b) = (2/3) Σ |π_i − π_j + b|^{3/2} / √δ`.
pub fn gas_energy_closed_form(network: &Network, pi: &[f64], b: &[f64]) -> Result<f64, ModelError> {
    require_gas(network)?;
    Ok(network
        .edges()
        .iter()
        .zip(network.drops(pi, b))
        .map(|(e, y)| 2.0 / 3.0 * y.abs().powf(1.5) / e.law.delta().sqrt())
        .sum())
}

/// Reduced Laplacian with weights `1 / (2 √(δ |y|))`, `|y|` floored at `smooth_eps`.
pub fn gas_hessian_closed_form(
    network: &Network,
    pi: &[f64],
    b: &[f64],
    smooth_eps: f64,
) -> Result<SparseSymmetric, ModelError> {
    require_gas(network)?;
    let weights: Vec<f64> = network
        .edges()
        .iter()
        .zip(network.drops(pi, b))
        .map(|(e, y)| 1.0 / (2.0 * (e.law.delta() * y.abs().max(smooth_eps)).sqrt()))
        .collect();
    Ok(crate::linalg::reduced_laplacian(network, &weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pipe(from: &str, to: &str, friction: f64) -> GasPipe {
        GasPipe {
            name: format!("{from}-{to}"),
            from: from.into(),
            to: to.into(),
            friction,
            boost: 0.0,
            boost_min: 0.0,
            boost_max: 0.0,
        }
    }

    fn node(name: &str, slack: Option<f64>) -> GasNode {
        GasNode {
            name: name.into(),
            slack_pressure: slack,
            p_min: 0.5f64.sqrt(),
            p_max: 5.0f64.sqrt(),
            x_min: -1.0,
            x_max: 0.0,
        }
    }

    fn two_node(friction: f64) -> GasNetworkInput {
        GasNetworkInput {
            nodes: vec![node("a", Some(2.0)), node("b", None)],
            pipes: vec![pipe("a", "b", friction)],
        }
    }

    #[test]
    fn pressure_bounds_become_squared() {
        let (net, sc) = to_dissipative(&two_node(1.0), &[0.0, 1.0], None).unwrap();
        assert!((sc.pi_lo[1] - 0.5).abs() < 1e-15);
        assert!((sc.pi_hi[1] - 5.0).abs() < 1e-15);
        assert_eq!(net.slack_potential(), 4.0);
        assert_eq!((sc.b_lo[0], sc.b_hi[0]), (0.0, 0.0));
        assert_eq!(sc.cost, vec![0.0, 1.0]);
        assert!(net.is_gas());
    }

    #[test]
    fn friction_scales_flow() {
        let (net, _) = to_dissipative(&two_node(4.0), &[0.0, 0.0], None).unwrap();
        assert!((net.edge(0).law.flow(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut bad = two_node(1.0);
        bad.nodes[1].p_min = -0.1;
        assert!(matches!(
            to_dissipative(&bad, &[0.0, 0.0], None),
            Err(ModelError::NegativePressureBound(_))
        ));
        assert!(matches!(
            to_dissipative(&two_node(0.0), &[0.0, 0.0], None),
            Err(ModelError::ZeroFriction(_))
        ));
    }

    #[test]
    fn closed_forms() {
        let (net, _) = to_dissipative(&two_node(1.0), &[0.0, 0.0], None).unwrap();
        assert!((gas_energy_closed_form(&net, &[4.0, 0.0], &[0.0]).unwrap() - 16.0 / 3.0).abs() < 1e-14);
        assert_eq!(gas_energy_closed_form(&net, &[4.0, 4.0], &[0.0]).unwrap(), 0.0);
        assert!((gas_hessian_closed_form(&net, &[4.0, 0.0], &[0.0], 1e-8).unwrap().get(0, 0) - 0.25).abs() < 1e-15);
        assert!(gas_hessian_closed_form(&net, &[4.0, 4.0], &[0.0], 1e-8).unwrap().get(0, 0) > 1e3);

        let (net4, _) = to_dissipative(&two_node(4.0), &[0.0, 0.0], None).unwrap();
        assert!((gas_energy_closed_form(&net4, &[1.0, 0.0], &[0.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((gas_hessian_closed_form(&net4, &[1.0, 0.0], &[0.0], 1e-8).unwrap().get(0, 0) - 0.25).abs() < 1e-15);

        let lin = Network::with_slack_first(2, 0.0, vec![Edge::new(0, 1, DissipationLaw::linear(1.0).unwrap())]).unwrap();
        assert_eq!(gas_energy_closed_form(&lin, &[0.0, 1.0], &[0.0]), Err(ModelError::NotGasNetwork(0)));
    }

    #[test]
    fn pressure_round_trip() {
        for p in [0.0, 1e-3, 0.7, 1.0, 2.5, 37.5] {
            assert!((potential_to_pressure(pressure_to_potential(p)) - p).abs() <= 1e-15 * p.max(1.0));
        }
    }
}
