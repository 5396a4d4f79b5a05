#![allow(dead_code)]

use dfn::gas::{to_dissipative, GasNetworkInput, GasNode, GasPipe};
use dfn::instances::{random_boosts, random_injections, random_network};
use dfn::micp::{relaxed_subproblem, BnbSettings, DirectionAssignment};
use dfn::{Injections, Network, Scenario};
use nalgebra::DMatrix;
use rand::Rng;

pub const MIXED_ALPHAS: [f64; 3] = [1.0, 1.5, 2.0];

/// A connected network with `2..=max_nodes` nodes plus injections in
/// `[−1, 1]` and boosts in `[−0.5, 0.5]`.
pub fn random_case<R: Rng>(rng: &mut R, max_nodes: usize, alphas: &[f64]) -> (Network, Injections, Vec<f64>) {
    let n = rng.random_range(2..=max_nodes);
    let extra = rng.random_range(0..=n);
    let net = random_network(rng, n, extra, alphas);
    let x = random_injections(rng, &net, 1.0);
    let b = random_boosts(rng, &net, 0.5);
    (net, x, b)
}

/// Largest node-balance error of the flows implied by `pi`, slack included:
/// each edge carries `f⁻¹(π_from − π_to + b)` and the slack absorbs the
/// negated sum of the free injections.
pub fn balance_residual(net: &Network, x: &Injections, b: &[f64], pi: &[f64]) -> f64 {
    let mut out = vec![0.0; net.num_nodes()];
    for (e, edge) in net.edges().iter().enumerate() {
        let y = pi[edge.from] - pi[edge.to] + b[e];
        let phi = y.signum() * (y.abs() / edge.law.delta()).powf(1.0 / edge.law.alpha());
        out[edge.from] += phi;
        out[edge.to] -= phi;
    }
    let free: f64 = x.free().iter().sum();
    let mut worst = (out[0] + free).abs();
    for (o, q) in out[1..].iter().zip(x.free()) {
        worst = worst.max((o - q).abs());
    }
    worst
}

/// Dense reduced Laplacian `A diag(w) Aᵀ` over the free nodes (slack = node 0).
pub fn dense_laplacian(net: &Network, weights: &[f64]) -> DMatrix<f64> {
    let n = net.num_free();
    let mut l = DMatrix::zeros(n, n);
    for (edge, &w) in net.edges().iter().zip(weights) {
        let (i, j) = (edge.from, edge.to);
        if i > 0 {
            l[(i - 1, i - 1)] += w;
        }
        if j > 0 {
            l[(j - 1, j - 1)] += w;
        }
        if i > 0 && j > 0 {
            l[(i - 1, j - 1)] -= w;
            l[(j - 1, i - 1)] -= w;
        }
    }
    l
}

/// `d/dy f⁻¹(y)` written out for the power law.
pub fn inverse_law_slope(delta: f64, alpha: f64, y: f64) -> f64 {
    (1.0 / alpha) * delta.powf(-1.0 / alpha) * y.abs().powf(1.0 / alpha - 1.0)
}

/// Central difference of `f` at `t` with step `h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, t: f64, h: f64) -> f64 {
    (f(t + h) - f(t - h)) / (2.0 * h)
}

/// Optimum of the relaxed mixed-integer program by enumerating all `2^M`
/// direction assignments. `None` when every leaf is infeasible.
pub fn enumerate_directions(net: &Network, sc: &Scenario, settings: &BnbSettings) -> Option<f64> {
    let m = net.num_edges();
    assert!(m <= 16, "enumeration is only meant for small instances");
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m) {
        let signs: Vec<f64> = (0..m).map(|e| if mask >> e & 1 == 1 { -1.0 } else { 1.0 }).collect();
        let leaf = relaxed_subproblem(net, sc, &DirectionAssignment::fixed(&signs), settings).expect("leaf solve");
        best = best.min(leaf.value);
    }
    best.is_finite().then_some(best)
}

/// Source at pressure `p_source` feeding one consumer through a unit pipe
/// whose pressure may drop to `p_min`. The consumer's cost is its demand,
/// so the optimum is `−√(p_source² − p_min²)`.
pub fn two_node_gas(p_source: f64, p_min: f64) -> (Network, Scenario) {
    let node = |name: &str, slack: Option<f64>, x_min: f64, x_max: f64| GasNode {
        name: name.into(),
        slack_pressure: slack,
        p_min,
        p_max: p_source,
        x_min,
        x_max,
    };
    let input = GasNetworkInput {
        nodes: vec![node("source", Some(p_source), 0.0, 1e3), node("city", None, -1e3, 0.0)],
        pipes: vec![GasPipe {
            name: "main".into(),
            from: "source".into(),
            to: "city".into(),
            friction: 1.0,
            boost: 0.0,
            boost_min: 0.0,
            boost_max: 0.0,
        }],
    };
    to_dissipative(&input, &[0.0, 1.0], None).expect("valid gas network")
}

pub fn example_network_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/paper_like.json")
}
