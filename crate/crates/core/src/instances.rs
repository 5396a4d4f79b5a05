//! Seeded random instances for property checks and benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dissipation::DissipationLaw;
use crate::network::{Edge, Injections, Network, Scenario, SLACK};

/// A connected network on `num_nodes` nodes: a random spanning tree plus up
/// to `extra_edges` chords (no self loops or parallel edges), friction in
/// `[0.5, 2]`, exponents drawn from `alphas`, slack potential in `[1, 3]`.
pub fn random_network<R: Rng>(rng: &mut R, num_nodes: usize, extra_edges: usize, alphas: &[f64]) -> Network {
    assert!(num_nodes >= 2 && !alphas.is_empty());
    let mut pairs: Vec<(usize, usize)> = (1..num_nodes).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..extra_edges {
        let a = rng.random_range(0..num_nodes);
        let b = rng.random_range(0..num_nodes);
        if a != b && !pairs.iter().any(|&(u, v)| (u, v) == (a, b) || (u, v) == (b, a)) {
            pairs.push((a, b));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(u, v)| {
            // random orientation so edge directions carry no information
            let (from, to) = if rng.random_bool(0.5) { (u, v) } else { (v, u) };
            let alpha = *alphas.choose(rng).expect("nonempty");
            Edge::new(from, to, DissipationLaw::new(rng.random_range(0.5..2.0), alpha).expect("valid law"))
        })
        .collect();
    Network::with_slack_first(num_nodes, rng.random_range(1.0..3.0), edges).expect("connected by construction")
}

/// Free injections uniform in `[−scale, scale]`.
pub fn random_injections<R: Rng>(rng: &mut R, network: &Network, scale: f64) -> Injections {
    Injections::from_free((0..network.num_free()).map(|_| rng.random_range(-scale..=scale)).collect())
}

/// Edge boosts uniform in `[−scale, scale]`.
pub fn random_boosts<R: Rng>(rng: &mut R, network: &Network, scale: f64) -> Vec<f64> {
    (0..network.num_edges()).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// A small max-throughput instance with at most `max_edges` edges. Every
/// free node is a consumer, a source or a junction; potentials lie in
/// `[0.2·P, P]` with the slack pinned at `P`, so zero injections are
/// feasible whenever the nominal boosts are zero. Roughly a third of the
/// edges get a boost range `[0, 0.5·P]`.
pub fn random_throughput_instance<R: Rng>(rng: &mut R, max_edges: usize, alphas: &[f64]) -> (Network, Scenario) {
    let max_edges = max_edges.max(1);
    let num_nodes = rng.random_range(2..=(max_edges + 1).min(5));
    let extra = max_edges.saturating_sub(num_nodes - 1);
    let extra = if extra == 0 { 0 } else { rng.random_range(0..=extra) };
    let mut net = random_network(rng, num_nodes, extra, alphas);
    let p = net.slack_potential() + 1.0;
    net = net.with_slack_potential(p);
    let mut sc = Scenario::unbounded(&net);
    for i in 0..net.num_nodes() {
        sc.pi_lo[i] = 0.2 * p;
        sc.pi_hi[i] = p;
        if i == SLACK {
            sc.x_lo[i] = 0.0;
            continue;
        }
        match rng.random_range(0..4) {
            0 => {
                sc.x_lo[i] = 0.0;
                sc.x_hi[i] = rng.random_range(0.2..1.0);
            }
            1 => {
                sc.x_lo[i] = 0.0;
                sc.x_hi[i] = 0.0;
            }
            _ => {
                sc.x_lo[i] = -rng.random_range(0.5..3.0);
                sc.x_hi[i] = 0.0;
                sc.cost[i] = rng.random_range(0.5..1.5);
            }
        }
    }
    for e in 0..net.num_edges() {
        if rng.random_bool(1.0 / 3.0) {
            sc.b_lo[e] = 0.0;
            sc.b_hi[e] = 0.5 * p;
        }
    }
    let compression = rng.random_bool(0.5);
    (net, sc.with_compression(compression))
}
