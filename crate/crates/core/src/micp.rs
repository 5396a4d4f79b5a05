//! Lower bounds for max throughput: the mixed-integer convex relaxation with
//! edge direction variables `s ∈ {−1, +1}` and McCormick envelopes for the
//! products `s·(π_i − π_j + b)`, solved by best-first branch-and-bound over
//! the directions with a log-barrier method for every node relaxation.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierSettings, Constraint, ConvexProgram, Outcome};
use crate::dissipation::DissipationLaw;
use crate::error::OptimizeError;
use crate::network::{validate, EdgeId, Injections, Network, NodeId, Scenario, SLACK};
use crate::parallel::{parallel_map, worker_count};
use crate::throughput::ThroughputSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
    Free,
}

impl Direction {
    pub fn sign(self) -> Option<f64> {
        match self {
            Direction::Forward => Some(1.0),
            Direction::Backward => Some(-1.0),
            Direction::Free => None,
        }
    }

    /// Direction of a flow value, ties going forward.
    pub fn of_flow(phi: f64) -> Self {
        if phi >= 0.0 {
            Direction::Forward
        } else {
            Direction::Backward
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirectionAssignment {
    pub s: Vec<Direction>,
}

impl DirectionAssignment {
    pub fn free(num_edges: usize) -> Self {
        Self {
            s: vec![Direction::Free; num_edges],
        }
    }

    pub fn fixed(signs: &[f64]) -> Self {
        Self {
            s: signs.iter().map(|&v| Direction::of_flow(v)).collect(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.s.iter().all(|d| *d != Direction::Free)
    }

    fn with(&self, e: EdgeId, d: Direction) -> Self {
        let mut s = self.s.clone();
        s[e] = d;
        Self { s }
    }

    /// Completes the free directions with the signs of `phi`.
    fn rounded(&self, phi: &[f64]) -> Self {
        Self {
            s: self
                .s
                .iter()
                .zip(phi)
                .map(|(d, &v)| if *d == Direction::Free { Direction::of_flow(v) } else { *d })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnbSettings {
    pub abs_gap_tol: f64,
    pub rel_gap_tol: f64,
    pub max_nodes: usize,
    pub barrier: BarrierSettings,
    /// Objective of a known feasible point, used as the initial incumbent.
    pub seed_upper: Option<f64>,
    /// Worker threads for node relaxations; 0 picks [`worker_count`].
    pub threads: usize,
}

impl Default for BnbSettings {
    fn default() -> Self {
        Self {
            abs_gap_tol: 1e-6,
            rel_gap_tol: 1e-6,
            max_nodes: 1_000_000,
            barrier: BarrierSettings::default(),
            seed_upper: None,
            threads: 0,
        }
    }
}

impl BnbSettings {
    fn check(&self) -> Result<(), OptimizeError> {
        let b = &self.barrier;
        let ok = self.abs_gap_tol >= 0.0
            && self.rel_gap_tol >= 0.0
            && self.max_nodes > 0
            && b.mu0 > 0.0
            && b.shrink > 0.0
            && b.shrink < 1.0
            && b.inner_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::error::ModelError::InvalidBounds(format!("invalid branch-and-bound settings {self:?}")).into())
        }
    }

    fn tolerance(&self, incumbent: f64) -> f64 {
        self.abs_gap_tol.max(self.rel_gap_tol * incumbent.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicpPoint {
    pub x: Injections,
    pub pi: Vec<f64>,
    pub phi: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relaxed {
    /// Objective at the returned point; `+∞` when the relaxation is infeasible.
    pub value: f64,
    /// Certified lower bound on the relaxation's optimum (`−∞` if unbounded).
    pub bound: f64,
    pub point: Option<MicpPoint>,
}

impl Relaxed {
    fn infeasible() -> Self {
        Self {
            value: f64::INFINITY,
            bound: f64::INFINITY,
            point: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicpStatus {
    Optimal,
    NodeLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicpResult {
    pub lower_bound: f64,
    /// Best objective found at a fully assigned node (or the seed).
    pub incumbent: f64,
    pub best_assignment: Option<DirectionAssignment>,
    pub best_point: Option<MicpPoint>,
    pub nodes_explored: usize,
    pub status: MicpStatus,
    /// Global lower bound after each processed node.
    pub bound_trace: Vec<f64>,
    pub num_nodes: usize,
    pub num_edges: usize,
}

/// Potential-drop bounds `[y̲, ȳ]` of every edge implied by the potential and
/// boost boxes: `ȳ = π̄_i − π̲_j + b̄`, `y̲ = π̲_i − π̄_j + b̲`.
pub fn drop_bounds(network: &Network, scenario: &Scenario) -> Vec<(f64, f64)> {
    let var = boost_mask(network, scenario);
    let fixed = scenario.fixed_boosts(network);
    let (lo, hi) = potential_box(network, scenario);
    network
        .edges()
        .iter()
        .enumerate()
        .map(|(e, ed)| {
            let (b_lo, b_hi) = if var[e] {
                (scenario.b_lo[e], scenario.b_hi[e])
            } else {
                (fixed[e], fixed[e])
            };
            (lo[ed.from] - hi[ed.to] + b_lo, hi[ed.from] - lo[ed.to] + b_hi)
        })
        .collect()
}

fn potential_box(network: &Network, scenario: &Scenario) -> (Vec<f64>, Vec<f64>) {
    let mut lo = scenario.pi_lo.clone();
    let mut hi = scenario.pi_hi.clone();
    lo[SLACK] = network.slack_potential();
    hi[SLACK] = network.slack_potential();
    (lo, hi)
}

fn boost_mask(network: &Network, scenario: &Scenario) -> Vec<bool> {
    let mut mask = vec![false; network.num_edges()];
    for e in scenario.variable_boosts() {
        mask[e] = true;
    }
    mask
}

/// Slacks of the two McCormick inequalities for direction `s`, drop `y` and
/// drop bounds `[y_lo, y_hi]`, as `rhs − δ|φ|^α` (nonnegative when satisfied):
///
/// ```text
/// δ|φ|^α ≤ s·ȳ − y + ȳ
/// δ|φ|^α ≤ s·y̲ + y − y̲
/// ```
pub fn mccormick_slacks(law: &DissipationLaw, phi: f64, y: f64, y_lo: f64, y_hi: f64, s: f64) -> (f64, f64) {
    let lhs = law.delta() * phi.abs().powf(law.alpha());
    let first = if y_hi.is_finite() { s * y_hi - y + y_hi - lhs } else { f64::INFINITY };
    let second = if y_lo.is_finite() { s * y_lo + y - y_lo - lhs } else { f64::INFINITY };
    (first, second)
}

/// Largest violation of the McCormick inequalities by a state, with `s`
/// taken as the sign of each flow (ties forward). Zero when all hold.
pub fn mccormick_violation(network: &Network, scenario: &Scenario, pi: &[f64], phi: &[f64], b: &[f64]) -> f64 {
    let bounds = drop_bounds(network, scenario);
    let drops = network.drops(pi, b);
    let mut worst = 0.0f64;
    for (e, ed) in network.edges().iter().enumerate() {
        let s = Direction::of_flow(phi[e]).sign().unwrap_or(1.0);
        let (a, c) = mccormick_slacks(&ed.law, phi[e], drops[e], bounds[e].0, bounds[e].1, s);
        worst = worst.max(-a).max(-c);
    }
    worst
}

/// Linear under-estimators `y ≥ offset + slope·φ` of the union of the
/// forward set `{φ ≥ 0, f(φ) ≤ y ≤ ȳ}` and the backward set
/// `{φ ≤ 0, y̲ ≤ y ≤ f(φ)}`: the line from `(0, y̲)` tangent to `f` (or the
/// chord to the box corner when the tangent point lies beyond it), then
/// tangents of `f` between that point and the corner. Empty unless the edge
/// can carry flow both ways. The mirror cuts come from `(−ȳ, −y̲)`.
pub fn envelope_cuts(law: &DissipationLaw, y_lo: f64, y_hi: f64) -> Vec<(f64, f64)> {
    const EXTRA_TANGENTS: usize = 3;
    if !(y_lo < 0.0 && y_hi > 0.0 && y_lo.is_finite() && y_hi.is_finite()) {
        return Vec::new();
    }
    let (d, a) = (law.delta(), law.alpha());
    let reach = law.flow(y_hi);
    let touch = if a > 1.0 { (-y_lo / ((a - 1.0) * d)).powf(1.0 / a) } else { f64::INFINITY };
    if touch >= reach {
        return vec![((y_hi - y_lo) / reach, y_lo)];
    }
    let mut cuts = vec![(law.resistance(touch), y_lo)];
    for k in 1..=EXTRA_TANGENTS {
        let p = touch + (reach - touch) * k as f64 / EXTRA_TANGENTS as f64;
        let slope = law.resistance(p);
        cuts.push((slope, law.potential_drop(p) - slope * p));
    }
    cuts
}

/// Consequences of a direction assignment: potential and boost boxes
/// tightened by the fixed directions, and the edges they force to zero flow.
#[derive(Debug, Clone)]
struct Presolved {
    pi_lo: Vec<f64>,
    pi_hi: Vec<f64>,
    b_lo: Vec<f64>,
    b_hi: Vec<f64>,
    /// Fixed edges that carry no flow.
    zero_flow: Vec<bool>,
    /// Zero-flow edges whose drop is zero as well (implied by the potentials).
    zero_drop: Vec<bool>,
    /// Nodes whose injection must be zero.
    zero_injection: Vec<bool>,
    /// `π_v − π_u = c` as `(u, v, c)`.
    links: Vec<(NodeId, NodeId, f64)>,
}

/// Variable layout of a node relaxation: `[φ | π | b | s_free]`, where only
/// potentials and boosts with a nondegenerate box get a variable; the others
/// enter as constants.
struct Layout {
    m: usize,
    pi_slot: Vec<Option<usize>>,
    b_slot: Vec<Option<usize>>,
    free_s: Vec<Option<usize>>,
    dim: usize,
}

impl Layout {
    fn new(pre: &Presolved, s: &DirectionAssignment) -> Self {
        let m = pre.b_lo.len();
        let mut next = m;
        let mut slot = |open: bool| {
            open.then(|| {
                next += 1;
                next - 1
            })
        };
        let pi_slot = (0..pre.pi_lo.len())
            .map(|i| slot(i != SLACK && pre.pi_lo[i] < pre.pi_hi[i]))
            .collect();
        let b_slot = (0..m).map(|e| slot(pre.b_lo[e] < pre.b_hi[e])).collect();
        let free_s = s.s.iter().map(|d| slot(*d == Direction::Free)).collect();
        Self {
            m,
            pi_slot,
            b_slot,
            free_s,
            dim: next,
        }
    }
}

struct Relaxation<'a> {
    network: &'a Network,
    scenario: &'a Scenario,
    var: Vec<bool>,
    fixed_b: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    /// Objective weight of each flow: `c̃_from − c̃_to` over free endpoints.
    weights: Vec<f64>,
}

impl<'a> Relaxation<'a> {
    fn new(network: &'a Network, scenario: &'a Scenario) -> Self {
        let c0 = scenario.cost[SLACK];
        let c_rel = |i: usize| if i == SLACK { 0.0 } else { scenario.cost[i] - c0 };
        Self {
            network,
            scenario,
            var: boost_mask(network, scenario),
            fixed_b: scenario.fixed_boosts(network),
            bounds: drop_bounds(network, scenario),
            weights: network
                .edges()
                .iter()
                .map(|e| c_rel(e.from) - c_rel(e.to))
                .collect(),
        }
    }

    /// Implicit equalities of a direction assignment. Each fixed direction
    /// implies a difference constraint on the potentials (`π_j − π_i ≤ b̄`
    /// forward, `π_i − π_j ≤ −b̲` backward) and the boxes are arcs to a
    /// ground node. After all-pairs shortest paths a negative cycle proves
    /// the node infeasible (`None`); a fixed edge on a zero-weight cycle can
    /// carry no flow and pins its boost; potentials on a zero cycle differ
    /// by a constant; and the boxes tighten to their shortest-path bounds.
    /// Without this the barrier would face feasible sets with no interior.
    fn presolve(&self, s: &DirectionAssignment) -> Option<Presolved> {
        let net = self.network;
        let n = net.num_nodes();
        let ground = n;
        let (mut pi_lo, mut pi_hi) = potential_box(net, self.scenario);
        let (mut b_lo, mut b_hi): (Vec<f64>, Vec<f64>) = (0..net.num_edges())
            .map(|e| {
                if self.var[e] {
                    (self.scenario.b_lo[e], self.scenario.b_hi[e])
                } else {
                    (self.fixed_b[e], self.fixed_b[e])
                }
            })
            .unzip();
        let scale = pi_lo
            .iter()
            .chain(&pi_hi)
            .chain(&b_lo)
            .chain(&b_hi)
            .filter(|v| v.is_finite())
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale;

        // dist[u][v] bounds π_v − π_u
        let mut dist = vec![vec![f64::INFINITY; n + 1]; n + 1];
        let arc = |dist: &mut Vec<Vec<f64>>, u: usize, v: usize, w: f64| {
            if w < dist[u][v] {
                dist[u][v] = w;
            }
        };
        for i in 0..=n {
            dist[i][i] = 0.0;
        }
        for i in 0..n {
            if pi_hi[i].is_finite() {
                arc(&mut dist, ground, i, pi_hi[i]);
            }
            if pi_lo[i].is_finite() {
                arc(&mut dist, i, ground, -pi_lo[i]);
            }
        }
        let mut arcs = Vec::new();
        for (e, ed) in net.edges().iter().enumerate() {
            match s.s[e].sign() {
                Some(sg) if sg > 0.0 => arcs.push((e, ed.from, ed.to, b_hi[e])),
                Some(_) => arcs.push((e, ed.to, ed.from, -b_lo[e])),
                None => {}
            }
        }
        for &(_, u, v, w) in &arcs {
            if w.is_finite() {
                arc(&mut dist, u, v, w);
            }
        }
        for k in 0..=n {
            for u in 0..=n {
                let duk = dist[u][k];
                if !duk.is_finite() {
                    continue;
                }
                for v in 0..=n {
                    let cand = duk + dist[k][v];
                    if cand < dist[u][v] {
                        dist[u][v] = cand;
                    }
                }
            }
        }
        if (0..=n).any(|k| dist[k][k] < -tol) {
            return None;
        }

        let mut zero_flow = vec![false; net.num_edges()];
        for &(e, u, v, w) in &arcs {
            if w + dist[v][u] <= tol {
                zero_flow[e] = true;
                if s.s[e] == Direction::Forward {
                    b_lo[e] = b_hi[e];
                } else {
                    b_hi[e] = b_lo[e];
                }
            }
        }
        let zero_drop = zero_flow.clone();
        let zero_injection = self.flow_presolve(s, &mut zero_flow)?;
        for i in 1..n {
            pi_hi[i] = pi_hi[i].min(dist[ground][i]);
            pi_lo[i] = pi_lo[i].max(-dist[i][ground]);
            if pi_hi[i] - pi_lo[i] <= tol {
                pi_hi[i] = pi_lo[i];
            }
        }
        // one equality per potential tied to an earlier unfixed one
        let mut links = Vec::new();
        for v in 1..n {
            if pi_lo[v] == pi_hi[v] {
                continue;
            }
            let partner = (1..v).find(|&u| pi_lo[u] < pi_hi[u] && dist[u][v] + dist[v][u] <= tol);
            if let Some(u) = partner {
                links.push((u, v, dist[u][v]));
            }
        }
        Some(Presolved {
            pi_lo,
            pi_hi,
            b_lo,
            b_hi,
            zero_flow,
            zero_drop,
            zero_injection,
            links,
        })
    }

    /// Flow-side implicit equalities. In a conformal decomposition every
    /// flow is a sum of cycles and of paths from a node that may inject
    /// (`x̄ > 0`) to one that may withdraw (`x̲ < 0`), each following the
    /// allowed directions. A fixed edge on no such path or cycle carries no
    /// flow, and a node that starts or ends no such path has `x = 0`
    /// (`None` if its box excludes zero). Repeats until nothing changes and
    /// returns the zero-injection nodes.
    fn flow_presolve(&self, s: &DirectionAssignment, zero_flow: &mut [bool]) -> Option<Vec<bool>> {
        let net = self.network;
        let sc = self.scenario;
        let n = net.num_nodes();
        let can_inject: Vec<bool> = (0..n).map(|i| sc.x_hi[i] > 0.0).collect();
        let can_withdraw: Vec<bool> = (0..n).map(|i| sc.x_lo[i] < 0.0).collect();
        loop {
            let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
            for (e, ed) in net.edges().iter().enumerate() {
                if zero_flow[e] {
                    continue;
                }
                match s.s[e] {
                    Direction::Forward => out[ed.from].push(ed.to),
                    Direction::Backward => out[ed.to].push(ed.from),
                    Direction::Free => {
                        out[ed.from].push(ed.to);
                        out[ed.to].push(ed.from);
                    }
                }
            }
            // reach[u][v]: a path of length ≥ 1 leads from u to v
            let reach: Vec<Vec<bool>> = (0..n)
                .map(|u| {
                    let mut seen = vec![false; n];
                    let mut stack: Vec<usize> = out[u].clone();
                    while let Some(v) = stack.pop() {
                        if !seen[v] {
                            seen[v] = true;
                            stack.extend(&out[v]);
                        }
                    }
                    seen
                })
                .collect();
            let fed = |u: usize| can_inject[u] || (0..n).any(|src| can_inject[src] && reach[src][u]);
            let drains = |v: usize| can_withdraw[v] || (0..n).any(|dst| can_withdraw[dst] && reach[v][dst]);
            let mut changed = false;
            for (e, ed) in net.edges().iter().enumerate() {
                let (u, v) = match s.s[e] {
                    Direction::Forward => (ed.from, ed.to),
                    Direction::Backward => (ed.to, ed.from),
                    Direction::Free => continue,
                };
                if zero_flow[e] || reach[v][u] || (fed(u) && drains(v)) {
                    continue;
                }
                zero_flow[e] = true;
                changed = true;
            }
            if changed {
                continue;
            }
            let mut zero_injection = vec![false; n];
            for i in 0..n {
                let injects = can_inject[i] && (0..n).any(|t| t != i && can_withdraw[t] && reach[i][t]);
                let withdraws = can_withdraw[i] && (0..n).any(|t| t != i && can_inject[t] && reach[t][i]);
                if !injects && !withdraws {
                    if sc.x_lo[i] > 0.0 || sc.x_hi[i] < 0.0 {
                        return None;
                    }
                    zero_injection[i] = true;
                }
            }
            return Some(zero_injection);
        }
    }

    /// Linear form of the drop `y_e`: variable terms and constant.
    fn drop_terms(&self, lay: &Layout, pre: &Presolved, e: EdgeId) -> (Vec<(usize, f64)>, f64) {
        let ed = self.network.edge(e);
        let mut terms = Vec::with_capacity(3);
        let mut constant = 0.0;
        match lay.pi_slot[ed.from] {
            Some(j) => terms.push((j, 1.0)),
            None => constant += pre.pi_lo[ed.from],
        }
        match lay.pi_slot[ed.to] {
            Some(j) => terms.push((j, -1.0)),
            None => constant -= pre.pi_lo[ed.to],
        }
        match lay.b_slot[e] {
            Some(j) => terms.push((j, 1.0)),
            None => constant += pre.b_lo[e],
        }
        (terms, constant)
    }

    fn program(&self, s: &DirectionAssignment, pre: &Presolved) -> (Layout, ConvexProgram) {
        let net = self.network;
        let sc = self.scenario;
        let lay = Layout::new(pre, s);
        let mut prog = ConvexProgram {
            dim: lay.dim,
            objective: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(e, &w)| (e, w))
                .collect(),
            ..Default::default()
        };
        let cons = &mut prog.constraints;

        // injection boxes on x = Aφ, pinned nodes as equalities
        let pinned: Vec<bool> = (0..net.num_nodes()).map(|i| sc.x_lo[i] == sc.x_hi[i]).collect();
        let all_pinned = pinned.iter().all(|p| *p);
        for i in 0..net.num_nodes() {
            let row: Vec<(usize, f64)> = net.incident(i).iter().map(|&(e, sg)| (e, sg)).collect();
            if pre.zero_injection[i] {
                prog.equalities.push((row, 0.0));
                continue;
            }
            if pinned[i] {
                if !(all_pinned && i == SLACK) {
                    prog.equalities.push((row, sc.x_lo[i]));
                }
                continue;
            }
            if sc.x_hi[i].is_finite() {
                cons.push(Constraint::linear(row.clone(), sc.x_hi[i]));
            }
            if sc.x_lo[i].is_finite() {
                cons.push(Constraint::linear(negate(&row), -sc.x_lo[i]));
            }
        }
        for (i, slot) in lay.pi_slot.iter().enumerate() {
            if let Some(j) = *slot {
                push_box(cons, j, pre.pi_lo[i], pre.pi_hi[i]);
            }
        }
        for (e, slot) in lay.b_slot.iter().enumerate() {
            if let Some(j) = *slot {
                push_box(cons, j, pre.b_lo[e], pre.b_hi[e]);
            }
        }
        for &(u, v, c) in &pre.links {
            let (Some(ju), Some(jv)) = (lay.pi_slot[u], lay.pi_slot[v]) else {
                continue;
            };
            prog.equalities.push((vec![(jv, 1.0), (ju, -1.0)], c));
        }
        for slot in lay.free_s.iter().flatten() {
            push_box(cons, *slot, -1.0, 1.0);
        }

        for (e, ed) in net.edges().iter().enumerate() {
            let (y_terms, y_const) = self.drop_terms(&lay, pre, e);
            let law = ed.law;
            let (y_lo, y_hi) = self.bounds[e];
            match s.s[e].sign() {
                Some(sg) if pre.zero_flow[e] => {
                    prog.equalities.push((vec![(e, 1.0)], 0.0));
                    if !pre.zero_drop[e] {
                        // s·y ≥ 0
                        let lin: Vec<(usize, f64)> = y_terms.iter().map(|&(j, a)| (j, -sg * a)).collect();
                        // a constant drop of the wrong sign is a negative cycle, caught above
                        if !lin.is_empty() {
                            cons.push(Constraint::linear(lin, sg * y_const));
                        }
                    }
                }
                Some(sg) => {
                    // δ|φ|^α ≤ s·y together with s·φ ≥ 0
                    let lin: Vec<(usize, f64)> = y_terms.iter().map(|&(j, a)| (j, -sg * a)).collect();
                    push_power(cons, e, law, lin, sg * y_const);
                    cons.push(Constraint::linear(vec![(e, -sg)], 0.0));
                }
                None => {
                    let sj = lay.free_s[e].expect("free direction");
                    if y_hi.is_finite() {
                        let mut lin = y_terms.clone();
                        lin.push((sj, -y_hi));
                        push_power(cons, e, law, lin, y_hi - y_const);
                    }
                    if y_lo.is_finite() {
                        let mut lin = negate(&y_terms);
                        lin.push((sj, -y_lo));
                        push_power(cons, e, law, lin, y_const - y_lo);
                    }
                    for (slope, offset) in envelope_cuts(&law, y_lo, y_hi) {
                        // y ≥ offset + slope·φ
                        let mut cut = negate(&y_terms);
                        cut.push((e, slope));
                        cons.push(Constraint::linear(cut, y_const - offset));
                    }
                    for (slope, offset) in envelope_cuts(&law, -y_hi, -y_lo) {
                        // the mirror image: −y ≥ offset − slope·φ
                        let mut cut = y_terms.clone();
                        cut.push((e, -slope));
                        cons.push(Constraint::linear(cut, -y_const - offset));
                    }
                }
            }
        }
        (lay, prog)
    }

    fn point(&self, lay: &Layout, pre: &Presolved, z: &[f64]) -> MicpPoint {
        let net = self.network;
        let phi = z[..lay.m].to_vec();
        let pi = (0..net.num_nodes())
            .map(|i| lay.pi_slot[i].map_or(pre.pi_lo[i], |j| z[j]))
            .collect();
        let b = (0..lay.m).map(|e| lay.b_slot[e].map_or(pre.b_lo[e], |j| z[j])).collect();
        let x = Injections::from_full(&net.outflow(&phi));
        MicpPoint { x, pi, phi, b }
    }

    fn guess(&self, lay: &Layout, pre: &Presolved, hint: Option<&MicpPoint>) -> Vec<f64> {
        let mut z = vec![0.0; lay.dim];
        let net = self.network;
        for (i, slot) in lay.pi_slot.iter().enumerate() {
            if let Some(j) = *slot {
                z[j] = match hint {
                    Some(p) => p.pi[i],
                    None => mid(pre.pi_lo[i], pre.pi_hi[i], net.slack_potential()),
                };
            }
        }
        for (e, slot) in lay.b_slot.iter().enumerate() {
            if let Some(j) = *slot {
                z[j] = hint.map_or(0.5 * (pre.b_lo[e] + pre.b_hi[e]), |p| p.b[e]);
            }
        }
        if let Some(p) = hint {
            z[..lay.m].copy_from_slice(&p.phi);
        }
        z
    }

    fn solve(
        &self,
        s: &DirectionAssignment,
        barrier_settings: &BarrierSettings,
        hint: Option<&MicpPoint>,
    ) -> Result<Relaxed, OptimizeError> {
        let Some(pre) = self.presolve(s) else {
            return Ok(Relaxed::infeasible());
        };
        let (lay, prog) = self.program(s, &pre);
        let z0 = self.guess(&lay, &pre, hint);
        let mut schedule = *barrier_settings;
        let mut last_err = String::new();
        for _ in 0..2 {
            match barrier::solve(&prog, &schedule, Some(&z0)) {
                Ok(Outcome::Infeasible) => return Ok(Relaxed::infeasible()),
                Ok(Outcome::Unbounded) => {
                    return Ok(Relaxed {
                        value: f64::NEG_INFINITY,
                        bound: f64::NEG_INFINITY,
                        point: None,
                    })
                }
                Ok(Outcome::Optimal { value, bound, z }) => {
                    return Ok(Relaxed {
                        value,
                        bound,
                        point: Some(self.point(&lay, &pre, &z)),
                    })
                }
                Err(f) => {
                    last_err = f.0;
                    // retry with a gentler schedule
                    schedule.shrink = schedule.shrink.max(0.5);
                    schedule.inner_tol *= 0.1;
                }
            }
        }
        Err(OptimizeError::BarrierNonconvergence(last_err))
    }
}

fn mid(lo: f64, hi: f64, fallback: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo.max(fallback) + 1.0,
        (false, true) => hi.min(fallback) - 1.0,
        (false, false) => fallback,
    }
}

fn negate(row: &[(usize, f64)]) -> Vec<(usize, f64)> {
    row.iter().map(|&(j, a)| (j, -a)).collect()
}

fn push_box(cons: &mut Vec<Constraint>, j: usize, lo: f64, hi: f64) {
    if hi.is_finite() {
        cons.push(Constraint::linear(vec![(j, 1.0)], hi));
    }
    if lo.is_finite() {
        cons.push(Constraint::linear(vec![(j, -1.0)], -lo));
    }
}

/// Adds `δ|φ_e|^α + lin ≤ rhs`; a linear law becomes two linear constraints.
fn push_power(cons: &mut Vec<Constraint>, e: EdgeId, law: DissipationLaw, lin: Vec<(usize, f64)>, rhs: f64) {
    if law.alpha() == 1.0 {
        for sg in [1.0, -1.0] {
            let mut l = lin.clone();
            l.push((e, sg * law.delta()));
            cons.push(Constraint::linear(l, rhs));
        }
    } else {
        cons.push(Constraint {
            lin,
            rhs,
            power: Some((e, law.delta(), law.alpha())),
        });
    }
}

/// Solves the node relaxation for a (possibly partial) direction assignment:
/// fixed directions use `δ|φ|^α ≤ s·y` with `s·φ ≥ 0`, free ones both
/// McCormick inequalities with `s ∈ [−1, 1]`.
pub fn relaxed_subproblem(
    network: &Network,
    scenario: &Scenario,
    s: &DirectionAssignment,
    settings: &BnbSettings,
) -> Result<Relaxed, OptimizeError> {
    validate(network, scenario)?;
    if s.s.len() != network.num_edges() {
        return Err(crate::error::ModelError::Dimension {
            what: "direction assignment",
            expected: network.num_edges(),
            got: s.s.len(),
        }
        .into());
    }
    Relaxation::new(network, scenario).solve(s, &settings.barrier, None)
}

struct OpenNode {
    bound: f64,
    assignment: DirectionAssignment,
    point: Option<MicpPoint>,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    // BinaryHeap is a max-heap; the smallest bound must come out first
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound)
    }
}

/// Free edge with the largest relaxed `|φ|` (ties: largest `|y|`).
fn branching_edge(network: &Network, node: &OpenNode) -> Option<EdgeId> {
    let free = node
        .assignment
        .s
        .iter()
        .enumerate()
        .filter(|(_, d)| **d == Direction::Free)
        .map(|(e, _)| e);
    let Some(p) = &node.point else {
        return free.into_iter().next();
    };
    let drops = network.drops(&p.pi, &p.b);
    free.max_by(|&a, &c| {
        p.phi[a]
            .abs()
            .total_cmp(&p.phi[c].abs())
            .then(drops[a].abs().total_cmp(&drops[c].abs()))
            .then(c.cmp(&a))
    })
}

/// Best-first branch-and-bound over edge directions. The result's
/// `lower_bound` is valid for the relaxed mixed-integer program, hence for
/// the exact max-throughput problem.
pub fn solve_micp(network: &Network, scenario: &Scenario, settings: &BnbSettings) -> Result<MicpResult, OptimizeError> {
    validate(network, scenario)?;
    settings.check()?;
    let relax = Relaxation::new(network, scenario);
    let threads = if settings.threads == 0 { worker_count() } else { settings.threads };
    let eval = |s: &DirectionAssignment, hint: Option<&MicpPoint>| -> Relaxed {
        // a failed relaxation keeps its subtree open with an unknown bound
        relax.solve(s, &settings.barrier, hint).unwrap_or(Relaxed {
            value: f64::NEG_INFINITY,
            bound: f64::NEG_INFINITY,
            point: None,
        })
    };

    let mut result = MicpResult {
        lower_bound: f64::NEG_INFINITY,
        incumbent: settings.seed_upper.unwrap_or(f64::INFINITY),
        best_assignment: None,
        best_point: None,
        nodes_explored: 1,
        status: MicpStatus::Optimal,
        bound_trace: Vec::new(),
        num_nodes: network.num_nodes(),
        num_edges: network.num_edges(),
    };
    // an edge whose drop cannot change sign only needs the matching direction:
    // the other one admits just φ = y = 0, which the first also contains
    let root_assignment = DirectionAssignment {
        s: relax
            .bounds
            .iter()
            .map(|&(lo, hi)| {
                if lo >= 0.0 {
                    Direction::Forward
                } else if hi <= 0.0 {
                    Direction::Backward
                } else {
                    Direction::Free
                }
            })
            .collect(),
    };
    let mut tried = HashSet::new();
    let root = eval(&root_assignment, None);
    if root.bound == f64::INFINITY {
        result.status = MicpStatus::Infeasible;
        result.lower_bound = f64::INFINITY;
        return Ok(result);
    }
    // bounds of closed subtrees: pruned nodes and evaluated leaves
    let mut closed_min = f64::INFINITY;
    let mut heap = BinaryHeap::new();
    let mut dive: Option<OpenNode> = None;
    let root_node = OpenNode {
        bound: root.bound,
        assignment: root_assignment,
        point: root.point,
    };
    try_rounding(&mut result, &mut tried, &root_node, &eval);
    if root_node.assignment.is_complete() {
        // no edges at all
        settle_leaf(&mut result, &mut closed_min, root_node, root.value);
    } else {
        heap.push(root_node);
    }

    let global = |heap: &BinaryHeap<OpenNode>, dive: &Option<OpenNode>, closed: f64, inc: f64| {
        let open = heap.peek().map_or(f64::INFINITY, |n| n.bound);
        let d = dive.as_ref().map_or(f64::INFINITY, |n| n.bound);
        open.min(d).min(closed).min(inc)
    };
    result.bound_trace.push(global(&heap, &dive, closed_min, result.incumbent).min(root.bound));

    loop {
        let mut batch = Vec::new();
        if let Some(node) = dive.take() {
            batch.push(node);
        }
        while batch.len() < threads.max(1) {
            let Some(node) = heap.pop() else { break };
            if node.bound >= result.incumbent - settings.tolerance(result.incumbent) {
                closed_min = closed_min.min(node.bound);
                // best-first: everything left is at least as large
                while let Some(rest) = heap.pop() {
                    closed_min = closed_min.min(rest.bound);
                }
                break;
            }
            batch.push(node);
            if !result.incumbent.is_finite() {
                break;
            }
        }
        if batch.is_empty() {
            break;
        }
        if result.nodes_explored + 2 * batch.len() > settings.max_nodes {
            result.status = MicpStatus::NodeLimit;
            for node in batch {
                heap.push(node);
            }
            break;
        }

        let jobs: Vec<(DirectionAssignment, usize)> = batch
            .iter()
            .enumerate()
            .flat_map(|(k, node)| {
                let e = branching_edge(network, node).expect("open nodes have a free edge");
                [
                    (node.assignment.with(e, Direction::Forward), k),
                    (node.assignment.with(e, Direction::Backward), k),
                ]
            })
            .collect();
        let outcomes = parallel_map(&jobs, threads, |(s, k)| eval(s, batch[*k].point.as_ref()));
        result.nodes_explored += jobs.len();

        let mut children: Vec<OpenNode> = Vec::new();
        for ((s, k), r) in jobs.into_iter().zip(outcomes) {
            if r.bound == f64::INFINITY {
                continue;
            }
            // a child's feasible set is inside its parent's
            let bound = r.bound.max(batch[k].bound);
            let node = OpenNode {
                bound,
                assignment: s,
                point: r.point,
            };
            if node.assignment.is_complete() {
                if node.point.is_some() {
                    settle_leaf(&mut result, &mut closed_min, node, r.value);
                } else {
                    // unresolved leaf: only the parent's bound is known
                    closed_min = closed_min.min(node.bound);
                }
            } else {
                children.push(node);
            }
        }
        children.sort_by(|a, b| a.bound.total_cmp(&b.bound));
        if let Some(best) = children.first() {
            try_rounding(&mut result, &mut tried, best, &eval);
        }
        let diving = !result.incumbent.is_finite();
        for child in children {
            if child.bound >= result.incumbent - settings.tolerance(result.incumbent) {
                closed_min = closed_min.min(child.bound);
            } else if diving && dive.is_none() {
                dive = Some(child);
            } else {
                heap.push(child);
            }
        }
        result.bound_trace.push(global(&heap, &dive, closed_min, result.incumbent));
    }

    if let Some(d) = dive.take() {
        heap.push(d);
    }
    result.lower_bound = global(&heap, &None, closed_min, result.incumbent);
    Ok(result)
}

/// Primal heuristic: solves the leaf whose free directions follow the
/// node's relaxed flows. Only the incumbent changes; the leaf stays in the tree.
fn try_rounding(
    result: &mut MicpResult,
    tried: &mut HashSet<DirectionAssignment>,
    node: &OpenNode,
    eval: &dyn Fn(&DirectionAssignment, Option<&MicpPoint>) -> Relaxed,
) {
    let Some(p) = &node.point else { return };
    let leaf = node.assignment.rounded(&p.phi);
    if leaf == node.assignment || !tried.insert(leaf.clone()) {
        return;
    }
    result.nodes_explored += 1;
    let r = eval(&leaf, Some(p));
    if r.point.is_some() && r.value < result.incumbent {
        result.incumbent = r.value;
        result.best_assignment = Some(leaf);
        result.best_point = r.point;
    }
}

fn settle_leaf(result: &mut MicpResult, closed_min: &mut f64, node: OpenNode, value: f64) {
    *closed_min = closed_min.min(node.bound);
    if value < result.incumbent {
        result.incumbent = value;
        result.best_assignment = Some(node.assignment);
        result.best_point = node.point;
    }
}

/// Certified suboptimality of the heuristic point: `upper − lower ≥ 0` up to
/// round-off.
pub fn optimality_gap(upper: &ThroughputSolution, lower: &MicpResult) -> Result<f64, OptimizeError> {
    if upper.pi.len() != lower.num_nodes || upper.b.len() != lower.num_edges {
        return Err(OptimizeError::MismatchedScenario(format!(
            "upper bound has {} nodes / {} edges, lower bound {} / {}",
            upper.pi.len(),
            upper.b.len(),
            lower.num_nodes,
            lower.num_edges
        )));
    }
    if !upper.feasible {
        return Err(OptimizeError::InfeasibleScenario(
            "the heuristic found no certified feasible point".into(),
        ));
    }
    if lower.status == MicpStatus::Infeasible {
        return Err(OptimizeError::InfeasibleScenario("the relaxation is infeasible".into()));
    }
    Ok(upper.objective - lower.lower_bound)
}
