//! Network-flow solve: Newton minimization of the dual energy
//! `E(π, b) − Σ_{i≠slack} π_i q_i` over the free potentials, followed by flow
//! recovery `φ = g(π_i − π_j + b)`.
//!
//! The primal form (minimize `Σ F(φ) − bφ` subject to conservation) is kept
//! as an objective evaluator and as an independent equality-constrained
//! Newton solve used to cross-check duality.

use serde::{Deserialize, Serialize};

use crate::dissipation::DEFAULT_SMOOTH_EPS;
use crate::energy;
use crate::error::{ModelError, SolveError};
use crate::linalg::{reduced_laplacian, SpdFactor};
use crate::network::{node_balance_residual, FlowState, Injections, Network, SLACK};

/// Conservation tolerance used by [`primal_objective`].
pub const PRIMAL_FEAS_TOL: f64 = 1e-6;

const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub smooth_eps: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 200,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            smooth_eps: DEFAULT_SMOOTH_EPS,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.grad_tol > 0.0
            && self.max_iter > 0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.armijo_shrink > 0.0
            && self.armijo_shrink < 1.0
            && self.smooth_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidBounds(format!(
                "invalid Newton settings {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfSolution {
    pub state: FlowState,
    /// Max of node-balance and potential-drop residuals, from the unsmoothed law.
    pub kkt_residual: f64,
    /// `Σ_i π_i q_i − E(π, b)` including the slack term.
    pub dual_value: f64,
    /// `Σ F(φ) − b·φ`.
    pub primal_value: f64,
    pub iterations: usize,
    pub slack_injection: f64,
    /// Minimization objective after each accepted step, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

fn check_dims(network: &Network, injections: &Injections, b: &[f64]) -> Result<(), ModelError> {
    if injections.len_free() != network.num_free() {
        return Err(ModelError::Dimension {
            what: "injections",
            expected: network.num_free(),
            got: injections.len_free(),
        });
    }
    if b.len() != network.num_edges() {
        return Err(ModelError::Dimension {
            what: "boosts",
            expected: network.num_edges(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Solves the network-flow equations from the flat start `π ≡ π_slack`.
pub fn solve_nf(
    network: &Network,
    injections: &Injections,
    b: &[f64],
    settings: &NewtonSettings,
) -> Result<NfSolution, SolveError> {
    let start = vec![network.slack_potential(); network.num_nodes()];
    solve_nf_from(network, injections, b, settings, &start)
}

/// Like [`solve_nf`] but starts from the given full potential vector; its
/// slack entry is overwritten with the fixed slack potential.
pub fn solve_nf_from(
    network: &Network,
    injections: &Injections,
    b: &[f64],
    settings: &NewtonSettings,
    start: &[f64],
) -> Result<NfSolution, SolveError> {
    settings.validate()?;
    check_dims(network, injections, b)?;
    if start.len() != network.num_nodes() {
        return Err(ModelError::Dimension {
            what: "start potentials",
            expected: network.num_nodes(),
            got: start.len(),
        }
        .into());
    }
    let dual = DualObjective {
        network,
        q: injections.free(),
        b,
    };
    let mut pi = start.to_vec();
    pi[SLACK] = network.slack_potential();

    let mut h = dual.value(&pi);
    let mut trace = vec![h];
    let mut grad = dual.gradient(&pi);
    let mut iterations = 0;
    let mut stalled = false;

    while !grad.iter().all(|g| g.abs() <= settings.grad_tol) {
        if iterations == settings.max_iter {
            break;
        }
        let dir = newton_direction(network, b, &pi, &grad, settings.smooth_eps)?;
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();

        let g_norm = norm2(&grad);
        let roundoff = 64.0 * f64::EPSILON * (1.0 + dual.magnitude(&pi));
        let mut t = 1.0;
        let mut accepted = None;
        while t >= MIN_STEP {
            let trial = step(&pi, &dir, t);
            let ht = dual.value(&trial);
            if ht <= h + settings.armijo_c * t * slope {
                accepted = Some((trial, ht, None));
                break;
            }
            // below round-off the objective cannot rank points; fall back to the residual
            if ht <= h + roundoff {
                let gt = dual.gradient(&trial);
                if norm2(&gt) < g_norm {
                    accepted = Some((trial, ht, Some(gt)));
                    break;
                }
            }
            t *= settings.armijo_shrink;
        }
        let Some((trial, ht, gt)) = accepted else {
            stalled = true;
            break;
        };
        let at_floor = dual.converged(&pi, &grad, settings.grad_tol);
        pi = trial;
        h = ht;
        grad = gt.unwrap_or_else(|| dual.gradient(&pi));
        trace.push(h);
        iterations += 1;
        // inside the rounding floor Newton no longer contracts; stop once it stops paying off
        if at_floor && norm2(&grad) > 0.5 * g_norm {
            break;
        }
    }

    let converged = dual.converged(&pi, &grad, settings.grad_tol);
    let sol = finish(network, injections, b, pi, h, iterations, trace);
    if converged {
        Ok(sol)
    } else if stalled {
        Err(SolveError::LineSearchFailed {
            iterations,
            residual: sol.kkt_residual,
            best: Box::new(sol),
        })
    } else {
        Err(SolveError::MaxIterationsExceeded {
            iterations,
            residual: sol.kkt_residual,
            best: Box::new(sol),
        })
    }
}

/// Newton step on the reduced Laplacian. For `α > 1` the dual energy grows
/// like `|y|^(1+1/α)`, so a full step from a drop `y` whose solution is near
/// zero lands near `−(α−1)·y`. Edges whose drop would change sign therefore
/// switch to the secant conductance `g(y)/y` (exact in one dimension) and
/// the system is re-solved; remaining edges keep the Newton weights.
fn newton_direction(
    network: &Network,
    b: &[f64],
    pi: &[f64],
    grad: &[f64],
    smooth_eps: f64,
) -> Result<Vec<f64>, SolveError> {
    const SECANT_ROUNDS: usize = 3;
    let drops = network.drops(pi, b);
    let mut weights: Vec<f64> = network
        .edges()
        .iter()
        .zip(&drops)
        .map(|(e, &y)| {
            // the cap only guards y = 0; inside the band it would underweight
            // the edge and Newton would overshoot without ever settling
            if y != 0.0 && y.abs() < smooth_eps {
                e.law.conductance(y, f64::MIN_POSITIVE)
            } else {
                e.law.conductance(y, smooth_eps)
            }
        })
        .collect();
    let mut secant = vec![false; weights.len()];
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut round = 0;
    loop {
        let factor = SpdFactor::new(&reduced_laplacian(network, &weights)).map_err(|_| SolveError::SingularHessian)?;
        let dir = factor.solve(&neg);
        if round == SECANT_ROUNDS {
            return Ok(dir);
        }
        let d_at = |i: usize| if i == SLACK { 0.0 } else { dir[i - 1] };
        let mut changed = false;
        for (k, e) in network.edges().iter().enumerate() {
            let y = drops[k];
            if secant[k] || e.law.alpha() <= 1.0 || y == 0.0 {
                continue;
            }
            let next = y + d_at(e.from) - d_at(e.to);
            if next * y < 0.0 {
                weights[k] = e.law.flow(y) / y;
                secant[k] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(dir);
        }
        round += 1;
    }
}

fn finish(
    network: &Network,
    injections: &Injections,
    b: &[f64],
    pi: Vec<f64>,
    h: f64,
    iterations: usize,
    trace: Vec<f64>,
) -> NfSolution {
    let phi: Vec<f64> = network
        .edges()
        .iter()
        .zip(network.drops(&pi, b))
        .map(|(e, y)| e.law.flow(y))
        .collect();
    let slack_injection = injections.slack();
    let dual_value = -h + pi[SLACK] * slack_injection;
    let primal_value = primal_energy(network, b, &phi);
    let state = FlowState { phi, pi };
    let kkt_residual = kkt_check(network, injections, b, &state);
    NfSolution {
        state,
        kkt_residual,
        dual_value,
        primal_value,
        iterations,
        slack_injection,
        objective_trace: trace,
    }
}

fn step(x: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    for (yi, di) in y[1..].iter_mut().zip(d) {
        *yi += t * di;
    }
    y
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `h(π) = E(π, b) − Σ_{i≥1} π_i q_i`, minimized over the free potentials.
struct DualObjective<'a> {
    network: &'a Network,
    q: &'a [f64],
    b: &'a [f64],
}

impl DualObjective<'_> {
    fn value(&self, pi: &[f64]) -> f64 {
        let load: f64 = pi[1..].iter().zip(self.q).map(|(p, q)| p * q).sum();
        energy::energy(self.network, pi, self.b) - load
    }

    /// Size of the terms entering [`Self::value`], for round-off estimates.
    fn magnitude(&self, pi: &[f64]) -> f64 {
        let load: f64 = pi[1..].iter().zip(self.q).map(|(p, q)| (p * q).abs()).sum();
        energy::energy(self.network, pi, self.b) + load
    }

    /// Gradient over free nodes: net outflow minus injection.
    fn gradient(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.network.num_nodes()];
        for (e, y) in self.network.edges().iter().zip(self.network.drops(pi, self.b)) {
            let f = e.law.flow(y);
            out[e.from] += f;
            out[e.to] -= f;
        }
        out[1..].iter().zip(self.q).map(|(o, q)| o - q).collect()
    }

    /// Converged when every free node's balance residual is within `tol` plus
    /// the resolution floor set by rounding of the potentials. The floor only
    /// matters on edges with a near-zero drop and a steep inverse law.
    fn converged(&self, pi: &[f64], grad: &[f64], tol: f64) -> bool {
        if grad.iter().all(|g| g.abs() <= tol) {
            return true;
        }
        let mut floor = vec![0.0; self.network.num_nodes()];
        for (e, edge) in self.network.edges().iter().enumerate() {
            let y = pi[edge.from] - pi[edge.to] + self.b[e];
            let ulp = 4.0 * f64::EPSILON * (pi[edge.from].abs() + pi[edge.to].abs() + self.b[e].abs());
            let slop = edge.law.flow(y.abs() + ulp) - edge.law.flow(y.abs());
            floor[edge.from] += slop;
            floor[edge.to] += slop;
        }
        grad.iter()
            .zip(&floor[1..])
            .all(|(g, f)| g.abs() <= tol + f)
    }
}

/// `Σ F(φ_e) − b_e φ_e` without any feasibility check.
pub fn primal_energy(network: &Network, b: &[f64], phi: &[f64]) -> f64 {
    network
        .edges()
        .iter()
        .zip(phi)
        .zip(b)
        .map(|((e, &f), &bk)| e.law.flow_antiderivative(f) - bk * f)
        .sum()
}

/// Primal energy of a flow that satisfies conservation to [`PRIMAL_FEAS_TOL`].
pub fn primal_objective(
    network: &Network,
    injections: &Injections,
    b: &[f64],
    phi: &[f64],
) -> Result<f64, SolveError> {
    check_dims(network, injections, b)?;
    let state = FlowState {
        phi: phi.to_vec(),
        pi: vec![0.0; network.num_nodes()],
    };
    let residual = node_balance_residual(network, injections, &state)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    if residual > PRIMAL_FEAS_TOL {
        return Err(SolveError::InfeasibleFlow { residual });
    }
    Ok(primal_energy(network, b, phi))
}

/// Max of the node-balance residuals (slack included) and the per-edge
/// residuals `|f(φ) − (π_i − π_j + b)|`.
pub fn kkt_check(network: &Network, injections: &Injections, b: &[f64], state: &FlowState) -> f64 {
    let balance = node_balance_residual(network, injections, state)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    let drop = network
        .edges()
        .iter()
        .zip(&state.phi)
        .zip(network.drops(&state.pi, b))
        .fold(0.0f64, |m, ((e, &f), y)| m.max((e.law.potential_drop(f) - y).abs()));
    balance.max(drop)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimalSolution {
    pub phi: Vec<f64>,
    pub value: f64,
    /// Potentials recovered from the conservation multipliers.
    pub pi: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes `Σ F(φ) − b·φ` subject to conservation by feasible-start
/// Newton steps in the null space of the incidence matrix. Independent of the
/// dual path: it only uses `f`, `f'` and `F`.
pub fn solve_primal(
    network: &Network,
    injections: &Injections,
    b: &[f64],
    settings: &NewtonSettings,
) -> Result<PrimalSolution, SolveError> {
    settings.validate()?;
    check_dims(network, injections, b)?;
    let edges = network.edges();
    let mut phi = spanning_tree_flow(network, injections);
    let mut value = primal_energy(network, b, &phi);
    let mut nu = vec![0.0; network.num_free()];
    let mut iterations = 0;

    while iterations < settings.max_iter {
        // flooring f' keeps the Schur system well conditioned around zero-flow edges
        let floor = 1e-6 * phi.iter().fold(1.0f64, |m, f| m.max(f.abs()));
        let inv: Vec<f64> = edges
            .iter()
            .zip(&phi)
            .map(|(e, &f)| 1.0 / e.law.resistance(f.abs().max(floor)))
            .collect();
        let lap = reduced_laplacian(network, &inv);
        let factor = SpdFactor::new(&lap).map_err(|_| SolveError::SingularHessian)?;
        restore_conservation(network, injections, &inv, &factor, &mut phi);
        value = primal_energy(network, b, &phi);
        let grad: Vec<f64> = edges
            .iter()
            .zip(&phi)
            .zip(b)
            .map(|((e, &f), &bk)| e.law.potential_drop(f) - bk)
            .collect();
        // L ν = −A H⁻¹ ∇
        let scaled: Vec<f64> = grad.iter().zip(&inv).map(|(g, w)| g * w).collect();
        let rhs: Vec<f64> = network.outflow(&scaled)[1..].iter().map(|v| -v).collect();
        nu = factor.solve(&rhs);
        let nu_at = |i: usize| if i == SLACK { 0.0 } else { nu[i - 1] };
        let dir: Vec<f64> = edges
            .iter()
            .enumerate()
            .map(|(k, e)| -inv[k] * (grad[k] + nu_at(e.from) - nu_at(e.to)))
            .collect();
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if -slope <= 1e-24 * (1.0 + value.abs()) {
            break;
        }
        let roundoff = 64.0 * f64::EPSILON * (1.0 + value.abs());
        let mut t = 1.0;
        let mut moved = false;
        while t >= MIN_STEP {
            let trial: Vec<f64> = phi.iter().zip(&dir).map(|(p, d)| p + t * d).collect();
            let v = primal_energy(network, b, &trial);
            if v <= value + settings.armijo_c * t * slope || (v <= value + roundoff && -slope < roundoff) {
                phi = trial;
                value = v;
                moved = true;
                break;
            }
            t *= settings.armijo_shrink;
        }
        iterations += 1;
        if !moved {
            break;
        }
    }
    let slack = network.slack_potential();
    let mut pi = vec![slack; network.num_nodes()];
    for i in 1..network.num_nodes() {
        pi[i] = slack - nu[i - 1];
    }
    Ok(PrimalSolution {
        phi,
        value,
        pi,
        iterations,
    })
}

/// Removes the round-off drift in conservation with the least-squares
/// correction `δφ = W Aᵀ μ`, `L μ = r`, in the metric of the edge weights `W`.
fn restore_conservation(
    network: &Network,
    injections: &Injections,
    weights: &[f64],
    factor: &SpdFactor,
    phi: &mut [f64],
) {
    let out = network.outflow(phi);
    let r: Vec<f64> = injections.free().iter().zip(&out[1..]).map(|(q, o)| q - o).collect();
    if r.iter().all(|v| *v == 0.0) {
        return;
    }
    let mu = factor.solve(&r);
    let mu_at = |i: usize| if i == SLACK { 0.0 } else { mu[i - 1] };
    for (k, e) in network.edges().iter().enumerate() {
        phi[k] += weights[k] * (mu_at(e.from) - mu_at(e.to));
    }
}

/// A flow that meets every injection exactly, routed on a BFS spanning tree
/// rooted at the slack.
pub fn spanning_tree_flow(network: &Network, injections: &Injections) -> Vec<f64> {
    let n = network.num_nodes();
    let mut parent_edge = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut order = vec![SLACK];
    seen[SLACK] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &(e, _) in network.incident(v) {
            let edge = network.edge(e);
            let u = if edge.from == v { edge.to } else { edge.from };
            if !seen[u] {
                seen[u] = true;
                parent_edge[u] = e;
                order.push(u);
            }
        }
    }
    let mut subtree = injections.full();
    let mut phi = vec![0.0; network.num_edges()];
    for &v in order.iter().skip(1).rev() {
        let e = parent_edge[v];
        let edge = network.edge(e);
        // flow leaving v's subtree through its parent edge equals the subtree injection
        let (sign, parent) = if edge.from == v {
            (1.0, edge.to)
        } else {
            (-1.0, edge.from)
        };
        phi[e] = sign * subtree[v];
        subtree[parent] += subtree[v];
    }
    phi
}
