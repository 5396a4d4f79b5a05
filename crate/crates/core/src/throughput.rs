//! Upper bounds for max throughput: the energy-function penalty heuristic.
//!
//! The exact problem is `min cᵀx` over injections, potentials and boosts in
//! their boxes with `π = π*(x, b)`. The coupling is written as the Fenchel
//! gap `E(π,b) + E*(x,b) − πᵀx ≤ 0` and penalized with weight `M`; the
//! penalized objective is minimized by alternating convex blocks in `π` and
//! `x` (and `b` when boosts are free). Every answer is certified by an exact
//! network-flow solve, so the reported objective is always attained by a
//! physically consistent state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::energy::{self, conductances, e_star, gap_with, hess_e, hess_e_star_at, ConjugateEval};
use crate::error::{OptimizeError, SolveError};
use crate::network::{validate, EdgeId, Injections, Network, Scenario, SLACK};
use crate::nf::{kkt_check, solve_nf, solve_nf_from, NewtonSettings};
use crate::projected::{minimize, BoxNewtonSettings, BoxObjective};

/// Tolerance on potential and slack-injection boxes when certifying.
pub const BOX_TOL: f64 = 1e-6;
/// KKT residual a certified state must reach.
pub const CERTIFY_KKT_TOL: f64 = 1e-8;
/// Box tolerance for points the optimizer itself accepts. Kept at round-off
/// level so the returned objective never profits from [`BOX_TOL`].
const STRICT_BOX_TOL: f64 = 1e-10;
/// Repeats of the final penalty level inside a shrunk potential box.
const MARGIN_PASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Gap constraint `≤ ε`, enforced as a final check on the penalty solution.
    Formulation1,
    /// Big-M penalty on the gap.
    Formulation2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySettings {
    pub method: Formulation,
    pub epsilon: f64,
    pub big_m: f64,
    /// First penalty weight; by default the cost scale over the potential range.
    pub initial_big_m: Option<f64>,
    pub outer_tol: f64,
    /// Alternating rounds allowed per penalty level.
    pub max_outer: usize,
    pub b_variable: bool,
    pub newton: NewtonSettings,
}

impl Default for EnergySettings {
    fn default() -> Self {
        Self {
            method: Formulation::Formulation2,
            epsilon: 1e-6,
            big_m: 1e4,
            initial_big_m: None,
            outer_tol: 1e-7,
            max_outer: 500,
            b_variable: false,
            newton: NewtonSettings::default(),
        }
    }
}

impl EnergySettings {
    fn check(&self) -> Result<(), OptimizeError> {
        self.newton.validate()?;
        let ok = self.epsilon > 0.0
            && self.big_m > 0.0
            && self.outer_tol > 0.0
            && self.max_outer > 0
            && self.initial_big_m.is_none_or(|m| m > 0.0);
        if ok {
            Ok(())
        } else {
            Err(crate::error::ModelError::InvalidBounds(format!("invalid energy settings {self:?}")).into())
        }
    }
}

/// Penalized objective after each alternating round at one weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyLevel {
    pub big_m: f64,
    pub objective: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSolution {
    pub x: Injections,
    pub pi: Vec<f64>,
    pub b: Vec<f64>,
    pub phi: Vec<f64>,
    /// `cᵀx` with the slack injection included.
    pub objective: f64,
    /// Fenchel gap of `(π, x, b)`.
    pub penalty_gap: f64,
    pub feasible: bool,
    pub kkt_residual: f64,
    /// Largest violation of the potential and slack-injection boxes.
    pub max_violation: f64,
    pub outer_iterations: usize,
    /// False when some penalty level ran out of rounds.
    pub converged: bool,
    pub levels: Vec<PenaltyLevel>,
}

/// Exact network-flow solve at `(x, b)` followed by a box check. The result
/// is feasible when potentials and the derived slack injection are inside
/// their boxes to [`BOX_TOL`], `x` and `b` are inside theirs, and the state
/// satisfies the flow equations to [`CERTIFY_KKT_TOL`].
pub fn certify(
    network: &Network,
    scenario: &Scenario,
    x: &Injections,
    b: &[f64],
    settings: &EnergySettings,
) -> Result<ThroughputSolution, OptimizeError> {
    certify_from(network, scenario, x, b, &settings.newton, None, BOX_TOL)
}

fn certify_from(
    network: &Network,
    scenario: &Scenario,
    x: &Injections,
    b: &[f64],
    newton: &NewtonSettings,
    hint: Option<&[f64]>,
    box_tol: f64,
) -> Result<ThroughputSolution, OptimizeError> {
    let sol = match hint {
        Some(h) => solve_nf_from(network, x, b, newton, h)?,
        None => solve_nf(network, x, b, newton)?,
    };
    let state = sol.state;
    let kkt = kkt_check(network, x, b, &state);
    let full = x.full();
    let mut violation = 0.0f64;
    for i in 0..network.num_nodes() {
        violation = violation
            .max(scenario.pi_lo[i] - state.pi[i])
            .max(state.pi[i] - scenario.pi_hi[i]);
        violation = violation.max(scenario.x_lo[i] - full[i]).max(full[i] - scenario.x_hi[i]);
    }
    let in_boxes = (0..network.num_edges()).all(|e| b[e] >= scenario.b_lo[e] && b[e] <= scenario.b_hi[e])
        && (1..network.num_nodes()).all(|i| full[i] >= scenario.x_lo[i] - 1e-12 && full[i] <= scenario.x_hi[i] + 1e-12);
    let load: f64 = state.pi[1..].iter().zip(x.free()).map(|(p, q)| p * q).sum();
    let value = load - energy::energy(network, &state.pi, b);
    let penalty_gap = energy::energy(network, &state.pi, b) + value - load;
    Ok(ThroughputSolution {
        x: x.clone(),
        objective: scenario.objective(x),
        feasible: in_boxes && violation <= box_tol && kkt <= CERTIFY_KKT_TOL,
        pi: state.pi,
        b: b.to_vec(),
        phi: state.phi,
        penalty_gap,
        kkt_residual: kkt,
        max_violation: violation.max(0.0),
        outer_iterations: 0,
        converged: true,
        levels: Vec::new(),
    })
}

/// Runs the alternating penalty method with a geometric continuation of the
/// weight up to `settings.big_m` and returns the best certified point.
pub fn solve_throughput_energy(
    network: &Network,
    scenario: &Scenario,
    settings: &EnergySettings,
) -> Result<ThroughputSolution, OptimizeError> {
    run(network, scenario, settings, None)
}

/// Same as [`solve_throughput_energy`], but the alternating blocks start
/// from the given injections and boosts (clamped into their boxes) instead
/// of zero injections and nominal boosts.
pub fn solve_throughput_energy_from(
    network: &Network,
    scenario: &Scenario,
    settings: &EnergySettings,
    start_x: &Injections,
    start_b: &[f64],
) -> Result<ThroughputSolution, OptimizeError> {
    if start_x.len_free() != network.num_free() || start_b.len() != network.num_edges() {
        return Err(OptimizeError::MismatchedScenario(format!(
            "start point has {} free injections and {} boosts, network {} and {}",
            start_x.len_free(),
            start_b.len(),
            network.num_free(),
            network.num_edges()
        )));
    }
    run(network, scenario, settings, Some((start_x.free(), start_b)))
}

fn run(
    network: &Network,
    scenario: &Scenario,
    settings: &EnergySettings,
    start: Option<(&[f64], &[f64])>,
) -> Result<ThroughputSolution, OptimizeError> {
    validate(network, scenario)?;
    settings.check()?;
    let n_free = network.num_free();
    let c0 = scenario.cost[SLACK];
    let ctx = Context {
        network,
        newton: settings.newton,
        c_rel: scenario.cost[1..].iter().map(|c| c - c0).collect(),
        var_edges: if settings.b_variable {
            scenario.variable_boosts()
        } else {
            Vec::new()
        },
    };
    let pi_lo = scenario.pi_lo[1..].to_vec();
    let pi_hi = scenario.pi_hi[1..].to_vec();
    let x_lo = scenario.x_lo[1..].to_vec();
    let x_hi = scenario.x_hi[1..].to_vec();
    let b_lo: Vec<f64> = ctx.var_edges.iter().map(|&e| scenario.b_lo[e]).collect();
    let b_hi: Vec<f64> = ctx.var_edges.iter().map(|&e| scenario.b_hi[e]).collect();

    let mut x: Vec<f64> = (0..n_free).map(|i| 0.0f64.clamp(x_lo[i], x_hi[i])).collect();
    let mut b = scenario.fixed_boosts(network);
    let anchor_is_zero = x.iter().all(|v| *v == 0.0);
    let mut best = None;
    let anchor = certify_from(network, scenario, &Injections::from_free(x.clone()), &b, &settings.newton, None, STRICT_BOX_TOL)?;
    let mut pi = anchor.pi.clone();
    for (p, (l, h)) in pi[1..].iter_mut().zip(pi_lo.iter().zip(&pi_hi)) {
        *p = p.clamp(*l, *h);
    }
    if anchor.feasible {
        best = Some(anchor);
    }
    if let Some((x0, b0)) = start {
        for i in 0..n_free {
            x[i] = x0[i].clamp(x_lo[i], x_hi[i]);
        }
        for &e in &ctx.var_edges {
            b[e] = b0[e].clamp(scenario.b_lo[e], scenario.b_hi[e]);
        }
        let first = certify_from(network, scenario, &Injections::from_free(x.clone()), &b, &settings.newton, None, STRICT_BOX_TOL)?;
        for (p, (q, (l, h))) in pi[1..].iter_mut().zip(first.pi[1..].iter().zip(pi_lo.iter().zip(&pi_hi))) {
            *p = q.clamp(*l, *h);
        }
        if first.feasible {
            keep_better(&mut best, first);
        }
    }

    let c_scale = ctx.c_rel.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let range = pi_lo
        .iter()
        .zip(&pi_hi)
        .map(|(l, h)| h - l)
        .filter(|r| r.is_finite() && *r > 0.0)
        .fold(0.0f64, f64::max);
    let range = if range > 0.0 { range } else { network.slack_potential().abs().max(1.0) };
    let m0 = settings
        .initial_big_m
        .unwrap_or(if c_scale > 0.0 { c_scale / range } else { 1.0 })
        .min(settings.big_m);

    let inner = BoxNewtonSettings {
        pg_tol: 1e-12,
        rel_decrease_tol: 1e-15,
        max_iter: 100,
        armijo_c: settings.newton.armijo_c,
        shrink: settings.newton.armijo_shrink,
    };
    let mut levels = Vec::new();
    let mut outer_iterations = 0;
    let mut all_converged = true;
    let mut pi_star_hint = pi.clone();
    let mut m = m0;
    let (mut box_lo, mut box_hi) = (pi_lo.clone(), pi_hi.clone());
    let (mut margin, mut margin_passes) = (0.0, 0);
    let mut last_violation = f64::INFINITY;
    let mut outside = None;
    loop {
        let mut level = PenaltyLevel {
            big_m: m,
            objective: Vec::new(),
            converged: false,
        };
        let mut prev = ctx.penalty(&x, &pi, &b, m, &pi_star_hint)?;
        level.objective.push(prev);
        for _ in 0..settings.max_outer {
            outer_iterations += 1;
            // π block
            let mut pb = PiBlock {
                ctx: &ctx,
                x: &x,
                b: &b,
                slack: network.slack_potential(),
            };
            let z = minimize(&mut pb, &pi[1..], &box_lo, &box_hi, &inner)?;
            pi[1..].copy_from_slice(&z);
            // x block
            let mut xb = XBlock {
                ctx: &ctx,
                pi: &pi,
                b: &b,
                m,
                hint: pi_star_hint.clone(),
                last: None,
            };
            x = minimize(&mut xb, &x, &x_lo, &x_hi, &inner)?;
            pi_star_hint = xb.hint;
            // b block
            if !ctx.var_edges.is_empty() {
                let mut bb = BBlock {
                    ctx: &ctx,
                    x: &x,
                    pi: &pi,
                    base: b.clone(),
                    m,
                    hint: pi_star_hint.clone(),
                    last: None,
                };
                let z0: Vec<f64> = ctx.var_edges.iter().map(|&e| b[e]).collect();
                let z = minimize(&mut bb, &z0, &b_lo, &b_hi, &inner)?;
                pi_star_hint = bb.hint;
                for (k, &e) in ctx.var_edges.iter().enumerate() {
                    b[e] = z[k];
                }
            }
            let value = ctx.penalty(&x, &pi, &b, m, &pi_star_hint)?;
            level.objective.push(value);
            let xi = Injections::from_free(x.clone());
            last_violation = f64::INFINITY;
            if let Ok(cand) = certify_from(network, scenario, &xi, &b, &settings.newton, Some(&pi_star_hint), STRICT_BOX_TOL) {
                last_violation = if cand.feasible { 0.0 } else { cand.max_violation };
                keep_better(&mut best, cand);
            }
            let done = prev - value <= settings.outer_tol * (1.0 + value.abs());
            prev = value;
            if done {
                level.converged = true;
                break;
            }
        }
        all_converged &= level.converged;
        levels.push(level);
        if m < settings.big_m {
            m = (m * 10.0).min(settings.big_m);
            continue;
        }
        // At the final weight the iterate still sits O(1/M) outside the
        // potential box. Repeat the level inside a box shrunk by twice the
        // remaining violation so the next iterate lands on the feasible side.
        if last_violation == 0.0 || !last_violation.is_finite() || margin_passes == MARGIN_PASSES {
            break;
        }
        if margin_passes == 0 {
            outside = Some((x.clone(), b.clone()));
        }
        margin_passes += 1;
        margin += 2.0 * last_violation;
        for i in 0..n_free {
            let (lo, hi) = (scenario.pi_lo[i + 1], scenario.pi_hi[i + 1]);
            if hi - lo > 2.0 * margin {
                box_lo[i] = lo + margin;
                box_hi[i] = hi - margin;
            }
            pi[i + 1] = pi[i + 1].clamp(box_lo[i], box_hi[i]);
        }
    }

    // The penalty iterate sits O(1/M) outside the feasible set; pull it back
    // toward the best certified point by bisection on the joining segment.
    if let Some(anchor) = best.clone() {
        let target = outside.take().unwrap_or_else(|| (x.clone(), b.clone()));
        let restored = restore(network, scenario, &settings.newton, &anchor, &target);
        if let Some(r) = restored {
            keep_better(&mut best, r);
        }
    }

    let Some(mut sol) = best else {
        let xi = Injections::from_free(x);
        let mut last = certify_from(network, scenario, &xi, &b, &settings.newton, None, STRICT_BOX_TOL)?;
        last.outer_iterations = outer_iterations;
        last.converged = all_converged;
        last.levels = levels;
        if anchor_is_zero {
            return Err(OptimizeError::InfeasibleScenario(format!(
                "zero injections violate the potential bounds by {:.3e}",
                last.max_violation
            )));
        }
        return Err(OptimizeError::NotConverged {
            iterations: outer_iterations,
            best: Box::new(last),
        });
    };
    sol.outer_iterations = outer_iterations;
    sol.converged = all_converged;
    sol.levels = levels;
    if settings.method == Formulation::Formulation1 && sol.penalty_gap > settings.epsilon {
        sol.feasible = false;
    }
    Ok(sol)
}

fn keep_better(best: &mut Option<ThroughputSolution>, cand: ThroughputSolution) {
    if !cand.feasible {
        return;
    }
    match best {
        Some(b) if b.objective <= cand.objective => {}
        _ => *best = Some(cand),
    }
}

fn restore(
    network: &Network,
    scenario: &Scenario,
    newton: &NewtonSettings,
    feasible: &ThroughputSolution,
    target: &(Vec<f64>, Vec<f64>),
) -> Option<ThroughputSolution> {
    let (xt, bt) = target;
    let point = |t: f64| {
        let x: Vec<f64> = feasible
            .x
            .free()
            .iter()
            .zip(xt)
            .map(|(a, c)| a + t * (c - a))
            .collect();
        let b: Vec<f64> = feasible.b.iter().zip(bt).map(|(a, c)| a + t * (c - a)).collect();
        (Injections::from_free(x), b)
    };
    let check = |t: f64| {
        let (x, b) = point(t);
        certify_from(network, scenario, &x, &b, newton, Some(&feasible.pi), STRICT_BOX_TOL)
            .ok()
            .filter(|s| s.feasible)
    };
    if let Some(s) = check(1.0) {
        return Some(s);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut found = None;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        match check(mid) {
            Some(s) => {
                lo = mid;
                found = Some(s);
            }
            None => hi = mid,
        }
    }
    found
}

struct Context<'a> {
    network: &'a Network,
    newton: NewtonSettings,
    /// `c_i − c_slack` on free nodes: the objective with the slack injection eliminated.
    c_rel: Vec<f64>,
    var_edges: Vec<EdgeId>,
}

impl Context<'_> {
    fn conjugate(&self, x: &[f64], b: &[f64], hint: &[f64]) -> Result<ConjugateEval, SolveError> {
        e_star(self.network, &Injections::from_free(x.to_vec()), b, &self.newton, Some(hint))
    }

    /// `c̃ᵀx + M (E(π,b) + E*(x,b) − πᵀx)`.
    fn penalty(&self, x: &[f64], pi: &[f64], b: &[f64], m: f64, hint: &[f64]) -> Result<f64, SolveError> {
        let eval = self.conjugate(x, b, hint)?;
        let lin: f64 = self.c_rel.iter().zip(x).map(|(c, v)| c * v).sum();
        Ok(lin + m * gap_with(self.network, pi, &Injections::from_free(x.to_vec()), b, &eval))
    }
}

/// `min_π E(π,b) − πᵀx` over the potential box.
struct PiBlock<'a> {
    ctx: &'a Context<'a>,
    x: &'a [f64],
    b: &'a [f64],
    slack: f64,
}

impl PiBlock<'_> {
    fn full(&self, z: &[f64]) -> Vec<f64> {
        let mut pi = Vec::with_capacity(z.len() + 1);
        pi.push(self.slack);
        pi.extend_from_slice(z);
        pi
    }
}

impl BoxObjective for PiBlock<'_> {
    type Error = SolveError;

    fn value(&mut self, z: &[f64]) -> Result<f64, SolveError> {
        let pi = self.full(z);
        let load: f64 = z.iter().zip(self.x).map(|(p, q)| p * q).sum();
        Ok(energy::energy(self.ctx.network, &pi, self.b) - load)
    }

    fn grad_hess(&mut self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), SolveError> {
        let pi = self.full(z);
        let g = energy::energy_gradient(self.ctx.network, &pi, self.b)
            .iter()
            .zip(self.x)
            .map(|(o, q)| o - q)
            .collect();
        let h = hess_e(self.ctx.network, &pi, self.b, self.ctx.newton.smooth_eps).to_dense();
        Ok((g, h))
    }
}

/// `min_x c̃ᵀx + M (E*(x,b) − πᵀx)` over the injection box.
struct XBlock<'a> {
    ctx: &'a Context<'a>,
    pi: &'a [f64],
    b: &'a [f64],
    m: f64,
    hint: Vec<f64>,
    last: Option<(Vec<f64>, ConjugateEval)>,
}

impl XBlock<'_> {
    fn eval(&mut self, z: &[f64]) -> Result<Option<ConjugateEval>, SolveError> {
        if let Some((zl, e)) = &self.last {
            if zl == z {
                return Ok(Some(e.clone()));
            }
        }
        match self.ctx.conjugate(z, self.b, &self.hint) {
            Ok(e) => {
                self.last = Some((z.to_vec(), e.clone()));
                Ok(Some(e))
            }
            Err(SolveError::Model(err)) => Err(err.into()),
            // points where the inner solve fails are treated as outside the domain
            Err(_) => Ok(None),
        }
    }
}

impl BoxObjective for XBlock<'_> {
    type Error = SolveError;

    fn value(&mut self, z: &[f64]) -> Result<f64, SolveError> {
        let Some(e) = self.eval(z)? else {
            return Ok(f64::INFINITY);
        };
        let lin: f64 = self.ctx.c_rel.iter().zip(z).map(|(c, v)| c * v).sum();
        let load: f64 = self.pi[1..].iter().zip(z).map(|(p, q)| p * q).sum();
        Ok(lin + self.m * (e.value - load))
    }

    fn grad_hess(&mut self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), SolveError> {
        let e = self.eval(z)?.ok_or(SolveError::SingularHessian)?;
        self.hint = e.pi_star.clone();
        let g = self
            .ctx
            .c_rel
            .iter()
            .zip(e.pi_star[1..].iter().zip(&self.pi[1..]))
            .map(|(c, (ps, p))| c + self.m * (ps - p))
            .collect();
        let h = hess_e_star_at(self.ctx.network, &e.pi_star, self.b, self.ctx.newton.smooth_eps)? * self.m;
        Ok((g, h))
    }
}

/// `min_b M (E(π,b) + E*(x,b))` over the variable boosts.
struct BBlock<'a> {
    ctx: &'a Context<'a>,
    x: &'a [f64],
    pi: &'a [f64],
    base: Vec<f64>,
    m: f64,
    hint: Vec<f64>,
    last: Option<(Vec<f64>, ConjugateEval)>,
}

impl BBlock<'_> {
    fn boosts(&self, z: &[f64]) -> Vec<f64> {
        let mut b = self.base.clone();
        for (k, &e) in self.ctx.var_edges.iter().enumerate() {
            b[e] = z[k];
        }
        b
    }

    fn eval(&mut self, z: &[f64]) -> Result<Option<ConjugateEval>, SolveError> {
        if let Some((zl, e)) = &self.last {
            if zl == z {
                return Ok(Some(e.clone()));
            }
        }
        let b = self.boosts(z);
        match self.ctx.conjugate(self.x, &b, &self.hint) {
            Ok(e) => {
                self.last = Some((z.to_vec(), e.clone()));
                Ok(Some(e))
            }
            Err(SolveError::Model(err)) => Err(err.into()),
            Err(_) => Ok(None),
        }
    }
}

impl BoxObjective for BBlock<'_> {
    type Error = SolveError;

    fn value(&mut self, z: &[f64]) -> Result<f64, SolveError> {
        let Some(e) = self.eval(z)? else {
            return Ok(f64::INFINITY);
        };
        let b = self.boosts(z);
        Ok(self.m * (energy::energy(self.ctx.network, self.pi, &b) + e.value))
    }

    /// Gradient `M (g(drop(π,b)) − φ*)`; Hessian `M (D − D* + D* Aᵀ L*⁻¹ A D*)`
    /// restricted to the variable edges, where `D`, `D*` hold `g'` at the
    /// current and the equilibrium drops.
    fn grad_hess(&mut self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), SolveError> {
        let e = self.eval(z)?.ok_or(SolveError::SingularHessian)?;
        self.hint = e.pi_star.clone();
        let net = self.ctx.network;
        let b = self.boosts(z);
        let eps = self.ctx.newton.smooth_eps;
        let drops = net.drops(self.pi, &b);
        let d_cur = conductances(net, self.pi, &b, eps);
        let d_eq = conductances(net, &e.pi_star, &b, eps);
        let l_inv = hess_e_star_at(net, &e.pi_star, &b, eps)?;
        let vars = &self.ctx.var_edges;
        let k = vars.len();
        let n_free = net.num_free();
        let mut cols = DMatrix::<f64>::zeros(n_free, k);
        for (c, &edge) in vars.iter().enumerate() {
            let ed = net.edge(edge);
            if ed.from != SLACK {
                cols[(ed.from - 1, c)] += d_eq[edge];
            }
            if ed.to != SLACK {
                cols[(ed.to - 1, c)] -= d_eq[edge];
            }
        }
        let mut h: DMatrix<f64> = cols.transpose() * l_inv * &cols;
        let mut g = Vec::with_capacity(k);
        for (c, &edge) in vars.iter().enumerate() {
            h[(c, c)] += d_cur[edge] - d_eq[edge];
            g.push(self.m * (net.edge(edge).law.flow(drops[edge]) - e.phi_star[edge]));
        }
        Ok((g, h * self.m))
    }
}
