//! Log-barrier interior-point method for small dense convex programs of the
//! form
//!
//! ```text
//! min wᵀz  s.t.  Σ_j a_kj z_j + δ_k |z_c(k)|^α_k ≤ r_k,   C z = d
//! ```
//!
//! where the power term is optional per constraint. Feasibility is settled by
//! a phase-1 problem whose optimal value is certified by the barrier duality
//! gap, so "infeasible" is only reported when provably so.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSettings {
    /// Initial barrier weight `μ` (the objective is scaled by `1/μ`).
    pub mu0: f64,
    /// Factor applied to `μ` after each centering.
    pub shrink: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub inner_tol: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            mu0: 10.0,
            shrink: 0.2,
            inner_tol: 1e-9,
        }
    }
}

/// Phase-1 optimal values below this count as feasible (with the constraints
/// relaxed by twice the amount).
pub(crate) const FEAS_TOL: f64 = 1e-9;
/// Target duality gap `m μ` of the final centering.
const GAP_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;
const UNBOUNDED: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Constraint {
    pub lin: Vec<(usize, f64)>,
    pub rhs: f64,
    /// `(index, δ, α)` of a `δ|z_index|^α` term.
    pub power: Option<(usize, f64, f64)>,
}

impl Constraint {
    pub fn linear(lin: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { lin, rhs, power: None }
    }

    fn value(&self, z: &[f64]) -> f64 {
        let mut v: f64 = self.lin.iter().map(|&(j, a)| a * z[j]).sum::<f64>() - self.rhs;
        if let Some((c, d, a)) = self.power {
            v += d * z[c].abs().powf(a);
        }
        v
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ConvexProgram {
    pub dim: usize,
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    pub equalities: Vec<(Vec<(usize, f64)>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Outcome {
    Optimal {
        /// Objective at the returned point.
        value: f64,
        /// Certified lower bound on the optimum.
        bound: f64,
        z: Vec<f64>,
    },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Failure(pub String);

impl ConvexProgram {
    fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, w)| w * z[j]).sum()
    }

    fn max_violation(&self, z: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(z))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solves `prog` from an optional guess (only used for the equality
/// projection of the phase-1 start).
pub(crate) fn solve(
    prog: &ConvexProgram,
    settings: &BarrierSettings,
    guess: Option<&[f64]>,
) -> Result<Outcome, Failure> {
    let Some(reduced) = independent_equalities(prog) else {
        return Ok(Outcome::Infeasible);
    };
    let prog = &reduced;
    let n = prog.dim;
    let z0 = match guess {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let z0 = project_equalities(prog, &z0)?;
    if prog.constraints.is_empty() {
        return finish_unconstrained(prog, z0);
    }

    // phase 1: min t s.t. h_k(z) ≤ t, t ≥ −1
    let start_max = prog.max_violation(&z0);
    let (z, shift) = if start_max < -1e-6 {
        (z0, 0.0)
    } else {
        let t_idx = n;
        let mut p1 = ConvexProgram {
            dim: n + 1,
            objective: vec![(t_idx, 1.0)],
            constraints: prog
                .constraints
                .iter()
                .map(|c| {
                    let mut c = c.clone();
                    c.lin.push((t_idx, -1.0));
                    c
                })
                .collect(),
            equalities: prog.equalities.clone(),
        };
        p1.constraints.push(Constraint::linear(vec![(t_idx, -1.0)], 1.0));
        let mut w = z0.clone();
        w.push(start_max + 1.0);
        let m = p1.constraints.len() as f64;
        let mut mu = settings.mu0;
        let mut decided = None;
        loop {
            center(&p1, &mut w, mu, settings.inner_tol, &|w| prog.max_violation(&w[..n]) < -1e-6)?;
            let t = w[t_idx];
            let zmax = prog.max_violation(&w[..n]);
            if zmax < -1e-6 {
                decided = Some(0.0);
                break;
            }
            if t - m * mu > FEAS_TOL {
                break;
            }
            if m * mu <= GAP_TOL {
                if zmax < -1e-12 {
                    decided = Some(0.0);
                } else if t - m * mu <= FEAS_TOL {
                    decided = Some(zmax.max(0.0) + 2.0 * FEAS_TOL);
                }
                break;
            }
            mu *= settings.shrink;
        }
        match decided {
            None => return Ok(Outcome::Infeasible),
            Some(s) => {
                w.truncate(n);
                (w, s)
            }
        }
    };

    // phase 2 on the (possibly slightly relaxed) constraints
    let mut p2 = prog.clone();
    for c in &mut p2.constraints {
        c.rhs += shift;
    }
    let mut z = z;
    let m = p2.constraints.len() as f64;
    let mut mu = settings.mu0;
    loop {
        center(&p2, &mut z, mu, settings.inner_tol, &|_| false)?;
        let value = p2.objective_value(&z);
        if value < -UNBOUNDED || z.iter().any(|v| v.abs() > UNBOUNDED) {
            return Ok(Outcome::Unbounded);
        }
        if m * mu <= GAP_TOL * value.abs().max(1.0) {
            return Ok(Outcome::Optimal {
                value,
                bound: value - m * mu,
                z,
            });
        }
        mu *= settings.shrink;
    }
}

fn finish_unconstrained(prog: &ConvexProgram, z: Vec<f64>) -> Result<Outcome, Failure> {
    // only equalities: bounded iff the objective is constant on their null space
    let c = equality_matrix(prog);
    let mut w = DVector::zeros(prog.dim);
    for &(j, v) in &prog.objective {
        w[j] += v;
    }
    let residual = if c.nrows() == 0 {
        w.norm()
    } else {
        let gram = &c * c.transpose();
        let lu = gram.lu();
        let y = lu.solve(&(&c * &w)).ok_or_else(|| Failure("dependent equalities".into()))?;
        (w - c.transpose() * y).norm()
    };
    if residual > 1e-12 {
        return Ok(Outcome::Unbounded);
    }
    let value = prog.objective_value(&z);
    Ok(Outcome::Optimal { value, bound: value, z })
}

/// Copy of `prog` without equality rows that are combinations of earlier
/// ones; `None` when such a row contradicts them.
fn independent_equalities(prog: &ConvexProgram) -> Option<ConvexProgram> {
    const DEPENDENT: f64 = 1e-10;
    let mut kept: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(prog.equalities.len());
    // orthonormal basis of the kept rows, each with its transformed rhs
    let mut basis: Vec<(DVector<f64>, f64)> = Vec::new();
    for (row, rhs) in &prog.equalities {
        let mut v = DVector::<f64>::zeros(prog.dim);
        for &(j, a) in row {
            v[j] += a;
        }
        let scale = v.norm().max(rhs.abs()).max(f64::MIN_POSITIVE);
        let mut r = *rhs;
        for (q, qr) in &basis {
            let c = q.dot(&v);
            v -= q * c;
            r -= c * qr;
        }
        let norm = v.norm();
        if norm <= DEPENDENT * scale {
            if r.abs() > 1e-8 * scale {
                return None;
            }
            continue;
        }
        basis.push((v / norm, r / norm));
        kept.push((row.clone(), *rhs));
    }
    Some(ConvexProgram {
        equalities: kept,
        ..prog.clone()
    })
}

fn equality_matrix(prog: &ConvexProgram) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(prog.equalities.len(), prog.dim);
    for (r, (row, _)) in prog.equalities.iter().enumerate() {
        for &(j, v) in row {
            c[(r, j)] += v;
        }
    }
    c
}

/// Orthonormal basis of the null space of the (independent) equality rows.
fn null_space(prog: &ConvexProgram) -> DMatrix<f64> {
    let n = prog.dim;
    let p = prog.equalities.len();
    if p == 0 {
        return DMatrix::identity(n, n);
    }
    let c = equality_matrix(prog);
    let eig = (c.transpose() * &c).symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let keep: Vec<usize> = order.into_iter().take(n - p).filter(|&i| eig.eigenvalues[i] <= 1e-10 * top).collect();
    DMatrix::from_fn(n, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])])
}

fn project_equalities(prog: &ConvexProgram, z: &[f64]) -> Result<Vec<f64>, Failure> {
    if prog.equalities.is_empty() {
        return Ok(z.to_vec());
    }
    let c = equality_matrix(prog);
    let d = DVector::from_iterator(prog.equalities.len(), prog.equalities.iter().map(|e| e.1));
    let zv = DVector::from_column_slice(z);
    let r = &c * &zv - d;
    let gram = &c * c.transpose();
    let y = gram
        .lu()
        .solve(&r)
        .ok_or_else(|| Failure("equality constraints are linearly dependent".into()))?;
    Ok((zv - c.transpose() * y).as_slice().to_vec())
}

/// Newton centering of `wᵀz/μ − Σ log(−h_k(z))` subject to the equalities,
/// from a strictly feasible `z` that already satisfies them. Returns early
/// once `done` holds.
fn center(
    prog: &ConvexProgram,
    z: &mut Vec<f64>,
    mu: f64,
    tol: f64,
    done: &dyn Fn(&[f64]) -> bool,
) -> Result<(), Failure> {
    let n = prog.dim;
    let basis = null_space(prog);
    let scale = 1.0 / mu;
    let barrier = |z: &[f64]| -> f64 {
        let mut v = scale * prog.objective_value(z);
        for con in &prog.constraints {
            let h = con.value(z);
            if h >= 0.0 {
                return f64::INFINITY;
            }
            v -= (-h).ln();
        }
        v
    };
    let mut f = barrier(z);
    if !f.is_finite() {
        return Err(Failure("centering started outside the domain".into()));
    }
    for _ in 0..MAX_NEWTON {
        let mut g = DVector::<f64>::zeros(n);
        let mut h = DMatrix::<f64>::zeros(n, n);
        for &(j, w) in &prog.objective {
            g[j] += scale * w;
        }
        for con in &prog.constraints {
            let hv = con.value(z);
            let inv = -1.0 / hv;
            // ∇h, with the power term folded into the linear part at z
            let mut grad: Vec<(usize, f64)> = con.lin.clone();
            if let Some((ci, d, a)) = con.power {
                let x = z[ci];
                grad.push((ci, d * a * x.signum() * x.abs().powf(a - 1.0)));
                if a > 1.0 {
                    let curv = d * a * (a - 1.0) * x.abs().max(1e-9).powf(a - 2.0);
                    h[(ci, ci)] += inv * curv;
                }
            }
            for &(j, v) in &grad {
                g[j] += inv * v;
            }
            for &(j, vj) in &grad {
                for &(k, vk) in &grad {
                    h[(j, k)] += inv * inv * vj * vk;
                }
            }
        }
        // reduced Newton system on the null space of the equalities, with a
        // symmetric diagonal scaling: barrier terms of nearly active
        // constraints can exceed the others by many orders of magnitude
        let hr = basis.transpose() * &h * &basis;
        let gr = basis.transpose() * &g;
        let k = hr.nrows();
        let diag_max = (0..k).fold(0.0f64, |m, i| m.max(hr[(i, i)]));
        let d: Vec<f64> = (0..k)
            .map(|i| 1.0 / hr[(i, i)].max(1e-300 + 1e-30 * diag_max).sqrt())
            .collect();
        let mut scaled = DMatrix::<f64>::from_fn(k, k, |i, j| hr[(i, j)] * d[i] * d[j]);
        for i in 0..k {
            scaled[(i, i)] += 1e-13;
        }
        let rhs = DVector::from_iterator(k, (0..k).map(|i| -gr[i] * d[i]));
        let sol = match scaled.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => scaled
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Failure("singular Newton system".into()))?,
        };
        let w = DVector::from_iterator(k, (0..k).map(|i| sol[i] * d[i]));
        let dz = &basis * w;
        if dz.iter().any(|v| !v.is_finite()) {
            return Err(Failure("non-finite Newton step".into()));
        }
        let slope = g.dot(&dz);
        // at small μ the scaled objective dominates f and bounds its precision
        if -slope / 2.0 <= tol.max(1e-15 * f.abs()) {
            return Ok(());
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + t * d).collect();
            let ft = barrier(&trial);
            if ft.is_finite() && ft <= f + 0.25 * t * slope {
                *z = trial;
                f = ft;
                if done(z) || z.iter().any(|v| v.abs() > UNBOUNDED) {
                    return Ok(());
                }
                break;
            }
            t *= 0.5;
            if t < 1e-16 {
                // no representable progress: the center is reached to round-off
                if -slope <= 1e-6 * (1.0 + f.abs()) {
                    return Ok(());
                }
                return Err(Failure(format!("line search failed (decrement {:.3e})", -slope)));
            }
        }
    }
    Err(Failure("centering exceeded its Newton iteration limit".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_box() -> ConvexProgram {
        // min −z0 − z1 s.t. z0 ≤ 1, z1 ≤ 2, −z0 ≤ 0, −z1 ≤ 0
        ConvexProgram {
            dim: 2,
            objective: vec![(0, -1.0), (1, -1.0)],
            constraints: vec![
                Constraint::linear(vec![(0, 1.0)], 1.0),
                Constraint::linear(vec![(1, 1.0)], 2.0),
                Constraint::linear(vec![(0, -1.0)], 0.0),
                Constraint::linear(vec![(1, -1.0)], 0.0),
            ],
            equalities: vec![],
        }
    }

    #[test]
    fn box_lp() {
        match solve(&lp_box(), &BarrierSettings::default(), None).unwrap() {
            Outcome::Optimal { value, bound, z } => {
                assert!((value + 3.0).abs() < 1e-8);
                assert!(bound <= -3.0 + 1e-12);
                assert!((z[0] - 1.0).abs() < 1e-8 && (z[1] - 2.0).abs() < 1e-8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn power_constraint_with_equality() {
        // min −z1 s.t. z0² ≤ z1... reversed: max z0 s.t. z0² ≤ 4 − z1, z1 = 0
        let prog = ConvexProgram {
            dim: 2,
            objective: vec![(0, -1.0)],
            constraints: vec![Constraint {
                lin: vec![(1, 1.0)],
                rhs: 4.0,
                power: Some((0, 1.0, 2.0)),
            }],
            equalities: vec![(vec![(1, 1.0)], 0.0)],
        };
        match solve(&prog, &BarrierSettings::default(), None).unwrap() {
            Outcome::Optimal { value, .. } => assert!((value + 2.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut prog = lp_box();
        prog.equalities = vec![(vec![(0, 1.0)], 0.5), (vec![(0, 2.0)], 1.0), (vec![(0, 1.0), (1, 1.0)], 1.0)];
        match solve(&prog, &BarrierSettings::default(), None).unwrap() {
            Outcome::Optimal { value, .. } => assert!((value + 1.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
        prog.equalities.push((vec![(1, 3.0)], 0.0));
        assert_eq!(solve(&prog, &BarrierSettings::default(), None).unwrap(), Outcome::Infeasible);
    }

    #[test]
    fn detects_infeasibility() {
        let mut prog = lp_box();
        prog.constraints.push(Constraint::linear(vec![(0, -1.0)], -1.5));
        assert_eq!(solve(&prog, &BarrierSettings::default(), None).unwrap(), Outcome::Infeasible);
    }

    #[test]
    fn degenerate_feasible_set() {
        // z0 ≥ 0 and z0² ≤ 0: only z0 = 0
        let prog = ConvexProgram {
            dim: 1,
            objective: vec![(0, 1.0)],
            constraints: vec![
                Constraint::linear(vec![(0, -1.0)], 0.0),
                Constraint {
                    lin: vec![],
                    rhs: 0.0,
                    power: Some((0, 1.0, 2.0)),
                },
            ],
            equalities: vec![],
        };
        match solve(&prog, &BarrierSettings::default(), None).unwrap() {
            Outcome::Optimal { value, bound, .. } => {
                assert!(value.abs() < 1e-4);
                assert!(bound <= 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_direction() {
        let prog = ConvexProgram {
            dim: 1,
            objective: vec![(0, -1.0)],
            constraints: vec![Constraint::linear(vec![(0, -1.0)], 0.0)],
            equalities: vec![],
        };
        assert_eq!(solve(&prog, &BarrierSettings::default(), None).unwrap(), Outcome::Unbounded);
    }
}
