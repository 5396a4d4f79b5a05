//! The energy function `E(π, b) = Σ G(π_i − π_j + b)`, its conjugate in the
//! injections, and the derivative identities linking them.
//!
//! Conventions: injections and potential gradients live on the free
//! (non-slack) nodes. The conjugate is `E*(x, b) = sup_π Σ_{i≠slack} π_i x_i −
//! E(π, b)` with the slack potential held at its fixed value, so that
//! `∇ₓE* = π*` restricted to free nodes and `∇_b E* = −φ*`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::SolveError;
use crate::linalg::{reduced_laplacian, spd_inverse, SparseSymmetric};
use crate::network::{Injections, Network, SLACK};
use crate::nf::{solve_nf, solve_nf_from, NewtonSettings};

/// `Σ_e G_e(π_from − π_to + b_e)`.
pub fn energy(network: &Network, pi: &[f64], b: &[f64]) -> f64 {
    network
        .edges()
        .iter()
        .zip(network.drops(pi, b))
        .map(|(e, y)| e.law.drop_antiderivative(y))
        .sum()
}

/// Gradient of `E` in the free potentials: net outflow `Σ ±g(drop)` per node.
pub fn energy_gradient(network: &Network, pi: &[f64], b: &[f64]) -> Vec<f64> {
    let phi: Vec<f64> = network
        .edges()
        .iter()
        .zip(network.drops(pi, b))
        .map(|(e, y)| e.law.flow(y))
        .collect();
    network.outflow(&phi)[1..].to_vec()
}

/// Reduced weighted Laplacian with weights `g'(drop)`, over free nodes.
pub fn hess_e(network: &Network, pi: &[f64], b: &[f64], smooth_eps: f64) -> SparseSymmetric {
    reduced_laplacian(network, &conductances(network, pi, b, smooth_eps))
}

pub(crate) fn conductances(network: &Network, pi: &[f64], b: &[f64], smooth_eps: f64) -> Vec<f64> {
    network
        .edges()
        .iter()
        .zip(network.drops(pi, b))
        .map(|(e, y)| e.law.conductance(y, smooth_eps))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugateEval {
    /// `Σ_{i≠slack} π*_i x_i − E(π*, b)`.
    pub value: f64,
    /// `value + π_slack · x_slack`, i.e. the supremum with the derived slack
    /// injection included; equals the minimal primal energy.
    pub full_value: f64,
    /// Full potential vector, slack entry included.
    pub pi_star: Vec<f64>,
    pub phi_star: Vec<f64>,
    pub inner_iterations: usize,
}

/// Evaluates `E*(x, b)` with one network-flow solve, optionally warm-started
/// from a full potential vector.
pub fn e_star(
    network: &Network,
    x: &Injections,
    b: &[f64],
    settings: &NewtonSettings,
    hint: Option<&[f64]>,
) -> Result<ConjugateEval, SolveError> {
    let sol = match hint {
        Some(start) => solve_nf_from(network, x, b, settings, start)?,
        None => solve_nf(network, x, b, settings)?,
    };
    let pi = sol.state.pi;
    let load: f64 = pi[1..].iter().zip(x.free()).map(|(p, q)| p * q).sum();
    let value = load - energy(network, &pi, b);
    Ok(ConjugateEval {
        value,
        full_value: value + pi[SLACK] * x.slack(),
        pi_star: pi,
        phi_star: sol.state.phi,
        inner_iterations: sol.iterations,
    })
}

/// `(∇ₓE*, ∇_b E*) = (π*_free, −φ*)` from a single solve.
pub fn grad_e_star(
    network: &Network,
    x: &Injections,
    b: &[f64],
    settings: &NewtonSettings,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let eval = e_star(network, x, b, settings, None)?;
    let d_b = eval.phi_star.iter().map(|f| -f).collect();
    Ok((eval.pi_star[1..].to_vec(), d_b))
}

/// `∇²ₓₓE*(x, b)`: the inverse of the reduced Laplacian at `π*(x)`.
pub fn hess_e_star(
    network: &Network,
    x: &Injections,
    b: &[f64],
    settings: &NewtonSettings,
) -> Result<DMatrix<f64>, SolveError> {
    let eval = e_star(network, x, b, settings, None)?;
    hess_e_star_at(network, &eval.pi_star, b, settings.smooth_eps)
}

pub(crate) fn hess_e_star_at(
    network: &Network,
    pi_star: &[f64],
    b: &[f64],
    smooth_eps: f64,
) -> Result<DMatrix<f64>, SolveError> {
    let h = hess_e(network, pi_star, b, smooth_eps).to_dense();
    spd_inverse(&h).map_err(|_| SolveError::SingularHessian)
}

/// `E(π, b) + E*(x, b) − Σ_{i≠slack} π_i x_i`: nonnegative, zero exactly at
/// `π = π*(x)`. The slack entry of `pi` is taken as given.
pub fn fenchel_gap(
    network: &Network,
    pi: &[f64],
    x: &Injections,
    b: &[f64],
    settings: &NewtonSettings,
) -> Result<f64, SolveError> {
    let eval = e_star(network, x, b, settings, None)?;
    Ok(gap_with(network, pi, x, b, &eval))
}

pub(crate) fn gap_with(
    network: &Network,
    pi: &[f64],
    x: &Injections,
    b: &[f64],
    eval: &ConjugateEval,
) -> f64 {
    let load: f64 = pi[1..].iter().zip(x.free()).map(|(p, q)| p * q).sum();
    energy(network, pi, b) + eval.value - load
}

/// Solves the network flow at `q1` and `q2` and reports whether the
/// potentials are ordered like the injections (within 1e-9) on free nodes.
/// The caller is expected to pass `q1 ≤ q2` componentwise.
pub fn monotonicity_check(
    network: &Network,
    b: &[f64],
    q1: &Injections,
    q2: &Injections,
    settings: &NewtonSettings,
) -> Result<bool, SolveError> {
    let p1 = solve_nf(network, q1, b, settings)?.state.pi;
    let p2 = solve_nf(network, q2, b, settings)?.state.pi;
    Ok(p1[1..].iter().zip(&p2[1..]).all(|(a, c)| *a <= c + 1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissipation::DissipationLaw;
    use crate::network::Edge;

    fn gas_path(slack: f64) -> Network {
        Network::with_slack_first(2, slack, vec![Edge::new(0, 1, DissipationLaw::quadratic(1.0).unwrap())])
            .unwrap()
    }

    fn linear_path3() -> Network {
        Network::with_slack_first(
            3,
            0.0,
            vec![
                Edge::new(0, 1, DissipationLaw::linear(1.0).unwrap()),
                Edge::new(1, 2, DissipationLaw::linear(1.0).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn energy_examples() {
        let net = gas_path(4.0);
        assert!((energy(&net, &[4.0, 0.0], &[0.0]) - 16.0 / 3.0).abs() < 1e-14);
        assert_eq!(energy(&net, &[4.0, 4.0], &[0.0]), 0.0);
        assert_eq!(energy(&net, &[1.0, 4.0], &[3.0]), 0.0);
    }

    #[test]
    fn conjugate_examples() {
        let net = gas_path(2.0);
        let s = NewtonSettings::default();
        let flat = e_star(&net, &Injections::zeros(&net), &[0.0], &s, None).unwrap();
        assert_eq!(flat.value, 0.0);
        assert_eq!(flat.pi_star, vec![2.0, 2.0]);
        assert_eq!(flat.phi_star, vec![0.0]);

        let x = Injections::from_free(vec![-1.0]);
        let eval = e_star(&net, &x, &[0.0], &s, None).unwrap();
        assert!((eval.pi_star[1] - 1.0).abs() < 1e-10);
        assert!((eval.phi_star[0] - 1.0).abs() < 1e-10);
        // −1·1 − (2/3)·1^{3/2}
        assert!((eval.value + 5.0 / 3.0).abs() < 1e-10);
        // + π₀·x₀ = 2·1 gives the primal optimum F(1) = 1/3
        assert!((eval.full_value - 1.0 / 3.0).abs() < 1e-10);

        let (dx, db) = grad_e_star(&net, &x, &[0.0], &s).unwrap();
        assert!((dx[0] - 1.0).abs() < 1e-10);
        assert!((db[0] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn hessian_examples() {
        let net = gas_path(4.0);
        let h = hess_e(&net, &[4.0, 0.0], &[0.0], 1e-8);
        assert_eq!(h.dim(), 1);
        assert!((h.get(0, 0) - 0.25).abs() < 1e-15);

        let lin = linear_path3();
        let h = hess_e(&lin, &[0.0, 1.0, 2.0], &[0.0, 0.0], 1e-8).to_dense();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));

        let s = NewtonSettings::default();
        let inv = hess_e_star(&lin, &Injections::from_free(vec![0.3, -0.7]), &[0.0, 0.0], &s).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        assert!((inv - expect).norm() < 1e-12);

        let gas = gas_path(4.0);
        let inv = hess_e_star(&gas, &Injections::from_free(vec![-2.0]), &[0.0], &s).unwrap();
        assert!((inv[(0, 0)] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn fenchel_gap_examples() {
        let net = gas_path(2.0);
        let s = NewtonSettings::default();
        let zero = Injections::zeros(&net);
        assert_eq!(fenchel_gap(&net, &[2.0, 2.0], &zero, &[0.0], &s).unwrap(), 0.0);
        let x = Injections::from_free(vec![-1.0]);
        assert!(fenchel_gap(&net, &[2.0, 1.0], &x, &[0.0], &s).unwrap().abs() < 1e-9);
        assert!(fenchel_gap(&net, &[2.0, 1.1], &x, &[0.0], &s).unwrap() > 1e-4);
    }

    #[test]
    fn monotonicity_examples() {
        let net = gas_path(5.0);
        let s = NewtonSettings::default();
        let q = Injections::from_free(vec![-1.0]);
        assert!(monotonicity_check(&net, &[0.0], &q, &q, &s).unwrap());
        let lo = Injections::from_free(vec![-2.0]);
        assert!(monotonicity_check(&net, &[0.0], &lo, &q, &s).unwrap());
        assert!(!monotonicity_check(&net, &[0.0], &q, &lo, &s).unwrap());
    }
}
