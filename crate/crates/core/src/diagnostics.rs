//! Randomized self-checks of the energy machinery, run by `dfn check`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{e_star, energy_gradient, hess_e, hess_e_star};
use crate::error::SolveError;
use crate::instances::{random_boosts, random_injections, random_network};
use crate::network::{Injections, Network};
use crate::nf::{kkt_check, solve_nf, solve_primal, NewtonSettings};

const ALPHAS: [f64; 3] = [1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    /// Largest error (or number of failures) over all cases.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<13} {} cases, worst {:.3e} (tolerance {:.0e})  {}",
            self.name,
            self.cases,
            self.worst,
            self.tolerance,
            if self.passed() { "ok" } else { "FAILED" }
        )
    }
}

fn network(rng: &mut ChaCha8Rng, max_nodes: usize) -> Network {
    let n = rng.random_range(2..=max_nodes);
    let extra = rng.random_range(0..=n);
    random_network(rng, n, extra, &ALPHAS)
}

/// Central differences of `E*` against `(π*_free, −φ*)`, relative to the
/// larger of the gradient's max norm and 1.
pub fn gradient_check(seed: u64, cases: usize, settings: &NewtonSettings) -> Result<CheckOutcome, SolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let net = network(&mut rng, 8);
        let x = random_injections(&mut rng, &net, 1.0);
        let b = random_boosts(&mut rng, &net, 0.5);
        let eval = e_star(&net, &x, &b, settings, None)?;
        let value = |x: &Injections, b: &[f64]| e_star(&net, x, b, settings, Some(&eval.pi_star)).map(|e| e.value);
        let mut err = 0.0f64;
        let mut scale = 1.0f64;
        for i in 0..net.num_free() {
            let h = 1e-5 * (1.0 + x.free()[i].abs());
            let mut up = x.free().to_vec();
            let mut dn = up.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (value(&Injections::from_free(up), &b)? - value(&Injections::from_free(dn), &b)?) / (2.0 * h);
            let exact = eval.pi_star[i + 1];
            err = err.max((fd - exact).abs());
            scale = scale.max(exact.abs());
        }
        for e in 0..net.num_edges() {
            let h = 1e-5 * (1.0 + b[e].abs());
            let mut up = b.clone();
            let mut dn = b.clone();
            up[e] += h;
            dn[e] -= h;
            let fd = (value(&x, &up)? - value(&x, &dn)?) / (2.0 * h);
            let exact = -eval.phi_star[e];
            err = err.max((fd - exact).abs());
            scale = scale.max(exact.abs());
        }
        worst = worst.max(err / scale);
    }
    Ok(CheckOutcome {
        name: "gradients",
        cases,
        worst,
        tolerance: 1e-5,
    })
}

/// `‖∇²E*·∇²E − I‖_max` at the network-flow solution.
pub fn hessian_check(seed: u64, cases: usize, settings: &NewtonSettings) -> Result<CheckOutcome, SolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let net = network(&mut rng, 8);
        let x = random_injections(&mut rng, &net, 1.0);
        let b = random_boosts(&mut rng, &net, 0.5);
        let pi = e_star(&net, &x, &b, settings, None)?.pi_star;
        let inv = hess_e_star(&net, &x, &b, settings)?;
        let h = hess_e(&net, &pi, &b, settings.smooth_eps).to_dense();
        let n = h.nrows();
        let err = (inv * h - DMatrix::<f64>::identity(n, n)).amax();
        worst = worst.max(err);
    }
    Ok(CheckOutcome {
        name: "hessians",
        cases,
        worst,
        tolerance: 1e-8,
    })
}

/// Ordered injection pairs `q1 ≤ q2` must give ordered potentials; also
/// tracks the most negative entry of `∇²E*`. `worst` counts violations.
pub fn monotonicity_suite(seed: u64, cases: usize, settings: &NewtonSettings) -> Result<CheckOutcome, SolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    for _ in 0..cases {
        let net = network(&mut rng, 10);
        let q1 = random_injections(&mut rng, &net, 1.0);
        let q2 = Injections::from_free(q1.free().iter().map(|v| v + rng.random_range(0.0..0.5)).collect());
        let b = random_boosts(&mut rng, &net, 0.5);
        let p1 = solve_nf(&net, &q1, &b, settings)?.state.pi;
        let p2 = solve_nf(&net, &q2, &b, settings)?.state.pi;
        let ordered = p1[1..].iter().zip(&p2[1..]).all(|(a, c)| *a <= c + 1e-9);
        let nonneg = hess_e_star(&net, &q1, &b, settings)?.iter().all(|v| *v >= -1e-12);
        if !(ordered && nonneg) {
            failures += 1;
        }
    }
    Ok(CheckOutcome {
        name: "monotonicity",
        cases,
        worst: failures as f64,
        tolerance: 0.0,
    })
}

/// Newton (dual) against the independent primal solver:
/// `|P* − D*| / (1 + |D*|)`, together with the KKT residual.
pub fn duality_check(seed: u64, cases: usize, settings: &NewtonSettings) -> Result<CheckOutcome, SolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let net = network(&mut rng, 12);
        let x = random_injections(&mut rng, &net, 1.0);
        let b = random_boosts(&mut rng, &net, 0.5);
        let dual = solve_nf(&net, &x, &b, settings)?;
        let primal = solve_primal(&net, &x, &b, settings)?;
        let gap = (primal.value - dual.dual_value).abs() / (1.0 + dual.dual_value.abs());
        worst = worst.max(gap).max(kkt_check(&net, &x, &b, &dual.state));
        // the gradient of E at π* is the free injection vector
        let grad = energy_gradient(&net, &dual.state.pi, &b);
        let resid = grad.iter().zip(x.free()).fold(0.0f64, |m, (g, q)| m.max((g - q).abs()));
        worst = worst.max(resid);
    }
    Ok(CheckOutcome {
        name: "duality",
        cases,
        worst,
        tolerance: 1e-8,
    })
}
