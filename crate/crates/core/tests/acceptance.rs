//! Acceptance gate: one PASS/FAIL line per property, nonzero exit if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use dfn::energy::{e_star, energy, fenchel_gap, hess_e, hess_e_star, monotonicity_check};
use dfn::format::load_network;
use dfn::gas::{gas_energy_closed_form, gas_hessian_closed_form};
use dfn::instances::{random_boosts, random_network, random_throughput_instance};
use dfn::micp::{mccormick_violation, optimality_gap, solve_micp, BnbSettings, MicpStatus};
use dfn::nf::{kkt_check, solve_nf_from, solve_primal};
use dfn::report::{column_label, solve_column, with_potential_box, SWEEP_CAPS, SWEEP_FLOOR};
use dfn::throughput::{solve_throughput_energy, EnergySettings, ThroughputSolution};
use dfn::{solve_nf, Injections, Network, NewtonSettings, Scenario};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.3} s", d.as_secs_f64())
}

fn nf_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let settings = NewtonSettings::default();
    let cases: Vec<_> = (0..200).map(|_| random_case(&mut rng, 12, &MIXED_ALPHAS)).collect();
    let start = Instant::now();
    let mut worst_kkt = 0.0f64;
    let mut worst_iter = 0;
    let mut failures = 0;
    for (net, x, b) in &cases {
        match solve_nf(net, x, b, &settings) {
            Ok(sol) => {
                let kkt = kkt_check(net, x, b, &sol.state).max(balance_residual(net, x, b, &sol.state.pi));
                worst_kkt = worst_kkt.max(kkt);
                worst_iter = worst_iter.max(sol.iterations);
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && worst_kkt < 1e-8 && worst_iter <= 50 && elapsed < Duration::from_secs(1),
        format!(
            "200 networks, {failures} failures, worst KKT {worst_kkt:.2e}, worst {worst_iter} iterations, {}",
            secs(elapsed)
        ),
    )
}

fn uniqueness_and_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let settings = NewtonSettings::default();
    let mut spread = 0.0f64;
    let mut gap = 0.0f64;
    for _ in 0..200 {
        let (net, x, b) = random_case(&mut rng, 12, &MIXED_ALPHAS);
        let reference = solve_nf(&net, &x, &b, &settings).expect("flat start").state.pi;
        for _ in 0..20 {
            let start: Vec<f64> = (0..net.num_nodes()).map(|_| rng.random_range(-3.0..6.0)).collect();
            let pi = solve_nf_from(&net, &x, &b, &settings, &start).expect("random start").state.pi;
            let d = pi.iter().zip(&reference).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
            spread = spread.max(d);
        }
        let dual = solve_nf(&net, &x, &b, &settings).expect("dual").dual_value;
        let primal = solve_primal(&net, &x, &b, &settings).expect("primal").value;
        gap = gap.max((primal - dual).abs() / (1.0 + dual.abs()));
    }
    outcome(
        spread < 1e-8 && gap < 1e-8,
        format!("20 restarts x 200 networks: potential spread {spread:.2e}, relative primal-dual gap {gap:.2e}"),
    )
}

fn min_abs_drop(net: &Network, pi: &[f64], b: &[f64]) -> f64 {
    net.drops(pi, b).iter().fold(f64::INFINITY, |m, y| m.min(y.abs()))
}

fn conjugate_derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let settings = NewtonSettings::default();
    let mut grad_err = 0.0f64;
    let mut inverse_err = 0.0f64;
    let mut tested = 0;
    while tested < 100 {
        let (net, x, b) = random_case(&mut rng, 8, &MIXED_ALPHAS);
        let eval = e_star(&net, &x, &b, &settings, None).expect("solve");
        // the g′ cap biases derivatives near zero drops
        if min_abs_drop(&net, &eval.pi_star, &b) < 1e-4 {
            continue;
        }
        tested += 1;
        let value = |x: &Injections, b: &[f64]| e_star(&net, x, b, &settings, None).expect("solve").value;
        for i in 0..net.num_free() {
            let fd = central_difference(
                |t| {
                    let mut q = x.free().to_vec();
                    q[i] = t;
                    value(&Injections::from_free(q), &b)
                },
                x.free()[i],
                1e-6,
            );
            let exact = eval.pi_star[i + 1];
            grad_err = grad_err.max((fd - exact).abs() / exact.abs().max(1.0));
        }
        for e in 0..net.num_edges() {
            let fd = central_difference(
                |t| {
                    let mut bb = b.clone();
                    bb[e] = t;
                    value(&x, &bb)
                },
                b[e],
                1e-6,
            );
            let exact = -eval.phi_star[e];
            grad_err = grad_err.max((fd - exact).abs() / exact.abs().max(1.0));
        }
        let weights: Vec<f64> = net
            .edges()
            .iter()
            .zip(net.drops(&eval.pi_star, &b))
            .map(|(edge, y)| inverse_law_slope(edge.law.delta(), edge.law.alpha(), y))
            .collect();
        let h = dense_laplacian(&net, &weights);
        let inv = hess_e_star(&net, &x, &b, &settings).expect("inverse");
        let n = h.nrows();
        inverse_err = inverse_err.max((inv * h - DMatrix::<f64>::identity(n, n)).amax());
    }
    outcome(
        grad_err < 1e-5 && inverse_err < 1e-8,
        format!("100 networks (N <= 8): gradient rel. error {grad_err:.2e}, |H*H - I| {inverse_err:.2e}"),
    )
}

fn fenchel_gap_sign() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let settings = NewtonSettings::default();
    let mut most_negative = 0.0f64;
    let mut smallest_perturbed = f64::INFINITY;
    let mut at_solution = 0.0f64;
    for _ in 0..200 {
        let (net, x, b) = random_case(&mut rng, 12, &MIXED_ALPHAS);
        let pi_star = e_star(&net, &x, &b, &settings, None).expect("solve").pi_star;
        at_solution = at_solution.max(fenchel_gap(&net, &pi_star, &x, &b, &settings).expect("gap").abs());
        for _ in 0..5 {
            let mut pi = pi_star.clone();
            pi[1..].iter_mut().for_each(|p| *p += rng.random_range(-2.0..2.0));
            most_negative = most_negative.min(fenchel_gap(&net, &pi, &x, &b, &settings).expect("gap"));
        }
        for norm in [1e-3, 1e-2, 1e-1] {
            let dir: Vec<f64> = (1..net.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            let mut pi = pi_star.clone();
            for (p, d) in pi[1..].iter_mut().zip(&dir) {
                *p += norm * d / len;
            }
            smallest_perturbed = smallest_perturbed.min(fenchel_gap(&net, &pi, &x, &b, &settings).expect("gap"));
        }
    }
    outcome(
        most_negative >= -1e-10 && smallest_perturbed >= 1e-8 && at_solution <= 1e-10,
        format!(
            "200 networks: most negative gap {most_negative:.2e}, |gap| at optimum {at_solution:.2e}, smallest perturbed gap {smallest_perturbed:.2e}"
        ),
    )
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let settings = NewtonSettings::default();
    let mut unordered = 0;
    let mut min_entry = f64::INFINITY;
    for _ in 0..200 {
        let (net, q1, b) = random_case(&mut rng, 12, &MIXED_ALPHAS);
        let q2 = Injections::from_free(q1.free().iter().map(|v| v + rng.random_range(0.0..0.5)).collect());
        if !monotonicity_check(&net, &b, &q1, &q2, &settings).expect("solve") {
            unordered += 1;
        }
        for q in [&q1, &q2] {
            let h = hess_e_star(&net, q, &b, &settings).expect("inverse");
            min_entry = min_entry.min(h.min());
        }
    }
    outcome(
        unordered == 0 && min_entry >= -1e-12,
        format!("200 ordered pairs: {unordered} unordered, smallest inverse-Hessian entry {min_entry:.2e}"),
    )
}

fn gas_two_node_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut errors = Vec::new();
    for (p_source, p_min) in [(3.0, 1.0), (2.0, 1.5), (5.0, 0.0), (1.2, 1.1)] {
        let (net, sc) = two_node_gas(p_source, p_min);
        let exact = -(p_source * p_source - p_min * p_min).sqrt();
        let upper = match solve_throughput_energy(&net, &sc, &EnergySettings::default()) {
            Ok(s) => s,
            Err(e) => {
                errors.push(format!("heuristic: {e}"));
                continue;
            }
        };
        let lower = match solve_micp(&net, &sc, &BnbSettings::default()) {
            Ok(m) => m,
            Err(e) => {
                errors.push(format!("MICP: {e}"));
                continue;
            }
        };
        worst = worst.max((upper.objective - exact).abs()).max((lower.lower_bound - exact).abs());
        match optimality_gap(&upper, &lower) {
            Ok(g) => worst_gap = worst_gap.max(g.abs()),
            Err(e) => errors.push(format!("gap: {e}")),
        }
    }
    outcome(
        errors.is_empty() && worst < 1e-6 && worst_gap < 1e-6,
        format!("4 pressure pairs: worst error {worst:.2e}, worst gap {worst_gap:.2e} {}", errors.join("; ")),
    )
}

fn micp_matches_enumeration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let settings = BnbSettings {
        abs_gap_tol: 1e-9,
        rel_gap_tol: 1e-9,
        ..BnbSettings::default()
    };
    let instances: Vec<(Network, Scenario)> =
        (0..50).map(|_| random_throughput_instance(&mut rng, 6, &MIXED_ALPHAS)).collect();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for (net, sc) in &instances {
        let brute = enumerate_directions(net, sc, &settings);
        let micp = solve_micp(net, sc, &settings).expect("micp");
        match brute {
            Some(v) if micp.status == MicpStatus::Optimal => worst = worst.max((micp.lower_bound - v).abs()),
            None if micp.status == MicpStatus::Infeasible => {}
            _ => mismatches += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && worst < 1e-7 && elapsed < Duration::from_secs(30),
        format!("50 instances (M <= 6): worst difference {worst:.2e}, {mismatches} status mismatches, {}", secs(elapsed)),
    )
}

fn example_bound_ordering() -> Outcome {
    let (net, sc) = match load_network(example_network_path()) {
        Ok(inst) => (inst.network, inst.scenario),
        Err(e) => return outcome(false, format!("cannot load the 16-node example: {e}")),
    };
    let mut lines = Vec::new();
    let mut ok = true;
    for compression in [false, true] {
        let sc = sc.with_compression(compression);
        let energy = EnergySettings {
            b_variable: compression,
            ..EnergySettings::default()
        };
        for cap in SWEEP_CAPS {
            let (net, sc) = with_potential_box(&net, &sc, SWEEP_FLOOR, cap);
            let col = solve_column(column_label(SWEEP_FLOOR, cap), &net, &sc, &energy, &BnbSettings::default());
            let certified = solve_throughput_energy(&net, &sc, &energy).map(|s| s.feasible).unwrap_or(false);
            let (Some(h), Some(r), Some(l)) = (col.heuristic, col.reference, col.lower_bound) else {
                ok = false;
                lines.push(format!("{}: missing values ({:?})", col.label, col.status));
                continue;
            };
            let seconds = col.seconds.unwrap_or(f64::INFINITY);
            let tol = 1e-9 * h.abs().max(1.0);
            ok &= certified && l <= r + tol && r <= h + tol && h - l >= -tol && seconds < 60.0;
            lines.push(format!(
                "{}{}: {l:.4} <= {r:.4} <= {h:.4} in {seconds:.2} s",
                if compression { "comp " } else { "" },
                col.label
            ));
        }
    }
    outcome(ok, lines.join(", "))
}

fn certified_points_satisfy_mccormick() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cases: Vec<(Network, Scenario)> =
        (0..60).map(|_| random_throughput_instance(&mut rng, 6, &MIXED_ALPHAS)).collect();
    cases.push(two_node_gas(3.0, 1.0));
    if let Ok(inst) = load_network(example_network_path()) {
        for compression in [false, true] {
            for cap in SWEEP_CAPS {
                let sc = inst.scenario.with_compression(compression);
                cases.push(with_potential_box(&inst.network, &sc, SWEEP_FLOOR, cap));
            }
        }
    }
    let mut certified = 0;
    let mut worst = 0.0f64;
    for (net, sc) in &cases {
        let settings = EnergySettings {
            b_variable: sc.b_variable.iter().any(|v| *v),
            ..EnergySettings::default()
        };
        let Ok(s): Result<ThroughputSolution, _> = solve_throughput_energy(net, sc, &settings) else {
            continue;
        };
        if s.feasible {
            certified += 1;
            worst = worst.max(mccormick_violation(net, sc, &s.pi, &s.phi, &s.b));
        }
    }
    outcome(
        certified > 0 && worst <= 1e-9,
        format!("{certified} certified solutions of {}: worst violation {worst:.2e}", cases.len()),
    )
}

fn gas_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let eps = NewtonSettings::default().smooth_eps;
    let mut energy_err = 0.0f64;
    let mut hessian_err = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let extra = rng.random_range(0..=n);
        let net = random_network(&mut rng, n, extra, &[2.0]);
        let b = random_boosts(&mut rng, &net, 0.5);
        let pi: Vec<f64> = (0..net.num_nodes()).map(|_| rng.random_range(0.5..4.0)).collect();
        let closed = gas_energy_closed_form(&net, &pi, &b).expect("gas network");
        let generic = energy(&net, &pi, &b);
        energy_err = energy_err.max((closed - generic).abs() / generic.abs().max(f64::MIN_POSITIVE));
        let hc = gas_hessian_closed_form(&net, &pi, &b, eps).expect("gas network").to_dense();
        let hg = hess_e(&net, &pi, &b, eps).to_dense();
        hessian_err = hessian_err.max((hc - &hg).amax() / hg.amax());
    }
    outcome(
        energy_err <= 1e-12 && hessian_err <= 1e-12,
        format!("200 gas networks: energy rel. error {energy_err:.2e}, Hessian rel. error {hessian_err:.2e}"),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("network-flow Newton convergence", nf_convergence),
        ("uniqueness and strong duality", uniqueness_and_duality),
        ("conjugate gradients and Hessian inverse", conjugate_derivatives),
        ("Fenchel gap sign and strictness", fenchel_gap_sign),
        ("potential monotonicity", monotonicity),
        ("two-node gas closed form", gas_two_node_oracle),
        ("branch-and-bound vs enumeration", micp_matches_enumeration),
        ("16-node bound ordering", example_bound_ordering),
        ("McCormick validity of certified points", certified_points_satisfy_mccormick),
        ("gas closed forms vs generic", gas_closed_forms),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let result = check();
        if !result.passed {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{}]",
            if result.passed { "PASS" } else { "FAIL" },
            result.detail,
            secs(start.elapsed())
        );
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
