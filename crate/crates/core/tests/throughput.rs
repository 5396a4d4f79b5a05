mod common;

use common::{balance_residual, two_node_gas, MIXED_ALPHAS};
use dfn::instances::random_throughput_instance;
use dfn::micp::{drop_bounds, mccormick_slacks, solve_micp, BnbSettings, MicpStatus};
use dfn::throughput::{certify, solve_throughput_energy, EnergySettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CASES: usize = 40;

#[test]
fn heuristic_points_are_flow_solutions_inside_the_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut certified = 0;
    for _ in 0..CASES {
        let (net, sc) = random_throughput_instance(&mut rng, 6, &MIXED_ALPHAS);
        let Ok(sol) = solve_throughput_energy(&net, &sc, &EnergySettings::default()) else {
            continue;
        };
        if !sol.feasible {
            continue;
        }
        certified += 1;
        assert!(balance_residual(&net, &sol.x, &sol.b, &sol.pi) < 1e-7);
        let full = sol.x.full();
        for i in 0..net.num_nodes() {
            assert!(sol.pi[i] >= sc.pi_lo[i] - 1e-9 && sol.pi[i] <= sc.pi_hi[i] + 1e-9);
            assert!(full[i] >= sc.x_lo[i] - 1e-9 && full[i] <= sc.x_hi[i] + 1e-9);
        }
        assert!((sol.objective - sc.objective(&sol.x)).abs() < 1e-12);
    }
    assert!(certified > CASES / 2, "only {certified} of {CASES} certified");
}

#[test]
fn lower_bound_never_exceeds_a_certified_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..CASES {
        let (net, sc) = random_throughput_instance(&mut rng, 6, &MIXED_ALPHAS);
        let micp = solve_micp(&net, &sc, &BnbSettings::default()).unwrap();
        let Ok(upper) = solve_throughput_energy(&net, &sc, &EnergySettings::default()) else {
            continue;
        };
        if upper.feasible {
            assert_ne!(micp.status, MicpStatus::Infeasible);
            assert!(micp.lower_bound <= upper.objective + 1e-7, "{} > {}", micp.lower_bound, upper.objective);
        }
    }
}

#[test]
fn bound_trace_only_rises() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..CASES {
        let (net, sc) = random_throughput_instance(&mut rng, 6, &MIXED_ALPHAS);
        let micp = solve_micp(&net, &sc, &BnbSettings::default()).unwrap();
        for pair in micp.bound_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12, "{pair:?}");
        }
        if micp.status == MicpStatus::Optimal {
            assert!(micp.incumbent >= micp.lower_bound - 1e-9);
            assert!(micp.incumbent - micp.lower_bound <= 1e-6 * (1.0 + micp.incumbent.abs()));
        }
    }
}

#[test]
fn relaxed_points_respect_the_envelopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..CASES {
        let (net, sc) = random_throughput_instance(&mut rng, 6, &MIXED_ALPHAS);
        let micp = solve_micp(&net, &sc, &BnbSettings::default()).unwrap();
        let (Some(p), Some(dirs)) = (&micp.best_point, &micp.best_assignment) else {
            continue;
        };
        let bounds = drop_bounds(&net, &sc);
        let drops = net.drops(&p.pi, &p.b);
        for (e, edge) in net.edges().iter().enumerate() {
            let s = dirs.s[e].sign().expect("leaf assignments are complete");
            let (first, second) = mccormick_slacks(&edge.law, p.phi[e], drops[e], bounds[e].0, bounds[e].1, s);
            let tol = 1e-7 * (1.0 + drops[e].abs());
            assert!(first >= -tol && second >= -tol, "edge {e}: slacks {first:e}, {second:e}");
            assert!(s * p.phi[e] >= -tol);
        }
    }
}

#[test]
fn more_compression_never_raises_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..CASES {
        let (net, sc) = random_throughput_instance(&mut rng, 6, &MIXED_ALPHAS);
        let with = solve_micp(&net, &sc.with_compression(true), &BnbSettings::default()).unwrap();
        let without = solve_micp(&net, &sc.with_compression(false), &BnbSettings::default()).unwrap();
        if with.status == MicpStatus::Optimal && without.status == MicpStatus::Optimal {
            assert!(with.lower_bound <= without.lower_bound + 1e-6);
        }
    }
}

#[test]
fn seeding_the_incumbent_keeps_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..10 {
        let (net, sc) = random_throughput_instance(&mut rng, 6, &MIXED_ALPHAS);
        let Ok(upper) = solve_throughput_energy(&net, &sc, &EnergySettings::default()) else {
            continue;
        };
        if !upper.feasible {
            continue;
        }
        let plain = solve_micp(&net, &sc, &BnbSettings::default()).unwrap();
        let seeded = solve_micp(
            &net,
            &sc,
            &BnbSettings {
                seed_upper: Some(upper.objective),
                ..BnbSettings::default()
            },
        )
        .unwrap();
        assert!((plain.lower_bound - seeded.lower_bound).abs() <= 1e-5 * (1.0 + plain.lower_bound.abs()));
    }
}

#[test]
fn two_node_gas_matches_the_closed_form() {
    for (p_source, p_min) in [(60.0, 30.0), (5.0, 1.0)] {
        let (net, sc) = two_node_gas(p_source, p_min);
        let exact = -(p_source * p_source - p_min * p_min).sqrt();
        let upper = solve_throughput_energy(&net, &sc, &EnergySettings::default()).unwrap();
        let lower = solve_micp(&net, &sc, &BnbSettings::default()).unwrap();
        assert!(upper.feasible);
        assert!((upper.objective - exact).abs() <= 1e-6 * exact.abs(), "{} vs {exact}", upper.objective);
        assert!((lower.lower_bound - exact).abs() <= 1e-6 * exact.abs(), "{} vs {exact}", lower.lower_bound);
    }
}

#[test]
fn certify_rejects_points_outside_the_boxes() {
    let (net, sc) = two_node_gas(60.0, 30.0);
    // more than the pipe can carry above the pressure floor
    let x = dfn::Injections::from_free(vec![-60.0]);
    let sol = certify(&net, &sc, &x, &[0.0], &EnergySettings::default()).unwrap();
    assert!(!sol.feasible);
    assert!(sol.max_violation > 0.0);
}
