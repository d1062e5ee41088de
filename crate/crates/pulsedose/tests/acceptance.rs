//! End-to-end acceptance gate: one test per headline requirement, each
//! printing a PASS line with the checked values (visible with
//! `cargo test -- --nocapture`).

use approx::assert_relative_eq;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use pulsedose::bounds::{coarse_bounds, iterate_bounds};
use pulsedose::design::{
    deadbeat_f_slope, paper_table_controller, paracetamol_setup, phi_star_slope, solve_corridor,
    synthesized_case_controller, Corridor, PaperCase,
};
use pulsedose::kinetics::{flow, hill, PlantParams};
use pulsedose::modulation::{Controller, FeedbackClass, SatAffineFn};
use pulsedose::retmap::{
    basin_estimate, contraction_certificate, q_map, q_prime, superexp_alpha, ContractionOutcome,
};
use pulsedose::sim::{simulate_closed, simulate_openloop, SimConfig, StartMode};

fn paper_case_controller(case: PaperCase) -> (PlantParams, Controller) {
    let (plant, pd, corridor, clamps) = paracetamol_setup();
    let c = paper_table_controller(case, &corridor, &plant, &pd, &clamps).unwrap();
    (plant, c)
}

fn bolus_sim(plant: PlantParams, c: Controller, horizon_h: f64) -> pulsedose::sim::SimTrace {
    simulate_closed(&SimConfig {
        plant,
        controller: c,
        initial_x: 0.0,
        initial_dose_mg: 2000.0,
        horizon_h,
        sample_step_h: 0.005,
        start_mode: StartMode::EventTriggered,
    })
    .unwrap()
}

#[test]
fn criterion_01_corridor_design() {
    let (plant, ..) = paracetamol_setup();
    let cycle = solve_corridor(&Corridor::new(10.0, 20.0).unwrap(), &plant).unwrap();
    assert_relative_eq!(cycle.t_period, 2.4755, epsilon = 1e-3);
    assert_relative_eq!(cycle.lambda, 10.0, epsilon = 1e-3);
    assert_relative_eq!(cycle.x_star, 10.0, epsilon = 1e-3);
    println!(
        "PASS criterion 1: corridor design T = {:.4} h, lambda = {:.4} mg/L, x* = {:.4} mg/L",
        cycle.t_period, cycle.lambda, cycle.x_star
    );
}

#[test]
fn criterion_02_pd_checkpoints() {
    let (_, pd, ..) = paracetamol_setup();
    for (x, y) in [(10.0, 7.4124), (20.0, 6.5510), (30.0, 6.1206)] {
        assert_relative_eq!(hill(x, &pd).unwrap(), y, epsilon = 1e-3);
    }
    println!(
        "PASS criterion 2: effect checkpoints y(10) = {:.4}, y(20) = {:.4}, y(30) = {:.4}",
        hill(10.0, &pd).unwrap(),
        hill(20.0, &pd).unwrap(),
        hill(30.0, &pd).unwrap()
    );
}

#[test]
fn criterion_03_deadbeat_slopes() {
    let (plant, ..) = paracetamol_setup();
    let cycle = solve_corridor(&Corridor::new(10.0, 20.0).unwrap(), &plant).unwrap();
    let slope = phi_star_slope(&cycle, &plant);
    assert_relative_eq!(slope, 0.1786, epsilon = 1e-4);
    let f_slope = deadbeat_f_slope(4.0, &cycle, &plant);
    assert_relative_eq!(f_slope, 21.4, epsilon = 1e-2);
    println!(
        "PASS criterion 3: deadbeat slope target {:.4} h/score, F'(x*) at slope 4 = {:.4}",
        slope, f_slope
    );
}

#[test]
fn criterion_04_coarse_bounds() {
    let (plant, _, _, clamps) = paracetamol_setup();
    let (lo, hi) = coarse_bounds(&clamps, &plant);
    assert_relative_eq!(lo, 0.5673, epsilon = 1e-3);
    assert_relative_eq!(hi, 194.987, epsilon = 1e-2);
    println!("PASS criterion 4: coarse ultimate bounds [{lo:.4}, {hi:.4}] mg/L");
}

#[test]
fn criterion_05_tightened_bounds() {
    for case in [PaperCase::Two, PaperCase::Three] {
        let (plant, c) = paper_case_controller(case);
        let rep = iterate_bounds(&c, &plant, 1e-9, 10_000).unwrap();
        assert_relative_eq!(rep.m_star, 10.0, epsilon = 1e-3);
        assert_relative_eq!(rep.tightened_hi, 20.0, epsilon = 1e-3);
        let steps = rep.steps_to_gap(1e-3).expect("bracket closes");
        assert!(steps <= 5, "bracket gap closed only after {steps} steps");
        println!(
            "PASS criterion 5 ({case:?}): tightened bounds [{:.4}, {:.4}] mg/L in {steps} steps",
            rep.m_star, rep.tightened_hi
        );
    }
}

#[test]
fn criterion_06_case_2_first_impulse_timing() {
    let (plant, c) = paper_case_controller(PaperCase::Two);
    let trace = bolus_sim(plant, c, 48.0);
    let t1 = trace.impulses[1].t_h;
    assert_relative_eq!(t1, 2.7085, epsilon = 2e-3);
    println!("PASS criterion 6: first feedback impulse at t1 = {t1:.4} h");
}

#[test]
fn criterion_07_case_1_deadbeat() {
    let (plant, c) = paper_case_controller(PaperCase::One);
    let trace = bolus_sim(plant, c, 48.0);
    for imp in &trace.impulses[1..] {
        assert!(
            (imp.x_pre - 10.0).abs() < 1e-6,
            "impulse {} arrived at x_pre = {}",
            imp.n,
            imp.x_pre
        );
    }
    let corridor = Corridor::new(10.0, 20.0).unwrap();
    let audit = pulsedose::sim::audit_corridor(&trace, &corridor).unwrap();
    let (inf, sup) = audit.steady_span.unwrap();
    assert_relative_eq!(inf, 10.0, epsilon = 1e-3);
    assert_relative_eq!(sup, 20.0, epsilon = 1e-3);
    println!(
        "PASS criterion 7: deadbeat lock-in, {} impulses at x* with steady span [{inf:.4}, {sup:.4}]",
        trace.impulses.len() - 1
    );
}

#[test]
fn criterion_08_open_loop_failure() {
    let (plant, pd, ..) = paracetamol_setup();
    let mut schedule = vec![(0.0, 2000.0)];
    for k in 1..=5 {
        schedule.push((6.0 * k as f64, 1000.0));
    }
    let trace = simulate_openloop(&plant, &pd, 0.0, &schedule, 36.0, 0.005).unwrap();
    let second = trace.impulses[1];
    assert_relative_eq!(second.x_pre, 8.876, epsilon = 0.01);
    assert_relative_eq!(second.x_post, 32.686, epsilon = 0.01);
    let after_first = trace.samples.iter().filter(|s| s.t_h > 6.0);
    let mut below = false;
    let mut above = false;
    for s in after_first {
        below |= s.x_mg_per_l < 10.0;
        above |= s.x_mg_per_l > 20.0;
    }
    assert!(below && above, "expected both under- and overdosing episodes");
    println!(
        "PASS criterion 8: fixed-program trough {:.3} / peak {:.3} mg/L, corridor violated both ways",
        second.x_pre, second.x_post
    );
}

#[test]
fn criterion_09_synthesized_deadbeat_certificates() {
    let (plant, pd, corridor, clamps) = paracetamol_setup();
    for case in [PaperCase::One, PaperCase::Two, PaperCase::Three] {
        let c = synthesized_case_controller(case, &corridor, &plant, &pd, &clamps).unwrap();
        let qp = q_prime(&c, &plant, 10.0).unwrap();
        assert!(qp.worst_abs() <= 1e-8, "{case:?}: Q'(x*) = {}", qp.left);
        let h = 1e-5;
        let fd = (q_map(&c, &plant, 10.0 + h).unwrap() - q_map(&c, &plant, 10.0 - h).unwrap())
            / (2.0 * h);
        assert!(
            (fd - qp.left).abs() <= 1e-6,
            "{case:?}: finite differences give Q'(x*) = {fd}"
        );
        let delta = basin_estimate(&c, &plant, 10.0, 10.0).expect("local basin");
        let cert = superexp_alpha(&c, &plant, 10.0, delta).unwrap();
        let d0 = cert.r / 2.0;
        let trace = simulate_closed(&SimConfig {
            plant,
            controller: c,
            initial_x: 10.0 + d0,
            initial_dose_mg: 0.0,
            horizon_h: 45.0,
            sample_step_h: 0.05,
            start_mode: StartMode::Immediate,
        })
        .unwrap();
        assert!(trace.impulses.len() >= 5);
        for (n, imp) in trace.impulses.iter().take(5).enumerate() {
            let bound = ((cert.alpha * d0).powi(1 << n) / cert.alpha).max(1e-12);
            assert!(
                (imp.x_pre - 10.0).abs() <= bound * (1.0 + 1e-9),
                "{case:?} n = {n}: |x - x*| = {} above {bound}",
                (imp.x_pre - 10.0).abs()
            );
        }
        println!(
            "PASS criterion 9 ({case:?}): Q'(x*) = {:.2e}, alpha = {:.4}, r = {:.4}",
            qp.left, cert.alpha, cert.r
        );
    }
}

#[test]
fn criterion_10_property_suite() {
    let (plant, pd, corridor, clamps) = paracetamol_setup();

    // Flow semigroup on a deterministic grid.
    for i in 0..20 {
        let x0 = 10.0 * i as f64;
        for (t1, t2) in [(0.5, 1.5), (3.0, 0.25), (8.0, 8.0)] {
            let two_step = flow(flow(x0, t1, &plant).unwrap(), t2, &plant).unwrap();
            let one_step = flow(x0, t1 + t2, &plant).unwrap();
            assert!((two_step - one_step).abs() <= 1e-12 * one_step.max(1.0));
        }
    }

    // x - Q(x) increasing and Q' <= e^(a Φ1) for the negative-feedback
    // published designs, on a 10^4-point grid.
    for case in [PaperCase::Two, PaperCase::Three] {
        let c = paper_table_controller(case, &corridor, &plant, &pd, &clamps).unwrap();
        let bound = (plant.a * c.phi_bar.lo).exp();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let x = 250.0 * i as f64 / 10_000.0;
            let g = x - q_map(&c, &plant, x).unwrap();
            assert!(g > prev, "x - Q(x) must increase");
            prev = g;
            let qp = q_prime(&c, &plant, x).unwrap();
            assert!(qp.left <= bound + 1e-12 && qp.right <= bound + 1e-12);
        }
    }

    // Geometric decay with the certified ratio across 100 random
    // negative-feedback controllers.
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let y_star = hill(10.0, &pd).unwrap();
    let cycle = solve_corridor(&corridor, &plant).unwrap();
    let (f_lo, f_hi) = clamps.f_bounds_conc(&plant);
    let mut certified = 0;
    for _ in 0..100 {
        let k2 = -rng.gen_range(0.0..1.5);
        let k4 = rng.gen_range(0.0..5.0);
        let c = Controller::new(
            SatAffineFn::new(k2, cycle.t_period - k2 * y_star, 1.0, 8.0).unwrap(),
            SatAffineFn::new(k4, 10.0 - k4 * y_star, f_lo, f_hi).unwrap(),
            pd,
        );
        assert_eq!(c.classify_feedback(0.0, 400.0, 2001), FeedbackClass::NegativeFeedback);
        let q = match contraction_certificate(&c, &plant, 0.0, 400.0, 2000) {
            ContractionOutcome::Certified { q } => q,
            ContractionOutcome::Refused { .. } => continue,
        };
        certified += 1;
        let trace = bolus_sim(plant, c, 100.0);
        let errs: Vec<f64> =
            trace.impulses[1..].iter().map(|i| (i.x_pre - 10.0).abs()).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= q * w[0] + 1e-9, "decay ratio exceeded: {} -> {}", w[0], w[1]);
        }
        // Monotone bracketing of the bounding sequences.
        let rep = iterate_bounds(&c, &plant, 1e-9, 10_000).unwrap();
        for w in rep.sequences.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 <= w[0].1 && w[1].1 >= w[1].0);
        }
    }
    assert!(certified >= 50, "only {certified}/100 random designs certified");
    println!("PASS criterion 10: property suite, {certified}/100 random designs certified");
}
