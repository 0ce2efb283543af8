//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion outside `EXPECTED_FAILURES` fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use weaktrace::circuit::{build_scenario, Scenario, ScenarioKind, NESTED_MID_CUT};
use weaktrace::ensemble::{precision_curve, run, EnsembleConfig};
use weaktrace::fit::power_law_fit;
use weaktrace::fringe::{dv_inequality_sweep, tag_inner_arms};
use weaktrace::hilbert::{Operator, Pauli, C64};
use weaktrace::interface;
use weaktrace::pointer::{dark_port_leak, lambda_sweep, log_space, mirror_recoil_fraction, GaussianPointer};
use weaktrace::weakvalue::{coarse_grained_weak_value, compound_weak_value, two_state_at_cut};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

/// The mean shift of a postselected Gaussian pointer is odd in λ, so its
/// deviation from λ·Re(O_w) starts at λ³ (and vanishes for P_A and P_B in
/// the nested interferometer). A λ² fit cannot succeed.
const EXPECTED_FAILURES: [&str; 1] = ["AC2"];

fn builtin(name: &str) -> Scenario {
    interface::load(name).expect("built-in scenario loads").scenario
}

fn fail_unless(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ac1() -> Check {
    let sc = builtin("nested");
    let mut detail = Vec::new();
    let mut ok = true;
    for (region, expected) in [(&["A"][..], 1.0), (&["B"][..], 0.5), (&["C"][..], -0.5), (&["B", "C"][..], 0.0)] {
        let w = coarse_grained_weak_value(region, &sc, "D2").map_err(|e| e.to_string())?.value;
        let err = (w - C64::new(expected, 0.0)).norm();
        ok &= err <= 1e-12;
        detail.push(format!("P_{}={:.3e}", region.concat(), err));
    }
    fail_unless(ok, format!("errors {}", detail.join(" ")))
}

/// Projector on one nested arm with the two-state pair at the mid cut.
fn nested_arm(arm: &str) -> (weaktrace::weakvalue::TwoStateVector, Operator) {
    let sc = builtin("nested");
    let tsv = two_state_at_cut(&sc, "D2", NESTED_MID_CUT).unwrap();
    let op = Operator::projector(sc.circuit.basis().clone(), &sc.circuit.segment_modes(arm).unwrap()).unwrap();
    (tsv, op)
}

fn ac2() -> Check {
    let pointer = GaussianPointer::new(0.0, 1.0).unwrap();
    let lambdas = log_space(1e-4, 1e-2, 10);
    let mut ok = true;
    let mut detail = Vec::new();
    for arm in ["A", "B", "C"] {
        let (tsv, op) = nested_arm(arm);
        let rows = lambda_sweep(&tsv.forward, &op, &tsv.backward, &pointer, &lambdas).map_err(|e| e.to_string())?;
        let dev: Vec<f64> = rows.iter().map(|r| (r.mean_shift - r.first_order_mean_shift).abs()).collect();
        match power_law_fit(&lambdas, &dev) {
            Ok(fit) => {
                ok &= (fit.exponent - 2.0).abs() <= 0.1;
                detail.push(format!("P_{arm} exponent {:.3}", fit.exponent));
            }
            Err(_) => {
                ok = false;
                let max = dev.iter().cloned().fold(0.0, f64::max);
                detail.push(format!("P_{arm} no fit (max deviation {max:.1e})"));
            }
        }
    }
    fail_unless(ok, format!("{} (want 2.0 +- 0.1)", detail.join(", ")))
}

fn ac3() -> Check {
    let pointer = GaussianPointer::new(0.0, 1.0).unwrap();
    let lambdas = log_space(1e-2, 1e-1, 10);
    let mut ok = true;
    let mut detail = Vec::new();
    // On P_A the postselected pointer is a single exact shift, equal to the
    // first-order state, so only the two-branch arms carry a residual.
    for arm in ["B", "C"] {
        let (tsv, op) = nested_arm(arm);
        let rows = lambda_sweep(&tsv.forward, &op, &tsv.backward, &pointer, &lambdas).map_err(|e| e.to_string())?;
        let res: Vec<f64> = rows.iter().map(|r| r.residual_norm).collect();
        let fit = power_law_fit(&lambdas, &res).map_err(|e| e.to_string())?;
        ok &= (fit.exponent - 2.0).abs() <= 0.1;
        detail.push(format!("P_{arm} exponent {:.3}", fit.exponent));
    }
    fail_unless(ok, detail.join(", "))
}

fn ac4() -> Check {
    let (_, op) = nested_arm("A");
    let cfg = EnsembleConfig {
        scenario: builtin("nested"),
        detector: "D2".into(),
        cut: NESTED_MID_CUT,
        operator: op,
        pointer: GaussianPointer::new(0.0, 1.0).unwrap(),
        lambda: 0.01,
        n_particles: 1_000_000,
        seed: 1,
    };
    let ns = [1_000, 10_000, 100_000, 1_000_000];
    let curve = precision_curve(&cfg, &ns).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let errs: Vec<f64> = curve.iter().map(|p| p.stderr.unwrap_or(f64::NAN)).collect();
    let fit = power_law_fit(&xs, &errs).map_err(|e| e.to_string())?;
    let big = curve.last().unwrap();
    let (est, se) = (big.estimate.unwrap_or(f64::NAN), big.stderr.unwrap_or(f64::NAN));
    let within = (est - 1.0).abs() <= 3.0 * se;
    let again = run(&cfg).map_err(|e| e.to_string())?;
    let deterministic = again.estimate == big.estimate && again.stderr == big.stderr;
    fail_unless(
        (fit.exponent + 0.5).abs() <= 0.05 && within && deterministic,
        format!(
            "stderr exponent {:.4}, estimate {est:.4} +- {se:.4} at N=1e6, deterministic {deterministic}",
            fit.exponent
        ),
    )
}

fn ac5() -> Check {
    let sc = builtin("dark_port_mz");
    let pointer = GaussianPointer::new(0.0, 1.0).unwrap();
    let leak = |l: f64| dark_port_leak(&sc, "dark", "A", &pointer, l).map_err(|e| e.to_string());
    let zero = leak(0.0)?;
    let mut positive = true;
    for l in log_space(1e-4, 1.0, 9) {
        positive &= leak(l)? > 0.0 && leak(-l)? > 0.0;
    }
    let ratio = leak(2e-2)? / leak(1e-2)?;
    fail_unless(
        zero == 0.0 && positive && (ratio - 4.0).abs() <= 0.4,
        format!("leak(0) = {zero:e}, positive {positive}, ratio {ratio:.4}"),
    )
}

fn ac6() -> Check {
    let f = mirror_recoil_fraction(1500e-9, 1e-3).map_err(|e| e.to_string())?;
    fail_unless((1e-33..=1e-32).contains(&f), format!("fraction {f:.4e}"))
}

fn ac7() -> Check {
    let sc = builtin("nested");
    let grid: Vec<f64> = (0..50).map(|i| PI * i as f64 / 49.0).collect();
    let reports = dv_inequality_sweep(&sc, &grid).map_err(|e| e.to_string())?;
    let worst_excess = reports.iter().map(|r| r.dv_sum() - 1.0).fold(f64::MIN, f64::max);
    let worst_gap = reports.iter().map(|r| (r.dv_sum() - 1.0).abs()).fold(0.0, f64::max);
    let monotone = reports.windows(2).all(|w| w[1].leak_probability >= w[0].leak_probability);
    let mut worst_bc: f64 = 0.0;
    for t in [0.0, 0.3, 1.0, PI / 2.0, 2.5, PI] {
        let tagged = tag_inner_arms(&sc, t, t).map_err(|e| e.to_string())?;
        let w = coarse_grained_weak_value(&["B", "C"], &tagged, "D2").map_err(|e| e.to_string())?;
        worst_bc = worst_bc.max(w.value.norm());
    }
    fail_unless(
        worst_excess <= 1e-10 && worst_gap <= 1e-10 && monotone && worst_bc <= 1e-10,
        format!(
            "max D2+V2-1 {worst_excess:.1e}, max |D2+V2-1| {worst_gap:.1e}, monotone {monotone}, equal-tag |P_BC| {worst_bc:.1e}"
        ),
    )
}

fn ac8() -> Check {
    let sc = builtin("cheshire_cat");
    let path = coarse_grained_weak_value(&["R"], &sc, "F").map_err(|e| e.to_string())?.value;
    let z = Operator::pauli(sc.circuit.basis().clone(), Pauli::Z);
    let spin = compound_weak_value(&z, &["R"], &sc, "F").map_err(|e| e.to_string())?.value;
    fail_unless(
        path.norm() <= 1e-12 && spin.norm() >= 0.5,
        format!("|P_R| {:.1e}, |sz P_R| {:.4}", path.norm(), spin.norm()),
    )
}

/// Ideal protocol on Alice's polarization qubit: rotate by π/2M per cycle;
/// mirrors ON remove the V component, OFF return it untouched.
fn salih_oracle(m: usize, on: bool) -> (f64, f64) {
    let theta = PI / (2 * m) as f64;
    let (mut h, mut v) = (1.0f64, 0.0f64);
    for _ in 0..m {
        (h, v) = (theta.cos() * h - theta.sin() * v, theta.sin() * h + theta.cos() * v);
        if on {
            v = 0.0;
        }
    }
    (h * h, v * v)
}

fn ac9() -> Check {
    let m = 3;
    let on = builtin("salih_single_outer");
    let off = build_scenario(ScenarioKind::SalihSingleOuter { inner_cycles: m, mirrors_on: false })
        .map_err(|e| e.to_string())?;
    let p_on = on.detector_probabilities().map_err(|e| e.to_string())?;
    let p_off = off.detector_probabilities().map_err(|e| e.to_string())?;
    let (ideal_d0, _) = salih_oracle(m, true);
    let (_, ideal_d1) = salih_oracle(m, false);
    let routed = p_on["D0"] >= ideal_d0 - 1e-12 && p_off["D1"] >= ideal_d1 - 1e-12;

    let basis = on.circuit.basis().clone();
    let properties = [
        Operator::identity(basis.clone()),
        Operator::pauli(basis.clone(), Pauli::X),
        Operator::pauli(basis.clone(), Pauli::Y),
        Operator::pauli(basis, Pauli::Z),
    ];
    let mut worst: f64 = 0.0;
    for seg in on.circuit.segments().iter().filter(|s| s.name.starts_with("bob_")) {
        for prop in &properties {
            let w = compound_weak_value(prop, &[seg.name.as_str()], &on, "D0").map_err(|e| e.to_string())?;
            worst = worst.max(w.value.norm());
        }
    }
    fail_unless(
        routed && worst <= 1e-10,
        format!(
            "P_on(D0) {:.6} (ideal {ideal_d0:.6}), P_off(D1) {:.6} (ideal {ideal_d1:.6}), max Bob weak value {worst:.1e}",
            p_on["D0"], p_off["D1"]
        ),
    )
}

fn suite<S: Strategy>(name: &str, strategy: S, check: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, check).map_err(|e| format!("{name}: {e}"))
}

fn ac10() -> Check {
    use common::*;
    let results = [
        suite("sum rule and linearity", arb_linearity_case(), |c| check_sum_rule_linearity(&c)),
        suite("resolution of identity", arb_operator_case(), |c| check_identity_resolution(&c)),
        suite("eigenstate consistency", (arb_operator_case(), 0usize..6), |(c, k)| check_eigenstate(&c, k)),
        suite("unitarity", arb_scenario(), |(sc, _)| check_unitarity(&sc)),
        suite("round-trip propagation", arb_scenario(), |(sc, cut)| check_round_trip(&sc, cut)),
        suite("parse-print round trip", arb_document(), |d| check_parse_print(&d)),
    ];
    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    fail_unless(
        failures.is_empty(),
        if failures.is_empty() {
            "6 suites x 100 cases".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("AC1", ac1, Duration::from_secs(1)),
        ("AC2", ac2, Duration::from_secs(5)),
        ("AC3", ac3, Duration::from_secs(5)),
        ("AC4", ac4, Duration::from_secs(60)),
        ("AC5", ac5, Duration::from_secs(2)),
        ("AC6", ac6, Duration::from_millis(1)),
        ("AC7", ac7, Duration::from_secs(2)),
        ("AC8", ac8, Duration::from_secs(1)),
        ("AC9", ac9, Duration::from_secs(2)),
        ("AC10", ac10, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    let mut unexpected = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) => (took <= budget, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
            if !EXPECTED_FAILURES.contains(&name) {
                unexpected += 1;
            }
        }
        println!(
            "{name} {} {detail} [{:.3} ms, budget {} ms]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64() * 1e3,
            budget.as_millis()
        );
    }
    println!(
        "{} of {} criteria passed, {} unexpected failures (expected: {})",
        criteria.len() - failed,
        criteria.len(),
        unexpected,
        EXPECTED_FAILURES.join(", ")
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
