//! Affine production pairs have closed-form fates: with `f1 = p1 + q1 x` and
//! `f2 = p2 + q2 x`, the equilibrium is `(p1 + q1 p2) / (1 - q1 q2)` when
//! `q1 q2 < 1`, and there is none when `q1 q2 > 1`.

use coopdelay::analysis::{classify, Fate, CLASSIFY_TOL};
use coopdelay::config::RunConfig;
use coopdelay::functions::{ProductionFunction, DEFAULT_GRID};
use coopdelay::integrator::RunStatus;
use coopdelay::pipeline::run_config;
use proptest::prelude::*;

fn affine(p: f64, q: f64, x_max: f64) -> ProductionFunction {
    ProductionFunction::parse(&format!("{p:?}+{q:?}*x"))
        .unwrap()
        .certified(x_max, DEFAULT_GRID)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contracting_pairs_cross_at_the_closed_form(
        p1 in 0.1..5.0f64, p2 in 0.1..5.0f64, q1 in 0.05..2.0f64, r in 0.05..0.9f64,
    ) {
        let q2 = r / q1;
        let k = (p1 + q1 * p2) / (1.0 - q1 * q2);
        let x_max = 10.0 * k;
        let cls = classify(&affine(p1, q1, x_max), &affine(p2, q2, x_max), x_max, CLASSIFY_TOL).unwrap();
        match cls.fate {
            Fate::ToEquilibrium { x, y } => {
                prop_assert!((x - k).abs() <= 1e-7 * k, "K = {x}, expected {k}");
                prop_assert!((y - (p2 + q2 * k)).abs() <= 1e-7 * y);
            }
            other => prop_assert!(false, "expected an equilibrium, got {other:?}"),
        }
    }

    #[test]
    fn expanding_pairs_escape(
        p1 in 0.1..5.0f64, p2 in 0.1..5.0f64, q1 in 0.05..4.0f64, r in 1.2..4.0f64,
    ) {
        let q2 = r / q1;
        let x_max = 100.0;
        let cls = classify(&affine(p1, q1, x_max), &affine(p2, q2, x_max), x_max, CLASSIFY_TOL).unwrap();
        prop_assert_eq!(cls.fate, Fate::ToInfinity);
    }
}

#[test]
fn toml_config_runs_through_the_pipeline() {
    let cfg = RunConfig::from_toml_str(
        r#"
        [system]
        f1 = "1+x/4"
        f2 = "2+x/2"
        phi = "1+t/10"
        psi = "3"
        [system.kernel1]
        kind = "mixture"
        atoms = [{ lag = "t-0.5", weight = 0.5 }]
        density = { lag = "t-1", shape = "a" }
        [system.kernel2]
        kind = "uniform"
        lag = "t-2"
        [numerics]
        dt = 0.01
        horizon = 80.0
        "#,
    )
    .unwrap();
    // x = 1 + (2 + x/2)/4 = 3/2 + x/8  =>  x = 12/7.
    let k = 12.0 / 7.0;
    let res = run_config(&cfg).unwrap();
    let rep = &res.report;
    assert!((rep.k.unwrap() - k).abs() < 1e-8);
    match rep.outcome.unwrap().status {
        RunStatus::ConvergedTo { x, y } => {
            assert!((x - k).abs() < 1e-6 && (y - (2.0 + k / 2.0)).abs() < 1e-6, "({x}, {y})");
        }
        s => panic!("unexpected {s:?}"),
    }
    assert_eq!(rep.certification.as_ref().unwrap().status.as_str(), "pass");
    let (t, x, y) = res.trajectory.node(0);
    assert_eq!((t, x, y), (0.0, 1.0, 3.0));
}
