//! validate -> classify -> bounds -> integrate -> certify, and the JSON report.

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::analysis::bounds::{Separator, CONTRACTION_CAP, CONTRACTION_ZERO_TOL};
use crate::analysis::certify::{initial_side, CertifyOptions};
use crate::analysis::{
    align_lower, align_upper, certify_run, classify, contraction_iteration, monotone_iteration, permanence_bounds,
    BoundSequences, Caveat, CertificationReport, CertificationStatus, Classification, ContractionSequence, Fate,
    PermanenceBox, RelationClass,
};
use crate::config::RunConfig;
use crate::dynamics::{A5Report, SystemSpec, ValidationOptions, ValidationReport};
use crate::error::{Error, Result};
use crate::functions::DEFAULT_GRID;
use crate::integrator::{integrate, IntegratorOptions, RunOutcome, Trajectory};

pub const SCHEMA: u32 = 1;
pub const A5_GRID: usize = 2000;
pub const MONOTONE_MAX_STEPS: usize = 500;
pub const MONOTONE_TOL: f64 = 1e-8;
pub const CONTRACTION_MAX_STEPS: usize = 10_000;

const T_SAMPLES: usize = 257;
const INIT_SAMPLES: usize = 1001;
/// How far past the default interval an above-everywhere scan is pushed.
const WIDEN_LIMIT: f64 = 1e6;

pub const CONVENTIONS: &[&str] = &[
    "f1^-1(x) is 0 below the range of f1 and +inf above it",
    "the relation scan samples delta = f2 - f1^-1 on a logarithmic grid over [classify_tol, x_max]",
    "monotonicity and positivity of f1, f2, G1, G2 are checked on a uniform grid over [0, x_max]",
    "lags, kernel masses and rates are checked on a uniform grid over [0, horizon]; boundedness of r_i beyond it is assumed",
    "the (a5) check is a heuristic: the tail integral of r_i over [horizon/2, horizon] must exceed 0.1",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificates {
    Monotone { sequences: BoundSequences },
    Contraction { sequence: ContractionSequence },
    None { reason: String },
    Failed { error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveNumerics {
    pub dt: f64,
    pub horizon: f64,
    pub x_max: f64,
    pub quad_panels: usize,
    pub alpha: f64,
    pub slack: f64,
    pub classify_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub analysis_ms: f64,
    pub integration_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub command: &'static str,
    pub classification: Classification,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub equilibrium: Option<(f64, f64)>,
    pub fate: Fate,
    pub certificates: Certificates,
    pub permanence_box: Option<PermanenceBox>,
    pub permanence_box_note: Option<String>,
    pub outcome: Option<RunOutcome>,
    pub certification: Option<CertificationReport>,
    pub caveats: Vec<Caveat>,
    pub a5: A5Report,
    pub validation: ValidationReport,
    pub numerics: EffectiveNumerics,
    pub conventions: &'static [&'static str],
    pub timing: Timing,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// 4 for an unexplained disagreement between prediction and run, else 0.
    pub fn exit_code(&self) -> i32 {
        match self.certification {
            Some(CertificationReport {
                status: CertificationStatus::Mismatch,
                ..
            }) => 4,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    Classify,
    Bounds,
    Integrate,
    Certify,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Validate => "validate",
            Stage::Classify => "classify",
            Stage::Bounds => "bounds",
            Stage::Integrate => "integrate",
            Stage::Certify => "certify",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    /// 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        if self.source.is_validation() {
            2
        } else {
            3
        }
    }
}

trait At<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> At<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Default working interval and sampling used to validate `spec`.
pub fn validation_options(cfg: &RunConfig, spec: &SystemSpec) -> Result<ValidationOptions> {
    let horizon = cfg.numerics.horizon;
    let floor = spec
        .history_floor(horizon, T_SAMPLES)
        .map_err(|e| Error::validation("system.kernel", e.to_string()))?;
    let (_, sup_phi) = spec
        .phi
        .sampled_range(floor, INIT_SAMPLES)
        .map_err(|e| Error::validation("system.phi", e.to_string()))?;
    let (_, sup_psi) = spec
        .psi
        .sampled_range(floor, INIT_SAMPLES)
        .map_err(|e| Error::validation("system.psi", e.to_string()))?;
    let x_max = cfg
        .numerics
        .x_max
        .unwrap_or_else(|| 10.0 * sup_phi.max(sup_psi).max(1.0));
    Ok(ValidationOptions {
        x_max,
        n_grid: DEFAULT_GRID,
        horizon,
        t_samples: T_SAMPLES,
        max_lag: if cfg.system.attest_unbounded_delay {
            None
        } else {
            Some(cfg.numerics.max_lag)
        },
    })
}

struct Analysis {
    spec: SystemSpec,
    validation: ValidationReport,
    classification: Classification,
    fate: Fate,
    a5: A5Report,
    permanence_box: Option<PermanenceBox>,
    permanence_box_note: Option<String>,
    certificates: Certificates,
    numerics: EffectiveNumerics,
}

fn analyze(cfg: &RunConfig) -> std::result::Result<Analysis, StageError> {
    let mut spec = cfg.build_spec().at(Stage::Validate)?;
    let mut vopts = validation_options(cfg, &spec).at(Stage::Validate)?;
    let mut validation = spec.validate(&vopts).at(Stage::Validate)?;
    let n = &cfg.numerics;
    let mut classification = classify(&spec.f1, &spec.f2, vopts.x_max, n.classify_tol).at(Stage::Classify)?;
    if cfg.numerics.x_max.is_none() {
        let base = vopts.x_max;
        while matches!(classification.relation, RelationClass::AboveEverywhere) && vopts.x_max < WIDEN_LIMIT * base {
            let mut wide = vopts;
            wide.x_max *= 10.0;
            let mut trial = spec.clone();
            let Ok(report) = trial.validate(&wide) else { break };
            let Ok(cls) = classify(&trial.f1, &trial.f2, wide.x_max, n.classify_tol) else {
                break;
            };
            (spec, vopts, validation, classification) = (trial, wide, report, cls);
        }
        if let Some(k) = classification.k() {
            if k > 0.1 * vopts.x_max {
                vopts.x_max = 10.0 * k;
                validation = spec.validate(&vopts).at(Stage::Validate)?;
                classification = classify(&spec.f1, &spec.f2, vopts.x_max, n.classify_tol).at(Stage::Classify)?;
            }
        }
    }
    let (f1, f2) = (spec.f1.clone(), spec.f2.clone());
    let x_max = vopts.x_max;

    let a5 = spec.check_a5(n.horizon, A5_GRID).at(Stage::Validate)?;
    if !a5.holds() {
        classification.add_caveat(Caveat::A5HeuristicFailed);
    }

    let [(inf1, sup1), (inf2, sup2)] = validation.initial_range;
    let mut fate = classification.fate.clone();
    if let Fate::Bistable { x, y, .. } = fate {
        if initial_side(validation.initial_range, x, y).is_none() {
            fate = Fate::Inconclusive {
                reason: "initial data lies on both sides of the tangency point".into(),
            };
        }
    }

    let mut permanence_box = None;
    let mut permanence_box_note = None;
    let mut certificates = Certificates::None {
        reason: "no certificate for this fate".into(),
    };
    match classification.fate {
        Fate::ToEquilibrium { x: k, y: f2k } => {
            if inf1 > 0.0 && inf2 > 0.0 {
                match permanence_bounds(&f1, &f2, k, (inf1, inf2), (sup1, sup2), n.slack) {
                    Ok(b) => permanence_box = Some(b),
                    Err(e) => permanence_box_note = Some(e.to_string()),
                }
            } else {
                permanence_box_note = Some("initial data touches zero; no positive lower corner".into());
            }
            let (lo, hi) = match &permanence_box {
                Some(b) => (b.lower(), b.upper()),
                None => (
                    (0.5 * k, f2.eval(0.5 * k).map_err(Error::from).at(Stage::Bounds)?),
                    (2.0 * k, 2.0 * f2k),
                ),
            };
            certificates = match monotone_certificate(&f1, &f2, k, n.alpha, lo, hi, x_max) {
                Ok(seq) => Certificates::Monotone { sequences: seq },
                Err(e) => Certificates::Failed { error: e.to_string() },
            };
        }
        Fate::ToZero | Fate::ToInfinity => {
            let start = (positive_or_one(sup1), positive_or_one(sup2));
            certificates = match contraction_iteration(
                &f1,
                &f2,
                start,
                CONTRACTION_MAX_STEPS,
                CONTRACTION_ZERO_TOL,
                CONTRACTION_CAP,
            ) {
                Ok(seq) => Certificates::Contraction { sequence: seq },
                Err(e) => Certificates::Failed { error: e.to_string() },
            };
        }
        _ => {}
    }

    let dt =
        n.dt.unwrap_or_else(|| IntegratorOptions::default_dt(validation.min_delay_span));
    Ok(Analysis {
        numerics: EffectiveNumerics {
            dt,
            horizon: n.horizon,
            x_max,
            quad_panels: n.quad_panels,
            alpha: n.alpha,
            slack: n.slack,
            classify_tol: n.classify_tol,
        },
        spec,
        validation,
        classification,
        fate,
        a5,
        permanence_box,
        permanence_box_note,
        certificates,
    })
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        1.0
    }
}

/// Bound sequences started from the corners `lo`, `hi` pulled onto the separator.
pub fn monotone_certificate(
    f1: &crate::functions::ProductionFunction,
    f2: &crate::functions::ProductionFunction,
    k: f64,
    alpha: f64,
    lo: (f64, f64),
    hi: (f64, f64),
    bracket_hi: f64,
) -> Result<BoundSequences> {
    let g = Separator::fitted_below(f1, f2, alpha, lo.1, bracket_hi)?;
    let (a0, b0) = align_lower(&g, lo.0, lo.1)?;
    let (big_a0, big_b0) = align_upper(&g, hi.0, hi.1)?;
    monotone_iteration(
        f1,
        f2,
        k,
        &g,
        (a0, b0, big_a0, big_b0),
        MONOTONE_MAX_STEPS,
        MONOTONE_TOL,
    )
}

fn report(
    command: &'static str,
    a: Analysis,
    outcome: Option<RunOutcome>,
    certification: Option<CertificationReport>,
    timing: Timing,
) -> Report {
    let eq = match a.classification.fate {
        Fate::ToEquilibrium { x, y } | Fate::Bistable { x, y, .. } => Some((x, y)),
        _ => None,
    };
    Report {
        schema: SCHEMA,
        command,
        k: a.classification.k(),
        equilibrium: eq,
        fate: a.fate,
        caveats: a.classification.caveats.clone(),
        classification: a.classification,
        certificates: a.certificates,
        permanence_box: a.permanence_box,
        permanence_box_note: a.permanence_box_note,
        outcome,
        certification,
        a5: a.a5,
        validation: a.validation,
        numerics: a.numerics,
        conventions: CONVENTIONS,
        timing,
    }
}

// wasm32-unknown-unknown has no clock; timings read as zero there.
#[cfg(not(target_arch = "wasm32"))]
fn now() -> Option<Instant> {
    Some(Instant::now())
}

#[cfg(target_arch = "wasm32")]
fn now() -> Option<Instant> {
    None
}

fn ms(since: Option<Instant>) -> f64 {
    since.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
}

/// Analysis only, no integration.
pub fn classify_config(cfg: &RunConfig) -> std::result::Result<Report, StageError> {
    let start = now();
    let a = analyze(cfg)?;
    let t = ms(start);
    Ok(report(
        "classify",
        a,
        None,
        None,
        Timing {
            analysis_ms: t,
            integration_ms: 0.0,
            total_ms: t,
        },
    ))
}

pub struct RunResult {
    pub report: Report,
    pub trajectory: Trajectory,
}

pub fn run_config(cfg: &RunConfig) -> std::result::Result<RunResult, StageError> {
    let start = now();
    let a = analyze(cfg)?;
    let analysis_ms = ms(start);

    let t_int = now();
    let opts = IntegratorOptions::new(a.numerics.dt, a.numerics.horizon);
    let (traj, outcome) = integrate(&a.spec, &opts).at(Stage::Integrate)?;
    let integration_ms = ms(t_int);

    let box_from = a
        .spec
        .history_exit_time(a.numerics.horizon, T_SAMPLES)
        .at(Stage::Certify)?;
    let copts = CertifyOptions {
        fate_tol: cfg.numerics.fate_tol,
        ..CertifyOptions::default()
    };
    let cert = certify_run(
        &traj,
        &outcome,
        &a.classification,
        a.permanence_box.as_ref(),
        box_from,
        a.validation.initial_range,
        &copts,
    );
    let timing = Timing {
        analysis_ms,
        integration_ms,
        total_ms: ms(start),
    };
    Ok(RunResult {
        report: report("run", a, Some(outcome), Some(cert), timing),
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::CheckResult;
    use crate::integrator::RunStatus;
    use crate::presets::preset_config;

    #[test]
    fn converging_preset_certifies() {
        let cfg = preset_config("example2a", &[("horizon".into(), 30.0)]).unwrap();
        let r = run_config(&cfg).unwrap();
        let rep = &r.report;
        assert_eq!(rep.fate.name(), "ToEquilibrium");
        assert!(matches!(rep.certificates, Certificates::Monotone { ref sequences } if sequences.converged));
        assert!(rep.permanence_box.is_some());
        assert_eq!(
            rep.certification.as_ref().unwrap().status,
            CertificationStatus::Pass,
            "{:?}",
            rep.certification
        );
        assert_eq!(rep.exit_code(), 0);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["certification"]["status"], "pass");
    }

    #[test]
    fn blow_up_preset_reports_escape() {
        let mut cfg = preset_config("example1", &[]).unwrap();
        cfg.numerics.dt = Some(1e-3);
        let r = run_config(&cfg).unwrap();
        assert_eq!(r.report.fate, Fate::ToInfinity);
        assert!(matches!(r.report.outcome.unwrap().status, RunStatus::BlowUpAt { .. }));
        let cert = r.report.certification.unwrap();
        assert_eq!(cert.check("fate").unwrap().result, CheckResult::Pass);
    }

    #[test]
    fn classify_skips_integration() {
        let cfg = preset_config("example4", &[]).unwrap();
        let rep = classify_config(&cfg).unwrap();
        assert_eq!(rep.fate, Fate::ToZero);
        assert!(rep.outcome.is_none());
        assert!(matches!(rep.certificates, Certificates::Contraction { .. }));
    }

    #[test]
    fn errors_carry_their_stage() {
        let mut cfg = preset_config("example2", &[]).unwrap();
        cfg.system.f1 = "abs(x-1)".into();
        let e = run_config(&cfg).err().unwrap();
        assert_eq!(e.stage, Stage::Validate);
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().starts_with("validate: system.f1"), "{e}");

        // A step far beyond the delay scale drives y negative under sqrt.
        let mut cfg = preset_config("example5", &[("phi".into(), 8.0), ("psi".into(), 8.0)]).unwrap();
        cfg.numerics.dt = Some(2.5);
        let e = run_config(&cfg).err().unwrap();
        assert_eq!((e.stage, e.exit_code()), (Stage::Integrate, 3), "{e}");
    }

    #[test]
    fn large_equilibria_widen_the_scan() {
        // K = 40 lies beyond the default interval 10 * max(sup, 1) = 10.
        let mut cfg = preset_config("example2", &[]).unwrap();
        cfg.system.f1 = "20+x/2".into();
        cfg.system.f2 = "20+x/2".into();
        let rep = classify_config(&cfg).unwrap();
        assert!((rep.k.unwrap() - 40.0).abs() < 1e-7);
        assert!(rep.numerics.x_max > 399.0, "{:?}", rep.numerics);
    }
}
