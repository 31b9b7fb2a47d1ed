//! Cross-check of a simulated run against its predicted fate.

use serde::Serialize;

use super::bounds::PermanenceBox;
use super::relation::{Classification, Fate, Limit};
use crate::integrator::{detect_nonoscillation_violation, first_box_exit, RunOutcome, RunStatus, Side, Trajectory};

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    /// Distance to the predicted limit accepted at the end of the run.
    pub fate_tol: f64,
    /// Norm that counts as escape when the run did not blow up outright.
    pub divergence_level: f64,
    pub box_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            fate_tol: 1e-3,
            divergence_level: 1e6,
            box_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckResult {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub result: CheckResult,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificationStatus {
    Pass,
    MismatchExplained,
    Mismatch,
}

impl CertificationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificationStatus::Pass => "pass",
            CertificationStatus::MismatchExplained => "mismatch-explained",
            CertificationStatus::Mismatch => "mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub status: CertificationStatus,
    pub checks: Vec<Check>,
}

impl CertificationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Which side of `(k, f2k)` the initial data lies on, if it is one-sided.
pub fn initial_side(init_range: [(f64, f64); 2], k: f64, f2k: f64) -> Option<Side> {
    let [(lo1, hi1), (lo2, hi2)] = init_range;
    if lo1 >= k && lo2 >= f2k {
        Some(Side::Above)
    } else if hi1 <= k && hi2 <= f2k {
        Some(Side::Below)
    } else {
        None
    }
}

fn check(name: &'static str, ok: bool, detail: String) -> Check {
    Check {
        name,
        result: if ok { CheckResult::Pass } else { CheckResult::Fail },
        detail,
    }
}

fn skipped(name: &'static str, detail: impl Into<String>) -> Check {
    Check {
        name,
        result: CheckResult::Skipped,
        detail: detail.into(),
    }
}

fn limit_check(limit: Limit, eq: Option<(f64, f64)>, outcome: &RunOutcome, opts: &CertifyOptions) -> Check {
    let (x, y) = outcome.final_state;
    let norm = x.abs().max(y.abs());
    match limit {
        Limit::Equilibrium => {
            let (k, f2k) = eq.expect("equilibrium limit needs a point");
            let dist = (x - k).abs().max((y - f2k).abs());
            check(
                "fate",
                dist <= opts.fate_tol && !matches!(outcome.status, RunStatus::BlowUpAt { .. }),
                format!(
                    "terminal state ({x}, {y}) is {dist:e} from ({k}, {f2k}) at t = {}",
                    outcome.final_time
                ),
            )
        }
        Limit::Zero => check(
            "fate",
            matches!(outcome.status, RunStatus::ExtinctBy { .. }) || norm <= opts.fate_tol,
            format!("terminal norm {norm:e} at t = {}", outcome.final_time),
        ),
        Limit::Infinity => check(
            "fate",
            matches!(outcome.status, RunStatus::BlowUpAt { .. }) || norm >= opts.divergence_level,
            format!(
                "terminal norm {norm:e} at t = {} ({:?})",
                outcome.final_time, outcome.status
            ),
        ),
    }
}

/// Runs the box, fate and nonoscillation checks.
///
/// `box_from` is the first time from which every kernel support lies in `t >= 0`;
/// `init_range` holds the sampled `(inf, sup)` of `phi` and `psi`.
pub fn certify_run(
    traj: &Trajectory,
    outcome: &RunOutcome,
    cls: &Classification,
    bx: Option<&PermanenceBox>,
    box_from: f64,
    init_range: [(f64, f64); 2],
    opts: &CertifyOptions,
) -> CertificationReport {
    let mut checks = Vec::new();

    checks.push(match bx {
        None => skipped("permanence-box", "no box for this classification"),
        Some(b) => match first_box_exit(traj, b.lower(), b.upper(), box_from, opts.box_tol) {
            None => check(
                "permanence-box",
                true,
                format!(
                    "stays in [{}, {}] x [{}, {}] from t = {box_from}",
                    b.m1, b.big_m1, b.m2, b.big_m2
                ),
            ),
            Some((t, x, y)) => check(
                "permanence-box",
                false,
                format!("leaves the box at t = {t}: ({x}, {y})"),
            ),
        },
    });

    let eq = match cls.fate {
        Fate::ToEquilibrium { x, y } | Fate::Bistable { x, y, .. } => Some((x, y)),
        _ => None,
    };
    checks.push(match &cls.fate {
        Fate::ToEquilibrium { .. } => limit_check(Limit::Equilibrium, eq, outcome, opts),
        Fate::ToZero => limit_check(Limit::Zero, None, outcome, opts),
        Fate::ToInfinity => limit_check(Limit::Infinity, None, outcome, opts),
        Fate::Bistable { x, y, above, below } => match initial_side(init_range, *x, *y) {
            Some(Side::Above)
                if init_range[0].0 == *x && init_range[1].0 == *y && init_range[0].1 == *x && init_range[1].1 == *y =>
            {
                limit_check(Limit::Equilibrium, eq, outcome, opts)
            }
            Some(Side::Above) => limit_check(*above, eq, outcome, opts),
            Some(Side::Below) => limit_check(*below, eq, outcome, opts),
            None => skipped(
                "fate",
                "inconclusive: initial data lies on both sides of the tangency point",
            ),
        },
        Fate::Inconclusive { reason } => skipped("fate", format!("inconclusive: {reason}")),
    });

    checks.push(match eq {
        None => skipped("nonoscillation", "no positive equilibrium"),
        Some((k, f2k)) => match initial_side(init_range, k, f2k) {
            None => skipped("nonoscillation", "initial data is not one-sided"),
            Some(side) => match detect_nonoscillation_violation(traj, k, f2k, side) {
                None => check(
                    "nonoscillation",
                    true,
                    format!("stays {side:?} ({k}, {f2k})").to_lowercase(),
                ),
                Some(t) => check("nonoscillation", false, format!("crosses ({k}, {f2k}) at t = {t}")),
            },
        },
    });

    let failed = checks.iter().any(|c| c.result == CheckResult::Fail);
    let status = match (failed, cls.caveats.is_empty()) {
        (false, _) => CertificationStatus::Pass,
        (true, false) => CertificationStatus::MismatchExplained,
        (true, true) => CertificationStatus::Mismatch,
    };
    CertificationReport { status, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{classify, permanence_bounds, Caveat, CLASSIFY_TOL};
    use crate::dynamics::{InitialFunction, SystemSpec};
    use crate::expr::Expression;
    use crate::functions::ProductionFunction;
    use crate::integrator::{integrate, IntegratorOptions};
    use crate::kernels::DelayKernel;

    fn setup(rate: &str, lag: &str, init: f64) -> (SystemSpec, Classification) {
        let f = ProductionFunction::parse("1+x/2").unwrap();
        let kern = |l: &str| {
            if l == "t" {
                DelayKernel::point_mass(l).unwrap()
            } else {
                DelayKernel::uniform(l).unwrap()
            }
        };
        let r = Expression::parse_in(rate, "t").unwrap();
        let spec = SystemSpec::new(
            f.clone(),
            f.clone(),
            kern(lag),
            kern(lag),
            InitialFunction::constant(init),
            InitialFunction::constant(init),
        )
        .with_rates(r.clone(), r);
        let cls = classify(&f, &f, 50.0, CLASSIFY_TOL).unwrap();
        (spec, cls)
    }

    #[test]
    fn converging_run_passes() {
        let (spec, cls) = setup("2+sin(t)", "t-1", 5.0);
        let f = &spec.f1;
        let bx = permanence_bounds(f, f, 2.0, (5.0, 5.0), (5.0, 5.0), 1e-3).unwrap();
        let (traj, out) = integrate(&spec, &IntegratorOptions::new(1e-2, 60.0)).unwrap();
        let rep = certify_run(
            &traj,
            &out,
            &cls,
            Some(&bx),
            1.0,
            [(5.0, 5.0); 2],
            &CertifyOptions::default(),
        );
        assert_eq!(rep.status, CertificationStatus::Pass, "{rep:?}");
    }

    #[test]
    fn fading_rate_is_a_mismatch_unless_explained() {
        let (spec, mut cls) = setup("2/(exp(2*t)+0.5)", "t", 5.0);
        let (traj, out) = integrate(&spec, &IntegratorOptions::new(1e-3, 30.0)).unwrap();
        let rep = certify_run(
            &traj,
            &out,
            &cls,
            None,
            0.0,
            [(5.0, 5.0); 2],
            &CertifyOptions::default(),
        );
        assert_eq!(rep.status, CertificationStatus::Mismatch);
        assert_eq!(rep.check("fate").unwrap().result, CheckResult::Fail);
        cls.add_caveat(Caveat::A5HeuristicFailed);
        let rep = certify_run(
            &traj,
            &out,
            &cls,
            None,
            0.0,
            [(5.0, 5.0); 2],
            &CertifyOptions::default(),
        );
        assert_eq!(rep.status, CertificationStatus::MismatchExplained);
    }

    #[test]
    fn equilibrium_start_passes_trivially() {
        let (spec, cls) = setup("1", "t-1", 2.0);
        let (traj, out) = integrate(&spec, &IntegratorOptions::new(1e-2, 20.0)).unwrap();
        let rep = certify_run(
            &traj,
            &out,
            &cls,
            None,
            1.0,
            [(2.0, 2.0); 2],
            &CertifyOptions::default(),
        );
        assert_eq!(rep.status, CertificationStatus::Pass);
    }
}
