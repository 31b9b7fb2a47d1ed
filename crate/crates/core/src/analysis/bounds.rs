//! Permanence box, monotone bound sequences and the contraction recursion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{make_separator, Preimage, ProductionFunction};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_SLACK: f64 = 1e-3;
pub const BOX_MARGIN: f64 = 1e-12;
pub const MAX_INWARD_STEPS: usize = 64;
pub const MAX_ALPHA_STEPS: usize = 64;

const ALIGN_TOL: f64 = 1e-10;

/// `g(x) = alpha f1^{-1}(x) + (1 - alpha) f2(x)`, the curve the bounds travel along.
#[derive(Debug, Clone)]
pub struct Separator {
    pub alpha: f64,
    g: ProductionFunction,
    bracket_hi: f64,
}

impl Separator {
    pub fn new(f1: &ProductionFunction, f2: &ProductionFunction, alpha: f64, bracket_hi: f64) -> Result<Self> {
        Ok(Separator {
            alpha,
            g: make_separator(f1, f2, alpha, bracket_hi)?,
            bracket_hi,
        })
    }

    /// Starts from `alpha` and moves it toward 1 until `g(0) < b`.
    pub fn fitted_below(
        f1: &ProductionFunction,
        f2: &ProductionFunction,
        alpha: f64,
        b: f64,
        bracket_hi: f64,
    ) -> Result<Self> {
        let mut alpha = alpha;
        for _ in 0..MAX_ALPHA_STEPS {
            let s = Separator::new(f1, f2, alpha, bracket_hi)?;
            if s.eval(0.0)? < b {
                return Ok(s);
            }
            alpha = 0.5 * (1.0 + alpha);
        }
        Err(Error::Construction(format!("no separator weight puts g(0) below {b}")))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.g.eval(x)?)
    }

    pub fn inv(&self, y: f64) -> Result<Preimage> {
        Ok(self.g.preimage(y, self.bracket_hi)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperCase {
    /// `f2(nu1) >= nu2`: keep `M1 = nu1`, place `M2` between the curves.
    FromNu1,
    /// `f1(nu2) >= nu1`: keep `M2 = nu2`, place `M1` between the curves.
    FromNu2,
    /// `(nu1, nu2)` already lies between the curves.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermanenceBox {
    pub m1: f64,
    pub m2: f64,
    #[serde(rename = "M1")]
    pub big_m1: f64,
    #[serde(rename = "M2")]
    pub big_m2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub upper_case: UpperCase,
    pub inward_steps: usize,
    pub slack: f64,
}

impl PermanenceBox {
    pub fn lower(&self) -> (f64, f64) {
        (self.m1, self.m2)
    }

    pub fn upper(&self) -> (f64, f64) {
        (self.big_m1, self.big_m2)
    }

    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.m1 - tol && x <= self.big_m1 + tol && y >= self.m2 - tol && y <= self.big_m2 + tol
    }

    /// Rechecks `f1(m2) > m1`, `f2(m1) > m2` and `f2(M1) < M2 < f1^{-1}(M1)` with `margin`.
    pub fn verify(&self, f1: &ProductionFunction, f2: &ProductionFunction, margin: f64) -> Result<Vec<String>> {
        let mut failed = Vec::new();
        if !(f1.eval(self.m2)? > self.m1 + margin) {
            failed.push(format!("f1(m2) > m1 fails at m = ({}, {})", self.m1, self.m2));
        }
        if !(f2.eval(self.m1)? > self.m2 + margin) {
            failed.push(format!("f2(m1) > m2 fails at m = ({}, {})", self.m1, self.m2));
        }
        if !(f2.eval(self.big_m1)? < self.big_m2 - margin) {
            failed.push(format!("f2(M1) < M2 fails at M = ({}, {})", self.big_m1, self.big_m2));
        }
        let inv = f1.preimage(self.big_m1, self.big_m1.max(1.0))?.extended();
        if !(self.big_m2 < inv - margin) {
            failed.push(format!(
                "M2 < f1^-1(M1) fails at M = ({}, {})",
                self.big_m1, self.big_m2
            ));
        }
        Ok(failed)
    }
}

fn midpoint_or_offset(lo: f64, hi: f64, slack: f64) -> f64 {
    if hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        lo * (1.0 + slack) + slack
    }
}

/// Constant bounds `[m1, M1] x [m2, M2]` for every solution with initial data
/// between `init_inf` and `init_sup`.
pub fn permanence_bounds(
    f1: &ProductionFunction,
    f2: &ProductionFunction,
    k: f64,
    init_inf: (f64, f64),
    init_sup: (f64, f64),
    slack: f64,
) -> Result<PermanenceBox> {
    let (mu1, mu2) = init_inf;
    if !(mu1 > 0.0 && mu2 > 0.0 && k > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "permanence bounds need positive infima and K (got {mu1}, {mu2}, {k})"
        )));
    }
    if !(slack > 0.0 && slack < 1.0) {
        return Err(Error::InvalidArgument(format!("slack must lie in (0, 1), got {slack}")));
    }
    let hi = k.max(init_sup.0).max(init_sup.1).max(1.0);
    let f2k = f2.eval(k)?;

    let mut cand1 = mu1.min(k);
    if let Preimage::Value(v) = f2.preimage(mu2, hi)? {
        cand1 = cand1.min(v);
    }
    let mut cand2 = mu2.min(f2k);
    if let Preimage::Value(v) = f1.preimage(mu1, hi)? {
        cand2 = cand2.min(v);
    }
    let (mut m1, mut m2) = ((1.0 - slack) * cand1, (1.0 - slack) * cand2);

    let lower_ok = |m1: f64, m2: f64| -> Result<bool> {
        Ok(m1 > 0.0 && m2 > 0.0 && f1.eval(m2)? > m1 + BOX_MARGIN && f2.eval(m1)? > m2 + BOX_MARGIN)
    };
    let mut inward_steps = 0;
    if !lower_ok(m1, m2)? {
        let g = Separator::fitted_below(f1, f2, DEFAULT_ALPHA, m2, hi)?;
        let mut a = match g.inv(m2)? {
            Preimage::Value(v) => m1.min(v),
            Preimage::BelowRange => 0.0,
            Preimage::AboveRange => m1,
        };
        loop {
            let b = g.eval(a)?;
            if lower_ok(a, b)? {
                m1 = a;
                m2 = b;
                break;
            }
            inward_steps += 1;
            if inward_steps > MAX_INWARD_STEPS {
                return Err(Error::Construction(format!(
                    "lower corner still fails f1(m2) > m1, f2(m1) > m2 after {MAX_INWARD_STEPS} halvings"
                )));
            }
            a *= 0.5;
        }
    }

    let nu1 = k.max(init_sup.0) * (1.0 + slack);
    let nu2 = f2k.max(init_sup.1) * (1.0 + slack);
    let bracket = nu1.max(nu2).max(1.0);
    let (big_m1, big_m2, upper_case) = if f2.eval(nu1)? >= nu2 {
        let lo = f2.eval(nu1)?;
        let hi = f1.preimage(nu1, bracket)?.extended();
        (nu1, midpoint_or_offset(lo, hi, slack), UpperCase::FromNu1)
    } else if f1.eval(nu2)? >= nu1 {
        let lo = f1.eval(nu2)?;
        let hi = f2.preimage(nu2, bracket)?.extended();
        (midpoint_or_offset(lo, hi, slack), nu2, UpperCase::FromNu2)
    } else {
        (nu1, nu2, UpperCase::Direct)
    };

    let bx = PermanenceBox {
        m1,
        m2,
        big_m1,
        big_m2,
        nu1,
        nu2,
        upper_case,
        inward_steps,
        slack,
    };
    let failed = bx.verify(f1, f2, BOX_MARGIN)?;
    if !failed.is_empty() {
        return Err(Error::Construction(failed.join("; ")));
    }
    Ok(bx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSequences {
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
    pub alpha: f64,
    pub terminal_gap: f64,
    pub converged: bool,
}

/// `(min{a, g^{-1}(b)}, g(.))`: the largest point on `g` below `(a, b)`.
pub fn align_lower(g: &Separator, a: f64, b: f64) -> Result<(f64, f64)> {
    let a0 = match g.inv(b)? {
        Preimage::Value(v) => a.min(v),
        Preimage::BelowRange => 0.0,
        Preimage::AboveRange => a,
    };
    Ok((a0, g.eval(a0)?))
}

/// `(max{A, g^{-1}(B)}, g(.))`: the smallest point on `g` above `(A, B)`.
pub fn align_upper(g: &Separator, a: f64, b: f64) -> Result<(f64, f64)> {
    let a0 = match g.inv(b)? {
        Preimage::Value(v) => a.max(v),
        Preimage::BelowRange => a,
        Preimage::AboveRange => return Err(Error::Construction(format!("upper start {b} is above the range of g"))),
    };
    Ok((a0, g.eval(a0)?))
}

/// Lower bounds rise by `a' = min{g^{-1}(f2(a)), f1(b)}`, `b' = min{f2(a), g(f1(b))}`;
/// upper bounds fall by the same map with `max`. Stops once both `A_n - a_n` and
/// `B_n - b_n` are at most `tol`.
pub fn monotone_iteration(
    f1: &ProductionFunction,
    f2: &ProductionFunction,
    k: f64,
    g: &Separator,
    start: (f64, f64, f64, f64),
    n_max: usize,
    tol: f64,
) -> Result<BoundSequences> {
    let (a0, b0, big_a0, big_b0) = start;
    let on_g = |a: f64, b: f64| -> Result<bool> { Ok((g.eval(a)? - b).abs() <= ALIGN_TOL * b.abs().max(1.0)) };
    if !on_g(a0, b0)? || !on_g(big_a0, big_b0)? {
        return Err(Error::InvalidArgument("start corners must lie on g".into()));
    }
    if !(a0 <= k && k <= big_a0) {
        return Err(Error::InvalidArgument(format!(
            "start must bracket K = {k} (got a0 = {a0}, A0 = {big_a0})"
        )));
    }
    let ginv = |y: f64| -> Result<f64> { Ok(g.inv(y)?.extended()) };
    let mut lower = vec![(a0, b0)];
    let mut upper = vec![(big_a0, big_b0)];
    let (mut a, mut b, mut big_a, mut big_b) = (a0, b0, big_a0, big_b0);
    let gap = |a: f64, b: f64, big_a: f64, big_b: f64| (big_a - a).max(big_b - b);
    let mut converged = gap(a, b, big_a, big_b) <= tol;
    let mut step = 0;
    while !converged && step < n_max {
        step += 1;
        let (fa, fb) = (f2.eval(a)?, f1.eval(b)?);
        let na = ginv(fa)?.min(fb);
        let nb = fa.min(g.eval(fb)?);
        let (f_a, f_b) = (f2.eval(big_a)?, f1.eval(big_b)?);
        let n_big_a = ginv(f_a)?.max(f_b);
        let n_big_b = f_a.max(g.eval(f_b)?);

        let slip = 1e-12 * k.max(1.0);
        if na < a - slip || nb < b - slip {
            return Err(Error::Stall {
                step,
                reason: format!("lower bound decreased from ({a}, {b}) to ({na}, {nb})"),
            });
        }
        if n_big_a > big_a + slip || n_big_b > big_b + slip {
            return Err(Error::Stall {
                step,
                reason: format!("upper bound increased from ({big_a}, {big_b}) to ({n_big_a}, {n_big_b})"),
            });
        }
        if !(na <= k + slip && k <= n_big_a + slip) {
            return Err(Error::Stall {
                step,
                reason: format!("bounds crossed K = {k}: a = {na}, A = {n_big_a}"),
            });
        }
        let stuck = na == a && n_big_a == big_a;
        a = na.max(a);
        b = nb.max(b);
        big_a = n_big_a.min(big_a);
        big_b = n_big_b.min(big_b);
        lower.push((a, b));
        upper.push((big_a, big_b));
        converged = gap(a, b, big_a, big_b) <= tol;
        if stuck {
            break;
        }
    }
    Ok(BoundSequences {
        lower,
        upper,
        alpha: g.alpha,
        terminal_gap: gap(a, b, big_a, big_b),
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractionVerdict {
    ToZero,
    ToInfinity,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionSequence {
    pub terms: Vec<(f64, f64)>,
    pub verdict: ContractionVerdict,
}

pub const CONTRACTION_ZERO_TOL: f64 = 1e-10;
pub const CONTRACTION_CAP: f64 = 1e12;

/// `A_n = f1(B_{n-1})`, `B_n = f2(A_{n-1})`.
pub fn contraction_iteration(
    f1: &ProductionFunction,
    f2: &ProductionFunction,
    start: (f64, f64),
    n_max: usize,
    zero_tol: f64,
    cap: f64,
) -> Result<ContractionSequence> {
    if !(start.0 > 0.0 && start.1 > 0.0) {
        return Err(Error::InvalidArgument("contraction start must be positive".into()));
    }
    let mut terms = vec![start];
    let (mut a, mut b) = start;
    for _ in 0..n_max {
        let (na, nb) = match (f1.eval(b), f2.eval(a)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(crate::expr::EvalError::NonFinite), _) | (_, Err(crate::expr::EvalError::NonFinite)) => {
                return Ok(ContractionSequence {
                    terms,
                    verdict: ContractionVerdict::ToInfinity,
                })
            }
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        };
        a = na;
        b = nb;
        terms.push((a, b));
        if a.max(b) < zero_tol {
            return Ok(ContractionSequence {
                terms,
                verdict: ContractionVerdict::ToZero,
            });
        }
        if a.min(b) > cap {
            return Ok(ContractionSequence {
                terms,
                verdict: ContractionVerdict::ToInfinity,
            });
        }
    }
    Ok(ContractionSequence {
        terms,
        verdict: ContractionVerdict::Stalled,
    })
}
