//! Strictly increasing production functions, modulation factors and the
//! separator curve used by the bound recursions.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result, Verdict};
use crate::expr::{EvalError, Expression};

pub const DEFAULT_GRID: usize = 10_001;
pub const DEFAULT_INVERSE_TOL: f64 = 1e-12;
/// Number of bracket doublings tried before a value is declared out of range.
pub const MAX_BRACKET_DOUBLINGS: u32 = 50;

/// Result of inverting a monotone function at `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preimage {
    /// `y` is below `f(0)`; the inverse is taken to be zero.
    BelowRange,
    Value(f64),
    /// `y` exceeds `f` on every bracket tried.
    AboveRange,
}

impl Preimage {
    /// Extended-real reading: 0 below the range, +inf above it.
    pub fn extended(self) -> f64 {
        match self {
            Preimage::BelowRange => 0.0,
            Preimage::Value(x) => x,
            Preimage::AboveRange => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneCertificate {
    pub x_max: f64,
    pub n_grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum A1ViolationKind {
    NotIncreasing,
    NotPositive,
    Negative,
}

/// First grid pair on which the (a1) requirements failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A1Violation {
    pub kind: A1ViolationKind,
    pub u: f64,
    pub v: f64,
    pub f_u: f64,
    pub f_v: f64,
}

impl fmt::Display for A1Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            A1ViolationKind::NotIncreasing => write!(
                f,
                "not strictly increasing: f({}) = {} >= f({}) = {}",
                self.u, self.f_u, self.v, self.f_v
            ),
            A1ViolationKind::NotPositive => {
                write!(f, "not positive: f({}) = {}", self.v, self.f_v)
            }
            A1ViolationKind::Negative => write!(f, "negative value: f({}) = {}", self.u, self.f_u),
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Expr(Expression),
    /// `alpha * f1^{-1}(x) + (1 - alpha) * f2(x)`.
    Separator {
        f1: Arc<ProductionFunction>,
        f2: Arc<ProductionFunction>,
        alpha: f64,
        bracket_hi: f64,
    },
    InverseOf {
        base: Arc<ProductionFunction>,
        bracket_hi: f64,
    },
}

/// A strictly increasing map of the half-line into itself.
///
/// Composite functions (the separator, numeric inverses) may evaluate to
/// `+inf` where an inner inverse leaves the range of its function.
#[derive(Debug, Clone)]
pub struct ProductionFunction {
    repr: Repr,
    certificate: Option<MonotoneCertificate>,
}

impl ProductionFunction {
    pub fn from_expression(expr: Expression) -> Self {
        ProductionFunction {
            repr: Repr::Expr(expr),
            certificate: None,
        }
    }

    pub fn parse(source: &str) -> Result<Self> {
        Ok(Self::from_expression(Expression::parse(source)?))
    }

    /// The numeric inverse of `base`, itself treated as a production function.
    pub fn inverse_of(base: ProductionFunction, bracket_hi: f64) -> Self {
        ProductionFunction {
            repr: Repr::InverseOf {
                base: Arc::new(base),
                bracket_hi,
            },
            certificate: None,
        }
    }

    pub fn expression(&self) -> Option<&Expression> {
        match &self.repr {
            Repr::Expr(e) => Some(e),
            _ => None,
        }
    }

    pub fn certificate(&self) -> Option<MonotoneCertificate> {
        self.certificate
    }

    pub fn eval(&self, u: f64) -> Result<f64, EvalError> {
        match &self.repr {
            Repr::Expr(e) => e.eval(u),
            Repr::Separator {
                f1,
                f2,
                alpha,
                bracket_hi,
            } => {
                let inv = f1.preimage(u, *bracket_hi)?.extended();
                Ok(alpha * inv + (1.0 - alpha) * f2.eval(u)?)
            }
            Repr::InverseOf { base, bracket_hi } => Ok(base.preimage(u, *bracket_hi)?.extended()),
        }
    }

    /// Samples `[0, x_max]` and checks strict increase, `f(0) >= 0` and `f(u) > 0` for `u > 0`.
    ///
    /// Adjacent samples that compare equal are accepted only where the function
    /// has already flattened to the resolution of `f64` (the last strict
    /// increment was within a few ulps), as happens for saturating maps like
    /// `tanh`.
    pub fn verify_a1(&self, x_max: f64, n_grid: usize) -> Result<Verdict<MonotoneCertificate, A1Violation>> {
        if !(x_max > 0.0) || n_grid < 2 {
            return Err(Error::InvalidArgument(format!(
                "verify_a1 needs x_max > 0 and n_grid >= 2 (got {x_max}, {n_grid})"
            )));
        }
        let h = x_max / (n_grid - 1) as f64;
        let mut u = 0.0;
        let mut f_u = self.eval(0.0)?;
        if f_u < 0.0 {
            return Ok(Verdict::Violated(A1Violation {
                kind: A1ViolationKind::Negative,
                u,
                v: u,
                f_u,
                f_v: f_u,
            }));
        }
        let mut last_step = f64::INFINITY;
        let mut on_plateau = false;
        for i in 1..n_grid {
            let v = if i == n_grid - 1 { x_max } else { i as f64 * h };
            let f_v = self.eval(v)?;
            if !(f_v > 0.0) {
                return Ok(Verdict::Violated(A1Violation {
                    kind: A1ViolationKind::NotPositive,
                    u,
                    v,
                    f_u,
                    f_v,
                }));
            }
            let step = f_v - f_u;
            if step > 0.0 {
                if !on_plateau {
                    last_step = step;
                }
            } else if step == 0.0 && (on_plateau || last_step <= 4.0 * ulp(f_u)) {
                on_plateau = true;
            } else {
                return Ok(Verdict::Violated(A1Violation {
                    kind: A1ViolationKind::NotIncreasing,
                    u,
                    v,
                    f_u,
                    f_v,
                }));
            }
            u = v;
            f_u = f_v;
        }
        Ok(Verdict::Certified(MonotoneCertificate { x_max, n_grid }))
    }

    /// Runs [`verify_a1`](Self::verify_a1) and stores the certificate.
    pub fn certified(mut self, x_max: f64, n_grid: usize) -> Result<Self, A1Failure> {
        match self.verify_a1(x_max, n_grid) {
            Ok(Verdict::Certified(c)) => {
                self.certificate = Some(c);
                Ok(self)
            }
            Ok(Verdict::Violated(v)) => Err(A1Failure::Violation(v)),
            Err(e) => Err(A1Failure::Error(e)),
        }
    }

    /// Bisection inverse on `[0, bracket_hi]`.
    ///
    /// Values below `f(0)` map to 0; values above `f(bracket_hi)` are a
    /// [`Error::Range`].
    pub fn inverse(&self, y: f64, bracket_hi: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) || !(bracket_hi > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "inverse needs tol > 0 and bracket_hi > 0 (got {tol}, {bracket_hi})"
            )));
        }
        let f0 = self.eval(0.0)?;
        if y <= f0 {
            return Ok(0.0);
        }
        let f_hi = self.eval_saturating(bracket_hi)?;
        if y > f_hi {
            return Err(Error::Range { y, bracket_hi, f_hi });
        }
        if y == f_hi {
            return Ok(bracket_hi);
        }
        let (mut lo, mut hi) = (0.0f64, bracket_hi);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = self.eval_saturating(mid)?;
            if f_mid == y {
                return Ok(mid);
            }
            if f_mid < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= tol * hi * 1e-3 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Overflow of an increasing map reads as `+inf`.
    fn eval_saturating(&self, u: f64) -> Result<f64, EvalError> {
        match self.eval(u) {
            Err(EvalError::NonFinite) => Ok(f64::INFINITY),
            other => other,
        }
    }

    /// Inverse with automatic bracket growth: doubles `bracket_hi` up to
    /// [`MAX_BRACKET_DOUBLINGS`] times before reporting [`Preimage::AboveRange`].
    pub fn preimage(&self, y: f64, bracket_hi: f64) -> Result<Preimage, EvalError> {
        self.preimage_tol(y, bracket_hi, DEFAULT_INVERSE_TOL)
    }

    pub fn preimage_tol(&self, y: f64, bracket_hi: f64, tol: f64) -> Result<Preimage, EvalError> {
        if y.is_nan() {
            return Err(EvalError::NonFinite);
        }
        if y == f64::INFINITY {
            return Ok(Preimage::AboveRange);
        }
        if y <= self.eval(0.0)? {
            return Ok(Preimage::BelowRange);
        }
        let mut hi = bracket_hi.max(f64::MIN_POSITIVE);
        for _ in 0..=MAX_BRACKET_DOUBLINGS {
            match self.inverse(y, hi, tol) {
                Ok(x) => return Ok(Preimage::Value(x)),
                Err(Error::Range { .. }) => hi *= 2.0,
                Err(Error::Eval(e)) => {
                    // Overflow while probing far brackets means the value is out of reach.
                    return if e == EvalError::NonFinite {
                        Ok(Preimage::AboveRange)
                    } else {
                        Err(e)
                    };
                }
                Err(_) => return Err(EvalError::NonFinite),
            }
        }
        Ok(Preimage::AboveRange)
    }
}

fn ulp(v: f64) -> f64 {
    let a = v.abs();
    if a == 0.0 {
        return f64::MIN_POSITIVE;
    }
    f64::from_bits(a.to_bits() + 1) - a
}

#[derive(Debug, Clone, PartialEq)]
pub enum A1Failure {
    Violation(A1Violation),
    Error(Error),
}

impl fmt::Display for A1Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            A1Failure::Violation(v) => write!(f, "(a1) violated: {v}"),
            A1Failure::Error(e) => write!(f, "{e}"),
        }
    }
}

/// Builds `g(x) = alpha f1^{-1}(x) + (1 - alpha) f2(x)`.
///
/// `bracket_hi` is the starting bracket for the inner inverse of `f1`.
pub fn make_separator(
    f1: &ProductionFunction,
    f2: &ProductionFunction,
    alpha: f64,
    bracket_hi: f64,
) -> Result<ProductionFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "separator weight must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(ProductionFunction {
        repr: Repr::Separator {
            f1: Arc::new(f1.clone()),
            f2: Arc::new(f2.clone()),
            alpha,
            bracket_hi,
        },
        certificate: None,
    })
}

/// The factor `G(x)` of the modulated system; must be positive for `x > 0`.
#[derive(Debug, Clone)]
pub struct Modulation {
    body: Expression,
}

impl Modulation {
    pub fn new(body: Expression) -> Self {
        Modulation { body }
    }

    pub fn identity() -> Self {
        Modulation {
            body: Expression::constant(1.0),
        }
    }

    pub fn expression(&self) -> &Expression {
        &self.body
    }

    #[inline]
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        self.body.eval(x)
    }

    /// Positivity on the grid points of `(0, x_max]`; returns the first failing abscissa.
    pub fn verify_a7(&self, x_max: f64, n_grid: usize) -> Result<Verdict<MonotoneCertificate, f64>> {
        if !(x_max > 0.0) || n_grid < 2 {
            return Err(Error::InvalidArgument("verify_a7 needs x_max > 0, n_grid >= 2".into()));
        }
        let h = x_max / (n_grid - 1) as f64;
        for i in 1..n_grid {
            let x = i as f64 * h;
            if !(self.eval(x)? > 0.0) {
                return Ok(Verdict::Violated(x));
            }
        }
        Ok(Verdict::Certified(MonotoneCertificate { x_max, n_grid }))
    }
}
