//! Sign structure of `delta(x) = f2(x) - f1^{-1}(x)` and the predicted fate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::ProductionFunction;

pub const SCAN_POINTS: usize = 4097;
pub const CLASSIFY_TOL: f64 = 1e-9;

const REFINE_ITERS: usize = 200;
const GOLDEN_ITERS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    #[serde(rename = "-")]
    Negative,
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "+")]
    Positive,
}

impl Sign {
    fn of(d: f64, tol: f64) -> Sign {
        if d > tol {
            Sign::Positive
        } else if d < -tol {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Negative => '-',
            Sign::Zero => '0',
            Sign::Positive => '+',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum RelationClass {
    SingleCrossing {
        k: f64,
    },
    BelowEverywhere,
    AboveEverywhere,
    /// `delta` touches zero at `k` and keeps the sign `off_sign` elsewhere.
    Tangent {
        k: f64,
        off_sign: Sign,
    },
    Unresolved {
        witnesses: Vec<f64>,
    },
}

/// Run-length summary of the sign scan, e.g. `0+-`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignScan {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub pattern: String,
    pub crossings: Vec<f64>,
    pub tangencies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    Equilibrium,
    Zero,
    Infinity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Fate {
    ToEquilibrium { x: f64, y: f64 },
    ToZero,
    ToInfinity,
    Bistable { x: f64, y: f64, above: Limit, below: Limit },
    Inconclusive { reason: String },
}

impl Fate {
    pub fn name(&self) -> &'static str {
        match self {
            Fate::ToEquilibrium { .. } => "ToEquilibrium",
            Fate::ToZero => "ToZero",
            Fate::ToInfinity => "ToInfinity",
            Fate::Bistable { .. } => "Bistable",
            Fate::Inconclusive { .. } => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Caveat {
    #[serde(rename = "a5-heuristic-failed")]
    A5HeuristicFailed,
    #[serde(rename = "grid-resolution")]
    GridResolution,
}

impl Caveat {
    pub fn tag(self) -> &'static str {
        match self {
            Caveat::A5HeuristicFailed => "a5-heuristic-failed",
            Caveat::GridResolution => "grid-resolution",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub relation: RelationClass,
    pub scan: SignScan,
    pub fate: Fate,
    pub caveats: Vec<Caveat>,
}

impl Classification {
    /// Equilibrium (or tangency) abscissa, when there is one.
    pub fn k(&self) -> Option<f64> {
        match self.relation {
            RelationClass::SingleCrossing { k } | RelationClass::Tangent { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn add_caveat(&mut self, c: Caveat) {
        if !self.caveats.contains(&c) {
            self.caveats.push(c);
            self.caveats.sort();
        }
    }
}

/// `f2(x) - f1^{-1}(x)` with `f1^{-1}` read as 0 below and `+inf` above the range of `f1`.
pub fn delta(f1: &ProductionFunction, f2: &ProductionFunction, x: f64, bracket_hi: f64) -> Result<f64> {
    let inv = f1.preimage(x, bracket_hi)?.extended();
    Ok(f2.eval(x)? - inv)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln();
    let mut xs: Vec<f64> = (0..n).map(|i| lo * (ratio * i as f64 / (n - 1) as f64).exp()).collect();
    xs[n - 1] = hi;
    xs
}

struct Scanner<'a> {
    f1: &'a ProductionFunction,
    f2: &'a ProductionFunction,
    x_max: f64,
    tol: f64,
}

impl Scanner<'_> {
    fn delta(&self, x: f64) -> Result<f64> {
        delta(self.f1, self.f2, x, self.x_max)
    }

    /// Bisection for the sign change between `lo` (sign `s_lo`) and `hi`.
    fn bisect(&self, mut lo: f64, mut hi: f64, s_lo: Sign) -> Result<f64> {
        for _ in 0..REFINE_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= self.tol * 1e-3 * hi {
                break;
            }
            if Sign::of(self.delta(mid)?, 0.0) == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Golden-section minimiser of `|delta|` on `[a, b]`; returns `(x, delta(x))`.
    fn min_abs(&self, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut dc = self.delta(c)?;
        let mut dd = self.delta(d)?;
        for _ in 0..GOLDEN_ITERS {
            if b - a <= 1e-15 * b.abs().max(1e-300) {
                break;
            }
            if dc.abs() < dd.abs() {
                b = d;
                d = c;
                dd = dc;
                c = b - inv_phi * (b - a);
                dc = self.delta(c)?;
            } else {
                a = c;
                c = d;
                dc = dd;
                d = a + inv_phi * (b - a);
                dd = self.delta(d)?;
            }
        }
        Ok(if dc.abs() < dd.abs() { (c, dc) } else { (d, dd) })
    }
}

/// Scans `delta` on a logarithmic grid of `points` nodes over `[tol, x_max]`
/// and classifies the pair.
pub fn classify_with(
    f1: &ProductionFunction,
    f2: &ProductionFunction,
    x_max: f64,
    tol: f64,
    points: usize,
) -> Result<Classification> {
    if !(x_max > tol) || !(tol > 0.0) || points < 3 {
        return Err(Error::InvalidArgument(format!(
            "classification needs 0 < tol < x_max and at least 3 points (got tol {tol}, x_max {x_max}, {points} points)"
        )));
    }
    let sc = Scanner { f1, f2, x_max, tol };
    let xs = log_grid(tol, x_max, points);
    let ds = xs.iter().map(|&x| sc.delta(x)).collect::<Result<Vec<_>>>()?;
    let signs: Vec<Sign> = ds.iter().map(|&d| Sign::of(d, tol)).collect();

    let mut pattern = String::new();
    for s in &signs {
        if !pattern.ends_with(s.symbol()) {
            pattern.push(s.symbol());
        }
    }

    let mut crossings = Vec::new();
    let mut orientation = Vec::new();
    let mut tangencies = Vec::new();
    let mut wrong_side = Vec::new();
    let mut caveats = Vec::new();

    // Walk maximal runs of equal sign; a zero run between two signed runs is
    // either a crossing or a touch, depending on the sides.
    let mut last_signed: Option<usize> = None;
    for i in 0..points {
        if signs[i] == Sign::Zero {
            continue;
        }
        if let Some(j) = last_signed {
            let (sj, si) = (signs[j], signs[i]);
            if sj != si {
                crossings.push(sc.bisect(xs[j], xs[i], sj)?);
                orientation.push(sj);
            } else if i > j + 1 {
                let (x, d) = sc.min_abs(xs[j], xs[i])?;
                if d.abs() <= tol {
                    tangencies.push(x);
                } else {
                    wrong_side.push(x);
                }
            }
        }
        last_signed = Some(i);
    }
    if signs[points - 1] == Sign::Zero {
        caveats.push(Caveat::GridResolution);
    }

    // Touches that fall between grid nodes.
    for i in 1..points - 1 {
        let s = signs[i];
        if s == Sign::Zero || signs[i - 1] != s || signs[i + 1] != s {
            continue;
        }
        let (a, b, c) = (ds[i - 1].abs(), ds[i].abs(), ds[i + 1].abs());
        if !(b.is_finite() && b < a && b < c) {
            continue;
        }
        let (x, d) = sc.min_abs(xs[i - 1], xs[i + 1])?;
        if d.abs() <= tol {
            tangencies.push(x);
        } else if Sign::of(d, tol) != s {
            wrong_side.push(x);
        }
    }

    let signed: Vec<Sign> = signs.iter().copied().filter(|&s| s != Sign::Zero).collect();
    let relation = if signed.is_empty() {
        RelationClass::Unresolved { witnesses: vec![] }
    } else if !wrong_side.is_empty() {
        let mut w = crossings.clone();
        w.extend(&wrong_side);
        RelationClass::Unresolved { witnesses: w }
    } else {
        match (crossings.len(), tangencies.len()) {
            (0, 0) if signed[0] == Sign::Negative => RelationClass::BelowEverywhere,
            (0, 0) => RelationClass::AboveEverywhere,
            (1, 0) if orientation[0] == Sign::Positive => RelationClass::SingleCrossing { k: crossings[0] },
            (0, 1) => {
                caveats.push(Caveat::GridResolution);
                RelationClass::Tangent {
                    k: tangencies[0],
                    off_sign: signed[0],
                }
            }
            _ => {
                let mut w = crossings.clone();
                w.extend(&tangencies);
                RelationClass::Unresolved { witnesses: w }
            }
        }
    };

    if let Some(k) = match relation {
        RelationClass::SingleCrossing { k } => Some(k),
        _ => None,
    } {
        if k > xs[points - 2] {
            caveats.push(Caveat::GridResolution);
        }
    }

    let fate = fate_of(&relation, f2)?;
    caveats.sort();
    caveats.dedup();
    Ok(Classification {
        relation,
        scan: SignScan {
            x_min: tol,
            x_max,
            points,
            pattern,
            crossings,
            tangencies,
        },
        fate,
        caveats,
    })
}

pub fn classify(f1: &ProductionFunction, f2: &ProductionFunction, x_max: f64, tol: f64) -> Result<Classification> {
    classify_with(f1, f2, x_max, tol, SCAN_POINTS)
}

fn fate_of(relation: &RelationClass, f2: &ProductionFunction) -> Result<Fate> {
    Ok(match *relation {
        RelationClass::SingleCrossing { k } => Fate::ToEquilibrium { x: k, y: f2.eval(k)? },
        RelationClass::BelowEverywhere => Fate::ToZero,
        RelationClass::AboveEverywhere => Fate::ToInfinity,
        RelationClass::Tangent { k, off_sign } => {
            let (above, below) = if off_sign == Sign::Negative {
                (Limit::Equilibrium, Limit::Zero)
            } else {
                (Limit::Infinity, Limit::Equilibrium)
            };
            Fate::Bistable {
                x: k,
                y: f2.eval(k)?,
                above,
                below,
            }
        }
        RelationClass::Unresolved { ref witnesses } => {
            Fate::Inconclusive {
                reason: if witnesses.is_empty() {
                    "delta vanishes on the whole scan".into()
                } else {
                    format!("delta changes sign or touches zero at {witnesses:?}; a single positive equilibrium is required")
                },
            }
        }
    })
}

/// The equilibrium abscissa `K`, or `None` when `delta` keeps one sign.
pub fn find_equilibrium(f1: &ProductionFunction, f2: &ProductionFunction, x_max: f64, tol: f64) -> Result<Option<f64>> {
    let c = classify(f1, f2, x_max, tol)?;
    match c.relation {
        RelationClass::SingleCrossing { k } | RelationClass::Tangent { k, .. } => Ok(Some(k)),
        RelationClass::BelowEverywhere | RelationClass::AboveEverywhere => Ok(None),
        RelationClass::Unresolved { witnesses } => Err(Error::Unresolved { witnesses }),
    }
}
