//! Delay distributions `R(t, .)` and the feedback integral
//! `int_{h(t)}^t f(u(s)) d_s R(t, s)`.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result, Verdict};
use crate::expr::{EvalError, Expression};
use crate::functions::ProductionFunction;

pub const DEFAULT_PANELS: usize = 64;
/// Panels used when checking normalization.
pub const VALIDATION_PANELS: usize = 1024;
pub const MASS_TOL: f64 = 1e-8;

/// Read access to one component of a solution history.
pub trait ScalarHistory {
    /// Earliest time at which [`value`](Self::value) is defined.
    fn earliest(&self) -> f64;

    fn value(&self, s: f64) -> Result<f64>;

    fn checked(&self, s: f64) -> Result<f64> {
        let earliest = self.earliest();
        if s < earliest {
            return Err(Error::HistoryUnderflow { s, earliest });
        }
        self.value(s)
    }
}

impl<F> ScalarHistory for F
where
    F: Fn(f64) -> f64,
{
    fn earliest(&self) -> f64 {
        f64::NEG_INFINITY
    }

    fn value(&self, s: f64) -> Result<f64> {
        Ok(self(s))
    }
}

#[derive(Debug, Clone)]
pub struct Atom {
    /// Position `h(t)` of the point mass.
    pub lag: Expression,
    pub weight: f64,
}

/// Absolutely continuous part: density `shape(t - s)` on `[lag(t), t]`.
///
/// The shape is an expression in the age variable `a = t - s`.
#[derive(Debug, Clone)]
pub struct DensityPart {
    pub lag: Expression,
    pub shape: Expression,
}

#[derive(Debug, Clone)]
pub enum DelayKernel {
    /// Unit step at `s = h(t)`: the integral is `f(u(h(t)))`.
    PointMass { lag: Expression },
    /// Density `1 / (t - h(t))` on `[h(t), t]`.
    UniformDensity { lag: Expression },
    /// Density `(2 / w^2)(s + w - t)` on `[t - w, t]`, `w = t - h(t)`.
    TriangularDensity { lag: Expression },
    /// Point masses plus an optional density; weights and density mass must add to 1.
    GeneralMixture {
        atoms: Vec<Atom>,
        density: Option<DensityPart>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// `|computed kernel mass - 1|` for the rule actually applied.
    pub mass_residual: f64,
}

fn lag_expr(src: &str) -> Result<Expression> {
    Ok(Expression::parse_in(src, "t")?)
}

impl DelayKernel {
    pub fn point_mass(lag: &str) -> Result<Self> {
        Ok(DelayKernel::PointMass { lag: lag_expr(lag)? })
    }

    pub fn uniform(lag: &str) -> Result<Self> {
        Ok(DelayKernel::UniformDensity { lag: lag_expr(lag)? })
    }

    pub fn triangular(lag: &str) -> Result<Self> {
        Ok(DelayKernel::TriangularDensity { lag: lag_expr(lag)? })
    }

    /// `atoms` as `(lag, weight)` pairs; `density` as `(lag, shape in a)`.
    pub fn mixture(atoms: &[(&str, f64)], density: Option<(&str, &str)>) -> Result<Self> {
        let atoms = atoms
            .iter()
            .map(|(lag, weight)| {
                Ok(Atom {
                    lag: lag_expr(lag)?,
                    weight: *weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let density = match density {
            Some((lag, shape)) => Some(DensityPart {
                lag: lag_expr(lag)?,
                shape: Expression::parse_in(shape, "a")?,
            }),
            None => None,
        };
        Ok(DelayKernel::GeneralMixture { atoms, density })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DelayKernel::PointMass { .. } => "point",
            DelayKernel::UniformDensity { .. } => "uniform",
            DelayKernel::TriangularDensity { .. } => "triangular",
            DelayKernel::GeneralMixture { .. } => "mixture",
        }
    }

    /// Left end `h(t)` of the support at time `t`.
    pub fn support_floor(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            DelayKernel::PointMass { lag }
            | DelayKernel::UniformDensity { lag }
            | DelayKernel::TriangularDensity { lag } => lag.eval(t),
            DelayKernel::GeneralMixture { atoms, density } => {
                let mut floor = f64::INFINITY;
                for a in atoms {
                    floor = floor.min(a.lag.eval(t)?);
                }
                if let Some(d) = density {
                    floor = floor.min(d.lag.eval(t)?);
                }
                Ok(floor.min(t))
            }
        }
    }

    /// Feedback integral with `n_quad` Simpson panels for density parts.
    pub fn stieltjes_integrate<H: ScalarHistory + ?Sized>(
        &self,
        f: &ProductionFunction,
        u: &H,
        t: f64,
        n_quad: usize,
    ) -> Result<f64> {
        Ok(self.integrate_with_residual(f, u, t, n_quad)?.value)
    }

    pub fn integrate_with_residual<H: ScalarHistory + ?Sized>(
        &self,
        f: &ProductionFunction,
        u: &H,
        t: f64,
        n_quad: usize,
    ) -> Result<Quadrature> {
        if n_quad < 1 {
            return Err(Error::InvalidArgument("n_quad must be at least 1".into()));
        }
        let feedback = |s: f64| -> Result<f64> { Ok(f.eval(u.checked(s)?)?) };
        match self {
            DelayKernel::PointMass { lag } => Ok(Quadrature {
                value: feedback(lag.eval(t)?)?,
                mass_residual: 0.0,
            }),
            DelayKernel::UniformDensity { lag } => {
                let lo = lag.eval(t)?;
                let width = t - lo;
                if width <= 0.0 {
                    return Ok(Quadrature {
                        value: feedback(t)?,
                        mass_residual: 0.0,
                    });
                }
                let inv = 1.0 / width;
                simpson(lo, t, n_quad, |_| Ok(inv), &feedback).map(Quadrature::from)
            }
            DelayKernel::TriangularDensity { lag } => {
                let lo = lag.eval(t)?;
                let width = t - lo;
                if width <= 0.0 {
                    return Ok(Quadrature {
                        value: feedback(t)?,
                        mass_residual: 0.0,
                    });
                }
                let scale = 2.0 / (width * width);
                simpson(lo, t, n_quad, |s| Ok(scale * (s - lo)), &feedback).map(Quadrature::from)
            }
            DelayKernel::GeneralMixture { atoms, density } => {
                let mut value = 0.0;
                let mut mass = 0.0;
                for a in atoms {
                    value += a.weight * feedback(a.lag.eval(t)?)?;
                    mass += a.weight;
                }
                if let Some(d) = density {
                    let lo = d.lag.eval(t)?;
                    if lo < t {
                        let (v, m) = simpson(lo, t, n_quad, |s| Ok(d.shape.eval(t - s)?), &feedback)?;
                        value += v;
                        mass += m;
                    }
                }
                Ok(Quadrature {
                    value,
                    mass_residual: (mass - 1.0).abs(),
                })
            }
        }
    }

    /// Total mass `R(t, t+)`.
    pub fn mass(&self, t: f64, n_quad: usize) -> Result<f64> {
        match self {
            DelayKernel::GeneralMixture { atoms, density } => {
                let mut mass: f64 = atoms.iter().map(|a| a.weight).sum();
                if let Some(d) = density {
                    let lo = d.lag.eval(t)?;
                    if lo < t {
                        let (_, m) = simpson(lo, t, n_quad, |s| Ok(d.shape.eval(t - s)?), &|_| Ok(0.0))?;
                        mass += m;
                    }
                }
                Ok(mass)
            }
            _ => Ok(1.0),
        }
    }

    /// Checks normalization, non-negative weights and `h(t) <= t` on `t_grid`.
    pub fn validate(&self, t_grid: &[f64]) -> Result<Verdict<KernelCertificate, KernelViolation>> {
        if t_grid.is_empty() {
            return Err(Error::InvalidArgument("empty validation grid".into()));
        }
        let mut max_span: f64 = 0.0;
        for &t in t_grid {
            let floor = self.support_floor(t)?;
            if floor > t {
                return Ok(Verdict::Violated(KernelViolation {
                    t,
                    kind: KernelViolationKind::AdvancedArgument { h: floor },
                }));
            }
            max_span = max_span.max(t - floor);
            if let Some(w) = self.negative_part(t)? {
                return Ok(Verdict::Violated(KernelViolation {
                    t,
                    kind: KernelViolationKind::NegativeWeight { value: w },
                }));
            }
            let mass = self.mass(t, VALIDATION_PANELS)?;
            if (mass - 1.0).abs() > MASS_TOL {
                return Ok(Verdict::Violated(KernelViolation {
                    t,
                    kind: KernelViolationKind::MassNotUnit { mass },
                }));
            }
        }
        Ok(Verdict::Certified(KernelCertificate {
            points: t_grid.len(),
            max_span,
        }))
    }

    fn negative_part(&self, t: f64) -> Result<Option<f64>> {
        if let DelayKernel::GeneralMixture { atoms, density } = self {
            if let Some(a) = atoms.iter().find(|a| a.weight < 0.0) {
                return Ok(Some(a.weight));
            }
            if let Some(d) = density {
                let lo = d.lag.eval(t)?;
                let n = 64;
                for i in 0..=n {
                    let s = lo + (t - lo) * i as f64 / n as f64;
                    let k = d.shape.eval(t - s)?;
                    if k < 0.0 {
                        return Ok(Some(k));
                    }
                }
            }
        }
        Ok(None)
    }
}

impl From<(f64, f64)> for Quadrature {
    fn from((value, mass): (f64, f64)) -> Self {
        Quadrature {
            value,
            mass_residual: (mass - 1.0).abs(),
        }
    }
}

/// Composite Simpson rule for `int_lo^hi density(s) g(s) ds` with `panels`
/// panels; returns the integral and the quadrature mass of `density`.
fn simpson<D, G>(lo: f64, hi: f64, panels: usize, density: D, g: &G) -> Result<(f64, f64)>
where
    D: Fn(f64) -> Result<f64>,
    G: Fn(f64) -> Result<f64>,
{
    let nodes = 2 * panels;
    let step = (hi - lo) / nodes as f64;
    let mut acc = 0.0;
    let mut mass = 0.0;
    for i in 0..=nodes {
        // Pin the right end to `hi` exactly so the current-time value is used.
        let s = if i == nodes { hi } else { lo + i as f64 * step };
        let w = if i == 0 || i == nodes {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let k = density(s)?;
        mass += w * k;
        if k != 0.0 {
            acc += w * k * g(s)?;
        }
    }
    let scale = step / 3.0;
    Ok((acc * scale, mass * scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelCertificate {
    pub points: usize,
    /// Largest `t - h(t)` seen on the grid.
    pub max_span: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelViolation {
    pub t: f64,
    pub kind: KernelViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KernelViolationKind {
    MassNotUnit { mass: f64 },
    AdvancedArgument { h: f64 },
    NegativeWeight { value: f64 },
}

impl fmt::Display for KernelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelViolationKind::MassNotUnit { mass } => {
                write!(f, "normalization fails at t = {}: mass {}", self.t, mass)
            }
            KernelViolationKind::AdvancedArgument { h } => {
                write!(f, "advanced argument at t = {}: h(t) = {} > t", self.t, h)
            }
            KernelViolationKind::NegativeWeight { value } => {
                write!(f, "negative kernel weight {} at t = {}", value, self.t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pf(s: &str) -> ProductionFunction {
        ProductionFunction::parse(s).unwrap()
    }

    #[test]
    fn support_floor_examples() {
        assert_eq!(DelayKernel::point_mass("t-1").unwrap().support_floor(5.0), Ok(4.0));
        let h = 0.7;
        let k = DelayKernel::uniform(&format!("t-{h}")).unwrap();
        assert_eq!(k.support_floor(0.0), Ok(-h));
        assert_eq!(DelayKernel::triangular("t-2").unwrap().support_floor(3.0), Ok(1.0));
        let mix = DelayKernel::mixture(&[("t-1", 0.5)], Some(("t-3", "1/6"))).unwrap();
        assert_eq!(mix.support_floor(10.0), Ok(7.0));
    }

    #[test]
    fn point_mass_is_evaluation() {
        let k = DelayKernel::point_mass("t-1.5").unwrap();
        let u = |s: f64| s * s;
        let v = k.stieltjes_integrate(&pf("x^2+x"), &u, 4.0, 2).unwrap();
        assert_eq!(v, 2.5f64.powi(4) + 2.5f64.powi(2));
    }

    #[test]
    fn uniform_of_constant_is_f_of_constant() {
        let k = DelayKernel::uniform("t-2").unwrap();
        let c = 1.7;
        let f = pf("exp(x)-1");
        let v = k.stieltjes_integrate(&f, &|_| c, 3.0, DEFAULT_PANELS).unwrap();
        assert!((v - f.eval(c).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn triangular_identity_matches_closed_form() {
        let h = 1.3;
        let k = DelayKernel::triangular(&format!("t-{h}")).unwrap();
        for t in [0.0, 2.0, 7.5] {
            let v = k.stieltjes_integrate(&pf("x"), &|s| s, t, DEFAULT_PANELS).unwrap();
            assert!((v - (t - h / 3.0)).abs() < 1e-12, "t = {t}: {v}");
        }
    }

    #[test]
    fn history_underflow_is_reported() {
        struct Recent;
        impl ScalarHistory for Recent {
            fn earliest(&self) -> f64 {
                0.0
            }
            fn value(&self, _: f64) -> Result<f64> {
                Ok(1.0)
            }
        }
        let k = DelayKernel::uniform("t-1").unwrap();
        let err = k.stieltjes_integrate(&pf("x"), &Recent, 0.5, 8).unwrap_err();
        assert!(matches!(err, Error::HistoryUnderflow { .. }));
        assert!(k.stieltjes_integrate(&pf("x"), &Recent, 1.5, 8).is_ok());
    }

    #[test]
    fn validation_examples() {
        let grid: Vec<f64> = (0..=10).map(f64::from).collect();
        let cert = DelayKernel::uniform("t-1").unwrap().validate(&grid).unwrap();
        assert_eq!(cert.certificate().unwrap().max_span, 1.0);

        let mix = DelayKernel::mixture(&[("t-1", 0.5), ("t-2", 0.6)], None).unwrap();
        match mix.validate(&grid).unwrap() {
            Verdict::Violated(KernelViolation {
                kind: KernelViolationKind::MassNotUnit { mass },
                ..
            }) => assert!((mass - 1.1).abs() < 1e-12),
            other => panic!("expected mass violation, got {other:?}"),
        }

        let adv = DelayKernel::point_mass("t+1").unwrap().validate(&grid).unwrap();
        assert!(matches!(
            adv.violation().unwrap().kind,
            KernelViolationKind::AdvancedArgument { .. }
        ));

        let ok_mix = DelayKernel::mixture(&[("t-1", 0.25)], Some(("t-2", "0.375"))).unwrap();
        assert!(ok_mix.validate(&grid).unwrap().is_certified());
        let tri_mix = DelayKernel::mixture(&[], Some(("t-2", "(2-a)/2"))).unwrap();
        assert!(tri_mix.validate(&grid).unwrap().is_certified());
        let neg = DelayKernel::mixture(&[("t-1", 1.5), ("t-2", -0.5)], None).unwrap();
        assert!(matches!(
            neg.validate(&grid).unwrap().violation().unwrap().kind,
            KernelViolationKind::NegativeWeight { .. }
        ));
    }

    #[test]
    fn mixture_combines_atoms_and_density() {
        // Half at lag 1, half spread uniformly over [t-2, t].
        let k = DelayKernel::mixture(&[("t-1", 0.5)], Some(("t-2", "0.25"))).unwrap();
        let q = k.integrate_with_residual(&pf("x"), &|s| s, 5.0, 16).unwrap();
        assert!((q.value - (0.5 * 4.0 + 0.5 * 4.0)).abs() < 1e-13);
        assert!(q.mass_residual < 1e-13);
    }

    #[test]
    fn bounds_are_preserved() {
        let f = pf("sqrt(x)+2");
        let u = |s: f64| 3.0 + (5.0 * s).sin();
        for k in [
            DelayKernel::point_mass("t-0.3").unwrap(),
            DelayKernel::uniform("t-1").unwrap(),
            DelayKernel::triangular("t-2").unwrap(),
        ] {
            for t in [0.0, 1.0, 3.3] {
                let v = k.stieltjes_integrate(&f, &u, t, DEFAULT_PANELS).unwrap();
                assert!(v >= f.eval(2.0).unwrap() - 1e-12 && v <= f.eval(4.0).unwrap() + 1e-12);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn constant_history_integrates_to_f_of_it(
            c in 0.0f64..10.0, h in 0.05f64..3.0, t in 0.0f64..20.0, w in 0.0f64..1.0, kind in 0usize..4,
        ) {
            let lag = format!("t-{h:?}");
            let k = match kind {
                0 => DelayKernel::point_mass(&lag).unwrap(),
                1 => DelayKernel::uniform(&lag).unwrap(),
                2 => DelayKernel::triangular(&lag).unwrap(),
                _ => DelayKernel::mixture(&[(lag.as_str(), w)], Some((lag.as_str(), &format!("{:?}/{h:?}", 1.0 - w)))).unwrap(),
            };
            let f = pf("sqrt(x)+2");
            let v = k.stieltjes_integrate(&f, &|_: f64| c, t, DEFAULT_PANELS).unwrap();
            let want = f.eval(c).unwrap();
            proptest::prop_assert!((v - want).abs() <= 1e-12 * want.max(1.0), "{v} vs {want}");
        }

        #[test]
        fn triangular_mean_age_is_a_third(h in 0.05f64..5.0, t in -5.0f64..20.0) {
            let k = DelayKernel::triangular(&format!("t-{h:?}")).unwrap();
            let v = k.stieltjes_integrate(&pf("x"), &|s: f64| s, t, 8).unwrap();
            proptest::prop_assert!((v - (t - h / 3.0)).abs() <= 1e-10 * t.abs().max(1.0));
        }
    }
}
