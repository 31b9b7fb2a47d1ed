//! System assembly and right-hand side of
//! `x' = r1(t) G1(x) [ int f1(y(s)) d_s R1(t,s) - x ]`,
//! `y' = r2(t) G2(y) [ int f2(x(s)) d_s R2(t,s) - y ]`.

use serde::Serialize;

use crate::error::{Error, Result, Verdict};
use crate::expr::{EvalError, Expression};
use crate::functions::{Modulation, ProductionFunction};
use crate::kernels::{DelayKernel, ScalarHistory, DEFAULT_PANELS};

/// Tail mass of a rate above which its integral is reported as divergent.
pub const A5_TAIL_THRESHOLD: f64 = 0.1;

/// Read access to both components of a solution history.
pub trait PairHistory {
    fn earliest(&self) -> f64;
    fn x_at(&self, s: f64) -> Result<f64>;
    fn y_at(&self, s: f64) -> Result<f64>;
}

pub struct XComponent<'a, H: ?Sized>(pub &'a H);
pub struct YComponent<'a, H: ?Sized>(pub &'a H);

impl<H: PairHistory + ?Sized> ScalarHistory for XComponent<'_, H> {
    fn earliest(&self) -> f64 {
        self.0.earliest()
    }
    fn value(&self, s: f64) -> Result<f64> {
        self.0.x_at(s)
    }
}

impl<H: PairHistory + ?Sized> ScalarHistory for YComponent<'_, H> {
    fn earliest(&self) -> f64 {
        self.0.earliest()
    }
    fn value(&self, s: f64) -> Result<f64> {
        self.0.y_at(s)
    }
}

/// Initial data on `(-inf, 0]`, an expression in `t`.
#[derive(Debug, Clone)]
pub struct InitialFunction {
    body: Expression,
}

impl InitialFunction {
    pub fn parse(source: &str) -> Result<Self> {
        Ok(InitialFunction {
            body: Expression::parse_in(source, "t")?,
        })
    }

    pub fn constant(value: f64) -> Self {
        InitialFunction {
            body: Expression::constant_in(value, "t"),
        }
    }

    pub fn expression(&self) -> &Expression {
        &self.body
    }

    #[inline]
    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        self.body.eval(t)
    }

    pub fn value_at_zero(&self) -> Result<f64, EvalError> {
        self.body.eval(0.0)
    }

    /// `(inf, sup)` over `n` samples of `[t_lo, 0]`.
    pub fn sampled_range(&self, t_lo: f64, n: usize) -> Result<(f64, f64), EvalError> {
        if let Some(c) = self.body.as_constant() {
            return Ok((c, c));
        }
        let n = n.max(2);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let t = t_lo * (1.0 - i as f64 / (n - 1) as f64);
            let v = self.eval(t)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    /// Non-negative on the sampled past, positive at 0.
    pub fn verify_a6(&self, t_lo: f64, n: usize) -> Result<Verdict<(f64, f64), String>> {
        let at_zero = self.value_at_zero()?;
        if !(at_zero > 0.0) {
            return Ok(Verdict::Violated(format!(
                "value at t = 0 is {at_zero}, must be positive"
            )));
        }
        let (lo, hi) = self.sampled_range(t_lo, n)?;
        if lo < 0.0 {
            return Ok(Verdict::Violated(format!(
                "takes the negative value {lo} on [{t_lo}, 0]"
            )));
        }
        Ok(Verdict::Certified((lo, hi)))
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub f1: ProductionFunction,
    pub f2: ProductionFunction,
    pub g1: Modulation,
    pub g2: Modulation,
    pub r1: Expression,
    pub r2: Expression,
    pub k1: DelayKernel,
    pub k2: DelayKernel,
    pub phi: InitialFunction,
    pub psi: InitialFunction,
    pub n_quad: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCheck {
    pub integral: f64,
    pub tail: f64,
    pub divergent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A5Report {
    pub horizon: f64,
    pub r1: RateCheck,
    pub r2: RateCheck,
}

impl A5Report {
    pub fn holds(&self) -> bool {
        self.r1.divergent && self.r2.divergent
    }
}

/// Sampling and tolerance knobs for [`SystemSpec::validate`].
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub x_max: f64,
    pub n_grid: usize,
    pub horizon: f64,
    pub t_samples: usize,
    /// Upper bound on `t - h(t)`; `None` accepts unbounded delays on the user's word.
    pub max_lag: Option<f64>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            x_max: 100.0,
            n_grid: crate::functions::DEFAULT_GRID,
            horizon: 100.0,
            t_samples: 257,
            max_lag: Some(1e3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub x_max: f64,
    pub max_delay_span: f64,
    pub min_delay_span: f64,
    pub history_floor: f64,
    pub initial_range: [(f64, f64); 2],
    pub rate_sup: [f64; 2],
}

impl SystemSpec {
    /// Unmodulated system with unit rates.
    pub fn new(
        f1: ProductionFunction,
        f2: ProductionFunction,
        k1: DelayKernel,
        k2: DelayKernel,
        phi: InitialFunction,
        psi: InitialFunction,
    ) -> Self {
        SystemSpec {
            f1,
            f2,
            g1: Modulation::identity(),
            g2: Modulation::identity(),
            r1: Expression::constant_in(1.0, "t"),
            r2: Expression::constant_in(1.0, "t"),
            k1,
            k2,
            phi,
            psi,
            n_quad: DEFAULT_PANELS,
        }
    }

    pub fn with_rates(mut self, r1: Expression, r2: Expression) -> Self {
        self.r1 = r1;
        self.r2 = r2;
        self
    }

    pub fn with_modulation(mut self, g1: Modulation, g2: Modulation) -> Self {
        self.g1 = g1;
        self.g2 = g2;
        self
    }

    pub fn with_quad_panels(mut self, n_quad: usize) -> Self {
        self.n_quad = n_quad;
        self
    }

    pub fn rhs<H: PairHistory + ?Sized>(&self, t: f64, x: f64, y: f64, hist: &H) -> Result<(f64, f64)> {
        Ok(self.rhs_with_residual(t, x, y, hist)?.0)
    }

    /// Right-hand side plus the larger of the two kernel-mass residuals.
    pub fn rhs_with_residual<H: PairHistory + ?Sized>(
        &self,
        t: f64,
        x: f64,
        y: f64,
        hist: &H,
    ) -> Result<((f64, f64), f64)> {
        let q1 = self
            .k1
            .integrate_with_residual(&self.f1, &YComponent(hist), t, self.n_quad)?;
        let q2 = self
            .k2
            .integrate_with_residual(&self.f2, &XComponent(hist), t, self.n_quad)?;
        let dx = self.r1.eval(t)? * self.g1.eval(x)? * (q1.value - x);
        let dy = self.r2.eval(t)? * self.g2.eval(y)? * (q2.value - y);
        Ok(((dx, dy), q1.mass_residual.max(q2.mass_residual)))
    }

    /// Heuristic check that `int_0^inf r_i = inf`: the tail over
    /// `[horizon/2, horizon]` must exceed [`A5_TAIL_THRESHOLD`].
    pub fn check_a5(&self, horizon: f64, n_grid: usize) -> Result<A5Report> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n = n_grid.max(2);
        let check = |r: &Expression| -> Result<RateCheck> {
            let integral = simpson(|t| r.eval(t), 0.0, horizon, n)?;
            let tail = simpson(|t| r.eval(t), 0.5 * horizon, horizon, n)?;
            Ok(RateCheck {
                integral,
                tail,
                divergent: tail > A5_TAIL_THRESHOLD,
            })
        };
        Ok(A5Report {
            horizon,
            r1: check(&self.r1)?,
            r2: check(&self.r2)?,
        })
    }

    fn sample_times(horizon: f64, samples: usize) -> impl Iterator<Item = f64> {
        let n = samples.max(2);
        (0..n).map(move |i| horizon * i as f64 / (n - 1) as f64)
    }

    /// `(min, max)` of `t - h_i(t)` over both kernels on `[0, horizon]`.
    pub fn delay_span_range(&self, horizon: f64, samples: usize) -> Result<(f64, f64)> {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for t in Self::sample_times(horizon, samples) {
            for k in [&self.k1, &self.k2] {
                let span = t - k.support_floor(t)?;
                lo = lo.min(span);
                hi = hi.max(span);
            }
        }
        Ok((lo.max(0.0), hi))
    }

    /// Earliest time any kernel reaches back to over `[0, horizon]` (at most 0).
    pub fn history_floor(&self, horizon: f64, samples: usize) -> Result<f64> {
        let mut floor = 0.0f64;
        for t in Self::sample_times(horizon, samples) {
            for k in [&self.k1, &self.k2] {
                floor = floor.min(k.support_floor(t)?);
            }
        }
        Ok(floor)
    }

    /// First time from which both kernels only look at `s >= 0`.
    pub fn history_exit_time(&self, horizon: f64, samples: usize) -> Result<f64> {
        let mut last_negative = None;
        for t in Self::sample_times(horizon, samples) {
            let floor = self.k1.support_floor(t)?.min(self.k2.support_floor(t)?);
            if floor < 0.0 {
                last_negative = Some(t);
            }
        }
        Ok(match last_negative {
            None => 0.0,
            Some(t) => {
                let step = horizon / (samples.max(2) - 1) as f64;
                (t + step).min(horizon)
            }
        })
    }

    /// Runs every component check; failures name the offending config key.
    pub fn validate(&mut self, opts: &ValidationOptions) -> Result<ValidationReport> {
        let a1 = |f: ProductionFunction, key: &str| -> Result<ProductionFunction> {
            f.certified(opts.x_max, opts.n_grid)
                .map_err(|e| Error::validation(key, e.to_string()))
        };
        self.f1 = a1(self.f1.clone(), "system.f1")?;
        self.f2 = a1(self.f2.clone(), "system.f2")?;
        for (g, key) in [(&self.g1, "system.g1"), (&self.g2, "system.g2")] {
            if let Verdict::Violated(x) = g
                .verify_a7(opts.x_max, opts.n_grid)
                .map_err(|e| Error::validation(key, e.to_string()))?
            {
                return Err(Error::validation(key, format!("(a7) violated: G({x}) <= 0")));
            }
        }

        let times: Vec<f64> = Self::sample_times(opts.horizon, opts.t_samples).collect();
        let mut rate_sup = [0.0f64; 2];
        for (i, (r, key)) in [(&self.r1, "system.r1"), (&self.r2, "system.r2")]
            .into_iter()
            .enumerate()
        {
            for &t in &times {
                let v = r
                    .eval(t)
                    .map_err(|e| Error::validation(key, format!("at t = {t}: {e}")))?;
                if v < 0.0 {
                    return Err(Error::validation(key, format!("rate is negative at t = {t}: {v}")));
                }
                rate_sup[i] = rate_sup[i].max(v);
            }
        }

        for (k, key) in [(&self.k1, "system.kernel1"), (&self.k2, "system.kernel2")] {
            let verdict = k.validate(&times).map_err(|e| Error::validation(key, e.to_string()))?;
            match verdict {
                Verdict::Violated(v) => return Err(Error::validation(key, v.to_string())),
                Verdict::Certified(c) => {
                    if let Some(max_lag) = opts.max_lag {
                        if c.max_span > max_lag {
                            return Err(Error::validation(
                                key,
                                format!(
                                    "delay span {} exceeds the bound {max_lag}; set attest_unbounded_delay to accept",
                                    c.max_span
                                ),
                            ));
                        }
                    }
                }
            }
        }

        let (min_span, max_span) = self
            .delay_span_range(opts.horizon, opts.t_samples)
            .map_err(|e| Error::validation("system", e.to_string()))?;
        let floor = self
            .history_floor(opts.horizon, opts.t_samples)
            .map_err(|e| Error::validation("system", e.to_string()))?;
        let mut initial_range = [(0.0, 0.0); 2];
        for (i, (init, key)) in [(&self.phi, "system.phi"), (&self.psi, "system.psi")]
            .into_iter()
            .enumerate()
        {
            match init
                .verify_a6(floor, 1001)
                .map_err(|e| Error::validation(key, e.to_string()))?
            {
                Verdict::Certified(range) => initial_range[i] = range,
                Verdict::Violated(msg) => return Err(Error::validation(key, format!("(a6) violated: {msg}"))),
            }
        }
        if !(self.n_quad >= 1) {
            return Err(Error::validation("numerics.quad_panels", "must be at least 1"));
        }
        Ok(ValidationReport {
            x_max: opts.x_max,
            max_delay_span: max_span,
            min_delay_span: min_span,
            history_floor: floor,
            initial_range,
            rate_sup,
        })
    }
}

fn simpson<F>(f: F, a: f64, b: f64, panels: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let nodes = 2 * panels;
    let h = (b - a) / nodes as f64;
    let mut acc = f(a)? + f(b)?;
    for i in 1..nodes {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h)?;
    }
    Ok(acc * h / 3.0)
}
