//! Fixed-step RK4 with cubic Hermite dense output.

use std::io::{self, Write};

use serde::Serialize;

use crate::dynamics::{InitialFunction, PairHistory, SystemSpec};
use crate::error::{Error, Result};
use crate::expr::EvalError;

pub const BLOWUP_THRESHOLD: f64 = 1e12;
pub const CONVERGENCE_TOL: f64 = 1e-9;
pub const EXTINCTION_THRESHOLD: f64 = 1e-10;
pub const DEFAULT_STRIDE: usize = 10;

/// Solution history: `(phi, psi)` for `t <= 0`, then Hermite segments on the grid `n * dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dt: f64,
    phi: InitialFunction,
    psi: InitialFunction,
    x: Vec<f64>,
    y: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl Trajectory {
    fn new(dt: f64, phi: InitialFunction, psi: InitialFunction) -> Self {
        Trajectory {
            dt,
            phi,
            psi,
            x: Vec::new(),
            y: Vec::new(),
            dx: Vec::new(),
            dy: Vec::new(),
        }
    }

    /// Builds a trajectory from explicit node data, mainly for tests and replay.
    pub fn from_nodes(
        dt: f64,
        phi: InitialFunction,
        psi: InitialFunction,
        nodes: &[(f64, f64, f64, f64)],
    ) -> Result<Self> {
        if !(dt > 0.0) || nodes.is_empty() {
            return Err(Error::InvalidArgument("need dt > 0 and at least one node".into()));
        }
        let mut tr = Trajectory::new(dt, phi, psi);
        for &(x, y, dx, dy) in nodes {
            tr.push(x, y, dx, dy);
        }
        Ok(tr)
    }

    fn push(&mut self, x: f64, y: f64, dx: f64, dy: f64) {
        self.x.push(x);
        self.y.push(y);
        self.dx.push(dx);
        self.dy.push(dy);
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn front(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn node(&self, n: usize) -> (f64, f64, f64) {
        (self.time(n), self.x[n], self.y[n])
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len()).map(|n| self.node(n))
    }

    pub fn final_state(&self) -> (f64, f64) {
        let n = self.len() - 1;
        (self.x[n], self.y[n])
    }

    pub fn initial_functions(&self) -> (&InitialFunction, &InitialFunction) {
        (&self.phi, &self.psi)
    }

    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.component(t, Comp::X)?, self.component(t, Comp::Y)?))
    }

    #[inline]
    fn component(&self, s: f64, c: Comp) -> Result<f64> {
        if s <= 0.0 {
            let init = match c {
                Comp::X => &self.phi,
                Comp::Y => &self.psi,
            };
            return Ok(init.eval(s)?);
        }
        let front = self.front();
        if s > front || self.is_empty() {
            return Err(Error::OutOfRange { t: s, front });
        }
        let (v, d) = match c {
            Comp::X => (&self.x, &self.dx),
            Comp::Y => (&self.y, &self.dy),
        };
        let r = (s / self.dt).round();
        if r * self.dt == s {
            return Ok(v[r as usize]);
        }
        let last = self.len() - 1;
        let i = ((s / self.dt).floor() as usize).min(last - 1);
        let theta = (s - self.time(i)) / self.dt;
        Ok(hermite(v[i], v[i + 1], d[i], d[i + 1], self.dt, theta))
    }
}

#[derive(Clone, Copy)]
enum Comp {
    X,
    Y,
}

#[inline]
fn hermite(p0: f64, p1: f64, m0: f64, m1: f64, h: f64, theta: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1
}

impl PairHistory for Trajectory {
    fn earliest(&self) -> f64 {
        f64::NEG_INFINITY
    }
    fn x_at(&self, s: f64) -> Result<f64> {
        self.component(s, Comp::X)
    }
    fn y_at(&self, s: f64) -> Result<f64> {
        self.component(s, Comp::Y)
    }
}

/// History during a step: the completed trajectory, then a straight line
/// from the step's start state to the current stage state.
struct StepView<'a> {
    traj: &'a Trajectory,
    t0: f64,
    start: (f64, f64),
    ts: f64,
    stage: (f64, f64),
}

impl StepView<'_> {
    #[inline]
    fn lookup(&self, s: f64, c: Comp) -> Result<f64> {
        if s <= self.t0 {
            return self.traj.component(s, c);
        }
        let (a, b) = match c {
            Comp::X => (self.start.0, self.stage.0),
            Comp::Y => (self.start.1, self.stage.1),
        };
        let span = self.ts - self.t0;
        if s >= self.ts {
            if s - self.ts <= 1e-12 * self.ts.abs().max(1.0) {
                return Ok(b);
            }
            return Err(Error::OutOfRange { t: s, front: self.ts });
        }
        Ok(a + (b - a) * ((s - self.t0) / span))
    }
}

impl PairHistory for StepView<'_> {
    fn earliest(&self) -> f64 {
        f64::NEG_INFINITY
    }
    fn x_at(&self, s: f64) -> Result<f64> {
        self.lookup(s, Comp::X)
    }
    fn y_at(&self, s: f64) -> Result<f64> {
        self.lookup(s, Comp::Y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub dt: f64,
    pub horizon: f64,
    pub blowup_threshold: f64,
    pub extinction_threshold: f64,
    pub convergence_tol: f64,
    /// Trailing window for the convergence test; `None` uses
    /// `max(10 * max delay span, 1)`.
    pub convergence_window: Option<f64>,
    pub detect_convergence: bool,
    pub detect_extinction: bool,
}

impl IntegratorOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        IntegratorOptions {
            dt,
            horizon,
            blowup_threshold: BLOWUP_THRESHOLD,
            extinction_threshold: EXTINCTION_THRESHOLD,
            convergence_tol: CONVERGENCE_TOL,
            convergence_window: None,
            detect_convergence: true,
            detect_extinction: true,
        }
    }

    /// Default step `1e-3 * min delay span`, clamped to `[1e-4, 1e-2]`.
    pub fn default_dt(min_delay_span: f64) -> f64 {
        (1e-3 * min_delay_span).clamp(1e-4, 1e-2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum RunStatus {
    ReachedHorizon,
    ConvergedTo { x: f64, y: f64 },
    BlowUpAt { t: f64 },
    ExtinctBy { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub final_time: f64,
    pub final_state: (f64, f64),
    pub steps: usize,
    pub max_quadrature_residual: f64,
}

enum StageFailure {
    BlowUp,
    Hard(Error),
}

impl From<Error> for StageFailure {
    fn from(e: Error) -> Self {
        match e {
            Error::Eval(EvalError::NonFinite) => StageFailure::BlowUp,
            other => StageFailure::Hard(other),
        }
    }
}

struct Stepper<'a> {
    spec: &'a SystemSpec,
    threshold: f64,
    residual: f64,
}

impl Stepper<'_> {
    fn deriv(
        &mut self,
        traj: &Trajectory,
        t0: f64,
        start: (f64, f64),
        ts: f64,
        stage: (f64, f64),
    ) -> std::result::Result<(f64, f64), StageFailure> {
        if !within(stage, self.threshold) {
            return Err(StageFailure::BlowUp);
        }
        let view = StepView {
            traj,
            t0,
            start,
            ts,
            stage,
        };
        let (d, res) = self.spec.rhs_with_residual(ts, stage.0, stage.1, &view)?;
        if !(d.0.is_finite() && d.1.is_finite()) {
            return Err(StageFailure::BlowUp);
        }
        self.residual = self.residual.max(res);
        Ok(d)
    }

    /// One RK4 step from node `n`; returns the new state and its derivative.
    fn step(
        &mut self,
        traj: &Trajectory,
        n: usize,
        k1: (f64, f64),
    ) -> std::result::Result<((f64, f64), (f64, f64)), StageFailure> {
        let h = traj.dt;
        let t0 = traj.time(n);
        let tm = t0 + 0.5 * h;
        let t1 = traj.time(n + 1);
        let y0 = (traj.x[n], traj.y[n]);
        let ax = |k: (f64, f64), c: f64| (y0.0 + c * k.0, y0.1 + c * k.1);

        let s2 = ax(k1, 0.5 * h);
        let k2 = self.deriv(traj, t0, y0, tm, s2)?;
        let s3 = ax(k2, 0.5 * h);
        let k3 = self.deriv(traj, t0, y0, tm, s3)?;
        let s4 = ax(k3, h);
        let k4 = self.deriv(traj, t0, y0, t1, s4)?;
        let y1 = (
            y0.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y0.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        let d1 = self.deriv(traj, t0, y0, t1, y1)?;
        Ok((y1, d1))
    }
}

fn within(p: (f64, f64), threshold: f64) -> bool {
    p.0.is_finite() && p.1.is_finite() && p.0.abs().max(p.1.abs()) <= threshold
}

/// Integrates `spec` on `[0, horizon]`.
///
/// A step whose stages leave `[-threshold, threshold]` (or overflow) is
/// rejected and the run ends with `BlowUpAt` the last accepted time.
pub fn integrate(spec: &SystemSpec, opts: &IntegratorOptions) -> Result<(Trajectory, RunOutcome)> {
    if !(opts.dt > 0.0) || !(opts.horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt and horizon must be positive (got {}, {})",
            opts.dt, opts.horizon
        )));
    }
    let steps = (opts.horizon / opts.dt).round().max(1.0) as usize;
    let mut traj = Trajectory::new(opts.dt, spec.phi.clone(), spec.psi.clone());
    traj.x.reserve(steps + 1);
    traj.y.reserve(steps + 1);
    traj.dx.reserve(steps + 1);
    traj.dy.reserve(steps + 1);

    let x0 = spec.phi.value_at_zero()?;
    let y0 = spec.psi.value_at_zero()?;
    let mut stepper = Stepper {
        spec,
        threshold: opts.blowup_threshold,
        residual: 0.0,
    };

    let window = match opts.convergence_window {
        Some(w) => w,
        None => {
            let (_, max_span) = spec.delay_span_range(opts.horizon, 257)?;
            (10.0 * max_span).max(1.0)
        }
    };
    let window_steps = ((window / opts.dt).ceil() as usize).max(1);
    let check_every = (window_steps / 20).max(1);

    let finish = |traj: Trajectory, status: RunStatus, n: usize, residual: f64| {
        let outcome = RunOutcome {
            status,
            final_time: traj.time(n),
            final_state: traj.final_state(),
            steps: n,
            max_quadrature_residual: residual,
        };
        Ok((traj, outcome))
    };

    // The derivative at t = 0 sees only the initial functions.
    let d0 = {
        let (d, res) = spec.rhs_with_residual(0.0, x0, y0, &traj)?;
        stepper.residual = res;
        d
    };
    traj.push(x0, y0, d0.0, d0.1);
    if !within((x0, y0), opts.blowup_threshold) || !(d0.0.is_finite() && d0.1.is_finite()) {
        let r = stepper.residual;
        return finish(traj, RunStatus::BlowUpAt { t: 0.0 }, 0, r);
    }

    let mut k1 = d0;
    for n in 0..steps {
        let ((x1, y1), d1) = match stepper.step(&traj, n, k1) {
            Ok(v) => v,
            Err(StageFailure::BlowUp) => {
                let t = traj.time(n);
                let r = stepper.residual;
                return finish(traj, RunStatus::BlowUpAt { t }, n, r);
            }
            Err(StageFailure::Hard(Error::Eval(e))) => {
                return Err(Error::StepDivergence {
                    t: traj.time(n),
                    reason: e.to_string(),
                })
            }
            Err(StageFailure::Hard(e)) => return Err(e),
        };
        traj.push(x1, y1, d1.0, d1.1);
        k1 = d1;
        let m = n + 1;

        if opts.detect_extinction && x1.abs().max(y1.abs()) < opts.extinction_threshold {
            let t = traj.time(m);
            let r = stepper.residual;
            return finish(traj, RunStatus::ExtinctBy { t }, m, r);
        }
        if opts.detect_convergence
            && m >= window_steps
            && m % check_every == 0
            && settled(&traj, m, window_steps, opts.convergence_tol)
        {
            let r = stepper.residual;
            return finish(traj, RunStatus::ConvergedTo { x: x1, y: y1 }, m, r);
        }
    }
    let r = stepper.residual;
    finish(traj, RunStatus::ReachedHorizon, steps, r)
}

fn settled(traj: &Trajectory, m: usize, window_steps: usize, tol: f64) -> bool {
    let (xm, ym) = (traj.x[m], traj.y[m]);
    let sx = xm.abs().max(f64::MIN_POSITIVE);
    let sy = ym.abs().max(f64::MIN_POSITIVE);
    (m - window_steps..m).all(|i| (traj.x[i] - xm).abs() / sx < tol && (traj.y[i] - ym).abs() / sy < tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
}

pub const NONOSCILLATION_TOL: f64 = 1e-9;

/// First node time where the solution crosses `(k, f2k)` against `side`.
pub fn detect_nonoscillation_violation(traj: &Trajectory, k: f64, f2k: f64, side: Side) -> Option<f64> {
    traj.nodes().find_map(|(t, x, y)| {
        let bad = match side {
            Side::Above => x < k - NONOSCILLATION_TOL || y < f2k - NONOSCILLATION_TOL,
            Side::Below => x > k + NONOSCILLATION_TOL || y > f2k + NONOSCILLATION_TOL,
        };
        bad.then_some(t)
    })
}

/// First node at or after `from_t` outside `[lo.0, hi.0] x [lo.1, hi.1]` widened by `tol`.
pub fn first_box_exit(
    traj: &Trajectory,
    lo: (f64, f64),
    hi: (f64, f64),
    from_t: f64,
    tol: f64,
) -> Option<(f64, f64, f64)> {
    traj.nodes()
        .filter(|&(t, _, _)| t >= from_t)
        .find(|&(_, x, y)| x < lo.0 - tol || x > hi.0 + tol || y < lo.1 - tol || y > hi.1 + tol)
}

/// CSV with header `t,x,y`; every `stride`-th node plus the last one.
pub fn write_csv<W: Write>(traj: &Trajectory, mut out: W, stride: usize) -> io::Result<()> {
    let stride = stride.max(1);
    writeln!(out, "t,x,y")?;
    let last = traj.len().saturating_sub(1);
    for n in 0..traj.len() {
        if n % stride == 0 || n == last {
            let (t, x, y) = traj.node(n);
            writeln!(out, "{t:.16e},{x:.16e},{y:.16e}")?;
        }
    }
    Ok(())
}
