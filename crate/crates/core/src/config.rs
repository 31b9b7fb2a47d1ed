//! TOML run configuration: `[system]`, `[numerics]`, `[outputs]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{InitialFunction, SystemSpec};
use crate::error::{Error, Result};
use crate::expr::{Expression, ParseError};
use crate::functions::{Modulation, ProductionFunction};
use crate::kernels::{DelayKernel, DEFAULT_PANELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub f1: String,
    pub f2: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub g1: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub g2: String,
    #[serde(default = "one")]
    pub r1: String,
    #[serde(default = "one")]
    pub r2: String,
    pub kernel1: KernelConfig,
    pub kernel2: KernelConfig,
    pub phi: String,
    pub psi: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub attest_unbounded_delay: bool,
}

fn one() -> String {
    "1".into()
}

// serde passes `&String` to `skip_serializing_if`.
#[allow(clippy::ptr_arg)]
fn is_one(s: &String) -> bool {
    s.trim() == "1"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelConfig {
    Point {
        lag: String,
    },
    Uniform {
        lag: String,
    },
    Triangular {
        lag: String,
    },
    Mixture {
        #[serde(default)]
        atoms: Vec<AtomConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        density: Option<DensityConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub lag: String,
    pub weight: f64,
}

/// Density over `[lag(t), t]` written in the age `a = t - s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub lag: String,
    pub shape: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_panels")]
    pub quad_panels: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default = "default_classify_tol")]
    pub classify_tol: f64,
    #[serde(default = "default_fate_tol")]
    pub fate_tol: f64,
    #[serde(default = "default_max_lag")]
    pub max_lag: f64,
}

fn default_horizon() -> f64 {
    100.0
}
fn default_panels() -> usize {
    DEFAULT_PANELS
}
fn default_alpha() -> f64 {
    crate::analysis::bounds::DEFAULT_ALPHA
}
fn default_slack() -> f64 {
    crate::analysis::bounds::DEFAULT_SLACK
}
fn default_classify_tol() -> f64 {
    crate::analysis::CLASSIFY_TOL
}
fn default_fate_tol() -> f64 {
    1e-3
}
fn default_max_lag() -> f64 {
    1e3
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            dt: None,
            horizon: default_horizon(),
            quad_panels: default_panels(),
            alpha: default_alpha(),
            slack: default_slack(),
            x_max: None,
            classify_tol: default_classify_tol(),
            fate_tol: default_fate_tol(),
            max_lag: default_max_lag(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_trajectory() -> String {
    "trajectory.csv".into()
}
fn default_report() -> String {
    "report.json".into()
}
fn default_stride() -> usize {
    crate::integrator::DEFAULT_STRIDE
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            trajectory: default_trajectory(),
            report: default_report(),
            stride: default_stride(),
        }
    }
}

fn keyed(key: &str) -> impl Fn(ParseError) -> Error + '_ {
    move |e| Error::validation(key, e.to_string())
}

fn production(src: &str, key: &str) -> Result<ProductionFunction> {
    Ok(ProductionFunction::from_expression(
        Expression::parse(src).map_err(keyed(key))?,
    ))
}

fn in_t(src: &str, key: &str) -> Result<Expression> {
    Expression::parse_in(src, "t").map_err(keyed(key))
}

impl KernelConfig {
    pub fn build(&self, key: &str) -> Result<DelayKernel> {
        let wrap = |e: Error| match e {
            Error::Parse(p) => Error::validation(key, p.to_string()),
            other => Error::validation(key, other.to_string()),
        };
        match self {
            KernelConfig::Point { lag } => DelayKernel::point_mass(lag).map_err(wrap),
            KernelConfig::Uniform { lag } => DelayKernel::uniform(lag).map_err(wrap),
            KernelConfig::Triangular { lag } => DelayKernel::triangular(lag).map_err(wrap),
            KernelConfig::Mixture { atoms, density } => {
                let atoms: Vec<(&str, f64)> = atoms.iter().map(|a| (a.lag.as_str(), a.weight)).collect();
                let density = density.as_ref().map(|d| (d.lag.as_str(), d.shape.as_str()));
                DelayKernel::mixture(&atoms, density).map_err(wrap)
            }
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = e
                .span()
                .map(|s| format!("config (bytes {}..{})", s.start, s.end))
                .unwrap_or_else(|| "config".into());
            Error::validation(key, msg)
        })?;
        cfg.check_numerics()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check_numerics(&self) -> Result<()> {
        let n = &self.numerics;
        let positive = |v: f64, key: &str| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(
                    key,
                    format!("must be a positive finite number, got {v}"),
                ))
            }
        };
        if let Some(dt) = n.dt {
            positive(dt, "numerics.dt")?;
        }
        positive(n.horizon, "numerics.horizon")?;
        if let Some(x) = n.x_max {
            positive(x, "numerics.x_max")?;
        }
        positive(n.classify_tol, "numerics.classify_tol")?;
        positive(n.fate_tol, "numerics.fate_tol")?;
        positive(n.max_lag, "numerics.max_lag")?;
        if n.quad_panels == 0 {
            return Err(Error::validation("numerics.quad_panels", "must be at least 1"));
        }
        if !(n.alpha > 0.0 && n.alpha < 1.0) {
            return Err(Error::validation(
                "numerics.alpha",
                format!("must lie in (0, 1), got {}", n.alpha),
            ));
        }
        if !(n.slack > 0.0 && n.slack < 1.0) {
            return Err(Error::validation(
                "numerics.slack",
                format!("must lie in (0, 1), got {}", n.slack),
            ));
        }
        if self.outputs.stride == 0 {
            return Err(Error::validation("outputs.stride", "must be at least 1"));
        }
        Ok(())
    }

    /// Parses every expression; assumption checks happen in [`SystemSpec::validate`].
    pub fn build_spec(&self) -> Result<SystemSpec> {
        let s = &self.system;
        let spec = SystemSpec::new(
            production(&s.f1, "system.f1")?,
            production(&s.f2, "system.f2")?,
            s.kernel1.build("system.kernel1")?,
            s.kernel2.build("system.kernel2")?,
            InitialFunction::parse(&s.phi).map_err(|e| rekey(e, "system.phi"))?,
            InitialFunction::parse(&s.psi).map_err(|e| rekey(e, "system.psi"))?,
        )
        .with_rates(in_t(&s.r1, "system.r1")?, in_t(&s.r2, "system.r2")?)
        .with_modulation(
            Modulation::new(Expression::parse(&s.g1).map_err(keyed("system.g1"))?),
            Modulation::new(Expression::parse(&s.g2).map_err(keyed("system.g2"))?),
        )
        .with_quad_panels(self.numerics.quad_panels);
        Ok(spec)
    }
}

fn rekey(e: Error, key: &str) -> Error {
    match e {
        Error::Parse(p) => Error::validation(key, p.to_string()),
        other => other,
    }
}
