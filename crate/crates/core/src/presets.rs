//! Named system families and the worked examples, emitted as ordinary configs.

use crate::config::{KernelConfig, NumericsConfig, OutputsConfig, RunConfig, SystemConfig};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub name: &'static str,
    pub default: f64,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct PresetInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: &'static [Param],
}

const fn p(name: &'static str, default: f64, doc: &'static str) -> Param {
    Param { name, default, doc }
}

const INIT: [Param; 2] = [p("phi", 1.0, "constant initial x"), p("psi", 1.0, "constant initial y")];

pub const CATALOG: &[PresetInfo] = &[
    PresetInfo {
        name: "tanh",
        summary: "x' = c1 tanh(y(t - tau1)) - mu1 x, y' = c2 tanh(x(t - tau2)) - mu2 y",
        params: &[
            p("c1", 2.0, "gain of the x equation"),
            p("c2", 2.0, "gain of the y equation"),
            p("mu1", 1.0, "decay of x"),
            p("mu2", 1.0, "decay of y"),
            p("tau1", 1.0, "delay seen by x"),
            p("tau2", 1.0, "delay seen by y"),
            p("phi", 0.5, "constant initial x"),
            p("psi", 0.5, "constant initial y"),
            p("horizon", 100.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "lotka-volterra",
        summary: "x' = x [A1 - a1 x + b1 y(t - tau)], y' = y [A2 - a2 y + b2 x(t - tau)]",
        params: &[
            p("A1", 1.0, "intrinsic growth of x"),
            p("A2", 1.0, "intrinsic growth of y"),
            p("a1", 2.0, "self-limitation of x"),
            p("a2", 2.0, "self-limitation of y"),
            p("b1", 1.0, "benefit of y to x"),
            p("b2", 1.0, "benefit of x to y"),
            p("tau", 1.0, "delay"),
            p("phi", 0.5, "constant initial x"),
            p("psi", 0.5, "constant initial y"),
            p("horizon", 60.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "gopalsamy",
        summary: "x' = x [(k1 + alpha1 y(t - tau)) / (1 + y(t - tau)) - x], symmetric in y; needs alpha_i > k_i",
        params: &[
            p("k1", 1.0, "baseline of the x response"),
            p("k2", 1.0, "baseline of the y response"),
            p("alpha1", 3.0, "saturation level of the x response"),
            p("alpha2", 3.0, "saturation level of the y response"),
            p("tau", 1.0, "delay"),
            p("phi", 0.5, "constant initial x"),
            p("psi", 0.5, "constant initial y"),
            p("horizon", 60.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "example1",
        summary: "delay-free x' = y^2 + y - x, y' = x^2 + x - y; blows up at t = 3 from 1/3",
        params: &[
            p("phi", 1.0 / 3.0, "constant initial x"),
            p("psi", 1.0 / 3.0, "constant initial y"),
            p("dt", 1e-4, "step"),
        ],
    },
    PresetInfo {
        name: "example2",
        summary: "delay-free x' = y/2 - x, y' = x/2 - y; decays like exp(-t/2)",
        params: &[
            INIT[0],
            INIT[1],
            p("dt", 1e-3, "step"),
            p("horizon", 30.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "example2a",
        summary: "uniform kernel on [t-1, t], f = 1 + x/2, rates 2 + sin t and 2 + cos t; converges to (2, 2)",
        params: &[
            p("phi", 5.0, "constant initial x"),
            p("psi", 5.0, "constant initial y"),
            p("horizon", 60.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "example2a-a5-fail",
        summary: "f = 1 + x/2 with integrable rate 2 / (exp(2t) + 0.5); stalls at (4, 4) from (5, 5)",
        params: &[
            p("phi", 5.0, "constant initial x"),
            p("psi", 5.0, "constant initial y"),
            p("horizon", 30.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "example3",
        summary: "uniform kernel of width h, f = x^2 + x; diverges",
        params: &[
            p("h", 1.0, "kernel width"),
            INIT[0],
            INIT[1],
            p("horizon", 20.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "example4",
        summary: "triangular kernel of width h, f1 = exp(x) - 1, f2 = ln(x + 1)/2; decays to zero",
        params: &[
            p("h", 0.5, "kernel width"),
            INIT[0],
            INIT[1],
            p("dt", 1e-2, "step"),
            p("horizon", 100.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "example5",
        summary: "G = x, f1 = sqrt(x) + 2, f2 = x with a point delay h; converges to (4, 4)",
        params: &[
            p("h", 1.0, "delay"),
            INIT[0],
            INIT[1],
            p("horizon", 100.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "example5-uniform",
        summary: "as example5 with the delay spread uniformly over [t-h, t]",
        params: &[
            p("h", 1.0, "kernel width"),
            INIT[0],
            INIT[1],
            p("horizon", 100.0, "simulation horizon"),
        ],
    },
    PresetInfo {
        name: "example5-triangular",
        summary: "as example5 with the triangular kernel of width h",
        params: &[
            p("h", 1.0, "kernel width"),
            INIT[0],
            INIT[1],
            p("horizon", 100.0, "simulation horizon"),
        ],
    },
];

pub fn find(name: &str) -> Option<&'static PresetInfo> {
    CATALOG.iter().find(|p| p.name == name)
}

struct Values<'a> {
    preset: &'a str,
    info: &'static PresetInfo,
    given: Vec<(String, f64)>,
}

impl Values<'_> {
    fn get(&self, name: &str) -> f64 {
        self.given
            .iter()
            .rev()
            .find(|(k, _)| k == name)
            .map(|&(_, v)| v)
            .or_else(|| self.info.params.iter().find(|p| p.name == name).map(|p| p.default))
            .expect("parameter declared in the catalog")
    }

    fn positive(&self, name: &str) -> Result<f64> {
        let v = self.get(name);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::validation(
                format!("preset.{}.{name}", self.preset),
                format!("must be positive, got {v}"),
            ))
        }
    }

    fn non_negative(&self, name: &str) -> Result<f64> {
        let v = self.get(name);
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::validation(
                format!("preset.{}.{name}", self.preset),
                format!("must be non-negative, got {v}"),
            ))
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn lag(delay: f64) -> String {
    if delay == 0.0 {
        "t".into()
    } else {
        format!("t-{}", num(delay))
    }
}

fn point(delay: f64) -> KernelConfig {
    KernelConfig::Point { lag: lag(delay) }
}

fn system(f1: String, f2: String, k1: KernelConfig, k2: KernelConfig, phi: f64, psi: f64) -> SystemConfig {
    SystemConfig {
        f1,
        f2,
        g1: "1".into(),
        g2: "1".into(),
        r1: "1".into(),
        r2: "1".into(),
        kernel1: k1,
        kernel2: k2,
        phi: num(phi),
        psi: num(psi),
        attest_unbounded_delay: false,
    }
}

/// Builds the config for `name`, with `params` overriding catalog defaults.
pub fn preset_config(name: &str, params: &[(String, f64)]) -> Result<RunConfig> {
    let info = find(name).ok_or_else(|| {
        let names: Vec<_> = CATALOG.iter().map(|p| p.name).collect();
        Error::validation(
            "preset",
            format!("unknown preset {name:?}; available: {}", names.join(", ")),
        )
    })?;
    for (k, _) in params {
        if !info.params.iter().any(|p| p.name == k) {
            let names: Vec<_> = info.params.iter().map(|p| p.name).collect();
            return Err(Error::validation(
                format!("preset.{name}.{k}"),
                format!("unknown parameter; {name} takes {}", names.join(", ")),
            ));
        }
    }
    let v = Values {
        preset: name,
        info,
        given: params.to_vec(),
    };
    let mut numerics = NumericsConfig::default();
    let has = |k: &str| info.params.iter().any(|p| p.name == k);
    if has("horizon") {
        numerics.horizon = v.positive("horizon")?;
    }
    if has("dt") {
        numerics.dt = Some(v.positive("dt")?);
    }
    let (phi, psi) = (v.positive("phi")?, v.positive("psi")?);

    let sys = match name {
        "tanh" => {
            let (c1, c2) = (v.positive("c1")?, v.positive("c2")?);
            let (mu1, mu2) = (v.positive("mu1")?, v.positive("mu2")?);
            let (tau1, tau2) = (v.non_negative("tau1")?, v.non_negative("tau2")?);
            SystemConfig {
                r1: num(mu1),
                r2: num(mu2),
                ..system(
                    format!("{}*tanh(x)", num(c1 / mu1)),
                    format!("{}*tanh(x)", num(c2 / mu2)),
                    point(tau1),
                    point(tau2),
                    phi,
                    psi,
                )
            }
        }
        "lotka-volterra" => {
            let (big_a1, big_a2) = (v.non_negative("A1")?, v.non_negative("A2")?);
            let (a1, a2) = (v.positive("a1")?, v.positive("a2")?);
            let (b1, b2) = (v.positive("b1")?, v.positive("b2")?);
            let tau = v.non_negative("tau")?;
            SystemConfig {
                g1: "x".into(),
                g2: "x".into(),
                r1: num(a1),
                r2: num(a2),
                ..system(
                    format!("({}+{}*x)/{}", num(big_a1), num(b1), num(a1)),
                    format!("({}+{}*x)/{}", num(big_a2), num(b2), num(a2)),
                    point(tau),
                    point(tau),
                    phi,
                    psi,
                )
            }
        }
        "gopalsamy" => {
            let (k1, k2) = (v.non_negative("k1")?, v.non_negative("k2")?);
            let (al1, al2) = (v.positive("alpha1")?, v.positive("alpha2")?);
            for (al, k, key) in [(al1, k1, "alpha1"), (al2, k2, "alpha2")] {
                if !(al > k) {
                    return Err(Error::validation(
                        format!("preset.gopalsamy.{key}"),
                        format!("alpha_i > k_i is required for an increasing response (got {al} <= {k})"),
                    ));
                }
            }
            let tau = v.non_negative("tau")?;
            SystemConfig {
                g1: "x".into(),
                g2: "x".into(),
                ..system(
                    format!("({}+{}*x)/(1+x)", num(k1), num(al1)),
                    format!("({}+{}*x)/(1+x)", num(k2), num(al2)),
                    point(tau),
                    point(tau),
                    phi,
                    psi,
                )
            }
        }
        "example1" => {
            numerics.horizon = 5.0;
            system("x^2+x".into(), "x^2+x".into(), point(0.0), point(0.0), phi, psi)
        }
        "example2" => system("x/2".into(), "x/2".into(), point(0.0), point(0.0), phi, psi),
        "example2a" => {
            let k = KernelConfig::Uniform { lag: "t-1".into() };
            SystemConfig {
                r1: "2+sin(t)".into(),
                r2: "2+cos(t)".into(),
                ..system("1+x/2".into(), "1+x/2".into(), k.clone(), k, phi, psi)
            }
        }
        "example2a-a5-fail" => {
            numerics.dt = Some(1e-3);
            SystemConfig {
                r1: "2/(exp(2*t)+0.5)".into(),
                r2: "2/(exp(2*t)+0.5)".into(),
                ..system("1+x/2".into(), "1+x/2".into(), point(0.0), point(0.0), phi, psi)
            }
        }
        "example3" => {
            let h = v.positive("h")?;
            let k = KernelConfig::Uniform { lag: lag(h) };
            system("x^2+x".into(), "x^2+x".into(), k.clone(), k, phi, psi)
        }
        "example4" => {
            let h = v.positive("h")?;
            let k = KernelConfig::Triangular { lag: lag(h) };
            system("exp(x)-1".into(), "ln(x+1)/2".into(), k.clone(), k, phi, psi)
        }
        "example5" | "example5-uniform" | "example5-triangular" => {
            let h = v.positive("h")?;
            let k = match name {
                "example5" => point(h),
                "example5-uniform" => KernelConfig::Uniform { lag: lag(h) },
                _ => KernelConfig::Triangular { lag: lag(h) },
            };
            SystemConfig {
                g1: "x".into(),
                g2: "x".into(),
                ..system("sqrt(x)+2".into(), "x".into(), k.clone(), k, phi, psi)
            }
        }
        _ => unreachable!("catalog and builder disagree on {name}"),
    };
    Ok(RunConfig {
        system: sys,
        numerics,
        outputs: OutputsConfig::default(),
    })
}

/// The preset's system after the same validation every config goes through.
pub fn instantiate_preset(name: &str, params: &[(String, f64)]) -> Result<SystemSpec> {
    let cfg = preset_config(name, params)?;
    let text = cfg.to_toml_string();
    let cfg = RunConfig::from_toml_str(&text)?;
    let mut spec = cfg.build_spec()?;
    let opts = crate::pipeline::validation_options(&cfg, &spec)?;
    spec.validate(&opts)?;
    Ok(spec)
}
