//! wasm-bindgen entry points for the static page in `www/`.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic so
//! they can be exercised natively.

use coopdelay::analysis::{classify as classify_pair, delta, CLASSIFY_TOL};
use coopdelay::config::RunConfig;
use coopdelay::functions::{ProductionFunction, DEFAULT_GRID};
use coopdelay::pipeline::{classify_config, run_config};
use coopdelay::presets::{preset_config, CATALOG};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub const CURVE_POINTS: usize = 201;

fn certified(src: &str, key: &str, x_max: f64) -> Result<ProductionFunction, String> {
    ProductionFunction::parse(src)
        .map_err(|e| format!("{key}: {e}"))?
        .certified(x_max, DEFAULT_GRID)
        .map_err(|e| format!("{key}: {e}"))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Relation class, predicted fate, and `f2`, `f1^{-1}` sampled on `[0, x_max]`.
pub fn classify_json(f1: &str, f2: &str, x_max: f64) -> Result<String, String> {
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(format!("x_max must be positive, got {x_max}"));
    }
    let f1 = certified(f1, "f1", x_max)?;
    let f2 = certified(f2, "f2", x_max)?;
    let cls = classify_pair(&f1, &f2, x_max, CLASSIFY_TOL).map_err(|e| e.to_string())?;
    let mut xs = Vec::with_capacity(CURVE_POINTS);
    let mut f2s = Vec::with_capacity(CURVE_POINTS);
    let mut invs = Vec::with_capacity(CURVE_POINTS);
    for i in 0..CURVE_POINTS {
        let x = x_max * i as f64 / (CURVE_POINTS - 1) as f64;
        let y = f2.eval(x).map_err(|e| e.to_string())?;
        let d = delta(&f1, &f2, x, x_max).map_err(|e| e.to_string())?;
        xs.push(json!(x));
        f2s.push(finite_or_null(y));
        invs.push(finite_or_null(y - d));
    }
    Ok(json!({ "classification": cls, "x": xs, "f2": f2s, "f1_inv": invs }).to_string())
}

/// Full run of a TOML config; the trajectory is thinned to at most `max_points` nodes.
pub fn simulate_json(config_toml: &str, max_points: usize) -> Result<String, String> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(|e| e.to_string())?;
    let res = run_config(&cfg).map_err(|e| e.to_string())?;
    let n = res.trajectory.len();
    let stride = n.div_ceil(max_points.max(2)).max(1);
    let (mut t, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (i, (ti, xi, yi)) in res.trajectory.nodes().enumerate() {
        if i % stride == 0 || i + 1 == n {
            t.push(ti);
            x.push(finite_or_null(xi));
            y.push(finite_or_null(yi));
        }
    }
    Ok(json!({ "report": res.report, "t": t, "x": x, "y": y }).to_string())
}

/// Permanence box and bound sequences for a config, without integrating.
pub fn bounds_json(config_toml: &str) -> Result<String, String> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(|e| e.to_string())?;
    let rep = classify_config(&cfg).map_err(|e| e.to_string())?;
    Ok(json!({
        "fate": rep.fate,
        "K": rep.k,
        "permanence_box": rep.permanence_box,
        "permanence_box_note": rep.permanence_box_note,
        "certificates": rep.certificates,
    })
    .to_string())
}

pub fn preset_toml(name: &str) -> Result<String, String> {
    preset_config(name, &[])
        .map(|c| c.to_toml_string())
        .map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn classify(f1: &str, f2: &str, x_max: f64) -> Result<String, JsError> {
    js(classify_json(f1, f2, x_max))
}

#[wasm_bindgen]
pub fn simulate(config_toml: &str, max_points: usize) -> Result<String, JsError> {
    js(simulate_json(config_toml, max_points))
}

#[wasm_bindgen]
pub fn bounds(config_toml: &str) -> Result<String, JsError> {
    js(bounds_json(config_toml))
}

#[wasm_bindgen]
pub fn preset(name: &str) -> Result<String, JsError> {
    js(preset_toml(name))
}

#[wasm_bindgen]
pub fn preset_names() -> String {
    json!(CATALOG.iter().map(|p| p.name).collect::<Vec<_>>()).to_string()
}
