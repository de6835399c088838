//! Browser bindings for the servo-smc simulator.
//!
//! Every export returns a JSON string so the page needs no generated
//! TypeScript types. The `*_json` functions are plain Rust and are what the
//! native tests exercise.

use serde_json::{json, Value};
use servo_smc::controllers::{sat, sign, ControlLaw, Switching};
use servo_smc::metrics::{self, Metric, DEFAULT_BAND};
use servo_smc::sim::{run, RunRecord, Scenario};
use servo_smc::stability;
use wasm_bindgen::prelude::*;

const PRESETS: [&str; 3] = ["smcpid", "kuhn", "naive"];

fn scenario(profile: &str) -> Result<Scenario, String> {
    match profile {
        "step" => Ok(Scenario::step_400()),
        "varying" => Ok(Scenario::varying()),
        other => Err(format!("unknown profile `{other}` (valid: step, varying)")),
    }
}

fn trace(rec: &RunRecord) -> Value {
    json!({
        "t": rec.column(|r| r.t),
        "r": rec.column(|r| r.r),
        "y": rec.column(|r| r.y),
        "u_applied": rec.column(|r| r.u_applied),
        "u_smc": rec.column(|r| r.u_smc),
        "s": rec.column(|r| r.s),
    })
}

/// Knobs the page exposes for a single run.
#[derive(Debug, Clone, Copy)]
pub struct Knobs {
    pub eta: f64,
    pub phi: f64,
    pub d_gain: f64,
    pub d_tau: f64,
    pub sign_switching: bool,
}

/// One SMC-PID run with its trace, metrics and stability report.
pub fn simulate_json(profile: &str, knobs: Knobs) -> Result<String, String> {
    let mut sc = scenario(profile)?;
    sc.perturbation.gain = knobs.d_gain;
    sc.perturbation.time_constant = knobs.d_tau;
    if let ControlLaw::SmcPid { smc, switching, .. } = &mut sc.controller.law {
        smc.eta = knobs.eta;
        smc.phi = knobs.phi;
        *switching = if knobs.sign_switching {
            Switching::Sign
        } else {
            Switching::Sat
        };
    }
    let rec = run(&sc).map_err(|e| e.to_string())?;
    let m = metrics::evaluate(&rec, DEFAULT_BAND).map_err(|e| e.to_string())?;
    let report = stability::analyze(&rec, sc.input_gain()).map_err(|e| e.to_string())?;
    let out = json!({ "trace": trace(&rec), "metrics": m, "stability": report });
    Ok(out.to_string())
}

/// All three presets on one profile, with metric ranks.
pub fn compare_json(profile: &str) -> Result<String, String> {
    let base = scenario(profile)?;
    let runs = PRESETS
        .iter()
        .map(|p| {
            let sc = base.clone().with_preset(p)?;
            Ok((p.to_string(), run(&sc)?))
        })
        .collect::<servo_smc::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let table = metrics::compare(&runs, DEFAULT_BAND).map_err(|e| e.to_string())?;
    let rows: Vec<Value> = table
        .rows
        .iter()
        .zip(&runs)
        .map(|(row, (_, rec))| {
            let ranks: serde_json::Map<String, Value> = Metric::ALL
                .iter()
                .map(|m| (m.name().to_string(), json!(row.rank(*m))))
                .collect();
            json!({ "label": row.label, "metrics": row.metrics, "ranks": ranks, "trace": trace(rec) })
        })
        .collect();
    Ok(json!({ "rows": rows }).to_string())
}

/// `u_smc = −η·sat(s/φ)` and its hard-sign counterpart over `s ∈ [−s_max, s_max]`.
pub fn switching_curve_json(
    eta: f64,
    phi: f64,
    s_max: f64,
    points: usize,
) -> Result<String, String> {
    if !(eta >= 0.0 && phi > 0.0 && s_max > 0.0 && points >= 2) {
        return Err("need eta >= 0, phi > 0, s_max > 0 and at least 2 points".into());
    }
    let s: Vec<f64> = (0..points)
        .map(|i| -s_max + 2.0 * s_max * i as f64 / (points - 1) as f64)
        .collect();
    let sat_u: Vec<f64> = s.iter().map(|&x| -eta * sat(x / phi)).collect();
    let sign_u: Vec<f64> = s.iter().map(|&x| -eta * sign(x)).collect();
    Ok(json!({ "s": s, "sat": sat_u, "sign": sign_u }).to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(
    profile: &str,
    eta: f64,
    phi: f64,
    d_gain: f64,
    d_tau: f64,
    sign_switching: bool,
) -> Result<String, JsError> {
    js(simulate_json(
        profile,
        Knobs {
            eta,
            phi,
            d_gain,
            d_tau,
            sign_switching,
        },
    ))
}

#[wasm_bindgen]
pub fn compare(profile: &str) -> Result<String, JsError> {
    js(compare_json(profile))
}

#[wasm_bindgen]
pub fn switching_curve(eta: f64, phi: f64, s_max: f64, points: usize) -> Result<String, JsError> {
    js(switching_curve_json(eta, phi, s_max, points))
}
