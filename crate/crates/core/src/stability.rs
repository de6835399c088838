//! Trajectory-level Lyapunov monitor for the sliding surface.
//!
//! With `V = s²/2` the reaching argument needs `V̇ = s·ṡ < 0` whenever the
//! state is outside the boundary layer, which is guaranteed when the
//! switching gain satisfies `η > δ/(λ2·b)` for a bound `δ ≥ |Δ(t)|` on the
//! lumped term
//!
//! ```text
//! Δ = ṡ + λ2·b·η·sat(s/φ) = ṡ − λ2·b·u_smc
//! ```
//!
//! The monitor never needs the unknown closed-loop dynamics: ṡ is the
//! backward difference of the logged surface, Δ is reconstructed from it,
//! and δ is the largest |Δ| seen on the run. Results describe what happened
//! on one trajectory; they are not a proof.

use std::fmt;

use serde::Serialize;

use crate::controllers::SmcGains;
use crate::sim::RunRecord;
use crate::{Error, Result};

/// `V(s) = s²/2`.
pub fn lyapunov_v(s: f64) -> f64 {
    0.5 * s * s
}

/// Backward difference `(s_k − s_{k−1})/dt` for `k ≥ 1`; one element
/// shorter than the input.
pub fn backward_difference(s: &[f64], dt: f64) -> Result<Vec<f64>> {
    if s.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: s.len(),
        });
    }
    Ok(s.windows(2).map(|w| (w[1] - w[0]) / dt).collect())
}

/// ṡ over the controller ticks of a run, starting at the second row.
pub fn s_dot_series(run: &RunRecord) -> Result<Vec<f64>> {
    backward_difference(&run.column(|r| r.s), run.dt())
}

/// The sliding-mode gains a run was produced with, or the preset surface
/// with η = 0 for laws that have no sliding-mode term.
fn run_smc(run: &RunRecord) -> SmcGains {
    run.scenario
        .controller
        .law
        .smc()
        .copied()
        .unwrap_or(SmcGains {
            eta: 0.0,
            ..SmcGains::PRESET
        })
}

/// Reconstructed Δ_k for `k ≥ 1`, aligned with [`s_dot_series`].
pub fn delta_series(run: &RunRecord, b: f64) -> Result<Vec<f64>> {
    let s_dot = s_dot_series(run)?;
    let lambda2 = run_smc(run).lambda2;
    Ok(s_dot
        .iter()
        .zip(&run.rows[1..])
        .map(|(sd, row)| sd - lambda2 * b * row.u_smc)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainCondition {
    /// `δ/(λ2·b)`.
    pub eta_min: f64,
    pub met: bool,
}

pub fn check_gain_condition(delta_bound: f64, smc: &SmcGains, b: f64) -> Result<GainCondition> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::invalid("b", "must be finite and > 0"));
    }
    if !(delta_bound.is_finite() && delta_bound >= 0.0) {
        return Err(Error::invalid("delta_bound", "must be finite and >= 0"));
    }
    let eta_min = delta_bound / (smc.lambda2 * b);
    Ok(GainCondition {
        eta_min,
        met: smc.eta > eta_min,
    })
}

/// Outcome of the decrease check outside the boundary layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecreaseCheck {
    /// Rows with `|s| > φ` and a defined ṡ.
    pub qualifying_steps: usize,
    /// Qualifying rows where `V̇ ≥ 0`.
    pub violation_rows: Vec<usize>,
    /// Smallest `−V̇/|s|` over qualifying rows.
    pub epsilon_est: Option<f64>,
}

impl DecreaseCheck {
    pub fn violations(&self) -> usize {
        self.violation_rows.len()
    }

    /// Violations at rows strictly after `row`.
    pub fn violations_after(&self, row: usize) -> usize {
        self.violation_rows.iter().filter(|&&r| r > row).count()
    }
}

pub fn check_decrease(run: &RunRecord, phi: f64) -> Result<DecreaseCheck> {
    let s_dot = s_dot_series(run)?;
    let mut out = DecreaseCheck {
        qualifying_steps: 0,
        violation_rows: Vec::new(),
        epsilon_est: None,
    };
    for (k, sd) in s_dot.iter().enumerate().map(|(i, sd)| (i + 1, sd)) {
        let s = run.rows[k].s;
        if s.abs() <= phi {
            continue;
        }
        out.qualifying_steps += 1;
        let v_dot = s * sd;
        if v_dot >= 0.0 {
            out.violation_rows.push(k);
        }
        let margin = -v_dot / s.abs();
        out.epsilon_est = Some(out.epsilon_est.map_or(margin, |m: f64| m.min(margin)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// max |Δ_k| over the run.
    pub delta_bound_est: f64,
    pub eta: f64,
    pub eta_min: f64,
    pub gain_condition_met: bool,
    pub phi: f64,
    pub qualifying_steps: usize,
    pub decrease_violations: usize,
    pub violation_rows: Vec<usize>,
    pub epsilon_est: Option<f64>,
    pub b_used: f64,
}

/// Full monitor pass over a run with input gain `b`.
pub fn analyze(run: &RunRecord, b: f64) -> Result<StabilityReport> {
    let smc = run_smc(run);
    let delta = delta_series(run, b)?;
    let delta_bound_est = delta.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
    let gain = check_gain_condition(delta_bound_est, &smc, b)?;
    let dec = check_decrease(run, smc.phi)?;
    Ok(StabilityReport {
        delta_bound_est,
        eta: smc.eta,
        eta_min: gain.eta_min,
        gain_condition_met: gain.met,
        phi: smc.phi,
        qualifying_steps: dec.qualifying_steps,
        decrease_violations: dec.violations(),
        violation_rows: dec.violation_rows,
        epsilon_est: dec.epsilon_est,
        b_used: b,
    })
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "b_used = {}", self.b_used)?;
        writeln!(f, "delta_bound_est = {}", self.delta_bound_est)?;
        writeln!(f, "eta = {}", self.eta)?;
        writeln!(f, "eta_min = {}", self.eta_min)?;
        writeln!(f, "gain_condition_met = {}", self.gain_condition_met)?;
        writeln!(f, "phi = {}", self.phi)?;
        writeln!(f, "qualifying_steps = {}", self.qualifying_steps)?;
        writeln!(f, "decrease_violations = {}", self.decrease_violations)?;
        match self.violation_rows.first() {
            Some(r) => writeln!(f, "first_violation_row = {r}")?,
            None => writeln!(f, "first_violation_row = none")?,
        }
        match self.epsilon_est {
            Some(e) => writeln!(f, "epsilon_est = {e}"),
            None => writeln!(f, "epsilon_est = none"),
        }
    }
}
