//! Step-response metrics and controller comparison tables.
//!
//! Overshoot and the settling band are taken relative to the step size, so
//! steps that start from a nonzero level are handled the same way as steps
//! from rest. Error integrals use the rectangular rule on the controller
//! grid, starting at the step. ITAE weights by absolute run time.

use std::collections::HashSet;

use serde::Serialize;

use crate::sim::{Row, RunRecord};
use crate::{Error, Result};

pub const DEFAULT_BAND: f64 = 0.02;
/// Fraction of the run, at its end, used for the steady-state error.
pub const STEADY_STATE_WINDOW: f64 = 0.1;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSet {
    pub overshoot_pct: f64,
    /// `None` when the output is still outside the band at the end.
    pub settling_time: Option<f64>,
    pub rise_time: Option<f64>,
    /// Mean |e| over the final 10% of the run, volts.
    pub steady_state_error: f64,
    pub steady_state_error_pct: f64,
    pub iae: f64,
    pub ise: f64,
    pub itae: f64,
    /// Total variation of the applied actuation.
    pub control_tv: f64,
}

/// Transient figures of one step inside a window of rows.
struct StepTransient {
    overshoot_pct: f64,
    settling_time: Option<f64>,
    rise_time: Option<f64>,
}

fn check_band(band: f64) -> Result<()> {
    if band.is_finite() && band > 0.0 && band < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("band", "must be in (0, 1)"))
    }
}

fn step_transient(
    window: &[Row],
    r_initial: f64,
    step_time: f64,
    band: f64,
) -> Result<StepTransient> {
    let last = window
        .last()
        .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let r_final = last.r;
    let size = r_final - r_initial;
    if size.abs() <= f64::EPSILON * r_final.abs().max(1.0) {
        return Err(Error::invalid(
            "reference",
            "zero step: overshoot is undefined",
        ));
    }
    let dir = size.signum();
    let peak = window
        .iter()
        .map(|r| dir * (r.y - r_final))
        .fold(f64::NEG_INFINITY, f64::max);
    let overshoot_pct = peak.max(0.0) / size.abs() * 100.0;

    let tol = band * size.abs();
    let settling_time = match window.iter().rposition(|r| (r.y - r_final).abs() > tol) {
        None => Some(0.0),
        Some(i) if i + 1 == window.len() => None,
        Some(i) => Some(window[i + 1].t - step_time),
    };

    let progress = |r: &Row| dir * (r.y - r_initial) / size.abs();
    let t10 = window.iter().find(|r| progress(r) >= 0.1).map(|r| r.t);
    let t90 = window.iter().find(|r| progress(r) >= 0.9).map(|r| r.t);
    let rise_time = t10.zip(t90).map(|(a, b)| b - a);

    Ok(StepTransient {
        overshoot_pct,
        settling_time,
        rise_time,
    })
}

fn first_index_at(rows: &[Row], t: f64) -> usize {
    rows.partition_point(|r| r.t < t - TIME_EPS)
}

/// Level before the step at `rows[idx]`: the previous reference sample, or
/// the initial output when the step opens the run.
fn initial_level(rows: &[Row], idx: usize) -> f64 {
    if idx > 0 {
        rows[idx - 1].r
    } else {
        rows[0].y
    }
}

/// Error integrals from `rows[from..]`, steady-state error and control TV.
fn finish(
    rows: &[Row],
    from: usize,
    dt: f64,
    r_final: f64,
    scale: f64,
    t: StepTransient,
) -> MetricSet {
    let tail = &rows[from..];
    let iae = tail.iter().map(|r| r.e.abs() * dt).sum();
    let ise = tail.iter().map(|r| r.e * r.e * dt).sum();
    let itae = tail.iter().map(|r| r.t * r.e.abs() * dt).sum();
    let n = ((rows.len() as f64 * STEADY_STATE_WINDOW).ceil() as usize).clamp(1, rows.len());
    let steady_state_error = rows[rows.len() - n..]
        .iter()
        .map(|r| r.e.abs())
        .sum::<f64>()
        / n as f64;
    let denom = if r_final != 0.0 { r_final.abs() } else { scale };
    let control_tv = rows
        .windows(2)
        .map(|w| (w[1].u_applied - w[0].u_applied).abs())
        .sum();
    MetricSet {
        overshoot_pct: t.overshoot_pct,
        settling_time: t.settling_time,
        rise_time: t.rise_time,
        steady_state_error,
        steady_state_error_pct: steady_state_error / denom * 100.0,
        iae,
        ise,
        itae,
        control_tv,
    }
}

/// Metrics for a single reference step at `step_time` on raw rows.
pub fn step_metrics_rows(rows: &[Row], dt: f64, step_time: f64, band: f64) -> Result<MetricSet> {
    check_band(band)?;
    let from = first_index_at(rows, step_time);
    if from >= rows.len() {
        return Err(Error::invalid(
            "step_time",
            "no samples at or after the step",
        ));
    }
    let r_initial = initial_level(rows, from);
    let transient = step_transient(&rows[from..], r_initial, step_time, band)?;
    let r_final = rows[rows.len() - 1].r;
    Ok(finish(
        rows,
        from,
        dt,
        r_final,
        (r_final - r_initial).abs(),
        transient,
    ))
}

pub fn step_metrics(run: &RunRecord, step_time: f64, band: f64) -> Result<MetricSet> {
    step_metrics_rows(&run.rows, run.dt(), step_time, band)
}

/// Metrics over every reference step of the run's profile.
///
/// Each step is judged inside its own window, up to the next step.
/// Overshoot and rise time are the worst over the steps and the settling
/// time is their sum (unsettled if any step fails to settle). Error
/// integrals run from the first step to the end. A profile without steps
/// (ramps and holds only) is judged as one transient from `t = 0` towards
/// the final reference.
pub fn evaluate(run: &RunRecord, band: f64) -> Result<MetricSet> {
    check_band(band)?;
    let times = run.scenario.reference.step_times();
    match times.len() {
        0 => step_metrics(run, 0.0, band),
        1 => step_metrics(run, times[0], band),
        _ => {
            let rows = &run.rows;
            let starts: Vec<usize> = times.iter().map(|&t| first_index_at(rows, t)).collect();
            let mut agg = StepTransient {
                overshoot_pct: 0.0,
                settling_time: Some(0.0),
                rise_time: Some(0.0),
            };
            for (i, &from) in starts.iter().enumerate() {
                let to = starts.get(i + 1).copied().unwrap_or(rows.len());
                if from >= to {
                    continue;
                }
                let t = step_transient(&rows[from..to], initial_level(rows, from), times[i], band)?;
                agg.overshoot_pct = agg.overshoot_pct.max(t.overshoot_pct);
                agg.settling_time = agg.settling_time.zip(t.settling_time).map(|(a, b)| a + b);
                agg.rise_time = agg.rise_time.zip(t.rise_time).map(|(a, b)| a.max(b));
            }
            let r_final = rows[rows.len() - 1].r;
            let scale = (r_final - initial_level(rows, starts[0])).abs();
            Ok(finish(rows, starts[0], run.dt(), r_final, scale, agg))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Metric {
    Overshoot,
    SettlingTime,
    RiseTime,
    SteadyStateError,
    Iae,
    Ise,
    Itae,
    ControlTv,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Self::Overshoot,
        Self::SettlingTime,
        Self::RiseTime,
        Self::SteadyStateError,
        Self::Iae,
        Self::Ise,
        Self::Itae,
        Self::ControlTv,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Overshoot => "overshoot_pct",
            Self::SettlingTime => "settling_time",
            Self::RiseTime => "rise_time",
            Self::SteadyStateError => "sse",
            Self::Iae => "iae",
            Self::Ise => "ise",
            Self::Itae => "itae",
            Self::ControlTv => "control_tv",
        }
    }

    /// Value used for ranking; a missing time ranks as infinitely slow.
    pub fn value(&self, m: &MetricSet) -> f64 {
        match self {
            Self::Overshoot => m.overshoot_pct,
            Self::SettlingTime => m.settling_time.unwrap_or(f64::INFINITY),
            Self::RiseTime => m.rise_time.unwrap_or(f64::INFINITY),
            Self::SteadyStateError => m.steady_state_error,
            Self::Iae => m.iae,
            Self::Ise => m.ise,
            Self::Itae => m.itae,
            Self::ControlTv => m.control_tv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub metrics: MetricSet,
    /// Rank per entry of [`Metric::ALL`], 1 = best, ties share a rank.
    pub ranks: Vec<usize>,
}

impl ComparisonRow {
    pub fn rank(&self, metric: Metric) -> usize {
        let i = Metric::ALL
            .iter()
            .position(|m| *m == metric)
            .expect("metric listed");
        self.ranks[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// One metric row per labelled run, ranked per metric (lower is better).
pub fn compare(runs: &[(String, RunRecord)], band: f64) -> Result<ComparisonTable> {
    let mut seen = HashSet::new();
    for (label, _) in runs {
        if !seen.insert(label.as_str()) {
            return Err(Error::invalid(
                "controllers",
                format!("duplicate label `{label}`"),
            ));
        }
    }
    if let Some((_, first)) = runs.first() {
        if let Some((label, _)) = runs
            .iter()
            .find(|(_, r)| !r.scenario.same_setup(&first.scenario))
        {
            return Err(Error::invalid(
                "controllers",
                format!("run `{label}` uses a different scenario"),
            ));
        }
    }
    let metrics = runs
        .iter()
        .map(|(_, r)| evaluate(r, band))
        .collect::<Result<Vec<_>>>()?;
    let rows = runs
        .iter()
        .zip(&metrics)
        .map(|((label, _), m)| ComparisonRow {
            label: label.clone(),
            metrics: *m,
            ranks: Metric::ALL
                .iter()
                .map(|metric| {
                    let mine = metric.value(m);
                    1 + metrics.iter().filter(|o| metric.value(o) < mine).count()
                })
                .collect(),
        })
        .collect();
    Ok(ComparisonTable { rows })
}
