//! CSV and text writers. Number formatting never depends on locale.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use servo_smc::metrics::{ComparisonTable, Metric, MetricSet};
use servo_smc::sim::RunRecord;
use servo_smc::stability::StabilityReport;

const SIG_DIGITS: i32 = 9;

pub const TRACE_HEADER: [&str; 13] = [
    "t",
    "r",
    "y",
    "e",
    "e_dot",
    "s",
    "u_pid",
    "u_smc",
    "u_cmd",
    "u_applied",
    "V",
    "V_dot",
    "d_out",
];

const METRIC_HEADER: [&str; 9] = [
    "overshoot_pct",
    "settling_time",
    "rise_time",
    "steady_state_error",
    "steady_state_error_pct",
    "iae",
    "ise",
    "itae",
    "control_tv",
];

/// Nine significant digits, shortest form, like C's `%.9g`. Negative zero
/// prints as `0`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (SIG_DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIG_DIGITS).contains(&exp) {
        trim(&format!("{:.*}", (SIG_DIGITS - 1 - exp) as usize, x)).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn metric_fields(m: &MetricSet) -> Vec<String> {
    vec![
        num(m.overshoot_pct),
        opt(m.settling_time),
        opt(m.rise_time),
        num(m.steady_state_error),
        num(m.steady_state_error_pct),
        num(m.iae),
        num(m.ise),
        num(m.itae),
        num(m.control_tv),
    ]
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_trace(path: &Path, run: &RunRecord) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &run.rows {
        let fields = [
            r.t,
            r.r,
            r.y,
            r.e,
            r.e_dot,
            r.s,
            r.u_pid,
            r.u_smc,
            r.u_cmd,
            r.u_applied,
            r.v,
            r.v_dot,
            r.d_out,
        ];
        w.write_record(fields.iter().map(|&v| num(v)))?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Empty settling or rise time means the run never got there.
pub fn write_metrics(path: &Path, m: &MetricSet) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(METRIC_HEADER)?;
    w.write_record(metric_fields(m))?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_stability(path: &Path, report: &StabilityReport) -> Result<()> {
    fs::write(path, report.to_string()).with_context(|| format!("writing {}", path.display()))
}

pub fn write_comparison(path: &Path, table: &ComparisonTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["label".to_string()];
    header.extend(METRIC_HEADER.iter().map(|s| s.to_string()));
    header.extend(Metric::ALL.iter().map(|m| format!("rank_{}", m.name())));
    w.write_record(&header)?;
    for row in &table.rows {
        let mut fields = vec![row.label.clone()];
        fields.extend(metric_fields(&row.metrics));
        fields.extend(row.ranks.iter().map(|r| r.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub struct SweepRow<'a> {
    pub value: f64,
    pub metrics: &'a MetricSet,
    pub stability: &'a StabilityReport,
}

pub fn write_sweep_summary(path: &Path, rows: &[SweepRow<'_>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "value",
        "overshoot_pct",
        "settling_time",
        "steady_state_error_pct",
        "iae",
        "itae",
        "control_tv",
        "delta_bound_est",
        "eta_min",
        "gain_condition_met",
    ])?;
    for row in rows {
        let m = row.metrics;
        w.write_record([
            num(row.value),
            num(m.overshoot_pct),
            opt(m.settling_time),
            num(m.steady_state_error_pct),
            num(m.iae),
            num(m.itae),
            num(m.control_tv),
            num(row.stability.delta_bound_est),
            num(row.stability.eta_min),
            row.stability.gain_condition_met.to_string(),
        ])?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Gnuplot script drawing speed and actuation for each trace file.
pub fn plot_script(traces: &[(String, String)]) -> String {
    let mut s = String::new();
    s.push_str("# gnuplot -persist plot.gp\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str("set multiplot layout 2,1\n");
    s.push_str("set ylabel 'speed (V)'\n");
    let first = &traces[0].1;
    let _ = write!(
        s,
        "plot '{first}' using 't':'r' with lines dashtype 2 title 'reference'"
    );
    for (label, file) in traces {
        let _ = write!(
            s,
            ", \\\n     '{file}' using 't':'y' with lines title '{label}'"
        );
    }
    s.push_str("\nset ylabel 'u_applied (V)'\nset xlabel 't (s)'\nplot ");
    let parts: Vec<String> = traces
        .iter()
        .map(|(label, file)| format!("'{file}' using 't':'u_applied' with lines title '{label}'"))
        .collect();
    s.push_str(&parts.join(", \\\n     "));
    s.push_str("\nunset multiplot\n");
    s
}
