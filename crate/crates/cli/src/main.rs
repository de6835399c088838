mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use servo_smc::metrics::{self, DEFAULT_BAND};
use servo_smc::scenario_file::{emit_default, parse_scenario};
use servo_smc::sim::{self, RunRecord, Scenario, SweepAxis};
use servo_smc::stability;

use output::SweepRow;

/// Simulate SMC-PID and PID speed control of a dead-time servo plant.
#[derive(Parser)]
#[command(name = "servo-smc", version, arg_required_else_help = true)]
struct Cli {
    /// Print the default scenario file and exit.
    #[arg(long)]
    emit_default: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv, metrics.csv and stability.txt.
    Simulate(Common),
    /// Run the scenario once per controller preset and rank the results.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated presets, e.g. smcpid,kuhn,naive.
        #[arg(long, value_delimiter = ',', default_value = "smcpid,kuhn,naive")]
        controllers: Vec<String>,
    },
    /// Run the scenario for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter path, e.g. plant.dK or smc.eta.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). The built-in default scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Settling band as a fraction of the step size.
    #[arg(long, default_value_t = DEFAULT_BAND)]
    band: f64,
    /// Override the scenario's noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let mut sc = match &self.scenario {
            Some(path) => {
                let src = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parse_scenario(&src).with_context(|| format!("in {}", path.display()))?
            }
            None => Scenario::default(),
        };
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        Ok(sc)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn write_run(
    dir: &Path,
    run: &RunRecord,
    band: f64,
) -> Result<(metrics::MetricSet, stability::StabilityReport)> {
    // Trace first, so an undefined metric still leaves the data behind.
    output::write_trace(&dir.join("trace.csv"), run)?;
    let report = stability::analyze(run, run.scenario.input_gain())?;
    output::write_stability(&dir.join("stability.txt"), &report)?;
    let m = metrics::evaluate(run, band).context("metrics.csv not written")?;
    output::write_metrics(&dir.join("metrics.csv"), &m)?;
    Ok((m, report))
}

fn simulate(common: &Common) -> Result<()> {
    let sc = common.load()?;
    let out = common.out_dir()?;
    let run = sim::run(&sc)?;
    write_run(out, &run, common.band)?;
    Ok(())
}

fn compare(common: &Common, controllers: &[String]) -> Result<()> {
    let base = common.load()?;
    if controllers.is_empty() {
        bail!("--controllers is empty");
    }
    let scenarios = controllers
        .iter()
        .map(|name| base.clone().with_preset(name.trim()))
        .collect::<servo_smc::Result<Vec<_>>>()?;
    let runs = sim::run_all(&scenarios)?;
    let labelled: Vec<(String, RunRecord)> = controllers
        .iter()
        .map(|c| c.trim().to_string())
        .zip(runs)
        .collect();
    let table = metrics::compare(&labelled, common.band)?;

    let out = common.out_dir()?;
    let mut traces = Vec::new();
    for (label, run) in &labelled {
        let file = format!("trace_{label}.csv");
        output::write_trace(&out.join(&file), run)?;
        traces.push((label.clone(), file));
    }
    output::write_comparison(&out.join("comparison.csv"), &table)?;
    let script = output::plot_script(&traces);
    fs::write(out.join("plot.gp"), script).context("writing plot.gp")?;
    Ok(())
}

fn sweep(common: &Common, axis: &str, values: &[f64]) -> Result<()> {
    let base = common.load()?;
    let axis: SweepAxis = axis.parse().with_context(|| {
        let valid: Vec<&str> = SweepAxis::ALL.iter().map(|a| a.path()).collect();
        format!("valid axes: {}", valid.join(", "))
    })?;
    let runs = sim::sweep(&base, axis, values)?;
    let out = common.out_dir()?;
    let mut results = Vec::with_capacity(runs.len());
    for (i, (run, &value)) in runs.iter().zip(values).enumerate() {
        let dir = out.join(format!("{i:03}_{}={}", axis.path(), output::num(value)));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        results.push((value, write_run(&dir, run, common.band)?));
    }
    let rows: Vec<SweepRow<'_>> = results
        .iter()
        .map(|(value, (m, report))| SweepRow {
            value: *value,
            metrics: m,
            stability: report,
        })
        .collect();
    output::write_sweep_summary(&out.join("sweep_summary.csv"), &rows)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = if cli.emit_default {
        print!("{}", emit_default());
        Ok(())
    } else {
        match &cli.command {
            Some(Command::Simulate(common)) => simulate(common),
            Some(Command::Compare {
                common,
                controllers,
            }) => compare(common, controllers),
            Some(Command::Sweep {
                common,
                axis,
                values,
            }) => sweep(common, axis, values),
            None => Ok(()),
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
