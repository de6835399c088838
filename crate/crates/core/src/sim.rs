//! Closed-loop runs on a dual time grid.
//!
//! The controller samples the measured output every `dt_ctrl` and its
//! command is held (zero-order hold) while the plant sub-steps at
//! `dt_plant`. Each controller tick produces one [`Row`] in the
//! [`RunRecord`].

use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controllers::{ControlLaw, Controller, StepTrace};
use crate::plant::{Perturbation, PlantModel, PlantState};
use crate::stability::lyapunov_v;
use crate::{ensure_finite, Error, Result};

/// Controller sampling period, seconds.
pub const DEFAULT_DT_CTRL: f64 = 0.01;
pub const DEFAULT_DT_PLANT: f64 = 0.001;
pub const DEFAULT_DURATION: f64 = 5.0;
pub const STEP_SETPOINT_RPM: f64 = 400.0;

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    /// Jump to the target at the segment start.
    Step,
    /// Linear from the previous level to the target over the segment.
    Ramp,
    /// Keep the previous level; the target is ignored.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub kind: SegmentKind,
    pub target_rpm: f64,
}

impl Segment {
    pub fn step(start: f64, target_rpm: f64) -> Self {
        Self {
            start,
            kind: SegmentKind::Step,
            target_rpm,
        }
    }
}

/// Piecewise speed reference in RPM. An empty profile is zero everywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceProfile {
    pub segments: Vec<Segment>,
}

impl ReferenceProfile {
    pub fn constant(rpm: f64) -> Self {
        Self {
            segments: vec![Segment::step(0.0, rpm)],
        }
    }

    /// 400 RPM, down to 200 RPM at 4 s, up to 500 RPM at 8 s.
    pub fn varying() -> Self {
        Self {
            segments: vec![
                Segment::step(0.0, 400.0),
                Segment::step(4.0, 200.0),
                Segment::step(8.0, 500.0),
            ],
        }
    }

    pub fn validate(&self, duration: f64) -> Result<()> {
        let mut last = None;
        for (i, seg) in self.segments.iter().enumerate() {
            ensure_finite("reference start", seg.start)?;
            ensure_finite("reference target", seg.target_rpm)?;
            if i == 0 && seg.start != 0.0 {
                return Err(Error::invalid("reference", "first segment must start at 0"));
            }
            if let Some(prev) = last {
                if seg.start < prev {
                    return Err(Error::invalid(
                        "reference",
                        "segments must be sorted by start",
                    ));
                }
            }
            last = Some(seg.start);
        }
        if let Some(l) = last {
            if duration < l {
                return Err(Error::invalid(
                    "duration",
                    format!("{duration} ends before the last reference segment at {l}"),
                ));
            }
        }
        Ok(())
    }

    /// Reference speed at `t`. Ramps in the last segment end at `horizon`.
    pub fn rpm_at(&self, t: f64, horizon: f64) -> f64 {
        let mut level = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            if t < seg.start {
                break;
            }
            let end = self.segments.get(i + 1).map_or(horizon, |next| next.start);
            let last = i + 1 == self.segments.len();
            if t < end || last {
                return match seg.kind {
                    SegmentKind::Step => seg.target_rpm,
                    SegmentKind::Hold => level,
                    SegmentKind::Ramp if end > seg.start => {
                        let frac = ((t - seg.start) / (end - seg.start)).min(1.0);
                        level + (seg.target_rpm - level) * frac
                    }
                    SegmentKind::Ramp => seg.target_rpm,
                };
            }
            if seg.kind != SegmentKind::Hold {
                level = seg.target_rpm;
            }
        }
        level
    }

    /// Start times of the step segments, in order.
    pub fn step_times(&self) -> Vec<f64> {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Step)
            .map(|s| s.start)
            .collect()
    }
}

/// Reference in sensor volts at `t`.
pub fn reference_at(
    profile: &ReferenceProfile,
    t: f64,
    duration: f64,
    sensor_gain: f64,
) -> Result<f64> {
    ensure_finite("time", t)?;
    if t < 0.0 {
        return Err(Error::invalid("t", "must be >= 0"));
    }
    if t > duration * (1.0 + GRID_EPS) {
        return Err(Error::invalid(
            "t",
            format!("{t} is beyond the scenario duration {duration}"),
        ));
    }
    crate::plant::rpm_to_volts(profile.rpm_at(t, duration), sensor_gain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Added to the measured output.
    Output,
    /// Added to the plant input after the actuator.
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisturbanceShape {
    Step,
    Pulse { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub start: f64,
    pub channel: Channel,
    /// Volts.
    pub amplitude: f64,
    pub shape: DisturbanceShape,
}

impl Disturbance {
    pub fn value_at(&self, t: f64) -> f64 {
        let active = match self.shape {
            DisturbanceShape::Step => t >= self.start,
            DisturbanceShape::Pulse { width } => t >= self.start && t < self.start + width,
        };
        if active {
            self.amplitude
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_finite("disturbance start", self.start)?;
        ensure_finite("disturbance amplitude", self.amplitude)?;
        if self.start < 0.0 {
            return Err(Error::invalid("disturbance.start", "must be >= 0"));
        }
        if let DisturbanceShape::Pulse { width } = self.shape {
            if !(width.is_finite() && width > 0.0) {
                return Err(Error::invalid(
                    "disturbance.width",
                    "must be finite and > 0",
                ));
            }
        }
        Ok(())
    }
}

fn disturbance_sum(list: &[Disturbance], channel: Channel, t: f64) -> f64 {
    list.iter()
        .filter(|d| d.channel == channel)
        .map(|d| d.value_at(t))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Preset name or a free-form label for explicit gains.
    pub label: String,
    pub law: ControlLaw,
}

impl ControllerConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Ok(Self {
            label: name.to_string(),
            law: ControlLaw::preset(name)?,
        })
    }

    pub fn open_loop(u: f64) -> Self {
        Self {
            label: "open_loop".into(),
            law: ControlLaw::OpenLoop { u },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Plant before perturbation.
    pub plant: PlantModel,
    pub perturbation: Perturbation,
    pub reference: ReferenceProfile,
    pub disturbances: Vec<Disturbance>,
    pub duration: f64,
    pub dt_ctrl: f64,
    pub dt_plant: f64,
    pub controller: ControllerConfig,
    /// Clamp the integral to the actuator range.
    pub anti_windup: bool,
    /// Half-width of uniform measurement noise, volts. Zero disables noise.
    pub noise_amplitude: f64,
    pub seed: u64,
    /// Input gain `b` for the stability monitor; `K/τ` of [`plant`](Self::plant) when unset.
    pub stability_b: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::step_400()
    }
}

impl Scenario {
    /// Nominal plant, `smcpid`, 400 RPM step for 5 s.
    pub fn step_400() -> Self {
        Self {
            plant: PlantModel::nominal(),
            perturbation: Perturbation::default(),
            reference: ReferenceProfile::constant(STEP_SETPOINT_RPM),
            disturbances: Vec::new(),
            duration: DEFAULT_DURATION,
            dt_ctrl: DEFAULT_DT_CTRL,
            dt_plant: DEFAULT_DT_PLANT,
            controller: ControllerConfig::preset("smcpid").expect("builtin preset"),
            anti_windup: true,
            noise_amplitude: 0.0,
            seed: 0,
            stability_b: None,
        }
    }

    /// The multi-step profile over 12 s.
    pub fn varying() -> Self {
        Self {
            reference: ReferenceProfile::varying(),
            duration: 12.0,
            ..Self::step_400()
        }
    }

    pub fn with_preset(mut self, name: &str) -> Result<Self> {
        self.controller = ControllerConfig::preset(name)?;
        Ok(self)
    }

    pub fn with_law(mut self, label: &str, law: ControlLaw) -> Self {
        self.controller = ControllerConfig {
            label: label.to_string(),
            law,
        };
        self
    }

    /// Number of controller ticks, `floor(duration / dt_ctrl)`.
    pub fn tick_count(&self) -> usize {
        (self.duration / self.dt_ctrl + GRID_EPS).floor() as usize
    }

    /// Plant sub-steps per controller tick.
    pub fn substeps(&self) -> usize {
        (self.dt_ctrl / self.dt_plant).round() as usize
    }

    pub fn effective_plant(&self) -> Result<PlantModel> {
        self.plant.validate()?;
        self.plant.perturbed(self.perturbation)
    }

    pub fn input_gain(&self) -> f64 {
        self.stability_b.unwrap_or_else(|| self.plant.input_gain())
    }

    /// True when the two scenarios differ at most in the controller.
    pub fn same_setup(&self, other: &Scenario) -> bool {
        let mut a = self.clone();
        a.controller = other.controller.clone();
        a == *other
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("duration", self.duration),
            ("dt_ctrl", self.dt_ctrl),
            ("dt_plant", self.dt_plant),
        ] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        let ratio = self.dt_ctrl / self.dt_plant;
        if ratio < 1.0 - GRID_EPS || (ratio - ratio.round()).abs() > GRID_EPS * ratio {
            return Err(Error::invalid(
                "dt_ctrl",
                format!(
                    "{} is not an integer multiple of dt_plant {}",
                    self.dt_ctrl, self.dt_plant
                ),
            ));
        }
        if self.tick_count() == 0 {
            return Err(Error::invalid(
                "duration",
                "shorter than one controller period",
            ));
        }
        self.reference.validate(self.duration)?;
        for d in &self.disturbances {
            d.validate()?;
        }
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return Err(Error::invalid("noise_amplitude", "must be finite and >= 0"));
        }
        if let Some(b) = self.stability_b {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::invalid("stability.b", "must be finite and > 0"));
            }
        }
        self.controller.law.validate()?;
        self.effective_plant()?;
        Ok(())
    }
}

/// One controller tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Row {
    pub t: f64,
    pub r: f64,
    /// Measured output the controller saw (disturbance and noise included).
    pub y: f64,
    pub e: f64,
    pub e_dot: f64,
    pub s: f64,
    pub u_pid: f64,
    pub u_smc: f64,
    pub u_cmd: f64,
    pub u_applied: f64,
    /// `s²/2`.
    pub v: f64,
    /// `s·ṡ` with ṡ the backward difference of `s`; zero on the first row.
    pub v_dot: f64,
    pub d_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<Row>,
    pub scenario: Scenario,
    /// Plant after perturbation.
    pub plant: PlantModel,
    pub version: &'static str,
}

impl RunRecord {
    pub fn dt(&self) -> f64 {
        self.scenario.dt_ctrl
    }

    pub fn controller_label(&self) -> &str {
        &self.scenario.controller.label
    }

    pub fn column(&self, pick: impl Fn(&Row) -> f64) -> Vec<f64> {
        self.rows.iter().map(pick).collect()
    }

    pub fn final_output(&self) -> Option<f64> {
        self.rows.last().map(|r| r.y)
    }
}

pub fn run(scenario: &Scenario) -> Result<RunRecord> {
    scenario.validate()?;
    let plant = scenario.effective_plant()?;
    let mut record = RunRecord {
        rows: Vec::with_capacity(scenario.tick_count()),
        scenario: scenario.clone(),
        plant,
        version: env!("CARGO_PKG_VERSION"),
    };

    let dt = scenario.dt_ctrl;
    let mut state = PlantState::new(&plant, scenario.dt_plant)?;
    let actuator = scenario
        .anti_windup
        .then_some((plant.actuator_min, plant.actuator_max));
    let mut controller = Controller::new(scenario.controller.law, actuator);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut prev_s = None;

    for k in 0..scenario.tick_count() {
        let t = k as f64 * dt;
        let step = tick(scenario, &plant, &mut state, &mut controller, &mut rng, t);
        let (tr, r, d_out, y) = match step {
            Ok(v) => v,
            Err(cause) => return Err(abort(k, cause, record)),
        };
        let u_applied = plant.clamp(tr.u);
        let s_dot = prev_s.map_or(0.0, |p| (tr.s - p) / dt);
        prev_s = Some(tr.s);
        record.rows.push(Row {
            t,
            r,
            y,
            e: tr.e,
            e_dot: tr.e_dot,
            s: tr.s,
            u_pid: tr.u_pid,
            u_smc: tr.u_smc,
            u_cmd: tr.u,
            u_applied,
            v: lyapunov_v(tr.s),
            v_dot: tr.s * s_dot,
            d_out,
        });

        for j in 0..scenario.substeps() {
            let tj = t + j as f64 * scenario.dt_plant;
            let d_in = disturbance_sum(&scenario.disturbances, Channel::Input, tj);
            if let Err(cause) = state.step_loaded(&plant, u_applied, d_in, 0.0, scenario.dt_plant) {
                return Err(abort(k, cause, record));
            }
        }
    }
    Ok(record)
}

fn tick(
    scenario: &Scenario,
    plant: &PlantModel,
    state: &mut PlantState,
    controller: &mut Controller,
    rng: &mut ChaCha8Rng,
    t: f64,
) -> Result<(StepTrace, f64, f64, f64)> {
    let r = reference_at(&scenario.reference, t, scenario.duration, plant.sensor_gain)?;
    let d_out = disturbance_sum(&scenario.disturbances, Channel::Output, t);
    let noise = if scenario.noise_amplitude > 0.0 {
        let a = scenario.noise_amplitude;
        rng.random_range(-a..=a)
    } else {
        0.0
    };
    let y = ensure_finite("plant output", state.output() + d_out + noise)?;
    let tr = controller.update(r, y, scenario.dt_ctrl)?;
    ensure_finite("control command", tr.u)?;
    Ok((tr, r, d_out, y))
}

fn abort(row: usize, cause: Error, partial: RunRecord) -> Error {
    Error::Aborted {
        row,
        cause: Box::new(cause),
        partial: Box::new(partial),
    }
}

/// A numeric scenario field addressable by a dotted path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PlantGainFraction,
    PlantTimeConstantFraction,
    PlantDeadTimeFraction,
    PlantGain,
    PlantTimeConstant,
    PlantDeadTime,
    ActuatorMin,
    ActuatorMax,
    Kp,
    Ki,
    Kd,
    DerivativeFilterTau,
    Lambda1,
    Lambda2,
    Eta,
    Phi,
    Duration,
    DtPlant,
    NoiseAmplitude,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 19] = [
        Self::PlantGainFraction,
        Self::PlantTimeConstantFraction,
        Self::PlantDeadTimeFraction,
        Self::PlantGain,
        Self::PlantTimeConstant,
        Self::PlantDeadTime,
        Self::ActuatorMin,
        Self::ActuatorMax,
        Self::Kp,
        Self::Ki,
        Self::Kd,
        Self::DerivativeFilterTau,
        Self::Lambda1,
        Self::Lambda2,
        Self::Eta,
        Self::Phi,
        Self::Duration,
        Self::DtPlant,
        Self::NoiseAmplitude,
    ];

    pub fn path(&self) -> &'static str {
        match self {
            Self::PlantGainFraction => "plant.dK",
            Self::PlantTimeConstantFraction => "plant.dTau",
            Self::PlantDeadTimeFraction => "plant.dL",
            Self::PlantGain => "plant.gain",
            Self::PlantTimeConstant => "plant.time_constant",
            Self::PlantDeadTime => "plant.dead_time",
            Self::ActuatorMin => "plant.actuator_min",
            Self::ActuatorMax => "plant.actuator_max",
            Self::Kp => "pid.kp",
            Self::Ki => "pid.ki",
            Self::Kd => "pid.kd",
            Self::DerivativeFilterTau => "pid.derivative_filter_tau",
            Self::Lambda1 => "smc.lambda1",
            Self::Lambda2 => "smc.lambda2",
            Self::Eta => "smc.eta",
            Self::Phi => "smc.phi",
            Self::Duration => "sim.duration",
            Self::DtPlant => "sim.dt_plant",
            Self::NoiseAmplitude => "sim.noise_amplitude",
        }
    }

    /// Copy of `base` with this field set to `value`, validated.
    pub fn apply(&self, base: &Scenario, value: f64) -> Result<Scenario> {
        ensure_finite("sweep value", value)?;
        let mut s = base.clone();
        let not_applicable = || {
            Error::invalid(
                self.path(),
                format!("not applicable to controller `{}`", base.controller.label),
            )
        };
        match self {
            Self::PlantGainFraction => s.perturbation.gain = value,
            Self::PlantTimeConstantFraction => s.perturbation.time_constant = value,
            Self::PlantDeadTimeFraction => s.perturbation.dead_time = value,
            Self::PlantGain => s.plant.gain = value,
            Self::PlantTimeConstant => s.plant.time_constant = value,
            Self::PlantDeadTime => s.plant.dead_time = value,
            Self::ActuatorMin => s.plant.actuator_min = value,
            Self::ActuatorMax => s.plant.actuator_max = value,
            Self::Kp | Self::Ki | Self::Kd | Self::DerivativeFilterTau => {
                let p = s.controller.law.pid_mut().ok_or_else(not_applicable)?;
                match self {
                    Self::Kp => p.kp = value,
                    Self::Ki => p.ki = value,
                    Self::Kd => p.kd = value,
                    _ => p.derivative_filter_tau = value,
                }
            }
            Self::Lambda1 | Self::Lambda2 | Self::Eta | Self::Phi => {
                let g = s.controller.law.smc_mut().ok_or_else(not_applicable)?;
                match self {
                    Self::Lambda1 => g.lambda1 = value,
                    Self::Lambda2 => g.lambda2 = value,
                    Self::Eta => g.eta = value,
                    _ => g.phi = value,
                }
            }
            Self::Duration => s.duration = value,
            Self::DtPlant => s.dt_plant = value,
            Self::NoiseAmplitude => s.noise_amplitude = value,
        }
        s.validate()?;
        Ok(s)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(path: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.path() == path)
            .ok_or_else(|| Error::UnknownAxis(path.to_string()))
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.path())
    }
}

/// One run per value, in input order. Every value is validated before any
/// run starts.
pub fn sweep(base: &Scenario, axis: SweepAxis, values: &[f64]) -> Result<Vec<RunRecord>> {
    base.validate()?;
    let scenarios = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    run_all(&scenarios)
}

/// Runs independent scenarios, concurrently when the `parallel` feature is on.
pub fn run_all(scenarios: &[Scenario]) -> Result<Vec<RunRecord>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        scenarios.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        scenarios.iter().map(run).collect()
    }
}
