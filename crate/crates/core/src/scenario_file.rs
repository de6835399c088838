//! TOML scenario files.
//!
//! Every key is optional; omitted keys take the defaults of
//! [`Scenario::step_400`]. Unknown keys are rejected. A minimal file:
//!
//! ```toml
//! schema_version = 1
//!
//! [controller]
//! preset = "kuhn"
//!
//! [[reference]]
//! start = 0.0
//! kind = "step"
//! target_rpm = 400.0
//! ```
//!
//! Validation errors name the offending key and, when the key appears in
//! the file, its line.

use serde::{Deserialize, Serialize};

use crate::controllers::{ControlLaw, PidGains, SmcGains, Switching};
use crate::plant::Perturbation;
use crate::sim::{
    Channel, ControllerConfig, Disturbance, DisturbanceShape, ReferenceProfile, Scenario, Segment,
    SegmentKind,
};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_ctrl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_plant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anti_windup: Option<bool>,
    /// `"step"` (400 RPM) or `"varying"`; exclusive with `[[reference]]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_preset: Option<String>,
    #[serde(default, skip_serializing_if = "PlantSection::is_empty")]
    pub plant: PlantSection,
    #[serde(default, skip_serializing_if = "PerturbationSection::is_empty")]
    pub perturbation: PerturbationSection,
    #[serde(default, skip_serializing_if = "ControllerSection::is_empty")]
    pub controller: ControllerSection,
    #[serde(default, skip_serializing_if = "StabilitySection::is_empty")]
    pub stability: StabilitySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<SegmentEntry>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbance: Vec<DisturbanceEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dead_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actuator_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actuator_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensor_gain: Option<f64>,
}

impl PlantSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    #[serde(rename = "dK", skip_serializing_if = "Option::is_none")]
    pub d_gain: Option<f64>,
    #[serde(rename = "dTau", skip_serializing_if = "Option::is_none")]
    pub d_time_constant: Option<f64>,
    #[serde(rename = "dL", skip_serializing_if = "Option::is_none")]
    pub d_dead_time: Option<f64>,
}

impl PerturbationSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    /// `smcpid`, `kuhn`, `naive` or `open_loop`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ki: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivative_filter_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switching: Option<Switching>,
    /// Constant actuation for `open_loop`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
}

impl ControllerSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl StabilitySection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKindName {
    Step,
    Ramp,
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub start: f64,
    pub kind: SegmentKindName,
    #[serde(default)]
    pub target_rpm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelName {
    Output,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceKindName {
    Step,
    Pulse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEntry {
    pub start: f64,
    pub channel: ChannelName,
    pub amplitude: f64,
    pub kind: DisturbanceKindName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(src: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(src).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_scenario().map_err(|e| locate_error(src, e))
}

/// Serializes a scenario so that [`parse_scenario`] gives it back unchanged.
pub fn emit_scenario(scenario: &Scenario) -> Result<String> {
    toml::to_string(&ScenarioFile::from_scenario(scenario)).map_err(|e| Error::Parse(e.to_string()))
}

pub fn emit_default() -> String {
    emit_scenario(&Scenario::default()).expect("default scenario serializes")
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario> {
        if let Some(v) = self.schema_version {
            if v != SCHEMA_VERSION {
                return Err(Error::invalid(
                    "schema_version",
                    format!("unsupported version {v} (expected {SCHEMA_VERSION})"),
                ));
            }
        }
        let mut sc = match self.reference_preset.as_deref() {
            None | Some("step") => Scenario::step_400(),
            Some("varying") => Scenario::varying(),
            Some(other) => {
                return Err(Error::invalid(
                    "reference_preset",
                    format!("unknown preset `{other}` (valid: step, varying)"),
                ))
            }
        };
        if let Some(segments) = &self.reference {
            if self.reference_preset.is_some() {
                return Err(Error::invalid(
                    "reference_preset",
                    "cannot be combined with [[reference]] segments",
                ));
            }
            sc.reference = ReferenceProfile {
                segments: segments.iter().map(SegmentEntry::to_segment).collect(),
            };
        }
        set(&mut sc.duration, self.duration);
        set(&mut sc.dt_ctrl, self.dt_ctrl);
        set(&mut sc.dt_plant, self.dt_plant);
        set(&mut sc.seed, self.seed);
        set(&mut sc.noise_amplitude, self.noise_amplitude);
        set(&mut sc.anti_windup, self.anti_windup);

        let p = &self.plant;
        let plant = &mut sc.plant;
        set(&mut plant.gain, p.gain);
        set(&mut plant.time_constant, p.time_constant);
        set(&mut plant.dead_time, p.dead_time);
        set(&mut plant.actuator_min, p.actuator_min);
        set(&mut plant.actuator_max, p.actuator_max);
        set(&mut plant.sensor_gain, p.sensor_gain);

        let q = &self.perturbation;
        sc.perturbation = Perturbation {
            gain: q.d_gain.unwrap_or(0.0),
            time_constant: q.d_time_constant.unwrap_or(0.0),
            dead_time: q.d_dead_time.unwrap_or(0.0),
        };

        sc.controller = self.controller.to_config()?;
        sc.stability_b = self.stability.b;
        sc.disturbances = self
            .disturbance
            .iter()
            .map(DisturbanceEntry::to_disturbance)
            .collect::<Result<_>>()?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        let p = &sc.plant;
        let law = &sc.controller.law;
        let pid = law.pid();
        let smc = law.smc();
        let preset = match law {
            ControlLaw::SmcPid { .. } => "smcpid",
            ControlLaw::Pid { .. } if sc.controller.label == "naive" => "naive",
            ControlLaw::Pid { .. } => "kuhn",
            ControlLaw::OpenLoop { .. } => "open_loop",
        };
        Self {
            schema_version: Some(SCHEMA_VERSION),
            duration: Some(sc.duration),
            dt_ctrl: Some(sc.dt_ctrl),
            dt_plant: Some(sc.dt_plant),
            seed: Some(sc.seed),
            noise_amplitude: Some(sc.noise_amplitude),
            anti_windup: Some(sc.anti_windup),
            reference_preset: None,
            plant: PlantSection {
                gain: Some(p.gain),
                time_constant: Some(p.time_constant),
                dead_time: Some(p.dead_time),
                actuator_min: Some(p.actuator_min),
                actuator_max: Some(p.actuator_max),
                sensor_gain: Some(p.sensor_gain),
            },
            perturbation: PerturbationSection {
                d_gain: Some(sc.perturbation.gain),
                d_time_constant: Some(sc.perturbation.time_constant),
                d_dead_time: Some(sc.perturbation.dead_time),
            },
            controller: ControllerSection {
                preset: Some(preset.to_string()),
                label: (sc.controller.label != preset).then(|| sc.controller.label.clone()),
                kp: pid.map(|g| g.kp),
                ki: pid.map(|g| g.ki),
                kd: pid.map(|g| g.kd),
                derivative_filter_tau: pid.map(|g| g.derivative_filter_tau),
                lambda1: smc.map(|g| g.lambda1),
                lambda2: smc.map(|g| g.lambda2),
                eta: smc.map(|g| g.eta),
                phi: smc.map(|g| g.phi),
                switching: match law {
                    ControlLaw::SmcPid { switching, .. } => Some(*switching),
                    _ => None,
                },
                u: match law {
                    ControlLaw::OpenLoop { u } => Some(*u),
                    _ => None,
                },
            },
            stability: StabilitySection { b: sc.stability_b },
            reference: Some(
                sc.reference
                    .segments
                    .iter()
                    .map(SegmentEntry::from_segment)
                    .collect(),
            ),
            disturbance: sc
                .disturbances
                .iter()
                .map(DisturbanceEntry::from_disturbance)
                .collect(),
        }
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ControllerSection {
    fn to_config(&self) -> Result<ControllerConfig> {
        let preset = self.preset.as_deref().unwrap_or("smcpid");
        let mut law = match preset {
            "open_loop" => ControlLaw::OpenLoop {
                u: self
                    .u
                    .ok_or_else(|| Error::invalid("controller.u", "required for open_loop"))?,
            },
            name => ControlLaw::preset(name).map_err(|_| {
                Error::invalid(
                    "controller.preset",
                    format!("unknown preset `{name}` (valid: smcpid, kuhn, naive, open_loop)"),
                )
            })?,
        };
        let has_pid = [self.kp, self.ki, self.kd, self.derivative_filter_tau]
            .iter()
            .any(Option::is_some);
        let has_smc = [self.lambda1, self.lambda2, self.eta, self.phi]
            .iter()
            .any(Option::is_some)
            || self.switching.is_some();
        if let Some(pid) = law.pid_mut() {
            apply_pid(pid, self);
        } else if has_pid {
            return Err(Error::invalid(
                "controller.kp",
                "PID gains need a feedback preset",
            ));
        }
        match &mut law {
            ControlLaw::SmcPid { smc, switching, .. } => {
                apply_smc(smc, self);
                set(switching, self.switching);
            }
            _ if has_smc => {
                return Err(Error::invalid(
                    "controller.eta",
                    format!("sliding-mode gains do not apply to preset `{preset}`"),
                ))
            }
            _ => {}
        }
        if self.u.is_some() && !matches!(law, ControlLaw::OpenLoop { .. }) {
            return Err(Error::invalid("controller.u", "only valid for open_loop"));
        }
        Ok(ControllerConfig {
            label: self.label.clone().unwrap_or_else(|| preset.to_string()),
            law,
        })
    }
}

fn apply_pid(pid: &mut PidGains, c: &ControllerSection) {
    set(&mut pid.kp, c.kp);
    set(&mut pid.ki, c.ki);
    set(&mut pid.kd, c.kd);
    set(&mut pid.derivative_filter_tau, c.derivative_filter_tau);
}

fn apply_smc(smc: &mut SmcGains, c: &ControllerSection) {
    set(&mut smc.lambda1, c.lambda1);
    set(&mut smc.lambda2, c.lambda2);
    set(&mut smc.eta, c.eta);
    set(&mut smc.phi, c.phi);
}

impl SegmentEntry {
    fn to_segment(&self) -> Segment {
        Segment {
            start: self.start,
            kind: match self.kind {
                SegmentKindName::Step => SegmentKind::Step,
                SegmentKindName::Ramp => SegmentKind::Ramp,
                SegmentKindName::Hold => SegmentKind::Hold,
            },
            target_rpm: self.target_rpm,
        }
    }

    fn from_segment(s: &Segment) -> Self {
        Self {
            start: s.start,
            kind: match s.kind {
                SegmentKind::Step => SegmentKindName::Step,
                SegmentKind::Ramp => SegmentKindName::Ramp,
                SegmentKind::Hold => SegmentKindName::Hold,
            },
            target_rpm: s.target_rpm,
        }
    }
}

impl DisturbanceEntry {
    fn to_disturbance(&self) -> Result<Disturbance> {
        let shape = match (self.kind, self.width) {
            (DisturbanceKindName::Step, None) => DisturbanceShape::Step,
            (DisturbanceKindName::Step, Some(_)) => {
                return Err(Error::invalid("disturbance.width", "only valid for pulses"))
            }
            (DisturbanceKindName::Pulse, Some(width)) => DisturbanceShape::Pulse { width },
            (DisturbanceKindName::Pulse, None) => {
                return Err(Error::invalid("disturbance.width", "required for pulses"))
            }
        };
        Ok(Disturbance {
            start: self.start,
            channel: match self.channel {
                ChannelName::Output => Channel::Output,
                ChannelName::Input => Channel::Input,
            },
            amplitude: self.amplitude,
            shape,
        })
    }

    fn from_disturbance(d: &Disturbance) -> Self {
        let (kind, width) = match d.shape {
            DisturbanceShape::Step => (DisturbanceKindName::Step, None),
            DisturbanceShape::Pulse { width } => (DisturbanceKindName::Pulse, Some(width)),
        };
        Self {
            start: d.start,
            channel: match d.channel {
                Channel::Output => ChannelName::Output,
                Channel::Input => ChannelName::Input,
            },
            amplitude: d.amplitude,
            kind,
            width,
        }
    }
}

/// Maps a validation field path onto its `(section, key)` in the file.
fn file_key(field: &str) -> (Option<&'static str>, String) {
    let (head, tail) = field.split_once('.').unwrap_or(("", field));
    match head {
        "plant" if matches!(tail, "dK" | "dTau" | "dL") => (Some("perturbation"), tail.into()),
        "plant" => (Some("plant"), tail.into()),
        "pid" | "smc" | "controller" => (Some("controller"), tail.into()),
        "stability" => (Some("stability"), tail.into()),
        "disturbance" => (Some("disturbance"), tail.into()),
        _ if field == "reference" => (Some("reference"), "start".into()),
        _ => (None, field.into()),
    }
}

/// Line (1-based) where `key` is assigned inside `section`.
fn find_key_line(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some(rest) = t.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(i + 1);
            }
        }
    }
    None
}

fn locate_error(src: &str, err: Error) -> Error {
    match err {
        Error::Invalid { field, reason } => {
            let (section, key) = file_key(&field);
            let name = match section {
                Some(s) => format!("{s}.{key}"),
                None => key.clone(),
            };
            match find_key_line(src, section, &key) {
                Some(line) => Error::Parse(format!("line {line}: `{name}`: {reason}")),
                None => Error::Parse(format!("`{name}`: {reason}")),
            }
        }
        Error::NonFinite { what, value } => Error::Parse(format!("non-finite {what}: {value}")),
        Error::UnknownPreset { name, valid } => Error::Parse(format!(
            "`controller.preset`: unknown preset `{name}` (valid: {valid})"
        )),
        other => other,
    }
}
