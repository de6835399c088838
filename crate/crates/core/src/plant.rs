//! First-order-plus-dead-time servo plant, `G(s) = K e^{-Ls} / (1 + τs)`.
//!
//! The plant state advances with the exact zero-order-hold solution of
//! `τẏ = −y + K·u(t − L)`. Dead time is realized by a delay line sampled at
//! the integration step; when `L/dt` is not an integer the delayed input is
//! linearly interpolated between the two bracketing samples.
//!
//! Signals are in sensor volts. The speed sensor reports 1 V per 200 RPM.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{ensure_finite, Error, Result};

/// Steady-state gain of the identified servo.
pub const NOMINAL_GAIN: f64 = 0.946;
/// Time constant of the identified servo, seconds.
pub const NOMINAL_TIME_CONSTANT: f64 = 0.4425;
/// Transport delay of the identified servo, seconds.
pub const NOMINAL_DEAD_TIME: f64 = 0.0325;
/// Speed sensor scaling, RPM per volt.
pub const SENSOR_RPM_PER_VOLT: f64 = 200.0;
pub const DEFAULT_ACTUATOR_LIMIT: f64 = 10.0;

// Tolerance when deciding whether L/dt is an integer.
const DELAY_GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    /// Steady-state gain K (volts out per volt in).
    pub gain: f64,
    /// Time constant τ, seconds.
    pub time_constant: f64,
    /// Dead time L, seconds.
    pub dead_time: f64,
    pub actuator_min: f64,
    pub actuator_max: f64,
    /// RPM per sensor volt.
    pub sensor_gain: f64,
}

impl Default for PlantModel {
    fn default() -> Self {
        Self::nominal()
    }
}

impl PlantModel {
    /// The identified CE110 servo with ±10 V actuation.
    pub const fn nominal() -> Self {
        Self {
            gain: NOMINAL_GAIN,
            time_constant: NOMINAL_TIME_CONSTANT,
            dead_time: NOMINAL_DEAD_TIME,
            actuator_min: -DEFAULT_ACTUATOR_LIMIT,
            actuator_max: DEFAULT_ACTUATOR_LIMIT,
            sensor_gain: SENSOR_RPM_PER_VOLT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("plant gain", self.gain)?;
        ensure_finite("plant time constant", self.time_constant)?;
        ensure_finite("plant dead time", self.dead_time)?;
        ensure_finite("actuator min", self.actuator_min)?;
        ensure_finite("actuator max", self.actuator_max)?;
        ensure_finite("sensor gain", self.sensor_gain)?;
        if self.time_constant <= 0.0 {
            return Err(Error::invalid("plant.time_constant", "must be > 0"));
        }
        if self.dead_time < 0.0 {
            return Err(Error::invalid("plant.dead_time", "must be >= 0"));
        }
        if self.actuator_min >= self.actuator_max {
            return Err(Error::invalid(
                "plant.actuator_min",
                "must be below actuator_max",
            ));
        }
        if self.sensor_gain <= 0.0 {
            return Err(Error::invalid("plant.sensor_gain", "must be > 0"));
        }
        Ok(())
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.actuator_min, self.actuator_max)
    }

    /// `K/τ`, the high-frequency gain of the delay-free lag. Used as the
    /// input gain `b` by the stability monitor.
    pub fn input_gain(&self) -> f64 {
        self.gain / self.time_constant
    }

    /// Returns a copy with K, τ and L scaled by `(1 + fraction)`.
    pub fn perturbed(&self, p: Perturbation) -> Result<Self> {
        ensure_finite("gain perturbation", p.gain)?;
        ensure_finite("time-constant perturbation", p.time_constant)?;
        ensure_finite("dead-time perturbation", p.dead_time)?;
        let out = Self {
            gain: self.gain * (1.0 + p.gain),
            time_constant: self.time_constant * (1.0 + p.time_constant),
            dead_time: self.dead_time * (1.0 + p.dead_time),
            ..*self
        };
        if out.time_constant <= 0.0 {
            return Err(Error::invalid(
                "plant.dTau",
                format!(
                    "{} drives the time constant to {}",
                    p.time_constant, out.time_constant
                ),
            ));
        }
        if out.dead_time < 0.0 {
            return Err(Error::invalid(
                "plant.dL",
                format!("{} drives the dead time negative", p.dead_time),
            ));
        }
        Ok(out)
    }

    pub fn rpm_to_volts(&self, rpm: f64) -> Result<f64> {
        rpm_to_volts(rpm, self.sensor_gain)
    }

    pub fn volts_to_rpm(&self, volts: f64) -> Result<f64> {
        volts_to_rpm(volts, self.sensor_gain)
    }
}

/// Fractional perturbation of the plant parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub gain: f64,
    pub time_constant: f64,
    pub dead_time: f64,
}

impl Perturbation {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

pub fn rpm_to_volts(rpm: f64, sensor_gain: f64) -> Result<f64> {
    ensure_finite("speed", rpm)?;
    check_sensor_gain(sensor_gain)?;
    Ok(rpm / sensor_gain)
}

pub fn volts_to_rpm(volts: f64, sensor_gain: f64) -> Result<f64> {
    ensure_finite("voltage", volts)?;
    check_sensor_gain(sensor_gain)?;
    Ok(volts * sensor_gain)
}

fn check_sensor_gain(sensor_gain: f64) -> Result<()> {
    ensure_finite("sensor gain", sensor_gain)?;
    if sensor_gain <= 0.0 {
        return Err(Error::invalid("sensor_gain", "must be > 0"));
    }
    Ok(())
}

/// Integrator state plus the delay line of past saturated actuation.
///
/// The delay line holds `ceil(L/dt) + 1` samples, newest first, and never
/// changes length after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    output: f64,
    delay_line: VecDeque<f64>,
    sim_time: f64,
    dt: f64,
    dead_time: f64,
    delay_whole: usize,
    delay_frac: f64,
}

impl PlantState {
    /// Plant at rest: zero output, zero-filled delay line.
    pub fn new(model: &PlantModel, dt: f64) -> Result<Self> {
        model.validate()?;
        ensure_finite("plant dt", dt)?;
        if dt <= 0.0 {
            return Err(Error::invalid("dt_plant", "must be > 0"));
        }
        let ratio = model.dead_time / dt;
        let mut whole = ratio.floor();
        let mut frac = ratio - whole;
        if frac > 1.0 - DELAY_GRID_EPS {
            whole += 1.0;
            frac = 0.0;
        } else if frac < DELAY_GRID_EPS {
            frac = 0.0;
        }
        let whole = whole as usize;
        let len = if frac > 0.0 { whole + 2 } else { whole + 1 };
        Ok(Self {
            output: 0.0,
            delay_line: VecDeque::from(vec![0.0; len]),
            sim_time: 0.0,
            dt,
            dead_time: model.dead_time,
            delay_whole: whole,
            delay_frac: frac,
        })
    }

    /// Undisturbed plant output, volts.
    pub fn output(&self) -> f64 {
        self.output
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn delay_len(&self) -> usize {
        self.delay_line.len()
    }

    /// Advances one integration step with command `u` (clamped to the
    /// actuator range) and returns the output sample with the additive
    /// output disturbance `d_out` applied.
    pub fn step(&mut self, model: &PlantModel, u: f64, d_out: f64, dt: f64) -> Result<f64> {
        ensure_finite("actuation", u)?;
        self.step_loaded(model, model.clamp(u), 0.0, d_out, dt)
    }

    /// Like [`step`](Self::step), but takes an already-saturated actuation
    /// and adds an input-side load `d_in` after the actuator.
    pub(crate) fn step_loaded(
        &mut self,
        model: &PlantModel,
        u_applied: f64,
        d_in: f64,
        d_out: f64,
        dt: f64,
    ) -> Result<f64> {
        ensure_finite("actuation", u_applied)?;
        ensure_finite("input disturbance", d_in)?;
        ensure_finite("output disturbance", d_out)?;
        if (dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::StepMismatch {
                expected: self.dt,
                got: dt,
            });
        }
        if model.dead_time != self.dead_time {
            return Err(Error::invalid(
                "plant.dead_time",
                "differs from the dead time the delay line was built for",
            ));
        }

        self.delay_line.pop_back();
        self.delay_line.push_front(u_applied + d_in);
        let delayed = self.delayed_input();

        let a = (-dt / model.time_constant).exp();
        let next = a * self.output + (1.0 - a) * model.gain * delayed;
        ensure_finite("plant output", next)?;
        self.output = next;
        self.sim_time += dt;
        Ok(next + d_out)
    }

    fn delayed_input(&self) -> f64 {
        let n = self.delay_whole;
        if self.delay_frac == 0.0 {
            self.delay_line[n]
        } else {
            let f = self.delay_frac;
            (1.0 - f) * self.delay_line[n] + f * self.delay_line[n + 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn closed_form_step(t: f64) -> f64 {
        if t < NOMINAL_DEAD_TIME {
            0.0
        } else {
            NOMINAL_GAIN * (1.0 - (-(t - NOMINAL_DEAD_TIME) / NOMINAL_TIME_CONSTANT).exp())
        }
    }

    fn simulate_constant(model: &PlantModel, u: f64, dt: f64, t_end: f64) -> Vec<f64> {
        let mut state = PlantState::new(model, dt).unwrap();
        let steps = (t_end / dt).round() as usize;
        let mut out = vec![state.output()];
        for _ in 0..steps {
            out.push(state.step(model, u, 0.0, dt).unwrap());
        }
        out
    }

    #[test]
    fn delay_line_length() {
        let m = PlantModel::nominal();
        assert_eq!(PlantState::new(&m, 0.001).unwrap().delay_len(), 34);
        assert_eq!(PlantState::new(&m, 0.0005).unwrap().delay_len(), 66);
        let no_delay = PlantModel {
            dead_time: 0.0,
            ..m
        };
        assert_eq!(PlantState::new(&no_delay, 0.001).unwrap().delay_len(), 1);
    }

    #[test]
    fn unit_step_reaches_dc_gain() {
        let y = simulate_constant(&PlantModel::nominal(), 1.0, 0.001, 10.0);
        assert_abs_diff_eq!(*y.last().unwrap(), 0.946, epsilon = 1e-6);
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let y = simulate_constant(&PlantModel::nominal(), 0.0, 0.001, 2.0);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_at_dead_time_plus_tau() {
        // y(L + τ) = K(1 − e⁻¹)
        let y = simulate_constant(&PlantModel::nominal(), 1.0, 0.001, 0.475);
        let expect = 0.946 * (1.0 - (-1.0f64).exp());
        assert_abs_diff_eq!(expect, 0.598, epsilon = 1e-3);
        assert_abs_diff_eq!(*y.last().unwrap(), expect, epsilon = 1e-3);
    }

    #[test]
    fn integer_delay_matches_closed_form_exactly() {
        let dt = 0.0005;
        let y = simulate_constant(&PlantModel::nominal(), 1.0, dt, 3.0);
        for (k, v) in y.iter().enumerate() {
            let expect = closed_form_step(k as f64 * dt);
            assert!(
                (v - expect).abs() <= 1e-12 * expect.abs().max(1e-3),
                "k={k}"
            );
        }
    }

    #[test]
    fn fractional_delay_close_to_closed_form() {
        let dt = 0.001;
        let y = simulate_constant(&PlantModel::nominal(), 1.0, dt, 3.0);
        let worst = y
            .iter()
            .enumerate()
            .map(|(k, v)| (v - closed_form_step(k as f64 * dt)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "worst = {worst}");
    }

    #[test]
    fn actuation_is_clamped() {
        let m = PlantModel::nominal();
        let hi = simulate_constant(&m, 1e3, 0.001, 10.0);
        assert_abs_diff_eq!(*hi.last().unwrap(), 0.946 * 10.0, epsilon = 1e-4);
    }

    #[test]
    fn output_disturbance_is_additive() {
        let m = PlantModel::nominal();
        let mut s = PlantState::new(&m, 0.001).unwrap();
        let y = s.step(&m, 0.0, 0.25, 0.001).unwrap();
        assert_eq!(y, 0.25);
        assert_eq!(s.output(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = PlantModel::nominal();
        let mut s = PlantState::new(&m, 0.001).unwrap();
        assert!(matches!(
            s.step(&m, f64::NAN, 0.0, 0.001),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            s.step(&m, 1.0, f64::INFINITY, 0.001),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            s.step(&m, 1.0, 0.0, 0.002),
            Err(Error::StepMismatch { .. })
        ));
        // a rejected step leaves the state untouched
        assert_eq!(s.sim_time(), 0.0);
    }

    #[test]
    fn invalid_models_rejected() {
        let m = PlantModel::nominal();
        for bad in [
            PlantModel {
                time_constant: 0.0,
                ..m
            },
            PlantModel {
                dead_time: -0.1,
                ..m
            },
            PlantModel {
                actuator_min: 10.0,
                ..m
            },
            PlantModel {
                sensor_gain: 0.0,
                ..m
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn rpm_conversion() {
        assert_eq!(rpm_to_volts(400.0, 200.0).unwrap(), 2.0);
        assert_eq!(rpm_to_volts(0.0, 200.0).unwrap(), 0.0);
        assert_abs_diff_eq!(rpm_to_volts(189.2, 200.0).unwrap(), 0.946, epsilon = 1e-15);
        assert_eq!(volts_to_rpm(2.0, 200.0).unwrap(), 400.0);
        assert!(rpm_to_volts(f64::NAN, 200.0).is_err());
        assert!(rpm_to_volts(1.0, 0.0).is_err());
    }

    #[test]
    fn perturbation() {
        let m = PlantModel::nominal();
        assert_eq!(m.perturbed(Perturbation::default()).unwrap(), m);
        let k = m
            .perturbed(Perturbation {
                gain: 0.2,
                ..Default::default()
            })
            .unwrap();
        assert_abs_diff_eq!(k.gain, 1.1352, epsilon = 1e-12);
        let tau = m
            .perturbed(Perturbation {
                time_constant: -0.2,
                ..Default::default()
            })
            .unwrap();
        assert_abs_diff_eq!(tau.time_constant, 0.354, epsilon = 1e-12);
        assert!(m
            .perturbed(Perturbation {
                time_constant: -1.0,
                ..Default::default()
            })
            .is_err());
    }

    #[test]
    fn nominal_input_gain() {
        assert_abs_diff_eq!(PlantModel::nominal().input_gain(), 2.1379, epsilon = 1e-4);
    }
}
