//! Discrete PID, the boundary-layer sliding-mode term, and their sum.
//!
//! The control law is `u = u_pid + u_smc` with
//!
//! ```text
//! u_pid = Kp·e + Ki·∫e dt + Kd·ė
//! s     = λ1·e + λ2·ė
//! u_smc = −η·sat(s/φ)
//! ```
//!
//! where `e = r − y`. The integral uses the rectangular rule and is clamped
//! so that `Ki·∫e` stays inside the actuator range. `ė` is the backward
//! difference of the error, optionally low-pass filtered, and is shared by
//! the PID derivative and the sliding surface. Every update function takes
//! the previous [`ControllerState`] by reference and returns the next one.

use serde::{Deserialize, Serialize};

use crate::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Time constant of the derivative low-pass, seconds. Zero disables it.
    pub derivative_filter_tau: f64,
}

impl PidGains {
    pub const SMCPID: Self = Self::new(25.1, 30.5, 0.293);
    pub const KUHN: Self = Self::new(1.057, 3.125, 0.08016);
    pub const NAIVE: Self = Self::new(1.0, 1.0, 1.0);

    pub const fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp,
            ki,
            kd,
            derivative_filter_tau: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pid.kp", self.kp),
            ("pid.ki", self.ki),
            ("pid.kd", self.kd),
            ("pid.derivative_filter_tau", self.derivative_filter_tau),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmcGains {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Switching gain, volts. Zero turns the sliding-mode term off.
    pub eta: f64,
    /// Boundary-layer half-width.
    pub phi: f64,
}

impl Default for SmcGains {
    fn default() -> Self {
        Self::PRESET
    }
}

impl SmcGains {
    pub const PRESET: Self = Self {
        lambda1: 1.0,
        lambda2: 0.05,
        eta: 1.0,
        phi: 0.05,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("smc.lambda1", self.lambda1),
            ("smc.lambda2", self.lambda2),
            ("smc.phi", self.phi),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(Error::invalid("smc.eta", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Switching function used by the sliding-mode term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switching {
    /// `sat(s/φ)`, linear inside the boundary layer.
    #[default]
    Sat,
    /// Hard `sign(s)`; the boundary layer is ignored.
    Sign,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControllerState {
    /// ∫e dt, volt·seconds.
    pub integral: f64,
    pub prev_error: f64,
    /// Last (filtered) error derivative.
    pub prev_error_dot: f64,
    pub initialized: bool,
}

impl ControllerState {
    /// State that behaves as if `prev_error` had been observed on an earlier
    /// tick, so the next derivative is a real backward difference.
    pub fn primed(prev_error: f64) -> Self {
        Self {
            prev_error,
            initialized: true,
            ..Self::default()
        }
    }
}

/// Bounds on the integral state, derived from the actuator range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralClamp {
    pub lo: f64,
    pub hi: f64,
}

impl IntegralClamp {
    /// Keeps `Ki·integral` inside `[u_min, u_max]`. `None` when `ki == 0`,
    /// since the integral then never reaches the output.
    pub fn for_actuator(ki: f64, u_min: f64, u_max: f64) -> Option<Self> {
        (ki > 0.0).then(|| Self {
            lo: u_min / ki,
            hi: u_max / ki,
        })
    }

    pub fn apply(&self, integral: f64) -> f64 {
        integral.clamp(self.lo, self.hi)
    }
}

/// Backward-difference error derivative, low-pass filtered when
/// `filter_tau > 0`. Zero on the first call.
pub fn error_derivative(state: &ControllerState, e: f64, dt: f64, filter_tau: f64) -> f64 {
    if !state.initialized {
        return 0.0;
    }
    let raw = (e - state.prev_error) / dt;
    if filter_tau > 0.0 {
        let alpha = dt / (filter_tau + dt);
        state.prev_error_dot + alpha * (raw - state.prev_error_dot)
    } else {
        raw
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidOutput {
    pub u: f64,
    pub e_dot: f64,
}

pub fn pid_update(
    gains: &PidGains,
    state: &ControllerState,
    e: f64,
    dt: f64,
    clamp: Option<IntegralClamp>,
) -> Result<(PidOutput, ControllerState)> {
    ensure_finite("error", e)?;
    check_dt(dt)?;
    let e_dot = error_derivative(state, e, dt, gains.derivative_filter_tau);
    let mut integral = state.integral + e * dt;
    if let Some(c) = clamp {
        integral = c.apply(integral);
    }
    let u = gains.kp * e + gains.ki * integral + gains.kd * e_dot;
    let next = ControllerState {
        integral,
        prev_error: e,
        prev_error_dot: e_dot,
        initialized: true,
    };
    Ok((PidOutput { u, e_dot }, next))
}

pub fn sliding_surface(gains: &SmcGains, e: f64, e_dot: f64) -> f64 {
    gains.lambda1 * e + gains.lambda2 * e_dot
}

/// `clamp(x, −1, 1)`.
pub fn sat(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Sign with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `−η·sat(s/φ)`.
pub fn smc_update(gains: &SmcGains, s: f64) -> f64 {
    smc_switch(gains, s, Switching::Sat)
}

pub fn smc_switch(gains: &SmcGains, s: f64, switching: Switching) -> f64 {
    let w = match switching {
        Switching::Sat => sat(s / gains.phi),
        Switching::Sign => sign(s),
    };
    -gains.eta * w
}

/// Everything one controller tick computed, before actuator clamping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTrace {
    pub e: f64,
    pub e_dot: f64,
    pub s: f64,
    pub u_pid: f64,
    pub u_smc: f64,
    pub u: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn smcpid_update(
    pid: &PidGains,
    smc: &SmcGains,
    switching: Switching,
    state: &ControllerState,
    r: f64,
    y: f64,
    dt: f64,
    clamp: Option<IntegralClamp>,
) -> Result<(StepTrace, ControllerState)> {
    ensure_finite("reference", r)?;
    ensure_finite("measurement", y)?;
    let e = r - y;
    let (out, next) = pid_update(pid, state, e, dt, clamp)?;
    let s = sliding_surface(smc, e, out.e_dot);
    let u_smc = smc_switch(smc, s, switching);
    Ok((
        StepTrace {
            e,
            e_dot: out.e_dot,
            s,
            u_pid: out.u,
            u_smc,
            u: out.u + u_smc,
        },
        next,
    ))
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("dt_ctrl", "must be finite and > 0"))
    }
}

/// Names accepted wherever a controller preset is expected.
pub const PRESET_NAMES: [&str; 3] = ["smcpid", "kuhn", "naive"];

/// Which control law runs in the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlLaw {
    SmcPid {
        pid: PidGains,
        smc: SmcGains,
        switching: Switching,
    },
    Pid {
        pid: PidGains,
    },
    /// Constant actuation, no feedback.
    OpenLoop {
        u: f64,
    },
}

impl ControlLaw {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "smcpid" => Ok(Self::SmcPid {
                pid: PidGains::SMCPID,
                smc: SmcGains::PRESET,
                switching: Switching::Sat,
            }),
            "kuhn" => Ok(Self::Pid {
                pid: PidGains::KUHN,
            }),
            "naive" => Ok(Self::Pid {
                pid: PidGains::NAIVE,
            }),
            _ => Err(Error::UnknownPreset {
                name: name.to_string(),
                valid: PRESET_NAMES.join(", "),
            }),
        }
    }

    pub fn pid(&self) -> Option<&PidGains> {
        match self {
            Self::SmcPid { pid, .. } | Self::Pid { pid } => Some(pid),
            Self::OpenLoop { .. } => None,
        }
    }

    pub fn pid_mut(&mut self) -> Option<&mut PidGains> {
        match self {
            Self::SmcPid { pid, .. } | Self::Pid { pid } => Some(pid),
            Self::OpenLoop { .. } => None,
        }
    }

    pub fn smc(&self) -> Option<&SmcGains> {
        match self {
            Self::SmcPid { smc, .. } => Some(smc),
            _ => None,
        }
    }

    pub fn smc_mut(&mut self) -> Option<&mut SmcGains> {
        match self {
            Self::SmcPid { smc, .. } => Some(smc),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::SmcPid { pid, smc, .. } => {
                pid.validate()?;
                smc.validate()
            }
            Self::Pid { pid } => pid.validate(),
            Self::OpenLoop { u } => ensure_finite("open-loop actuation", *u).map(drop),
        }
    }
}

/// A control law together with its running state.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    law: ControlLaw,
    state: ControllerState,
    clamp: Option<IntegralClamp>,
}

impl Controller {
    /// `actuator` is the `(min, max)` range used for anti-windup; pass
    /// `None` to leave the integral unbounded.
    pub fn new(law: ControlLaw, actuator: Option<(f64, f64)>) -> Self {
        let clamp = law
            .pid()
            .zip(actuator)
            .and_then(|(pid, (lo, hi))| IntegralClamp::for_actuator(pid.ki, lo, hi));
        Self {
            law,
            state: ControllerState::default(),
            clamp,
        }
    }

    pub fn law(&self) -> &ControlLaw {
        &self.law
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn update(&mut self, r: f64, y: f64, dt: f64) -> Result<StepTrace> {
        match self.law {
            ControlLaw::SmcPid {
                pid,
                smc,
                switching,
            } => {
                let (trace, next) =
                    smcpid_update(&pid, &smc, switching, &self.state, r, y, dt, self.clamp)?;
                self.state = next;
                Ok(trace)
            }
            ControlLaw::Pid { pid } => {
                ensure_finite("reference", r)?;
                ensure_finite("measurement", y)?;
                let e = r - y;
                let (out, next) = pid_update(&pid, &self.state, e, dt, self.clamp)?;
                self.state = next;
                Ok(StepTrace {
                    e,
                    e_dot: out.e_dot,
                    s: 0.0,
                    u_pid: out.u,
                    u_smc: 0.0,
                    u: out.u,
                })
            }
            ControlLaw::OpenLoop { u } => {
                ensure_finite("reference", r)?;
                ensure_finite("measurement", y)?;
                Ok(StepTrace {
                    e: r - y,
                    u,
                    ..StepTrace::default()
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const DT: f64 = 0.01;

    #[test]
    fn derivative_first_call_is_zero() {
        let st = ControllerState::default();
        assert_eq!(error_derivative(&st, 5.0, DT, 0.0), 0.0);
        assert_eq!(error_derivative(&st, -3.0, DT, 0.1), 0.0);
    }

    #[test]
    fn derivative_backward_difference() {
        let st = ControllerState::primed(0.0);
        assert_abs_diff_eq!(error_derivative(&st, 0.1, DT, 0.0), 10.0, epsilon = 1e-12);
        let st = ControllerState::primed(0.7);
        assert_eq!(error_derivative(&st, 0.7, DT, 0.0), 0.0);
    }

    #[test]
    fn derivative_filter_smooths() {
        let st = ControllerState::primed(0.0);
        let filtered = error_derivative(&st, 0.1, DT, 0.04);
        // α = 0.01 / 0.05
        assert_abs_diff_eq!(filtered, 0.2 * 10.0, epsilon = 1e-12);
    }

    #[test]
    fn pid_zero_error() {
        let (out, _) = pid_update(
            &PidGains::SMCPID,
            &ControllerState::default(),
            0.0,
            DT,
            None,
        )
        .unwrap();
        assert_eq!(out.u, 0.0);
    }

    #[test]
    fn pid_first_step_after_jump() {
        let (out, st) = pid_update(
            &PidGains::SMCPID,
            &ControllerState::primed(0.0),
            0.1,
            DT,
            None,
        )
        .unwrap();
        // P = 2.51, I = 0.0305, D = 2.93
        assert_abs_diff_eq!(out.u, 5.4705, epsilon = 1e-12);
        assert_abs_diff_eq!(st.integral, 0.001, epsilon = 1e-15);
    }

    #[test]
    fn pid_rectangular_integral() {
        let mut st = ControllerState::default();
        let mut u = 0.0;
        for _ in 0..100 {
            let (out, next) = pid_update(&PidGains::NAIVE, &st, 1.0, DT, None).unwrap();
            st = next;
            u = out.u;
        }
        assert_abs_diff_eq!(u, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn pid_rejects_non_finite_error() {
        let st = ControllerState::default();
        assert!(pid_update(&PidGains::NAIVE, &st, f64::NAN, DT, None).is_err());
        assert!(pid_update(&PidGains::NAIVE, &st, 1.0, 0.0, None).is_err());
    }

    #[test]
    fn anti_windup_bounds_integral() {
        let clamp = IntegralClamp::for_actuator(30.5, -10.0, 10.0);
        let mut st = ControllerState::default();
        for _ in 0..10_000 {
            st = pid_update(&PidGains::SMCPID, &st, 2.0, DT, clamp)
                .unwrap()
                .1;
        }
        assert_abs_diff_eq!(30.5 * st.integral, 10.0, epsilon = 1e-9);
        assert!(IntegralClamp::for_actuator(0.0, -10.0, 10.0).is_none());
    }

    #[test]
    fn surface_values() {
        let g = SmcGains::PRESET;
        assert_eq!(sliding_surface(&g, 0.0, 0.0), 0.0);
        assert_abs_diff_eq!(sliding_surface(&g, 2.0, -10.0), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sliding_surface(&g, 1.0, -20.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sat_values() {
        assert_eq!(sat(0.0), 0.0);
        assert_eq!(sat(3.0), 1.0);
        assert_eq!(sat(-0.4), -0.4);
        assert_eq!(sat(0.2 / 0.05), 1.0);
    }

    #[test]
    fn smc_values() {
        let g = SmcGains::PRESET;
        assert_eq!(smc_update(&g, 0.0), 0.0);
        assert_eq!(smc_update(&g, 0.2), -1.0);
        assert_abs_diff_eq!(smc_update(&g, -0.01), 0.2, epsilon = 1e-12);
        assert_eq!(smc_switch(&g, 0.001, Switching::Sign), -1.0);
    }

    #[test]
    fn smcpid_zero_error() {
        let (tr, _) = smcpid_update(
            &PidGains::SMCPID,
            &SmcGains::PRESET,
            Switching::Sat,
            &ControllerState::default(),
            1.3,
            1.3,
            DT,
            None,
        )
        .unwrap();
        assert_eq!(tr.u, 0.0);
    }

    #[test]
    fn smcpid_step_to_400_rpm() {
        // previous tick saw zero error, so ė is the 0 → 2 V jump over 10 ms
        let (tr, _) = smcpid_update(
            &PidGains::SMCPID,
            &SmcGains::PRESET,
            Switching::Sat,
            &ControllerState::primed(0.0),
            2.0,
            0.0,
            DT,
            None,
        )
        .unwrap();
        assert_eq!(tr.e, 2.0);
        assert_abs_diff_eq!(tr.e_dot, 200.0, epsilon = 1e-9);
        assert_abs_diff_eq!(tr.s, 12.0, epsilon = 1e-9);
        assert_eq!(tr.u_smc, -1.0);
        assert_abs_diff_eq!(tr.u_pid, 50.2 + 0.61 + 58.6, epsilon = 1e-9);
        assert_abs_diff_eq!(tr.u, 108.41, epsilon = 1e-9);
    }

    #[test]
    fn smcpid_rejects_non_finite() {
        let st = ControllerState::default();
        let g = (PidGains::SMCPID, SmcGains::PRESET);
        assert!(smcpid_update(&g.0, &g.1, Switching::Sat, &st, f64::NAN, 0.0, DT, None).is_err());
        assert!(smcpid_update(
            &g.0,
            &g.1,
            Switching::Sat,
            &st,
            0.0,
            f64::INFINITY,
            DT,
            None
        )
        .is_err());
    }

    #[test]
    fn presets() {
        assert!(matches!(
            ControlLaw::preset("smcpid"),
            Ok(ControlLaw::SmcPid { .. })
        ));
        assert_eq!(
            ControlLaw::preset("kuhn").unwrap(),
            ControlLaw::Pid {
                pid: PidGains::new(1.057, 3.125, 0.08016)
            }
        );
        assert_eq!(
            ControlLaw::preset("naive").unwrap(),
            ControlLaw::Pid {
                pid: PidGains::new(1.0, 1.0, 1.0)
            }
        );
        let err = ControlLaw::preset("lqr").unwrap_err().to_string();
        assert!(err.contains("smcpid, kuhn, naive"), "{err}");
    }

    #[test]
    fn gain_validation() {
        assert!(PidGains::new(-1.0, 0.0, 0.0).validate().is_err());
        assert!(SmcGains {
            lambda2: 0.0,
            ..SmcGains::PRESET
        }
        .validate()
        .is_err());
        assert!(SmcGains {
            phi: -1.0,
            ..SmcGains::PRESET
        }
        .validate()
        .is_err());
        assert!(SmcGains {
            eta: 0.0,
            ..SmcGains::PRESET
        }
        .validate()
        .is_ok());
    }

    fn arb_state() -> impl Strategy<Value = ControllerState> {
        (-5.0..5.0f64, -5.0..5.0f64, -50.0..50.0f64, any::<bool>()).prop_map(
            |(integral, prev_error, prev_error_dot, initialized)| ControllerState {
                integral,
                prev_error,
                prev_error_dot,
                initialized,
            },
        )
    }

    proptest! {
        #[test]
        fn decomposition_holds(
            st in arb_state(),
            r in -5.0..5.0f64,
            y in -5.0..5.0f64,
            ftau in 0.0..0.1f64,
            eta in 0.0..3.0f64,
        ) {
            let pid = PidGains { derivative_filter_tau: ftau, ..PidGains::SMCPID };
            let smc = SmcGains { eta, ..SmcGains::PRESET };
            let (tr, next) = smcpid_update(&pid, &smc, Switching::Sat, &st, r, y, DT, None).unwrap();
            let (p, next_pid) = pid_update(&pid, &st, r - y, DT, None).unwrap();
            let u_smc = smc_update(&smc, sliding_surface(&smc, r - y, p.e_dot));
            prop_assert_eq!(tr.u, p.u + u_smc);
            prop_assert_eq!(next, next_pid);
        }

        #[test]
        fn eta_zero_is_pure_pid(st in arb_state(), r in -5.0..5.0f64, y in -5.0..5.0f64) {
            let smc = SmcGains { eta: 0.0, ..SmcGains::PRESET };
            let (tr, _) = smcpid_update(&PidGains::SMCPID, &smc, Switching::Sat, &st, r, y, DT, None).unwrap();
            let (p, _) = pid_update(&PidGains::SMCPID, &st, r - y, DT, None).unwrap();
            prop_assert_eq!(tr.u, p.u);
        }

        #[test]
        fn boundary_layer(s in -1.0..1.0f64, phi in 0.001..0.5f64, eta in 0.01..5.0f64) {
            let g = SmcGains { eta, phi, ..SmcGains::PRESET };
            let u = smc_update(&g, s);
            if s.abs() >= phi {
                prop_assert_eq!(u, -eta * sign(s));
            } else {
                prop_assert!(u.abs() < eta);
                prop_assert!((u + eta * s / phi).abs() <= 1e-12 * eta);
            }
        }

        #[test]
        fn sat_is_odd_and_lipschitz(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            prop_assert_eq!(sat(-a), -sat(a));
            prop_assert!((sat(a) - sat(b)).abs() <= (a - b).abs());
            prop_assert!(sat(a).abs() <= 1.0);
            if a.abs() <= 1.0 {
                prop_assert_eq!(sat(a), a);
            }
        }

        #[test]
        fn smc_is_continuous(s in -1.0..1.0f64, h in 1e-9..1e-6f64) {
            let g = SmcGains::PRESET;
            let jump = (smc_update(&g, s + h) - smc_update(&g, s)).abs();
            prop_assert!(jump <= g.eta / g.phi * h * (1.0 + 1e-9));
        }

        #[test]
        fn deterministic(st in arb_state(), es in proptest::collection::vec(-3.0..3.0f64, 1..50)) {
            let go = || {
                let mut s = st;
                es.iter()
                    .map(|&e| {
                        let (tr, n) = smcpid_update(&PidGains::SMCPID, &SmcGains::PRESET, Switching::Sat, &s, e, 0.0, DT, None).unwrap();
                        s = n;
                        tr.u.to_bits()
                    })
                    .collect::<Vec<_>>()
            };
            prop_assert_eq!(go(), go());
        }
    }
}
