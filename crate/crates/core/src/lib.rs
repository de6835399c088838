//! Speed control of a first-order-plus-dead-time servo with a hybrid
//! sliding-mode PID law.
//!
//! The crate is organized bottom-up:
//!
//! - [`plant`]: discrete FOPDT plant with exact zero-order-hold integration
//!   and a fractional delay line.
//! - [`controllers`]: PID, boundary-layer sliding-mode term and their sum,
//!   with the `smcpid`, `kuhn` and `naive` presets.
//! - [`sim`]: closed-loop orchestration on a dual time grid, reference and
//!   disturbance profiles, parameter sweeps.
//! - [`metrics`]: step-response metrics and controller comparison tables.
//! - [`stability`]: a trajectory-level Lyapunov monitor that reconstructs the
//!   lumped disturbance bound and checks the reaching condition.
//! - [`scenario_file`]: the TOML scenario schema used by the CLI.
//!
//! ```
//! use servo_smc::sim::{run, Scenario};
//!
//! let record = run(&Scenario::default()).unwrap();
//! assert_eq!(record.rows.len(), 500);
//! ```

pub mod controllers;
pub mod metrics;
pub mod plant;
pub mod scenario_file;
pub mod sim;
pub mod stability;

mod error;

pub use error::{Error, Result};

/// Returns `Err(Error::NonFinite)` unless `value` is finite.
pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}
