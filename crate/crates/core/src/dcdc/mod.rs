//! Flyback DC-DC stage with PV source and MPPT.

mod averaged;
mod flyback;
mod mppt;
mod pv;
mod run;

pub use averaged::{averaged_step, AveragedFlyback, AveragedState};
pub use flyback::{flyback_step, EnergyTally, FlybackParams, FlybackState};
pub use mppt::{mppt_step, MpptState};
pub use pv::{pv_current, pv_current_clamped, PvPanelModel};
pub use run::{run_flyback, DutyControl, FlybackRun, FlybackTrace, InputSource};

use crate::error::{Error, Result};

/// Ideal output `v_in * n / (1 - d)`.
pub fn ideal_flyback_output(v_in: f64, turns_ratio: f64, d_main: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&d_main) {
        return Err(Error::DegenerateDuty(d_main));
    }
    Ok(v_in * turns_ratio / (1.0 - d_main))
}

/// `l * di / dt`.
pub fn spike_estimate(l: f64, di: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("spike interval must be positive, got {dt}")));
    }
    Ok(l * di / dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_output_examples() {
        assert!((ideal_flyback_output(10.0, 2.0, 0.5).unwrap() - 40.0).abs() < 1e-12);
        assert!((ideal_flyback_output(10.0, 2.0, 0.0).unwrap() - 20.0).abs() < 1e-12);
        assert!((ideal_flyback_output(17.0, 1.5, 0.65).unwrap() - 72.857).abs() < 0.01);
        assert!(matches!(ideal_flyback_output(17.0, 1.5, 1.0), Err(Error::DegenerateDuty(_))));
    }

    #[test]
    fn spike_examples() {
        assert!((spike_estimate(2.8e-6, 5.0, 1e-6).unwrap() - 14.0).abs() < 1e-9);
        assert_eq!(spike_estimate(1e-3, 0.0, 1e-6).unwrap(), 0.0);
        assert!((spike_estimate(2.8e-6, 10.0, 5e-7).unwrap() - 56.0).abs() < 1e-9);
        assert!(spike_estimate(1e-6, 1.0, 0.0).is_err());
    }
}
