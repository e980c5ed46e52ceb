//! Aggregate frequency response of the bulk system seen from the feeder.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyModel {
    /// Aggregate inertia constant, s.
    pub h_agg: f64,
    pub s_base_mva: f64,
    /// Governor reserve, MW. Deficits up to this are absorbed.
    pub headroom_mw: f64,
    pub f0: f64,
}

impl Default for FrequencyModel {
    fn default() -> Self {
        Self { h_agg: 4.0, s_base_mva: 10.0, headroom_mw: 0.02, f0: 60.0 }
    }
}

impl FrequencyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_agg > 0.0 && self.s_base_mva > 0.0 && self.f0 > 0.0 && self.headroom_mw >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid frequency model {self:?}")));
        }
        Ok(())
    }

    /// Slope for an unabsorbed deficit, Hz/s.
    pub fn decline_rate(&self, p_deficit_mw: f64) -> f64 {
        let excess = (p_deficit_mw.abs() - self.headroom_mw).max(0.0);
        -p_deficit_mw.signum() * excess * self.f0 / (2.0 * self.h_agg * self.s_base_mva)
    }

    /// Time for a constant deficit to pull frequency from `f0` down to `f_trip`.
    pub fn time_to_reach(&self, p_deficit_mw: f64, f_trip: f64) -> Option<f64> {
        let rate = self.decline_rate(p_deficit_mw);
        (rate < 0.0).then(|| (f_trip - self.f0) / rate)
    }
}

/// Frequency change over `dt` at frequency `f`. Deficits beyond the headroom
/// give a constant slope; otherwise the governor pulls `f` back to `f0` with
/// time constant `h_agg / 2`.
pub fn frequency_step(fm: &FrequencyModel, f: f64, p_deficit_mw: f64, dt: f64) -> f64 {
    if p_deficit_mw.abs() > fm.headroom_mw {
        fm.decline_rate(p_deficit_mw) * dt
    } else {
        let tau = fm.h_agg / 2.0;
        (fm.f0 - f) * (1.0 - (-dt / tau).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_deficit_holds() {
        let fm = FrequencyModel::default();
        assert_eq!(frequency_step(&fm, 60.0, 0.0, 0.1), 0.0);
    }

    #[test]
    fn linear_decline_matches_closed_form() {
        let fm = FrequencyModel { headroom_mw: 0.0, ..Default::default() };
        let (mut f, mut t, dt) = (60.0, 0.0, 0.001);
        while f >= 59.3 {
            f += frequency_step(&fm, f, 0.1, dt);
            t += dt;
        }
        let expected = 0.7 * 2.0 * fm.h_agg * fm.s_base_mva / (0.1 * fm.f0);
        assert!((t - expected).abs() <= dt * 1.01, "{t} vs {expected}");
        assert!((fm.time_to_reach(0.1, 59.3).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn absorbed_deficit_recovers() {
        let fm = FrequencyModel { headroom_mw: 0.05, ..Default::default() };
        let mut f = 59.8;
        let dt = 0.1;
        for _ in 0..((3.0 * fm.h_agg / dt) as usize) {
            f += frequency_step(&fm, f, 0.04, dt);
        }
        assert!((f - 60.0).abs() < 0.01, "{f}");
    }
}
