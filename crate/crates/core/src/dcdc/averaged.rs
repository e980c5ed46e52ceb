//! Cycle-averaged flyback feeding a DC bus, for runs where switching detail
//! of the DC-DC stage is irrelevant (finite-source inverter studies).

use super::flyback::FlybackParams;
use super::pv::{pv_current_clamped, PvPanelModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedFlyback {
    pub params: FlybackParams,
    pub panel: PvPanelModel,
    pub c_in: f64,
    pub c_bus: f64,
    pub duty: f64,
}

impl Default for AveragedFlyback {
    fn default() -> Self {
        Self {
            params: FlybackParams::default(),
            panel: PvPanelModel::default(),
            c_in: 100e-6,
            c_bus: 100e-6,
            duty: 0.65,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AveragedState {
    pub i_m: f64,
    pub v_pv: f64,
    pub v_bus: f64,
    /// Panel current during the last step.
    pub i_pv: f64,
}

impl AveragedFlyback {
    /// Bus voltage with no losses and the panel held at its MPP.
    pub fn ideal_bus(&self) -> f64 {
        self.panel.mpp().0 * self.params.turns_ratio / (1.0 - self.duty)
    }

    pub fn initial_state(&self) -> AveragedState {
        AveragedState { i_m: 0.0, v_pv: self.panel.mpp().0, v_bus: 0.0, i_pv: 0.0 }
    }
}

/// Forward-Euler step with the bus loaded by `i_load`.
pub fn averaged_step(m: &AveragedFlyback, s: &AveragedState, i_load: f64, dt: f64) -> AveragedState {
    let p = &m.params;
    let d = m.duty;
    let i_pv = pv_current_clamped(&m.panel, s.v_pv);
    let reflected = (1.0 - d) * (s.v_bus + p.v_diode) / p.turns_ratio;
    let di = (s.v_pv - (p.r_winding + d * p.r_on) * s.i_m - reflected) / p.l_m;
    // The secondary diode blocks reverse current.
    let i_m = (s.i_m + di * dt).max(0.0);
    let v_pv = (s.v_pv + (i_pv - s.i_m) / m.c_in * dt).max(0.0);
    let v_bus = (s.v_bus + ((1.0 - d) * s.i_m / p.turns_ratio - i_load) / m.c_bus * dt).max(0.0);
    AveragedState { i_m, v_pv, v_bus, i_pv }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unloaded_bus_charges_toward_boost_ratio() {
        let m = AveragedFlyback::default();
        let mut s = m.initial_state();
        let dt = 1e-6;
        for _ in 0..200_000 {
            s = averaged_step(&m, &s, 0.0, dt);
        }
        // Without load the panel drifts to open circuit, so the bus sits at
        // the boost ratio of v_oc minus the diode drop.
        let p = &m.params;
        let expected = m.panel.v_oc * p.turns_ratio / (1.0 - m.duty) - p.v_diode;
        assert!((s.v_bus - expected).abs() / expected < 0.02, "{} vs {}", s.v_bus, expected);
        assert!(s.i_pv <= m.panel.i_sc);
    }
}
