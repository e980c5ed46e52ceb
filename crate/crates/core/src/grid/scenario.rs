//! Quasi-static attack scenarios: injections, power flow, frequency and
//! protection stepped at a fixed interval.
//!
//! The bulk source has a reactive reserve above its pre-attack output. When
//! the feeder draws more than that for `t_oel_s`, the over-excitation limiter
//! starts lowering the source voltage for as long as the overload persists.
//! Lower voltage raises constant-power load currents and series reactive
//! losses while capacitor output falls, so the overload feeds itself until the
//! sweep stops converging.

use super::feeder::FeederModel;
use super::frequency::{frequency_step, FrequencyModel};
use super::powerflow::{power_flow, Injections, PowerFlowOptions};
use super::protection::{protection_scan, GridEvent, ProtectionSettings, ProtectionState};
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridScenarioKind {
    Baseline,
    InstantTrip,
    VoltageDegradation,
    LossOfExcitation,
}

impl GridScenarioKind {
    pub const ALL: [GridScenarioKind; 4] = [
        GridScenarioKind::Baseline,
        GridScenarioKind::InstantTrip,
        GridScenarioKind::VoltageDegradation,
        GridScenarioKind::LossOfExcitation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GridScenarioKind::Baseline => "baseline",
            GridScenarioKind::InstantTrip => "instant_trip",
            GridScenarioKind::VoltageDegradation => "voltage_degradation",
            GridScenarioKind::LossOfExcitation => "loss_of_excitation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceLimits {
    /// Reactive output allowed above the pre-attack level, Mvar.
    pub q_reserve_mvar: f64,
    /// Overload duration before the limiter acts, s.
    pub t_oel_s: f64,
    /// Source voltage reduction while limited, pu/s.
    pub oel_ramp_pu_per_s: f64,
}

impl Default for SourceLimits {
    fn default() -> Self {
        Self { q_reserve_mvar: 0.05, t_oel_s: 20.0, oel_ramp_pu_per_s: 0.1 }
    }
}

/// Target-DG behavior after the attack. Reactive amounts are fractions of
/// the DG rating; positive means absorbing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackProfile {
    /// Immediate reactive step from the voltage setpoint cut.
    pub setpoint_cut: f64,
    /// Time over which degraded reactive support declines, s.
    pub decay_horizon_s: f64,
    pub decay_final_q: f64,
    pub loe_ramp_s: f64,
    pub loe_final_q: f64,
    /// Active-power oscillation amplitude, fraction of rated output.
    pub loe_p_osc: f64,
    pub loe_p_osc_hz: f64,
    /// Terminal-voltage deviation counted as loss of synchronism, pu.
    pub sync_dv_pu: f64,
}

impl Default for AttackProfile {
    fn default() -> Self {
        Self {
            setpoint_cut: 0.1652,
            decay_horizon_s: 60.0,
            decay_final_q: 0.6,
            loe_ramp_s: 10.0,
            loe_final_q: 1.0,
            loe_p_osc: 0.2,
            loe_p_osc_hz: 0.5,
            sync_dv_pu: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScenario {
    pub kind: GridScenarioKind,
    pub t_attack: f64,
    pub t_end: f64,
    pub dt: f64,
    pub frequency: FrequencyModel,
    pub protection: ProtectionSettings,
    pub source: SourceLimits,
    pub attack: AttackProfile,
    pub power_flow: PowerFlowOptions,
}

impl Default for GridScenario {
    fn default() -> Self {
        Self {
            kind: GridScenarioKind::Baseline,
            t_attack: 2.0,
            t_end: 120.0,
            dt: 0.1,
            frequency: FrequencyModel::default(),
            protection: ProtectionSettings::default(),
            source: SourceLimits::default(),
            attack: AttackProfile::default(),
            power_flow: PowerFlowOptions::default(),
        }
    }
}

impl GridScenario {
    pub fn new(kind: GridScenarioKind) -> Self {
        Self { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.frequency.validate()?;
        self.protection.validate(self.frequency.f0)?;
        if !(self.dt > 0.0 && self.t_end > self.dt && self.t_attack >= 0.0) {
            return Err(Error::InvalidParameter("grid scenario needs dt > 0, t_end > dt, t_attack >= 0".into()));
        }
        let s = &self.source;
        if !(s.q_reserve_mvar >= 0.0 && s.t_oel_s >= 0.0 && s.oel_ramp_pu_per_s >= 0.0) {
            return Err(Error::InvalidParameter("source limits must be non-negative".into()));
        }
        let a = &self.attack;
        if !(a.decay_horizon_s > 0.0 && a.loe_ramp_s > 0.0 && a.sync_dv_pu > 0.0) {
            return Err(Error::InvalidParameter("attack horizons and sync threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub t: f64,
    pub f: f64,
    pub v_632: f64,
    pub v_target: f64,
    pub p_slack_mw: f64,
    pub q_slack_mvar: f64,
    pub source_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScenarioResult {
    pub kind: GridScenarioKind,
    pub samples: Vec<GridSample>,
    pub events: Vec<(f64, GridEvent)>,
}

impl GridScenarioResult {
    pub fn first_event(&self, pred: impl Fn(&GridEvent) -> bool) -> Option<f64> {
        self.events.iter().find(|(_, e)| pred(e)).map(|(t, _)| *t)
    }

    pub fn time_to_instability(&self) -> Option<f64> {
        self.first_event(GridEvent::is_instability)
    }

    pub fn terminal_event(&self) -> Option<&(f64, GridEvent)> {
        self.events.iter().find(|(_, e)| e.is_terminal())
    }
}

/// Target-DG output (MVA) at time `t`, or `None` once it is disconnected.
pub fn target_output(model: &FeederModel, sc: &GridScenario, t: f64) -> Option<Complex64> {
    let g = &model.generators[model.target_dg];
    let (p0, q0, s) = (g.p_kw / 1e3, g.q_kvar / 1e3, g.rating_kva / 1e3);
    if t < sc.t_attack {
        return Some(Complex64::new(p0, q0));
    }
    let a = &sc.attack;
    let tau = t - sc.t_attack;
    match sc.kind {
        GridScenarioKind::Baseline => Some(Complex64::new(p0, q0)),
        GridScenarioKind::InstantTrip => None,
        GridScenarioKind::VoltageDegradation => {
            let frac = (tau / a.decay_horizon_s).min(1.0);
            let absorbed = a.setpoint_cut + (a.decay_final_q - a.setpoint_cut) * frac;
            Some(Complex64::new(p0, q0 - s * absorbed))
        }
        GridScenarioKind::LossOfExcitation => {
            let absorbed = a.loe_final_q * (tau / a.loe_ramp_s).min(1.0);
            let p = p0 * (1.0 + a.loe_p_osc * (2.0 * PI * a.loe_p_osc_hz * tau).sin());
            Some(Complex64::new(p, q0 - s * absorbed))
        }
    }
}

pub fn run_scenario(model: &FeederModel, sc: &GridScenario) -> Result<GridScenarioResult> {
    sc.validate()?;
    model.validate()?;
    let bus_632 = model.bus_index("632").unwrap_or(model.slack_bus);
    let target_bus = model.target_bus();
    let target_id = model.buses[target_bus].id.clone();

    let mut res = GridScenarioResult { kind: sc.kind, samples: Vec::new(), events: Vec::new() };
    let mut inj = Injections::nominal(model);
    let mut dg_online = vec![true; model.generators.len()];
    let mut f = sc.frequency.f0;
    let mut prot = ProtectionState::default();
    let mut pre: Option<(f64, f64, f64)> = None;
    let (mut overload_t, mut limiting, mut synced) = (0.0, false, true);
    let mut attacked = false;

    let n = (sc.t_end / sc.dt).round() as usize;
    for k in 0..=n {
        let t = k as f64 * sc.dt;
        if !attacked && t >= sc.t_attack - 1e-9 && sc.kind != GridScenarioKind::Baseline {
            attacked = true;
            res.events.push((t, GridEvent::AttackStart));
        }
        match target_output(model, sc, t) {
            Some(s) if dg_online[model.target_dg] => inj.generation[model.target_dg] = s,
            _ => {
                if dg_online[model.target_dg] {
                    dg_online[model.target_dg] = false;
                    res.events.push((t, GridEvent::DgTrip { bus: target_id.clone() }));
                }
            }
        }
        for (i, on) in dg_online.iter().enumerate() {
            if !on {
                inj.generation[i] = Complex64::new(0.0, 0.0);
            }
        }

        let sol = match power_flow(model, &inj, &sc.power_flow) {
            Ok(sol) => sol,
            Err(Error::VoltageCollapse { .. }) => {
                res.events.push((t, GridEvent::VoltageCollapse));
                break;
            }
            Err(e) => return Err(e),
        };
        let (p_slack, q_slack) = (sol.s_slack.re, sol.s_slack.im);
        let (p_pre, q_pre, v_dg_pre) = *pre.get_or_insert((p_slack, q_slack, sol.v_mag(target_bus)));

        res.samples.push(GridSample {
            t,
            f,
            v_632: sol.v_mag(bus_632),
            v_target: sol.v_mag(target_bus),
            p_slack_mw: p_slack,
            q_slack_mvar: q_slack,
            source_v: inj.source_v,
        });

        if synced && (sol.v_mag(target_bus) - v_dg_pre).abs() > sc.attack.sync_dv_pu {
            synced = false;
            res.events.push((t, GridEvent::SyncLoss { bus: target_id.clone() }));
        }

        let v_mag: Vec<f64> = sol.v.iter().map(|v| v.norm()).collect();
        let out = protection_scan(&sc.protection, &mut prot, f, &v_mag, sc.dt);
        if out.shutdown {
            res.events.push((t, GridEvent::GridShutdown));
            break;
        }
        if let Some(b) = out.uv_trip_bus {
            res.events.push((t, GridEvent::UndervoltageTrip { bus: model.buses[b].id.clone() }));
            for (i, g) in model.generators.iter().enumerate() {
                if dg_online[i] {
                    dg_online[i] = false;
                    res.events.push((t, GridEvent::DgTrip { bus: model.buses[g.bus].id.clone() }));
                }
            }
        }

        let overloaded = q_slack > q_pre + sc.source.q_reserve_mvar;
        if overloaded {
            overload_t += sc.dt;
            if !limiting && overload_t >= sc.source.t_oel_s - 1e-9 {
                limiting = true;
                res.events.push((t, GridEvent::ExcitationLimit));
            }
        } else if !limiting {
            overload_t = 0.0;
        }
        if limiting && overloaded {
            inj.source_v -= sc.source.oel_ramp_pu_per_s * sc.dt;
        }

        f += frequency_step(&sc.frequency, f, p_slack - p_pre, sc.dt);
    }
    Ok(res)
}
