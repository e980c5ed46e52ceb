//! H-bridge inverter with LCL output filter and unipolar sine PWM.
//!
//! Q5/Q6 are the high-side selectors: Q5 ties bridge node A to the bus during
//! the positive half-cycle, Q6 ties node B during the negative one. Q3/Q4 are
//! the low-side modulators; each drives its leg inductor (L2 from A, L3 from
//! B) to ground and, when off, lets the inductor freewheel back to the bus
//! through the upper diode of its leg. C_f sits across A-B and the grid side
//! inductance L4+L5 feeds the load.
//!
//! Forcing Q5 on during the negative half-cycle ties A to the bus while Q3
//! pulls A's leg to ground, so every Q3 pulse becomes a shoot-through limited
//! only by L2 and by Q3's saturation current. Node A then sits near the bus
//! instead of following the modulation, which shaves the negative half-cycle.

use crate::dcdc::{averaged_step, AveragedFlyback, AveragedState};
use crate::error::{Error, Result};
use crate::signal::{
    half_cycle_amplitudes, rms, ForcedLevel, Integrator, OverrideSchedule, PwmChannel, PwmOverride, TimeSeries,
};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BridgeLoad {
    Resistive {
        r_load: f64,
    },
    /// Ideal sinusoidal grid at `f_grid`, in phase with the modulation.
    StiffGrid {
        v_peak: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BusSource {
    Ideal { v_bus: f64 },
    DcdcCoupled(AveragedFlyback),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HBridgeParams {
    pub f_grid: f64,
    pub f_sw: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    pub c_f: f64,
    /// Low-side modulating switches Q3/Q4.
    pub r_on: f64,
    /// High-side selector switches Q5/Q6.
    pub r_on_select: f64,
    /// Off-state resistance of the selectors.
    pub r_off: f64,
    /// Saturation current of Q3/Q4; bounds shoot-through.
    pub i_sat: f64,
    pub v_diode: f64,
    pub modulation_index: f64,
    pub load: BridgeLoad,
    pub source: BusSource,
    pub integrator: Integrator,
}

impl Default for HBridgeParams {
    fn default() -> Self {
        Self {
            f_grid: 60.0,
            f_sw: 50e3,
            l2: 0.3e-3,
            l3: 0.3e-3,
            l4: 0.5e-3,
            l5: 0.5e-3,
            c_f: 2.2e-6,
            r_on: 0.05,
            r_on_select: 0.5,
            r_off: 1e3,
            i_sat: 98.0,
            v_diode: 0.7,
            modulation_index: 0.92,
            load: BridgeLoad::Resistive { r_load: 20.0 },
            source: BusSource::Ideal { v_bus: 107.0 },
            integrator: Integrator::ForwardEuler,
        }
    }
}

impl HBridgeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f_grid", self.f_grid),
            ("l2", self.l2),
            ("l3", self.l3),
            ("l4", self.l4),
            ("l5", self.l5),
            ("c_f", self.c_f),
            ("r_on", self.r_on),
            ("r_on_select", self.r_on_select),
            ("r_off", self.r_off),
            ("i_sat", self.i_sat),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("bridge {name} must be positive, got {v}")));
            }
        }
        if !(self.f_sw >= 50.0 * self.f_grid) {
            return Err(Error::InvalidParameter(format!(
                "switching frequency {} Hz must be at least 50x the grid frequency",
                self.f_sw
            )));
        }
        if !(self.modulation_index > 0.0 && self.modulation_index <= 1.0) {
            return Err(Error::InvalidParameter(format!("modulation index {} outside (0, 1]", self.modulation_index)));
        }
        match self.load {
            BridgeLoad::Resistive { r_load } if !(r_load > 0.0) => {
                return Err(Error::InvalidParameter(format!("load resistance must be positive, got {r_load}")))
            }
            _ => {}
        }
        if let BusSource::Ideal { v_bus } = self.source {
            if !(v_bus > 0.0) {
                return Err(Error::InvalidParameter(format!("bus voltage must be positive, got {v_bus}")));
            }
        }
        Ok(())
    }

    pub fn l_grid(&self) -> f64 {
        self.l4 + self.l5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GateVector {
    pub pwm3: bool,
    pub pwm4: bool,
    pub pwm5: bool,
    pub pwm6: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HBridgeState {
    pub i2: f64,
    pub i3: f64,
    pub v_cf: f64,
    pub i_g: f64,
    pub v_out: f64,
    pub v_bus: f64,
    /// Current drawn from the bus during the last step.
    pub i_bus: f64,
}

fn forced(level: ForcedLevel, healthy: bool) -> bool {
    match level {
        ForcedLevel::None => healthy,
        ForcedLevel::High => true,
        ForcedLevel::Low => false,
    }
}

/// Unipolar schedule: Q5/Q6 select the half-cycle, Q4 (positive) or Q3
/// (negative) compares the carrier against `m*|sin|`.
#[inline]
pub fn gate_schedule(params: &HBridgeParams, t: f64, ovr: PwmOverride) -> GateVector {
    let s = (2.0 * PI * params.f_grid * t).sin();
    let pos = s >= 0.0;
    let carrier = (t * params.f_sw).rem_euclid(1.0);
    let duty = params.modulation_index * s.abs();
    GateVector {
        pwm3: forced(ovr.level_for(PwmChannel::Pwm3), !pos && carrier < duty),
        pwm4: forced(ovr.level_for(PwmChannel::Pwm4), pos && carrier < duty),
        pwm5: forced(ovr.level_for(PwmChannel::Pwm5), pos),
        pwm6: forced(ovr.level_for(PwmChannel::Pwm6), !pos),
    }
}

/// How a low-side leg node behaves for this step.
#[derive(Clone, Copy)]
enum Leg {
    On,
    ToBus,
    ToGround,
    Blocked,
}

fn leg_mode(on: bool, i: f64) -> Leg {
    if on {
        Leg::On
    } else if i > 0.0 {
        Leg::ToBus
    } else if i < 0.0 {
        Leg::ToGround
    } else {
        Leg::Blocked
    }
}

struct Nodes {
    v_a: f64,
    i5: f64,
    i6: f64,
}

#[inline]
fn top_nodes(p: &HBridgeParams, g: &GateVector, v_bus: f64, i2: f64, i3: f64, v_cf: f64) -> Nodes {
    let g5 = 1.0 / if g.pwm5 { p.r_on_select } else { p.r_off };
    let g6 = 1.0 / if g.pwm6 { p.r_on_select } else { p.r_off };
    let v_a = (g5 * v_bus + g6 * (v_bus + v_cf) - (i2 + i3)) / (g5 + g6);
    let v_b = v_a - v_cf;
    Nodes { v_a, i5: g5 * (v_bus - v_a), i6: g6 * (v_bus - v_b) }
}

#[inline]
fn leg_voltage(p: &HBridgeParams, leg: Leg, i: f64, v_bus: f64) -> Option<f64> {
    match leg {
        Leg::On => Some(p.r_on * i),
        Leg::ToBus => Some(v_bus + p.v_diode),
        Leg::ToGround => Some(-p.v_diode),
        Leg::Blocked => None,
    }
}

fn load_voltage(p: &HBridgeParams, i_g: f64, t: f64) -> f64 {
    match p.load {
        BridgeLoad::Resistive { r_load } => r_load * i_g,
        BridgeLoad::StiffGrid { v_peak } => v_peak * (2.0 * PI * p.f_grid * t).sin(),
    }
}

/// Advance the bridge one step at time `t` with bus voltage `v_bus_in`.
pub fn hbridge_step(
    params: &HBridgeParams,
    state: &HBridgeState,
    gates: GateVector,
    v_bus_in: f64,
    t: f64,
    dt: f64,
) -> HBridgeState {
    let p = params;
    let v_bus = v_bus_in.max(0.0);
    let leg_a = leg_mode(gates.pwm3, state.i2);
    let leg_b = leg_mode(gates.pwm4, state.i3);
    let v_load = load_voltage(p, state.i_g, t);
    let v_load_slope = match p.load {
        BridgeLoad::Resistive { r_load } => Some(r_load),
        BridgeLoad::StiffGrid { .. } => None,
    };

    let f = |x: &[f64; 4]| -> [f64; 4] {
        let [i2, i3, v_cf, i_g] = *x;
        let n = top_nodes(p, &gates, v_bus, i2, i3, v_cf);
        let v_b = n.v_a - v_cf;
        let di2 = leg_voltage(p, leg_a, i2, v_bus).map_or(0.0, |v| (n.v_a - v) / p.l2);
        let di3 = leg_voltage(p, leg_b, i3, v_bus).map_or(0.0, |v| (v_b - v) / p.l3);
        let i_c = n.i5 - i2 - i_g;
        let v_l = match v_load_slope {
            Some(r) => r * i_g,
            None => v_load,
        };
        [di2, di3, i_c / p.c_f, (v_cf - v_l) / p.l_grid()]
    };
    let x = [state.i2, state.i3, state.v_cf, state.i_g];
    let mut y = p.integrator.step(&x, dt, f);

    // Diode-fed legs cannot reverse; saturated switches cap the current.
    for (idx, on) in [(0usize, gates.pwm3), (1usize, gates.pwm4)] {
        if !on && x[idx] * y[idx] < 0.0 {
            y[idx] = 0.0;
        }
        if on && y[idx] > p.i_sat {
            y[idx] = p.i_sat;
        }
    }

    let n = top_nodes(p, &gates, v_bus, x[0], x[1], x[2]);
    let returned = |leg: Leg, i: f64| if matches!(leg, Leg::ToBus) { i } else { 0.0 };
    let i_bus = n.i5 + n.i6 - returned(leg_a, x[0]) - returned(leg_b, x[1]);

    let v_out = match p.load {
        BridgeLoad::Resistive { r_load } => r_load * y[3],
        BridgeLoad::StiffGrid { .. } => y[2],
    };
    HBridgeState { i2: y[0], i3: y[1], v_cf: y[2], i_g: y[3], v_out, v_bus, i_bus }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputMetrics {
    pub rms: f64,
    pub pk_pk: f64,
    pub pos_peak: f64,
    pub neg_peak: f64,
    /// `|pos - neg| / pos`.
    pub asymmetry: f64,
    pub cycles: usize,
}

pub const MIN_METRIC_CYCLES: usize = 5;

/// Metrics over the whole reference cycles contained in `series`.
pub fn output_metrics(series: &TimeSeries, f_grid: f64) -> Result<OutputMetrics> {
    let cycles = half_cycle_amplitudes(series, f_grid)?;
    if cycles.len() < MIN_METRIC_CYCLES {
        return Err(Error::SpanTooShort { need_s: MIN_METRIC_CYCLES as f64 / f_grid, got_s: series.duration() });
    }
    let period = 1.0 / f_grid;
    let k0 = ((series.t0 - 1e-9 * period) / period).ceil();
    let whole = series.window(k0 * period, (k0 + cycles.len() as f64) * period);
    let n = cycles.len() as f64;
    let pos = cycles.iter().map(|c| c.0).sum::<f64>() / n;
    let neg = cycles.iter().map(|c| c.1).sum::<f64>() / n;
    Ok(OutputMetrics {
        rms: rms(&whole)?,
        pk_pk: whole.max()? - whole.min()?,
        pos_peak: pos,
        neg_peak: neg,
        asymmetry: (pos - neg).abs() / pos,
        cycles: cycles.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HBridgeRun {
    pub params: HBridgeParams,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub record_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HBridgeTrace {
    pub v_out: TimeSeries,
    pub v_bus: TimeSeries,
    /// Largest panel current seen, when dcdc-coupled.
    pub max_i_pv: f64,
    pub final_state: HBridgeState,
}

pub fn run_hbridge(run: &HBridgeRun, overrides: &OverrideSchedule) -> Result<HBridgeTrace> {
    let p = &run.params;
    p.validate()?;
    if !(run.dt > 0.0 && run.t_end > run.t_start) {
        return Err(Error::InvalidParameter("bridge run needs dt > 0 and t_end > t_start".into()));
    }
    let n_steps = ((run.t_end - run.t_start) / run.dt).round() as usize;
    let block = ((run.record_dt / run.dt).round() as usize).max(1);
    let rec_dt = block as f64 * run.dt;
    let t0 = run.t_start + rec_dt;

    let mut source: Option<(AveragedFlyback, AveragedState)> = match p.source {
        BusSource::Ideal { .. } => None,
        BusSource::DcdcCoupled(m) => {
            m.panel.validate()?;
            let mut s = m.initial_state();
            s.v_bus = m.ideal_bus();
            Some((m, s))
        }
    };
    let mut tr = HBridgeTrace {
        v_out: TimeSeries::new(t0, rec_dt, "V"),
        v_bus: TimeSeries::new(t0, rec_dt, "V"),
        max_i_pv: 0.0,
        final_state: HBridgeState::default(),
    };
    let mut state = HBridgeState::default();
    let mut cursor = overrides.cursor();
    for k in 0..n_steps {
        let t = run.t_start + k as f64 * run.dt;
        let gates = gate_schedule(p, t, cursor.advance(t));
        let v_bus = match (&p.source, &source) {
            (BusSource::Ideal { v_bus }, _) => *v_bus,
            (_, Some((_, s))) => s.v_bus,
            _ => unreachable!("coupled source carries state"),
        };
        state = hbridge_step(p, &state, gates, v_bus, t, run.dt);
        if let Some((m, s)) = source.as_mut() {
            *s = averaged_step(m, s, state.i_bus, run.dt);
            tr.max_i_pv = tr.max_i_pv.max(s.i_pv);
            assert!(s.i_pv <= m.panel.i_sc, "panel current {} exceeds i_sc", s.i_pv);
        }
        if (k + 1) % block == 0 {
            tr.v_out.push(state.v_out);
            tr.v_bus.push(state.v_bus);
        }
    }
    tr.final_state = state;
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let p = HBridgeParams::default();
        let g = gate_schedule(&p, 0.25 / 60.0, PwmOverride::PASS_THROUGH);
        assert!(g.pwm5 && !g.pwm6 && !g.pwm3);
        let g = gate_schedule(&p, 0.75 / 60.0, PwmOverride::PASS_THROUGH);
        assert!(!g.pwm5 && g.pwm6 && !g.pwm4);
        let attack = PwmOverride { target: PwmChannel::Pwm5, forced_level: ForcedLevel::High };
        let g = gate_schedule(&p, 0.75 / 60.0, attack);
        assert!(g.pwm5 && g.pwm6);
    }

    #[test]
    fn healthy_schedule_never_enables_both_selectors() {
        let p = HBridgeParams::default();
        for k in 0..100_000 {
            let g = gate_schedule(&p, k as f64 * 1e-7 * 3.3, PwmOverride::PASS_THROUGH);
            assert!(g.pwm5 != g.pwm6);
            assert!(!(g.pwm3 && g.pwm4));
        }
    }

    #[test]
    fn metrics_need_five_cycles() {
        let dt = 1.0 / (60.0 * 1000.0);
        let s = TimeSeries::from_samples(
            0.0,
            dt,
            (0..4000).map(|i| (2.0 * PI * 60.0 * i as f64 * dt).sin()).collect(),
            "V",
        );
        assert!(matches!(output_metrics(&s, 60.0), Err(Error::SpanTooShort { .. })));
        let s = TimeSeries::from_samples(
            0.0,
            dt,
            (0..6000).map(|i| (2.0 * PI * 60.0 * i as f64 * dt).sin()).collect(),
            "V",
        );
        let m = output_metrics(&s, 60.0).unwrap();
        assert_eq!(m.cycles, 6);
        assert!((m.rms - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
        assert!((m.pk_pk - 2.0).abs() < 1e-3);
        assert!(m.asymmetry < 1e-3);
    }
}
