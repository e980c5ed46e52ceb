//! Closed-loop driver for the switched flyback: PWM generation, optional PV
//! source with input capacitor, MPPT ticks, gate overrides and recording.

use super::flyback::{flyback_step, FlybackParams, FlybackState};
use super::mppt::{mppt_step, MpptState};
use super::pv::{pv_current_clamped, PvPanelModel};
use crate::error::{Error, Result};
use crate::signal::{pwm_level, ForcedLevel, OverrideSchedule, PwmChannel, PwmConfig, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSource {
    Ideal { v_in: f64 },
    Pv { panel: PvPanelModel, c_in: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DutyControl {
    Fixed(f64),
    Mppt { initial: MpptState, interval_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlybackRun {
    pub params: FlybackParams,
    pub source: InputSource,
    pub control: DutyControl,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Spacing of recorded samples; `v_sw` is peak-held over each interval.
    pub record_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlybackTrace {
    pub v_out: TimeSeries,
    pub v_sw: TimeSeries,
    pub i_m: TimeSeries,
    pub duty: TimeSeries,
    pub v_pv: TimeSeries,
    pub p_pv: TimeSeries,
    pub peak_v_sw: f64,
    pub destroyed_at: Option<f64>,
    pub final_state: FlybackState,
    pub final_duty: f64,
}

pub fn run_flyback(run: &FlybackRun, overrides: &OverrideSchedule) -> Result<FlybackTrace> {
    let p = &run.params;
    p.validate()?;
    if !(run.dt > 0.0 && run.t_end > run.t_start) {
        return Err(Error::InvalidParameter("flyback run needs dt > 0 and t_end > t_start".into()));
    }
    let n_steps = ((run.t_end - run.t_start) / run.dt).round() as usize;
    let block = ((run.record_dt / run.dt).round() as usize).max(1);
    let rec_dt = block as f64 * run.dt;

    let (mut mppt, interval_steps) = match run.control {
        DutyControl::Fixed(d) => {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::DegenerateDuty(d));
            }
            (MpptState { duty: d, ..MpptState::default() }, usize::MAX)
        }
        DutyControl::Mppt { initial, interval_s } => {
            let steps = ((interval_s / run.dt).round() as usize).max(1);
            (initial, steps)
        }
    };
    let mut pwm = PwmConfig::new(p.f_sw, mppt.duty)?;

    let (mut v_pv, c_in, panel) = match run.source {
        InputSource::Ideal { v_in } => (v_in, None, None),
        InputSource::Pv { panel, c_in } => {
            panel.validate()?;
            (panel.mpp().0, Some(c_in), Some(panel))
        }
    };

    let t0 = run.t_start + rec_dt;
    let mut tr = FlybackTrace {
        v_out: TimeSeries::new(t0, rec_dt, "V"),
        v_sw: TimeSeries::new(t0, rec_dt, "V"),
        i_m: TimeSeries::new(t0, rec_dt, "A"),
        duty: TimeSeries::new(t0, rec_dt, "ratio"),
        v_pv: TimeSeries::new(t0, rec_dt, "V"),
        p_pv: TimeSeries::new(t0, rec_dt, "W"),
        peak_v_sw: f64::NEG_INFINITY,
        destroyed_at: None,
        final_state: FlybackState::default(),
        final_duty: mppt.duty,
    };

    let mut state = FlybackState::default();
    let mut cursor = overrides.cursor();
    let mut block_peak = f64::NEG_INFINITY;
    let (mut acc_v, mut acc_i, mut acc_n) = (0.0, 0.0, 0usize);

    for k in 0..n_steps {
        let t = run.t_start + k as f64 * run.dt;
        let ovr = cursor.advance(t);
        let main = pwm_level(&pwm, t, ovr.level_for(PwmChannel::Pwm2));
        let clamp = match ovr.level_for(PwmChannel::Pwm1) {
            ForcedLevel::None => !main,
            ForcedLevel::High => true,
            ForcedLevel::Low => false,
        };

        let v_in = v_pv;
        state = flyback_step(p, &state, clamp, main, v_in, run.dt);
        let i_src = match panel {
            Some(panel) => {
                let i_pv = pv_current_clamped(&panel, v_pv);
                let c_in = c_in.expect("pv source carries c_in");
                v_pv = (v_pv + (i_pv - state.i_m) / c_in * run.dt).max(0.0);
                i_pv
            }
            None => state.i_m,
        };
        acc_v += v_in;
        acc_i += i_src;
        acc_n += 1;

        if state.destroyed && tr.destroyed_at.is_none() {
            tr.destroyed_at = Some(t + run.dt);
        }
        tr.peak_v_sw = tr.peak_v_sw.max(state.v_sw);
        block_peak = block_peak.max(state.v_sw);

        if (k + 1) % interval_steps == 0 {
            let n = acc_n as f64;
            mppt = mppt_step(&mppt, acc_v / n, acc_i / n);
            pwm.duty = mppt.duty;
            acc_v = 0.0;
            acc_i = 0.0;
            acc_n = 0;
        }

        if (k + 1) % block == 0 {
            tr.v_out.push(state.v_out);
            tr.v_sw.push(block_peak);
            tr.i_m.push(state.i_m);
            tr.duty.push(pwm.duty);
            tr.v_pv.push(v_pv);
            tr.p_pv.push(v_in * i_src);
            block_peak = f64::NEG_INFINITY;
        }
    }
    tr.final_state = state;
    tr.final_duty = pwm.duty;
    Ok(tr)
}
