//! Device-level attack chain: environment, sensor front end and trigger on a
//! control clock, then the affected power stage around the activation time.
//!
//! The trigger path is simulated over the whole clock at `clock.dt`. The
//! power stage is switched at `power_dt` over a short window: `window_pre_s`
//! before activation to `window_post_s` after it, or the final
//! `window_pre_s + window_post_s` seconds when nothing fires.

use crate::dcac::{output_metrics, run_hbridge, HBridgeParams, HBridgeRun};
use crate::dcdc::{run_flyback, DutyControl, FlybackParams, FlybackRun, InputSource, PvPanelModel};
use crate::error::{Error, Result};
use crate::grid::GridScenarioKind;
use crate::sensor::{
    environment_at, front_end_step, sensor_voltage, EnvironmentProfile, FrontEndFilter, SensorNodeState,
    TempSensorModel,
};
use crate::signal::{percent_reduction, OverrideSchedule, PwmOverride, SimClock, TimeSeries};
use crate::trojan::{grid_v_zero, payload_override, trojan_step, PayloadMode, TriggerCircuitParams, TriggerState};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dcdc,
    Dcac,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Dcdc => "dcdc",
            Stage::Dcac => "dcac",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dcdc" => Some(Stage::Dcdc),
            "dcac" => Some(Stage::Dcac),
            _ => None,
        }
    }

    pub fn for_mode(mode: PayloadMode) -> Self {
        match mode {
            PayloadMode::Pwm1High | PayloadMode::Pwm1Low => Stage::Dcdc,
            PayloadMode::Pwm5High => Stage::Dcac,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    Temperature,
    SensorV,
    VShunt,
    VMain,
    InvOut,
    Payload,
    VOut,
    VSw,
    VBus,
    Duty,
}

impl Channel {
    pub const ALL: [Channel; 10] = [
        Channel::Temperature,
        Channel::SensorV,
        Channel::VShunt,
        Channel::VMain,
        Channel::InvOut,
        Channel::Payload,
        Channel::VOut,
        Channel::VSw,
        Channel::VBus,
        Channel::Duty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Temperature => "temp_c",
            Channel::SensorV => "v_sensor",
            Channel::VShunt => "v_shunt",
            Channel::VMain => "v_main",
            Channel::InvOut => "inv_out",
            Channel::Payload => "payload",
            Channel::VOut => "v_out",
            Channel::VSw => "v_sw",
            Channel::VBus => "v_bus",
            Channel::Duty => "duty",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    fn is_control(self) -> bool {
        matches!(
            self,
            Channel::Temperature
                | Channel::SensorV
                | Channel::VShunt
                | Channel::VMain
                | Channel::InvOut
                | Channel::Payload
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceScenario {
    pub env: EnvironmentProfile,
    pub sensor: TempSensorModel,
    pub filter: FrontEndFilter,
    pub trigger: TriggerCircuitParams,
    /// `false` replaces the trigger with its reset state.
    pub trojan_present: bool,
    pub stage: Stage,
    pub dcdc: FlybackParams,
    pub panel: PvPanelModel,
    pub c_in: f64,
    pub dcdc_control: DutyControl,
    pub dcac: HBridgeParams,
    pub clock: SimClock,
    pub power_dt: f64,
    pub window_pre_s: f64,
    pub window_post_s: f64,
    /// Length of the before/after metric windows.
    pub metric_span_s: f64,
    pub records: Vec<Channel>,
    /// Keep every n-th control-clock sample.
    pub control_decimate: usize,
    pub power_record_dt: f64,
}

impl DeviceScenario {
    /// Scenario with defaults for the stage implied by `mode`.
    pub fn new(env: EnvironmentProfile, mode: PayloadMode) -> Self {
        let stage = Stage::for_mode(mode);
        let t_end = env.end_time();
        Self {
            env,
            sensor: TempSensorModel::default(),
            filter: FrontEndFilter::default(),
            trigger: TriggerCircuitParams::default().with_mode(mode),
            trojan_present: true,
            stage,
            dcdc: FlybackParams::default(),
            panel: PvPanelModel::default(),
            c_in: 100e-6,
            dcdc_control: DutyControl::Fixed(0.65),
            dcac: HBridgeParams::default(),
            clock: SimClock { dt: 1e-4, t_end },
            power_dt: match stage {
                Stage::Dcdc => 1e-8,
                Stage::Dcac => 1e-7,
            },
            window_pre_s: 0.3,
            window_post_s: 0.2,
            metric_span_s: 0.1,
            records: Channel::ALL.to_vec(),
            control_decimate: 10,
            power_record_dt: 1e-5,
        }
    }

    /// Every inconsistency, not only the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                out.push(e.to_string());
            }
        };
        check(self.env.validate());
        check(self.filter.validate());
        check(self.trigger.validate());
        check(self.panel.validate());
        match self.stage {
            Stage::Dcdc => check(self.dcdc.validate()),
            Stage::Dcac => check(self.dcac.validate()),
        }
        if Stage::for_mode(self.trigger.payload_mode) != self.stage {
            out.push(format!(
                "payload mode {} acts on the {} stage, not {}",
                self.trigger.payload_mode.as_str(),
                Stage::for_mode(self.trigger.payload_mode).as_str(),
                self.stage.as_str()
            ));
        }
        if !(self.clock.dt > 0.0 && self.clock.t_end > 0.0) {
            out.push("clock needs dt > 0 and t_end > 0".into());
        }
        if self.clock.t_end > self.env.end_time() + 1e-9 {
            out.push(format!(
                "clock runs to {} s but the environment profile ends at {} s",
                self.clock.t_end,
                self.env.end_time()
            ));
        }
        let window = self.window_pre_s + self.window_post_s;
        if !(self.power_dt > 0.0 && self.power_dt < self.clock.dt) {
            out.push("power_dt must be positive and finer than the control clock".into());
        }
        if !(self.metric_span_s > 0.0
            && self.window_pre_s >= self.metric_span_s
            && self.window_post_s >= self.metric_span_s)
        {
            out.push("both window halves must cover the metric span".into());
        }
        if window > self.clock.t_end {
            out.push(format!("power window {window} s exceeds the clock span {} s", self.clock.t_end));
        }
        if self.control_decimate == 0 {
            out.push("control decimation must be at least 1".into());
        }
        if !(self.power_record_dt >= self.power_dt) {
            out.push("power record interval must be at least power_dt".into());
        }
        if let DutyControl::Fixed(d) = self.dcdc_control {
            if !(0.0..1.0).contains(&d) {
                out.push(format!("duty {d} outside [0, 1)"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(p.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub stage: Stage,
    pub channels: BTreeMap<String, TimeSeries>,
    pub events: Vec<(f64, String)>,
    pub summary: BTreeMap<String, f64>,
    pub schedule: OverrideSchedule,
}

impl ScenarioResult {
    pub fn t_trigger(&self) -> Option<f64> {
        self.summary.get("t_trigger_s").copied()
    }

    pub fn channel(&self, c: Channel) -> Option<&TimeSeries> {
        self.channels.get(c.name())
    }
}

pub const EVENT_TRIGGER: &str = "trigger activated";
pub const EVENT_RELEASE: &str = "payload released";
pub const EVENT_DESTROYED: &str = "driver destroyed";

struct ControlRun {
    channels: BTreeMap<String, TimeSeries>,
    events: Vec<(f64, String)>,
    schedule: OverrideSchedule,
    t_trigger: Option<f64>,
    t_first_glitch: Option<f64>,
    glitches: u64,
}

fn run_control(s: &DeviceScenario) -> Result<ControlRun> {
    let n = s.clock.n_steps();
    let every = s.control_decimate;
    let rec_dt = s.clock.dt * every as f64;
    let wanted: Vec<Channel> = s.records.iter().copied().filter(|c| c.is_control()).collect();
    let mut channels: BTreeMap<String, TimeSeries> =
        wanted.iter().map(|c| (c.name().to_string(), TimeSeries::new(0.0, rec_dt, unit(*c)))).collect();

    let env0 = environment_at(&s.env, 0.0)?;
    let mut node = SensorNodeState::settled(sensor_voltage(&s.sensor, env0.temp_c) + env0.offset_v);
    let mut trig = TriggerState::default();
    let mut out = ControlRun {
        channels: BTreeMap::new(),
        events: Vec::new(),
        schedule: OverrideSchedule::none(),
        t_trigger: None,
        t_first_glitch: None,
        glitches: 0,
    };
    let mut active = PwmOverride::PASS_THROUGH;

    for k in 0..n {
        let t = s.clock.time(k);
        let env = environment_at(&s.env, t)?;
        let v_tmp = sensor_voltage(&s.sensor, env.temp_c) + env.offset_v;
        node = front_end_step(&s.filter, &node, v_tmp, s.clock.dt);
        if s.trojan_present {
            trig =
                trojan_step(&s.trigger, &trig, node.v_shunt, grid_v_zero(s.trigger.grid_zero_freq, t), t, s.clock.dt);
            if trig.glitches > 0 && out.t_first_glitch.is_none() {
                out.t_first_glitch = Some(t);
            }
            let ovr = payload_override(&s.trigger, &trig);
            if ovr != active {
                if ovr.is_pass_through() {
                    out.events.push((t, EVENT_RELEASE.to_string()));
                } else if out.t_trigger.is_none() {
                    out.t_trigger = Some(t);
                    out.events.push((t, EVENT_TRIGGER.to_string()));
                }
                out.schedule.changes.push((t, ovr));
                active = ovr;
            }
        }
        if k % every == 0 {
            for c in &wanted {
                let v = match c {
                    Channel::Temperature => env.temp_c,
                    Channel::SensorV => v_tmp,
                    Channel::VShunt => node.v_shunt,
                    Channel::VMain => trig.v_main,
                    Channel::InvOut => f64::from(u8::from(trig.inv_out)),
                    Channel::Payload => f64::from(u8::from(trig.payload_active)),
                    _ => unreachable!("power channels are recorded by the stage run"),
                };
                channels.get_mut(c.name()).expect("channel allocated").push(v);
            }
        }
    }
    out.glitches = trig.glitches;
    out.channels = channels;
    Ok(out)
}

fn unit(c: Channel) -> &'static str {
    match c {
        Channel::Temperature => "degC",
        Channel::InvOut | Channel::Payload => "logic",
        Channel::Duty => "ratio",
        _ => "V",
    }
}

/// Runs the device chain end to end.
pub fn run_device_scenario(s: &DeviceScenario) -> Result<ScenarioResult> {
    s.validate()?;
    let ctl = run_control(s)?;
    let mut summary = BTreeMap::new();
    let mut events = ctl.events;
    summary.insert("triggered".to_string(), f64::from(u8::from(ctl.t_trigger.is_some())));
    summary.insert("glitches".to_string(), ctl.glitches as f64);
    if let Some(t) = ctl.t_first_glitch {
        summary.insert("t_first_glitch_s".to_string(), t);
    }
    if let Some(t) = ctl.t_trigger {
        summary.insert("t_trigger_s".to_string(), t);
        if let Some(t0) = ctl.t_first_glitch {
            summary.insert("trigger_delay_s".to_string(), t - t0);
        }
    }

    let t_end = s.clock.t_end;
    let (w0, pivot, w1) = match ctl.t_trigger {
        Some(ta) => {
            let w1 = (ta + s.window_post_s).min(t_end);
            ((ta - s.window_pre_s).max(0.0), ta, w1)
        }
        None => {
            let w0 = t_end - s.window_pre_s - s.window_post_s;
            (w0, w0 + s.window_pre_s, t_end)
        }
    };
    let span = s.metric_span_s;
    if w1 - pivot < span - 1e-9 {
        return Err(Error::SpanTooShort { need_s: span, got_s: w1 - pivot });
    }
    let before = (pivot - span, pivot);
    let after = (w1 - span, w1);
    let mut channels = ctl.channels;
    let want = |c: Channel| s.records.contains(&c);

    match s.stage {
        Stage::Dcdc => {
            let run = FlybackRun {
                params: s.dcdc,
                source: InputSource::Pv { panel: s.panel, c_in: s.c_in },
                control: s.dcdc_control,
                dt: s.power_dt,
                t_start: w0,
                t_end: w1,
                record_dt: s.power_record_dt,
            };
            let tr = run_flyback(&run, &ctl.schedule)?;
            let vb = tr.v_out.window(before.0, before.1).mean()?;
            let va = tr.v_out.window(after.0, after.1).mean()?;
            summary.insert("v_out_before".into(), vb);
            summary.insert("v_out_after".into(), va);
            summary.insert("v_out_reduction".into(), percent_reduction(vb, va)?);
            summary.insert("peak_v_sw_before".into(), tr.v_sw.window(before.0, before.1).max()?);
            summary.insert("peak_v_sw_after".into(), tr.v_sw.window(pivot, w1).max()?);
            summary.insert("duty_before".into(), tr.duty.window(before.0, before.1).mean()?);
            summary.insert("duty_after".into(), tr.duty.window(after.0, after.1).mean()?);
            if let Some(tf) = tr.destroyed_at {
                summary.insert("t_failure_s".into(), tf);
                events.push((tf, EVENT_DESTROYED.to_string()));
            }
            for (c, ts) in [(Channel::VOut, tr.v_out), (Channel::VSw, tr.v_sw), (Channel::Duty, tr.duty)] {
                if want(c) {
                    channels.insert(c.name().to_string(), ts);
                }
            }
        }
        Stage::Dcac => {
            let run =
                HBridgeRun { params: s.dcac, dt: s.power_dt, t_start: w0, t_end: w1, record_dt: s.power_record_dt };
            let tr = run_hbridge(&run, &ctl.schedule)?;
            let f = s.dcac.f_grid;
            let mb = output_metrics(&tr.v_out.window(before.0, before.1), f)?;
            let ma = output_metrics(&tr.v_out.window(after.0, after.1), f)?;
            summary.insert("rms_before".into(), mb.rms);
            summary.insert("rms_after".into(), ma.rms);
            summary.insert("rms_reduction".into(), percent_reduction(mb.rms, ma.rms)?);
            summary.insert("pk_pk_before".into(), mb.pk_pk);
            summary.insert("pk_pk_after".into(), ma.pk_pk);
            summary.insert("pos_peak_before".into(), mb.pos_peak);
            summary.insert("pos_peak_after".into(), ma.pos_peak);
            summary.insert("neg_peak_before".into(), mb.neg_peak);
            summary.insert("neg_peak_after".into(), ma.neg_peak);
            summary.insert("pos_reduction".into(), percent_reduction(mb.pos_peak, ma.pos_peak)?);
            summary.insert("neg_reduction".into(), percent_reduction(mb.neg_peak, ma.neg_peak)?);
            summary.insert("neg_pos_ratio_after".into(), ma.neg_peak / ma.pos_peak);
            summary.insert("v_bus_min_after".into(), tr.v_bus.window(after.0, after.1).min()?);
            for (c, ts) in [(Channel::VOut, tr.v_out), (Channel::VBus, tr.v_bus)] {
                if want(c) {
                    channels.insert(c.name().to_string(), ts);
                }
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ScenarioResult { stage: s.stage, channels, events, summary, schedule: ctl.schedule })
}

/// Threshold on neg/pos half-cycle ratio below which output counts as asymmetric.
pub const ASYMMETRY_RATIO: f64 = 0.7;
/// Sustained reduction counted as voltage degradation.
pub const DEGRADATION_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DgBehavior {
    Single(GridScenarioKind),
    /// More than one mapping fits; the caller must choose.
    Ambiguous(Vec<GridScenarioKind>),
}

/// Maps a device outcome to the grid-level behavior of the compromised DG.
///
/// A destroyed driver is a trip. Asymmetric output is loss of excitation;
/// its RMS drop is a consequence of the missing half and does not count as
/// degradation on its own. Degradation is a sustained symmetric reduction:
/// the DC-DC output, or the positive half-cycle of the DC-AC output. When
/// both asymmetry and a symmetric reduction are present the result is
/// ambiguous.
pub fn derive_dg_behavior(result: &ScenarioResult) -> DgBehavior {
    let get = |k: &str| result.summary.get(k).copied();
    if get("t_failure_s").is_some() {
        return DgBehavior::Single(GridScenarioKind::InstantTrip);
    }
    let asymmetric = get("neg_pos_ratio_after").is_some_and(|r| r < ASYMMETRY_RATIO);
    let reduction = match result.stage {
        Stage::Dcdc => get("v_out_reduction"),
        Stage::Dcac => get("pos_reduction"),
    }
    .unwrap_or(0.0);
    let degraded = reduction >= DEGRADATION_FRACTION;
    match (asymmetric, degraded) {
        (true, true) => {
            DgBehavior::Ambiguous(vec![GridScenarioKind::VoltageDegradation, GridScenarioKind::LossOfExcitation])
        }
        (true, false) => DgBehavior::Single(GridScenarioKind::LossOfExcitation),
        (false, true) => DgBehavior::Single(GridScenarioKind::VoltageDegradation),
        (false, false) => DgBehavior::Single(GridScenarioKind::Baseline),
    }
}
