//! Scenario configuration: sectioned `key = value` text.
//!
//! Physical quantities carry their unit as a key suffix (`duty_ratio`,
//! `l_m_h`, `ramp_c_per_s`). Each `[segment]` header starts one environment
//! segment. Parsing collects every problem instead of stopping at the first.

use ermsim::dcac::{BridgeLoad, BusSource, HBridgeParams};
use ermsim::dcdc::{AveragedFlyback, DutyControl, FlybackParams, MpptState, PvPanelModel};
use ermsim::grid::{FeederModel, GridScenario, GridScenarioKind};
use ermsim::pipeline::{Channel, DeviceScenario, Stage};
use ermsim::sensor::{EnvSegment, EnvironmentProfile, FrontEndFilter, TempSensorModel};
use ermsim::signal::{Integrator, SimClock};
use ermsim::trojan::{PayloadMode, TriggerCircuitParams};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    Fixed,
    Mppt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadKind {
    Resistive,
    StiffGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Ideal,
    Dcdc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub stage: Stage,
    pub trojan_present: bool,
    /// `None` derives the grid scenario from the device outcome.
    pub grid_kind: Option<GridScenarioKind>,
    pub env: EnvironmentProfile,
    pub control_dt: f64,
    pub power_dt: f64,
    pub window_pre_s: f64,
    pub window_post_s: f64,
    pub metric_span_s: f64,
    pub control_decimate: usize,
    pub power_record_dt: f64,
    pub sensor: TempSensorModel,
    pub filter: FrontEndFilter,
    pub trigger: TriggerCircuitParams,
    pub dcdc: FlybackParams,
    pub panel: PvPanelModel,
    pub c_in: f64,
    pub control: ControlKind,
    pub duty: f64,
    pub mppt_step: f64,
    pub mppt_interval_s: f64,
    /// Load and source variants come from the flat fields below.
    pub dcac: HBridgeParams,
    pub load: LoadKind,
    pub r_load: f64,
    pub v_grid_peak: f64,
    pub source: SourceKind,
    pub v_bus: f64,
    pub c_bus: f64,
    pub bus_duty: f64,
    pub feeder: String,
    /// Kind is taken from `grid_kind`.
    pub grid: GridScenario,
    pub out_dir: String,
    pub channels: Vec<Channel>,
    pub decimate: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mode = PayloadMode::Pwm1High;
        let base = DeviceScenario::new(EnvironmentProfile::constant(25.0, 10.0), mode);
        let avg = AveragedFlyback::default();
        Self {
            stage: base.stage,
            trojan_present: true,
            grid_kind: None,
            env: base.env,
            control_dt: base.clock.dt,
            power_dt: base.power_dt,
            window_pre_s: base.window_pre_s,
            window_post_s: base.window_post_s,
            metric_span_s: base.metric_span_s,
            control_decimate: base.control_decimate,
            power_record_dt: base.power_record_dt,
            sensor: base.sensor,
            filter: base.filter,
            trigger: base.trigger,
            dcdc: base.dcdc,
            panel: base.panel,
            c_in: base.c_in,
            control: ControlKind::Fixed,
            duty: 0.65,
            mppt_step: MpptState::default().step,
            mppt_interval_s: 1e-3,
            dcac: HBridgeParams::default(),
            load: LoadKind::Resistive,
            r_load: 20.0,
            v_grid_peak: 96.0,
            source: SourceKind::Ideal,
            v_bus: 107.0,
            c_bus: avg.c_bus,
            bus_duty: avg.duty,
            feeder: String::new(),
            grid: GridScenario::default(),
            out_dir: "out".into(),
            channels: Channel::ALL.to_vec(),
            decimate: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn device_scenario(&self) -> DeviceScenario {
        let mut dcac = self.dcac;
        dcac.load = match self.load {
            LoadKind::Resistive => BridgeLoad::Resistive { r_load: self.r_load },
            LoadKind::StiffGrid => BridgeLoad::StiffGrid { v_peak: self.v_grid_peak },
        };
        dcac.source = match self.source {
            SourceKind::Ideal => BusSource::Ideal { v_bus: self.v_bus },
            SourceKind::Dcdc => BusSource::DcdcCoupled(AveragedFlyback {
                params: self.dcdc,
                panel: self.panel,
                c_in: self.c_in,
                c_bus: self.c_bus,
                duty: self.bus_duty,
            }),
        };
        let dcdc_control = match self.control {
            ControlKind::Fixed => DutyControl::Fixed(self.duty),
            ControlKind::Mppt => DutyControl::Mppt {
                initial: MpptState::new(self.duty, self.mppt_step),
                interval_s: self.mppt_interval_s,
            },
        };
        DeviceScenario {
            env: self.env.clone(),
            sensor: self.sensor,
            filter: self.filter,
            trigger: self.trigger,
            trojan_present: self.trojan_present,
            stage: self.stage,
            dcdc: self.dcdc,
            panel: self.panel,
            c_in: self.c_in,
            dcdc_control,
            dcac,
            clock: SimClock { dt: self.control_dt, t_end: self.env.end_time() },
            power_dt: self.power_dt,
            window_pre_s: self.window_pre_s,
            window_post_s: self.window_post_s,
            metric_span_s: self.metric_span_s,
            records: self.channels.clone(),
            control_decimate: self.control_decimate,
            power_record_dt: self.power_record_dt,
        }
    }

    pub fn grid_scenario(&self, kind: GridScenarioKind) -> GridScenario {
        GridScenario { kind, ..self.grid.clone() }
    }

    /// Bundled feeder unless `[grid] feeder` names a file; relative paths
    /// resolve against `base`.
    pub fn feeder_model(&self, base: Option<&Path>) -> ermsim::Result<FeederModel> {
        if self.feeder.is_empty() {
            return Ok(FeederModel::ieee13());
        }
        let p = Path::new(&self.feeder);
        let full = match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        };
        FeederModel::from_file(&full)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.key.is_empty()) {
            (Some(l), false) => write!(f, "line {l}: {}: {}", self.key, self.msg),
            (Some(l), true) => write!(f, "line {l}: {}", self.msg),
            (None, false) => write!(f, "{}: {}", self.key, self.msg),
            (None, true) => write!(f, "{}", self.msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Check {
    Any,
    Positive,
    NonNegative,
    Ratio,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Real(Check),
    Count,
    Flag,
    Choice(&'static [&'static str]),
    Text,
    List,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Real(f64),
    Count(usize),
    Flag(bool),
    Word(String),
    List(Vec<String>),
}

impl Value {
    fn real(&self) -> f64 {
        match self {
            Value::Real(v) => *v,
            _ => unreachable!("field kind checked before set"),
        }
    }

    fn count(&self) -> usize {
        match self {
            Value::Count(v) => *v,
            _ => unreachable!("field kind checked before set"),
        }
    }

    fn flag(&self) -> bool {
        match self {
            Value::Flag(v) => *v,
            _ => unreachable!("field kind checked before set"),
        }
    }

    fn word(&self) -> &str {
        match self {
            Value::Word(v) => v,
            _ => unreachable!("field kind checked before set"),
        }
    }

    fn list(&self) -> &[String] {
        match self {
            Value::List(v) => v,
            _ => unreachable!("field kind checked before set"),
        }
    }
}

struct Field {
    section: &'static str,
    key: &'static str,
    kind: Kind,
    get: fn(&ScenarioConfig) -> Value,
    set: fn(&mut ScenarioConfig, &Value),
}

macro_rules! real {
    ($sec:literal, $key:literal, $chk:ident, $($p:ident).+) => {
        Field {
            section: $sec,
            key: $key,
            kind: Kind::Real(Check::$chk),
            get: |c| Value::Real(c.$($p).+),
            set: |c, v| c.$($p).+ = v.real(),
        }
    };
}

macro_rules! count {
    ($sec:literal, $key:literal, $($p:ident).+) => {
        Field {
            section: $sec,
            key: $key,
            kind: Kind::Count,
            get: |c| Value::Count(c.$($p).+ as usize),
            set: |c, v| c.$($p).+ = v.count() as _,
        }
    };
}

const STAGES: &[&str] = &["dcdc", "dcac"];
const MODES: &[&str] = &["pwm1_high", "pwm1_low", "pwm5_high"];
const GRID_KINDS: &[&str] = &["auto", "baseline", "instant_trip", "voltage_degradation", "loss_of_excitation"];
const CONTROLS: &[&str] = &["fixed", "mppt"];
const LOADS: &[&str] = &["resistive", "stiff_grid"];
const SOURCES: &[&str] = &["ideal", "dcdc"];
const INTEGRATORS: &[&str] = &["forward_euler", "midpoint"];

fn integrator_name(i: Integrator) -> &'static str {
    match i {
        Integrator::ForwardEuler => "forward_euler",
        Integrator::Midpoint => "midpoint",
    }
}

fn integrator_parse(s: &str) -> Integrator {
    if s == "midpoint" {
        Integrator::Midpoint
    } else {
        Integrator::ForwardEuler
    }
}

fn fields() -> Vec<Field> {
    vec![
        Field {
            section: "scenario",
            key: "stage",
            kind: Kind::Choice(STAGES),
            get: |c| Value::Word(c.stage.as_str().into()),
            set: |c, v| c.stage = Stage::parse(v.word()).expect("choice checked"),
        },
        Field {
            section: "scenario",
            key: "payload_mode",
            kind: Kind::Choice(MODES),
            get: |c| Value::Word(c.trigger.payload_mode.as_str().into()),
            set: |c, v| c.trigger.payload_mode = PayloadMode::parse(v.word()).expect("choice checked"),
        },
        Field {
            section: "scenario",
            key: "trojan_present",
            kind: Kind::Flag,
            get: |c| Value::Flag(c.trojan_present),
            set: |c, v| c.trojan_present = v.flag(),
        },
        real!("environment", "t0_c", Any, env.t0_c),
        real!("clock", "dt_s", Positive, control_dt),
        real!("clock", "power_dt_s", Positive, power_dt),
        real!("clock", "window_pre_s", Positive, window_pre_s),
        real!("clock", "window_post_s", Positive, window_post_s),
        real!("clock", "metric_span_s", Positive, metric_span_s),
        count!("clock", "control_decimate_count", control_decimate),
        real!("clock", "power_record_s", Positive, power_record_dt),
        real!("sensor", "alpha_v_per_c", Positive, sensor.alpha),
        real!("sensor", "beta_v", Any, sensor.beta),
        real!("sensor", "r1_ohm", Positive, filter.r1),
        real!("sensor", "c1_f", Positive, filter.c1),
        real!("sensor", "r3_ohm", Positive, filter.r3),
        real!("sensor", "r_shunt_ohm", Positive, filter.r_shunt),
        real!("trigger", "gain_ratio", Positive, trigger.av),
        real!("trigger", "vth_inv_v", Positive, trigger.vth_inv),
        real!("trigger", "c_unit_f", Positive, trigger.c_unit),
        real!("trigger", "c_main_f", Positive, trigger.c_main),
        real!("trigger", "vdd_v", Positive, trigger.vdd),
        real!("trigger", "i_leak_sat_a", NonNegative, trigger.i_leak_sat),
        real!("trigger", "r_leak_low_ohm", Positive, trigger.r_leak_low),
        real!("trigger", "vth_buf_v", Positive, trigger.vth_buf),
        real!("trigger", "grid_zero_hz", Positive, trigger.grid_zero_freq),
        Field {
            section: "dcdc",
            key: "control",
            kind: Kind::Choice(CONTROLS),
            get: |c| Value::Word(if c.control == ControlKind::Fixed { "fixed" } else { "mppt" }.into()),
            set: |c, v| c.control = if v.word() == "fixed" { ControlKind::Fixed } else { ControlKind::Mppt },
        },
        real!("dcdc", "duty_ratio", Ratio, duty),
        real!("dcdc", "mppt_step_ratio", Ratio, mppt_step),
        real!("dcdc", "mppt_interval_s", Positive, mppt_interval_s),
        real!("dcdc", "l_m_h", Positive, dcdc.l_m),
        real!("dcdc", "l_lk_h", Positive, dcdc.l_lk),
        real!("dcdc", "turns_ratio", Positive, dcdc.turns_ratio),
        real!("dcdc", "c_clamp_f", Positive, dcdc.c_clamp),
        real!("dcdc", "c_out_f", Positive, dcdc.c_out),
        real!("dcdc", "r_load_ohm", Positive, dcdc.r_load),
        real!("dcdc", "f_sw_hz", Positive, dcdc.f_sw),
        real!("dcdc", "r_on_ohm", Positive, dcdc.r_on),
        real!("dcdc", "r_on_clamp_ohm", Positive, dcdc.r_on_clamp),
        real!("dcdc", "v_diode_v", NonNegative, dcdc.v_diode),
        real!("dcdc", "c_par_f", Positive, dcdc.c_par),
        real!("dcdc", "r_winding_ohm", NonNegative, dcdc.r_winding),
        real!("dcdc", "v_rating_v", Positive, dcdc.v_rating),
        count!("dcdc", "fail_steps_count", dcdc.fail_steps),
        Field {
            section: "dcdc",
            key: "integrator",
            kind: Kind::Choice(INTEGRATORS),
            get: |c| Value::Word(integrator_name(c.dcdc.integrator).into()),
            set: |c, v| c.dcdc.integrator = integrator_parse(v.word()),
        },
        real!("dcdc", "panel_voc_v", Positive, panel.v_oc),
        real!("dcdc", "panel_isc_a", Positive, panel.i_sc),
        real!("dcdc", "panel_shape_ratio", Positive, panel.shape),
        real!("dcdc", "c_in_f", Positive, c_in),
        real!("dcac", "f_grid_hz", Positive, dcac.f_grid),
        real!("dcac", "f_sw_hz", Positive, dcac.f_sw),
        real!("dcac", "l2_h", Positive, dcac.l2),
        real!("dcac", "l3_h", Positive, dcac.l3),
        real!("dcac", "l4_h", Positive, dcac.l4),
        real!("dcac", "l5_h", Positive, dcac.l5),
        real!("dcac", "c_f_f", Positive, dcac.c_f),
        real!("dcac", "r_on_ohm", Positive, dcac.r_on),
        real!("dcac", "r_on_select_ohm", Positive, dcac.r_on_select),
        real!("dcac", "r_off_ohm", Positive, dcac.r_off),
        real!("dcac", "i_sat_a", Positive, dcac.i_sat),
        real!("dcac", "v_diode_v", NonNegative, dcac.v_diode),
        real!("dcac", "modulation_ratio", Ratio, dcac.modulation_index),
        Field {
            section: "dcac",
            key: "integrator",
            kind: Kind::Choice(INTEGRATORS),
            get: |c| Value::Word(integrator_name(c.dcac.integrator).into()),
            set: |c, v| c.dcac.integrator = integrator_parse(v.word()),
        },
        Field {
            section: "dcac",
            key: "load",
            kind: Kind::Choice(LOADS),
            get: |c| Value::Word(if c.load == LoadKind::Resistive { "resistive" } else { "stiff_grid" }.into()),
            set: |c, v| c.load = if v.word() == "resistive" { LoadKind::Resistive } else { LoadKind::StiffGrid },
        },
        real!("dcac", "r_load_ohm", Positive, r_load),
        real!("dcac", "v_grid_peak_v", Positive, v_grid_peak),
        Field {
            section: "dcac",
            key: "source",
            kind: Kind::Choice(SOURCES),
            get: |c| Value::Word(if c.source == SourceKind::Ideal { "ideal" } else { "dcdc" }.into()),
            set: |c, v| c.source = if v.word() == "ideal" { SourceKind::Ideal } else { SourceKind::Dcdc },
        },
        real!("dcac", "v_bus_v", Positive, v_bus),
        real!("dcac", "c_bus_f", Positive, c_bus),
        real!("dcac", "bus_duty_ratio", Ratio, bus_duty),
        Field {
            section: "grid",
            key: "kind",
            kind: Kind::Choice(GRID_KINDS),
            get: |c| Value::Word(c.grid_kind.map_or("auto", |k| k.as_str()).into()),
            set: |c, v| c.grid_kind = GridScenarioKind::parse(v.word()).ok(),
        },
        Field {
            section: "grid",
            key: "feeder",
            kind: Kind::Text,
            get: |c| Value::Word(c.feeder.clone()),
            set: |c, v| c.feeder = v.word().to_string(),
        },
        real!("grid", "t_attack_s", NonNegative, grid.t_attack),
        real!("grid", "t_end_s", Positive, grid.t_end),
        real!("grid", "dt_s", Positive, grid.dt),
        real!("grid", "h_agg_s", Positive, grid.frequency.h_agg),
        real!("grid", "s_base_mva", Positive, grid.frequency.s_base_mva),
        real!("grid", "headroom_mw", NonNegative, grid.frequency.headroom_mw),
        real!("grid", "f0_hz", Positive, grid.frequency.f0),
        real!("grid", "uf_trip_hz", Positive, grid.protection.uf_trip_hz),
        real!("grid", "uv_trip_pu", Positive, grid.protection.uv_trip_pu),
        real!("grid", "trip_delay_s", NonNegative, grid.protection.trip_delay_s),
        real!("grid", "q_reserve_mvar", NonNegative, grid.source.q_reserve_mvar),
        real!("grid", "t_oel_s", NonNegative, grid.source.t_oel_s),
        real!("grid", "oel_ramp_pu_per_s", NonNegative, grid.source.oel_ramp_pu_per_s),
        real!("grid", "setpoint_cut_ratio", Ratio, grid.attack.setpoint_cut),
        real!("grid", "decay_horizon_s", Positive, grid.attack.decay_horizon_s),
        real!("grid", "decay_final_q_ratio", Ratio, grid.attack.decay_final_q),
        real!("grid", "loe_ramp_s", Positive, grid.attack.loe_ramp_s),
        real!("grid", "loe_final_q_ratio", Ratio, grid.attack.loe_final_q),
        real!("grid", "loe_p_osc_ratio", Ratio, grid.attack.loe_p_osc),
        real!("grid", "loe_p_osc_hz", NonNegative, grid.attack.loe_p_osc_hz),
        real!("grid", "sync_dv_pu", Positive, grid.attack.sync_dv_pu),
        real!("grid", "pf_tol_pu", Positive, grid.power_flow.tol),
        count!("grid", "pf_max_iter_count", grid.power_flow.max_iter),
        Field {
            section: "output",
            key: "dir",
            kind: Kind::Text,
            get: |c| Value::Word(c.out_dir.clone()),
            set: |c, v| c.out_dir = v.word().to_string(),
        },
        Field {
            section: "output",
            key: "channels",
            kind: Kind::List,
            get: |c| Value::List(c.channels.iter().map(|ch| ch.name().to_string()).collect()),
            set: |c, v| c.channels = v.list().iter().filter_map(|s| Channel::parse(s)).collect(),
        },
        count!("output", "decimate_count", decimate),
    ]
}

const SEGMENT_KEYS: [&str; 4] = ["start_s", "end_s", "rate_c_per_s", "emi_v_per_s"];
const SECTIONS: [&str; 9] =
    ["scenario", "environment", "segment", "clock", "sensor", "trigger", "dcdc", "dcac", "grid"];
/// Unit suffixes, longest first so `_v_per_s` wins over `_s`.
const UNITS: [&str; 18] = [
    "_pu_per_s",
    "_c_per_s",
    "_v_per_s",
    "_v_per_c",
    "_ratio",
    "_count",
    "_mvar",
    "_ohm",
    "_mva",
    "_hz",
    "_mw",
    "_pu",
    "_s",
    "_h",
    "_f",
    "_v",
    "_a",
    "_c",
];

fn unit_suffix(key: &str) -> Option<&'static str> {
    UNITS.into_iter().find(|u| key.ends_with(u))
}

fn base_name(key: &str) -> &str {
    unit_suffix(key).map_or(key, |u| &key[..key.len() - u.len()])
}

fn parse_value(kind: Kind, raw: &str) -> Result<Value, String> {
    match kind {
        Kind::Real(chk) => {
            let v: f64 = raw.parse().map_err(|_| format!("expected a number, found '{raw}'"))?;
            if !v.is_finite() {
                return Err(format!("value '{raw}' is not finite"));
            }
            match chk {
                Check::Positive if v.is_nan() || v <= 0.0 => Err(format!("must be positive, got {v}")),
                Check::NonNegative if v < 0.0 => Err(format!("must be non-negative, got {v}")),
                Check::Ratio if !(0.0..=1.0).contains(&v) => Err(format!("ratio out of [0,1]: {v}")),
                _ => Ok(Value::Real(v)),
            }
        }
        Kind::Count => raw
            .parse::<usize>()
            .map(Value::Count)
            .map_err(|_| format!("expected a non-negative integer, found '{raw}'")),
        Kind::Flag => match raw {
            "true" => Ok(Value::Flag(true)),
            "false" => Ok(Value::Flag(false)),
            _ => Err(format!("expected true or false, found '{raw}'")),
        },
        Kind::Choice(opts) => {
            if opts.contains(&raw) {
                Ok(Value::Word(raw.to_string()))
            } else {
                Err(format!("'{raw}' is not one of: {}", opts.join(", ")))
            }
        }
        Kind::Text => Ok(Value::Word(raw.to_string())),
        Kind::List => {
            let items: Vec<String> = raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if let Some(bad) = items.iter().find(|s| Channel::parse(s).is_none()) {
                return Err(format!("unknown channel '{bad}'"));
            }
            Ok(Value::List(items))
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError { line: None, key: String::new(), msg: format!("{}: {e}", path.display()) }])
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let table = fields();
    let mut cfg = ScenarioConfig::default();
    let mut errs = Vec::new();
    let mut err = |line: usize, key: String, msg: String| errs.push(ConfigError { line: Some(line), key, msg });
    let mut section = String::new();
    let mut seen: Vec<(String, String)> = Vec::new();
    let mut segments: Vec<(usize, [Option<f64>; 4])> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            if section == "segment" {
                segments.push((ln, [None; 4]));
            } else if !SECTIONS.contains(&section.as_str()) && section != "output" {
                err(ln, String::new(), format!("unknown section [{section}]"));
            }
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            err(ln, String::new(), "expected key = value".into());
            continue;
        };
        let (key, val) = (k.trim(), v.trim());
        let full = format!("{section}.{key}");
        if section.is_empty() {
            err(ln, key.into(), "key outside any section".into());
            continue;
        }

        if section == "segment" {
            let slot = SEGMENT_KEYS.iter().position(|s| *s == key);
            let seg = segments.last_mut().expect("segment header pushed");
            match slot {
                Some(s) => match parse_value(Kind::Real(if s < 2 { Check::NonNegative } else { Check::Any }), val) {
                    Ok(x) if seg.1[s].is_none() => seg.1[s] = Some(x.real()),
                    Ok(_) => err(ln, full, "duplicate key".into()),
                    Err(m) => err(ln, full, m),
                },
                None => err(ln, full.clone(), unknown_msg(key, SEGMENT_KEYS.iter().copied())),
            }
            continue;
        }

        let Some(field) = table.iter().find(|f| f.section == section && f.key == key) else {
            if SECTIONS.contains(&section.as_str()) || section == "output" {
                let keys = table.iter().filter(|f| f.section == section).map(|f| f.key);
                err(ln, full, unknown_msg(key, keys));
            }
            continue;
        };
        if seen.iter().any(|(s, k)| *s == section && k == key) {
            err(ln, full, "duplicate key".into());
            continue;
        }
        seen.push((section.clone(), key.to_string()));
        match parse_value(field.kind, val) {
            Ok(v) => (field.set)(&mut cfg, &v),
            Err(m) => err(ln, full, m),
        }
    }

    let given = |sec: &str, key: &str| seen.iter().any(|(s, k)| s == sec && k == key);
    if !given("scenario", "stage") {
        cfg.stage = Stage::for_mode(cfg.trigger.payload_mode);
    }
    if !given("clock", "power_dt_s") {
        cfg.power_dt = default_power_dt(cfg.stage);
    }

    if !segments.is_empty() {
        let mut out = Vec::new();
        for (ln, vals) in &segments {
            let missing: Vec<&str> = SEGMENT_KEYS
                .iter()
                .zip(vals)
                .filter(|(k, v)| v.is_none() && **k != "emi_v_per_s")
                .map(|(k, _)| *k)
                .collect();
            if !missing.is_empty() {
                err(*ln, "segment".into(), format!("missing {}", missing.join(", ")));
                continue;
            }
            out.push(EnvSegment {
                start_s: vals[0].unwrap_or(0.0),
                end_s: vals[1].unwrap_or(0.0),
                rate_c_per_s: vals[2].unwrap_or(0.0),
                emi_v_per_s: vals[3].unwrap_or(0.0),
            });
        }
        cfg.env.segments = out;
    }

    if errs.is_empty() {
        for p in semantic_problems(&cfg) {
            errs.push(ConfigError { line: None, key: String::new(), msg: p });
        }
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errs))
    }
}

/// Power-stage step used when the config leaves `power_dt_s` unset.
pub fn default_power_dt(stage: Stage) -> f64 {
    match stage {
        Stage::Dcdc => 1e-8,
        Stage::Dcac => 1e-7,
    }
}

fn unknown_msg<'a>(key: &str, known: impl Iterator<Item = &'a str>) -> String {
    let base = base_name(key);
    let known: Vec<&str> = known.collect();
    // Longest base first so `r_on_clamp_*` is not reported as `r_on_*`.
    let mut by_base: Vec<&str> = known.clone();
    by_base.sort_by_key(|k| std::cmp::Reverse(base_name(k).len()));
    for k in by_base {
        let kb = base_name(k);
        if unit_suffix(k).is_some() && (base == kb || key == kb || key.starts_with(&format!("{kb}_"))) && key != k {
            return format!("unit-suffix mismatch, expected '{k}'");
        }
    }
    format!("unknown key (known: {})", known.join(", "))
}

fn semantic_problems(cfg: &ScenarioConfig) -> Vec<String> {
    let mut out = cfg.device_scenario().problems();
    let g = cfg.grid_scenario(cfg.grid_kind.unwrap_or(GridScenarioKind::Baseline));
    if let Err(e) = g.validate() {
        out.push(e.to_string());
    }
    if cfg.decimate == 0 {
        out.push("output.decimate_count must be at least 1".into());
    }
    out
}

fn emit_value(v: &Value) -> String {
    match v {
        Value::Real(x) => format!("{x}"),
        Value::Count(n) => n.to_string(),
        Value::Flag(b) => b.to_string(),
        Value::Word(s) => s.clone(),
        Value::List(items) => items.join(", "),
    }
}

/// Writes every key. `parse_config_str(&emit_config(c)) == Ok(c)` for every
/// valid config.
pub fn emit_config(cfg: &ScenarioConfig) -> String {
    let table = fields();
    let mut out = String::new();
    let mut order: Vec<&str> = SECTIONS.to_vec();
    order.push("output");
    for sec in order {
        if sec == "segment" {
            for s in &cfg.env.segments {
                out.push_str("[segment]\n");
                for (k, v) in SEGMENT_KEYS.iter().zip([s.start_s, s.end_s, s.rate_c_per_s, s.emi_v_per_s]) {
                    out.push_str(&format!("{k} = {v}\n"));
                }
                out.push('\n');
            }
            continue;
        }
        out.push_str(&format!("[{sec}]\n"));
        for f in table.iter().filter(|f| f.section == sec) {
            out.push_str(&format!("{} = {}\n", f.key, emit_value(&(f.get)(cfg))));
        }
        out.push('\n');
    }
    out
}
