//! Behavioral model of the rate-triggered Trojan.
//!
//! Chain: the shunt voltage is amplified and compared by a skewed inverter.
//! While the inverter output is low, a NOR gate against the 60 Hz
//! `GRID_V_ZERO` square wave toggles, and every 0→1 NOR edge fires one
//! glitch. Each glitch dumps a precharged `c_unit` onto `c_main` (charge
//! sharing), so `v_main` climbs geometrically toward `vdd`. A leakage device
//! bleeds `c_main` back to zero. Once `v_main` reaches the skewed buffer
//! threshold the payload forces one PWM gate.
//!
//! The sense gain defaults to the value that puts a 0.1 °C/s ramp exactly at
//! the inverter threshold with the default front end. A ramp at exactly that
//! rate only approaches the threshold asymptotically, so triggering needs a
//! rate strictly above it.

use crate::error::{Error, Result};
use crate::sensor::{FrontEndFilter, TempSensorModel};
use crate::signal::{ForcedLevel, PwmChannel, PwmOverride};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PayloadMode {
    #[default]
    Pwm1High,
    Pwm1Low,
    Pwm5High,
}

impl PayloadMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PayloadMode::Pwm1High => "pwm1_high",
            PayloadMode::Pwm1Low => "pwm1_low",
            PayloadMode::Pwm5High => "pwm5_high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pwm1_high" => Some(PayloadMode::Pwm1High),
            "pwm1_low" => Some(PayloadMode::Pwm1Low),
            "pwm5_high" => Some(PayloadMode::Pwm5High),
            _ => None,
        }
    }
}

pub const DEFAULT_VDD: f64 = 1.2;
pub const DEFAULT_VTH: f64 = 0.7;
pub const DEFAULT_C_MAIN: f64 = 10e-12;
pub const DEFAULT_DELAY_S: f64 = 5.0;
pub const DEFAULT_GRID_ZERO_HZ: f64 = 60.0;
/// Temperature rate placed exactly at the inverter threshold, °C/s.
pub const DEFAULT_RATE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerCircuitParams {
    pub av: f64,
    pub vth_inv: f64,
    pub c_unit: f64,
    pub c_main: f64,
    pub vdd: f64,
    pub i_leak_sat: f64,
    pub r_leak_low: f64,
    pub vth_buf: f64,
    pub grid_zero_freq: f64,
    pub payload_mode: PayloadMode,
}

impl Default for TriggerCircuitParams {
    fn default() -> Self {
        let cal = calibrate_pump(DEFAULT_DELAY_S, DEFAULT_VTH, DEFAULT_VDD, DEFAULT_GRID_ZERO_HZ)
            .expect("default calibration inputs are valid");
        Self {
            av: calibrated_gain(
                DEFAULT_VTH,
                &FrontEndFilter::default(),
                &TempSensorModel::default(),
                DEFAULT_RATE_THRESHOLD,
            ),
            vth_inv: DEFAULT_VTH,
            c_unit: cal.c_unit_for(DEFAULT_C_MAIN),
            c_main: DEFAULT_C_MAIN,
            vdd: DEFAULT_VDD,
            i_leak_sat: 15e-15,
            r_leak_low: 200e6,
            vth_buf: DEFAULT_VTH,
            grid_zero_freq: DEFAULT_GRID_ZERO_HZ,
            payload_mode: PayloadMode::Pwm1High,
        }
    }
}

impl TriggerCircuitParams {
    pub fn with_mode(mut self, mode: PayloadMode) -> Self {
        self.payload_mode = mode;
        self
    }

    pub fn without_leakage(mut self) -> Self {
        self.i_leak_sat = 0.0;
        self
    }

    /// Fraction of `vdd - v_main` moved onto `c_main` per glitch.
    pub fn share_ratio(&self) -> f64 {
        self.c_unit / (self.c_unit + self.c_main)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.av > 0.0 && self.av.is_finite()) {
            return bad(format!("sense gain must be positive, got {}", self.av));
        }
        if !(0.2..=1.0).contains(&self.vth_inv) {
            return bad(format!("inverter threshold {} V outside [0.2, 1.0]", self.vth_inv));
        }
        if !(self.c_unit > 0.0 && self.c_unit < self.c_main) {
            return bad(format!("need 0 < c_unit < c_main, got {} / {}", self.c_unit, self.c_main));
        }
        if !(self.vdd > 0.0) {
            return bad(format!("vdd must be positive, got {}", self.vdd));
        }
        if !(self.vth_buf > 0.0 && self.vth_buf < self.vdd) {
            return bad(format!("buffer threshold {} V outside (0, vdd)", self.vth_buf));
        }
        if !(self.r_leak_low > 1e8) {
            return bad(format!("leak resistance {} ohm must exceed 100 Mohm", self.r_leak_low));
        }
        if !(self.i_leak_sat >= 0.0) {
            return bad(format!("leak current must be non-negative, got {}", self.i_leak_sat));
        }
        if !(self.grid_zero_freq > 0.0) {
            return bad(format!("grid zero frequency must be positive, got {}", self.grid_zero_freq));
        }
        Ok(())
    }
}

/// Sense gain that maps a sustained ramp of `rate_c_per_s` to exactly `vth`.
pub fn calibrated_gain(vth: f64, filter: &FrontEndFilter, sensor: &TempSensorModel, rate_c_per_s: f64) -> f64 {
    vth / (filter.r_shunt * filter.c1 * sensor.alpha * rate_c_per_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpCalibration {
    pub glitches: u64,
    pub ratio: f64,
}

impl PumpCalibration {
    /// `c_unit` giving this share ratio against `c_main`.
    pub fn c_unit_for(&self, c_main: f64) -> f64 {
        self.ratio * c_main / (1.0 - self.ratio)
    }
}

/// Share ratio for which glitch number `round(delay*f)` is the first to
/// reach `vth`. The exact root is nudged up by one part in 1e9 so rounding in
/// repeated charge sharing cannot push the crossing one glitch late.
pub fn calibrate_pump(delay_s: f64, vth: f64, vdd: f64, f_glitch: f64) -> Result<PumpCalibration> {
    if !(delay_s > 0.0 && f_glitch > 0.0) {
        return Err(Error::InvalidParameter(format!("delay {delay_s} s and rate {f_glitch} Hz must be positive")));
    }
    if !(vth > 0.0 && vth < vdd) {
        return Err(Error::InvalidParameter(format!("threshold {vth} V must lie in (0, {vdd})")));
    }
    let n = (delay_s * f_glitch).round().max(1.0);
    let exact = 1.0 - (1.0 - vth / vdd).powf(1.0 / n);
    Ok(PumpCalibration { glitches: n as u64, ratio: exact * (1.0 + 1e-9) })
}

/// Closed-form glitch count to reach `vth` from zero without leakage.
pub fn glitches_to_threshold(ratio: f64, vth: f64, vdd: f64) -> u64 {
    ((1.0 - vth / vdd).ln() / (1.0 - ratio).ln()).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerState {
    pub v_main: f64,
    pub inv_out: bool,
    pub nor_out: bool,
    pub glitch_pending: bool,
    pub payload_active: bool,
    pub t_activated: Option<f64>,
    pub glitches: u64,
}

impl Default for TriggerState {
    fn default() -> Self {
        Self {
            v_main: 0.0,
            inv_out: true,
            nor_out: false,
            glitch_pending: false,
            payload_active: false,
            t_activated: None,
            glitches: 0,
        }
    }
}

pub fn sense_amplify(params: &TriggerCircuitParams, v_shunt: f64) -> f64 {
    (params.av * v_shunt).clamp(0.0, params.vdd)
}

/// High while the input sits below threshold; a tie counts as crossed.
pub fn skewed_inverter(params: &TriggerCircuitParams, v_in: f64) -> bool {
    v_in < params.vth_inv
}

/// Returns `(glitch, nor_out)`; a glitch fires on a 0→1 NOR edge.
pub fn nor_glitch_stage(inv_out: bool, grid_v_zero: bool, prev_nor: bool) -> (bool, bool) {
    let nor = !(inv_out || grid_v_zero);
    (nor && !prev_nor, nor)
}

/// Ideal 50 % square wave, high for the first half of each period.
pub fn grid_v_zero(freq: f64, t: f64) -> bool {
    (t * freq).rem_euclid(1.0) < 0.5
}

pub fn leak_current(params: &TriggerCircuitParams, v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        (v / params.r_leak_low).min(params.i_leak_sat)
    }
}

pub fn charge_pump_step(params: &TriggerCircuitParams, state: &TriggerState, glitch: bool, dt: f64) -> TriggerState {
    let mut next = *state;
    if glitch {
        next.v_main += params.share_ratio() * (params.vdd - next.v_main);
        next.glitches += 1;
    }
    next.glitch_pending = false;
    let leak = leak_current(params, next.v_main);
    next.v_main = (next.v_main - leak / params.c_main * dt).clamp(0.0, params.vdd);
    next
}

pub fn payload_check(params: &TriggerCircuitParams, state: &TriggerState, t: f64) -> TriggerState {
    let mut next = *state;
    if next.v_main >= params.vth_buf {
        if !next.payload_active && next.t_activated.is_none() {
            next.t_activated = Some(t);
        }
        next.payload_active = true;
    } else if next.v_main < 0.5 * params.vth_buf {
        next.payload_active = false;
    }
    next
}

pub fn payload_override(params: &TriggerCircuitParams, state: &TriggerState) -> PwmOverride {
    if !state.payload_active {
        return PwmOverride::PASS_THROUGH;
    }
    match params.payload_mode {
        PayloadMode::Pwm1High => PwmOverride { target: PwmChannel::Pwm1, forced_level: ForcedLevel::High },
        PayloadMode::Pwm1Low => PwmOverride { target: PwmChannel::Pwm1, forced_level: ForcedLevel::Low },
        PayloadMode::Pwm5High => PwmOverride { target: PwmChannel::Pwm5, forced_level: ForcedLevel::High },
    }
}

/// One control step of the whole chain at time `t`.
pub fn trojan_step(
    params: &TriggerCircuitParams,
    state: &TriggerState,
    v_shunt: f64,
    grid_v_zero: bool,
    t: f64,
    dt: f64,
) -> TriggerState {
    let amp = sense_amplify(params, v_shunt);
    let inv_out = skewed_inverter(params, amp);
    let (glitch, nor_out) = nor_glitch_stage(inv_out, grid_v_zero, state.nor_out);
    let staged = TriggerState { inv_out, nor_out, glitch_pending: glitch, ..*state };
    let pumped = charge_pump_step(params, &staged, glitch, dt);
    payload_check(params, &pumped, t)
}
