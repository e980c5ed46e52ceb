//! Temperature sensor and the RC front end the trigger taps.
//!
//! The sensor output `v_tmp = alpha*T + beta` drives R1 into node N, where C1
//! returns to ground through the sense shunt. R3 links node N to the MCU ADC
//! pin; the ADC input draws no current, so R3 does not enter the time
//! constant `(r1 + r_shunt) * c1`. A temperature ramp therefore shows up as a
//! steady capacitor current `c1 * alpha * dT/dt` across the shunt.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempSensorModel {
    /// V/°C
    pub alpha: f64,
    /// V
    pub beta: f64,
}

impl Default for TempSensorModel {
    fn default() -> Self {
        Self { alpha: 0.01, beta: 0.6 }
    }
}

pub fn sensor_voltage(model: &TempSensorModel, temp_c: f64) -> f64 {
    model.alpha * temp_c + model.beta
}

pub fn rate_to_voltage_rate(model: &TempSensorModel, rate_c_per_s: f64) -> f64 {
    model.alpha * rate_c_per_s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontEndFilter {
    pub r1: f64,
    pub c1: f64,
    pub r3: f64,
    pub r_shunt: f64,
}

impl Default for FrontEndFilter {
    fn default() -> Self {
        Self { r1: 10e3, c1: 100e-9, r3: 10e3, r_shunt: 100.0 }
    }
}

impl FrontEndFilter {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r1", self.r1), ("c1", self.c1), ("r3", self.r3), ("r_shunt", self.r_shunt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("front end {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Resistance in series with C1.
    pub fn r_total(&self) -> f64 {
        self.r1 + self.r_shunt
    }

    pub fn tau(&self) -> f64 {
        self.r_total() * self.c1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorNodeState {
    pub v_c1: f64,
    pub i_cap: f64,
    pub v_shunt: f64,
}

impl SensorNodeState {
    /// C1 charged to `v_tmp`, no current.
    pub fn settled(v_tmp: f64) -> Self {
        Self { v_c1: v_tmp, i_cap: 0.0, v_shunt: 0.0 }
    }
}

/// One forward-Euler step of the RC front end. The returned `i_cap` is the
/// current that moved C1 during this step, so `v_c1` advances by exactly
/// `(i_cap / c1) * dt`.
#[inline]
pub fn front_end_step(filter: &FrontEndFilter, state: &SensorNodeState, v_tmp: f64, dt: f64) -> SensorNodeState {
    let i_cap = (v_tmp - state.v_c1) / filter.r_total();
    SensorNodeState { v_c1: state.v_c1 + (i_cap / filter.c1) * dt, i_cap, v_shunt: i_cap * filter.r_shunt }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub rate_c_per_s: f64,
    /// Induced sensor offset rate, V/s.
    pub emi_v_per_s: f64,
}

impl EnvSegment {
    pub fn new(start_s: f64, end_s: f64, rate_c_per_s: f64) -> Self {
        Self { start_s, end_s, rate_c_per_s, emi_v_per_s: 0.0 }
    }

    pub fn with_emi(mut self, emi_v_per_s: f64) -> Self {
        self.emi_v_per_s = emi_v_per_s;
        self
    }
}

/// Piecewise-linear temperature and EMI offset trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentProfile {
    pub t0_c: f64,
    pub segments: Vec<EnvSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSample {
    pub temp_c: f64,
    pub offset_v: f64,
}

impl EnvironmentProfile {
    pub fn new(t0_c: f64, segments: Vec<EnvSegment>) -> Result<Self> {
        let p = Self { t0_c, segments };
        p.validate()?;
        Ok(p)
    }

    /// Constant temperature for `duration_s`.
    pub fn constant(t0_c: f64, duration_s: f64) -> Self {
        Self { t0_c, segments: vec![EnvSegment::new(0.0, duration_s, 0.0)] }
    }

    /// Flat until `t_start_s`, then a ramp at `rate_c_per_s` until `t_end_s`.
    pub fn ramp_from(t0_c: f64, t_start_s: f64, rate_c_per_s: f64, t_end_s: f64) -> Self {
        let mut segments = Vec::new();
        if t_start_s > 0.0 {
            segments.push(EnvSegment::new(0.0, t_start_s, 0.0));
        }
        segments.push(EnvSegment::new(t_start_s, t_end_s, rate_c_per_s));
        Self { t0_c, segments }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0_c.is_finite() {
            return Err(Error::InvalidProfile("initial temperature is not finite".into()));
        }
        let Some(first) = self.segments.first() else {
            return Err(Error::InvalidProfile("no segments".into()));
        };
        if first.start_s != 0.0 {
            return Err(Error::InvalidProfile(format!("first segment starts at {} s, not 0", first.start_s)));
        }
        let mut prev_end = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.rate_c_per_s.is_finite() && s.emi_v_per_s.is_finite()) {
                return Err(Error::InvalidProfile(format!("segment {i} has a non-finite rate")));
            }
            if s.start_s != prev_end {
                return Err(Error::InvalidProfile(format!(
                    "segment {i} starts at {} s but the previous one ends at {prev_end} s",
                    s.start_s
                )));
            }
            if !(s.end_s > s.start_s) {
                return Err(Error::InvalidProfile(format!("segment {i} has non-positive length")));
            }
            prev_end = s.end_s;
        }
        Ok(())
    }

    pub fn end_time(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end_s)
    }
}

pub fn environment_at(profile: &EnvironmentProfile, t: f64) -> Result<EnvSample> {
    let end = profile.end_time();
    let slack = 1e-9 * end.max(1.0);
    if !(t >= 0.0 && t <= end + slack) || profile.segments.is_empty() {
        return Err(Error::OutsideProfile(t));
    }
    let mut temp = profile.t0_c;
    let mut offset = 0.0;
    for s in &profile.segments {
        if t < s.end_s {
            let dt = t - s.start_s;
            return Ok(EnvSample { temp_c: temp + s.rate_c_per_s * dt, offset_v: offset + s.emi_v_per_s * dt });
        }
        let len = s.end_s - s.start_s;
        temp += s.rate_c_per_s * len;
        offset += s.emi_v_per_s * len;
    }
    Ok(EnvSample { temp_c: temp, offset_v: offset })
}
