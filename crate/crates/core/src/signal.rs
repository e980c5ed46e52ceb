//! Time base, PWM generation, fixed-step integration and waveform metrics.
//!
//! Every stage of the simulator runs on a [`SimClock`]: step `k` sits at
//! exactly `k as f64 * dt`, so long runs never accumulate drift from repeated
//! addition. PWM edges are evaluated on that grid, which snaps them to the
//! step at or after the ideal edge.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub dt: f64,
    pub t_end: f64,
}

impl SimClock {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("clock dt must be positive, got {dt}")));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("clock t_end must be non-negative, got {t_end}")));
        }
        Ok(Self { dt, t_end })
    }

    /// `floor(t_end / dt)`, guarded against `t_end / dt` landing a hair below an integer.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded as usize
        } else {
            ratio.floor() as usize
        }
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    #[default]
    ActiveHigh,
    ActiveLow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwmConfig {
    pub frequency: f64,
    pub duty: f64,
    pub phase: f64,
    pub polarity: Polarity,
}

impl PwmConfig {
    pub fn new(frequency: f64, duty: f64) -> Result<Self> {
        let cfg = Self { frequency, duty, phase: 0.0, polarity: Polarity::ActiveHigh };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::InvalidParameter(format!("pwm frequency must be positive, got {}", self.frequency)));
        }
        if !(0.0..=1.0).contains(&self.duty) {
            return Err(Error::DegenerateDuty(self.duty));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PwmChannel {
    Pwm1,
    Pwm2,
    Pwm3,
    Pwm4,
    Pwm5,
    Pwm6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForcedLevel {
    #[default]
    None,
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PwmOverride {
    pub target: PwmChannel,
    pub forced_level: ForcedLevel,
}

impl PwmOverride {
    pub const PASS_THROUGH: PwmOverride = PwmOverride { target: PwmChannel::Pwm1, forced_level: ForcedLevel::None };

    pub fn is_pass_through(&self) -> bool {
        self.forced_level == ForcedLevel::None
    }

    /// Forced level seen by `channel`; `None` unless this override targets it.
    pub fn level_for(&self, channel: PwmChannel) -> ForcedLevel {
        if channel == self.target {
            self.forced_level
        } else {
            ForcedLevel::None
        }
    }
}

impl Default for PwmOverride {
    fn default() -> Self {
        Self::PASS_THROUGH
    }
}

/// Piecewise-constant override timeline: each entry applies from its start
/// time until the next one. Before the first entry the gates pass through.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverrideSchedule {
    pub changes: Vec<(f64, PwmOverride)>,
}

impl OverrideSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    /// Forced from `t_start` onward.
    pub fn from(t_start: f64, ovr: PwmOverride) -> Self {
        Self { changes: vec![(t_start, ovr)] }
    }

    pub fn at(&self, t: f64) -> PwmOverride {
        let idx = self.changes.partition_point(|(t0, _)| *t0 <= t);
        if idx == 0 {
            PwmOverride::PASS_THROUGH
        } else {
            self.changes[idx - 1].1
        }
    }

    /// Cursor for monotone time sweeps.
    pub fn cursor(&self) -> ScheduleCursor<'_> {
        ScheduleCursor { schedule: self, next: 0, current: PwmOverride::PASS_THROUGH }
    }
}

pub struct ScheduleCursor<'a> {
    schedule: &'a OverrideSchedule,
    next: usize,
    current: PwmOverride,
}

impl ScheduleCursor<'_> {
    /// Override in force at `t`; `t` must not decrease between calls.
    #[inline]
    pub fn advance(&mut self, t: f64) -> PwmOverride {
        while let Some((t0, o)) = self.schedule.changes.get(self.next) {
            if *t0 > t {
                break;
            }
            self.current = *o;
            self.next += 1;
        }
        self.current
    }
}

/// `t_on / (t_on + t_off)`.
pub fn duty_cycle(t_on: f64, t_off: f64) -> Result<f64> {
    if t_on < 0.0 || t_off < 0.0 {
        return Err(Error::InvalidParameter(format!("negative on/off time ({t_on}, {t_off})")));
    }
    let period = t_on + t_off;
    if period == 0.0 {
        return Err(Error::ZeroPeriod);
    }
    Ok(t_on / period)
}

/// Gate level at time `t`; a forced level wins over the carrier.
#[inline]
pub fn pwm_level(config: &PwmConfig, t: f64, forced: ForcedLevel) -> bool {
    match forced {
        ForcedLevel::High => true,
        ForcedLevel::Low => false,
        ForcedLevel::None => {
            let frac = ((t - config.phase) * config.frequency).rem_euclid(1.0);
            let active = frac < config.duty;
            match config.polarity {
                Polarity::ActiveHigh => active,
                Polarity::ActiveLow => !active,
            }
        }
    }
}

/// Uniformly sampled signal starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub unit: String,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, unit: impl Into<String>) -> Self {
        Self { t0, dt, samples: Vec::new(), unit: unit.into() }
    }

    pub fn from_samples(t0: f64, dt: f64, samples: Vec<f64>, unit: impl Into<String>) -> Self {
        Self { t0, dt, samples, unit: unit.into() }
    }

    pub fn push(&mut self, v: f64) {
        self.samples.push(v);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn last(&self) -> Option<f64> {
        self.samples.last().copied()
    }

    /// Samples with `t_start <= t < t_stop`.
    pub fn window(&self, t_start: f64, t_stop: f64) -> TimeSeries {
        let first = (((t_start - self.t0) / self.dt).ceil().max(0.0)) as usize;
        let first = first.min(self.samples.len());
        let stop = (((t_stop - self.t0) / self.dt).ceil().max(0.0)) as usize;
        let stop = stop.clamp(first, self.samples.len());
        TimeSeries {
            t0: self.time(first),
            dt: self.dt,
            samples: self.samples[first..stop].to_vec(),
            unit: self.unit.clone(),
        }
    }

    /// Keep every `k`-th sample.
    pub fn decimate(&self, k: usize) -> TimeSeries {
        let k = k.max(1);
        TimeSeries {
            t0: self.t0,
            dt: self.dt * k as f64,
            samples: self.samples.iter().step_by(k).copied().collect(),
            unit: self.unit.clone(),
        }
    }

    pub fn mean(&self) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(self.samples.iter().sum::<f64>() / self.samples.len() as f64)
    }

    pub fn max(&self) -> Result<f64> {
        self.samples.iter().copied().reduce(f64::max).ok_or(Error::EmptySeries)
    }

    pub fn min(&self) -> Result<f64> {
        self.samples.iter().copied().reduce(f64::min).ok_or(Error::EmptySeries)
    }
}

pub fn rms(series: &TimeSeries) -> Result<f64> {
    if series.samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    let sq: f64 = series.samples.iter().map(|v| v * v).sum();
    Ok((sq / series.samples.len() as f64).sqrt())
}

/// Per-cycle `(pos_peak, neg_peak)` with cycle boundaries at the zero
/// crossings of the ideal reference `sin(2*pi*f0*t)`; only whole cycles
/// inside the series are reported.
pub fn half_cycle_amplitudes(series: &TimeSeries, f0: f64) -> Result<Vec<(f64, f64)>> {
    if series.samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(f0 > 0.0) {
        return Err(Error::InvalidParameter(format!("reference frequency must be positive, got {f0}")));
    }
    let period = 1.0 / f0;
    let t_first = series.t0;
    let t_last = series.time(series.len() - 1) + series.dt;
    // Small slack so a series that starts a rounding error past a boundary still counts.
    let eps = 1e-9 * period;
    let k0 = ((t_first - eps) / period).ceil() as i64;
    let k1 = ((t_last + eps) / period).floor() as i64;
    if k1 <= k0 {
        return Err(Error::SpanTooShort { need_s: period, got_s: series.duration() });
    }
    let mut out = Vec::with_capacity((k1 - k0) as usize);
    for k in k0..k1 {
        let start = k as f64 * period;
        let mid = start + 0.5 * period;
        let end = start + period;
        let pos = series.window(start, mid);
        let neg = series.window(mid, end);
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        out.push((pos.max()?, -neg.min()?));
    }
    if out.is_empty() {
        return Err(Error::SpanTooShort { need_s: period, got_s: series.duration() });
    }
    Ok(out)
}

/// `(before - after) / before`.
pub fn percent_reduction(before: f64, after: f64) -> Result<f64> {
    if !(before > 0.0) {
        return Err(Error::NonPositiveBaseline(before));
    }
    Ok((before - after) / before)
}

/// Explicit fixed-step methods used by the switched stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    ForwardEuler,
    /// Explicit midpoint (RK2); needed for lightly damped LC loops where
    /// forward Euler adds energy every step.
    Midpoint,
}

impl Integrator {
    #[inline]
    pub fn step<const N: usize>(self, x: &[f64; N], dt: f64, f: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
        match self {
            Integrator::ForwardEuler => {
                let k1 = f(x);
                std::array::from_fn(|i| x[i] + dt * k1[i])
            }
            Integrator::Midpoint => {
                let k1 = f(x);
                let xm: [f64; N] = std::array::from_fn(|i| x[i] + 0.5 * dt * k1[i]);
                let k2 = f(&xm);
                std::array::from_fn(|i| x[i] + dt * k2[i])
            }
        }
    }
}
