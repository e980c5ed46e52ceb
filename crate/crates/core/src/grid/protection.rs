//! Under-frequency and undervoltage protection.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtectionSettings {
    pub uf_trip_hz: f64,
    pub uv_trip_pu: f64,
    pub trip_delay_s: f64,
}

impl Default for ProtectionSettings {
    fn default() -> Self {
        Self { uf_trip_hz: 59.3, uv_trip_pu: 0.88, trip_delay_s: 10.0 }
    }
}

impl ProtectionSettings {
    pub fn validate(&self, f0: f64) -> Result<()> {
        if !(self.uf_trip_hz < f0 && self.uf_trip_hz > 0.0) {
            return Err(Error::InvalidParameter(format!("uf trip {} Hz must lie below {f0} Hz", self.uf_trip_hz)));
        }
        if !(self.uv_trip_pu > 0.0 && self.uv_trip_pu < 1.0 && self.trip_delay_s >= 0.0) {
            return Err(Error::InvalidParameter("undervoltage setting outside (0, 1) pu or negative delay".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridEvent {
    AttackStart,
    DgTrip { bus: String },
    SyncLoss { bus: String },
    ExcitationLimit,
    UndervoltageTrip { bus: String },
    VoltageCollapse,
    GridShutdown,
}

impl GridEvent {
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Events that end the quasi-static run.
    pub fn is_terminal(&self) -> bool {
        matches!(self, GridEvent::VoltageCollapse | GridEvent::GridShutdown)
    }

    /// Events counted as the onset of instability.
    pub fn is_instability(&self) -> bool {
        matches!(self, GridEvent::VoltageCollapse | GridEvent::GridShutdown | GridEvent::SyncLoss { .. })
    }
}

impl fmt::Display for GridEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridEvent::AttackStart => write!(f, "attack start"),
            GridEvent::DgTrip { bus } => write!(f, "dg trip {bus}"),
            GridEvent::SyncLoss { bus } => write!(f, "sync loss {bus}"),
            GridEvent::ExcitationLimit => write!(f, "source excitation limit"),
            GridEvent::UndervoltageTrip { bus } => write!(f, "undervoltage trip {bus}"),
            GridEvent::VoltageCollapse => write!(f, "voltage collapse"),
            GridEvent::GridShutdown => write!(f, "grid shutdown"),
        }
    }
}

/// Per-bus undervoltage timers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProtectionState {
    pub uv_time: Vec<f64>,
    pub uv_tripped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProtectionOutcome {
    pub shutdown: bool,
    /// Bus whose undervoltage timer expired this scan.
    pub uv_trip_bus: Option<usize>,
}

/// Evaluates protection after a solved step of length `dt`.
pub fn protection_scan(
    settings: &ProtectionSettings,
    state: &mut ProtectionState,
    f: f64,
    v_mag: &[f64],
    dt: f64,
) -> ProtectionOutcome {
    let mut out = ProtectionOutcome { shutdown: f < settings.uf_trip_hz, uv_trip_bus: None };
    state.uv_time.resize(v_mag.len(), 0.0);
    for (i, &v) in v_mag.iter().enumerate() {
        if v < settings.uv_trip_pu {
            state.uv_time[i] += dt;
            if state.uv_time[i] >= settings.trip_delay_s - 1e-9 && !state.uv_tripped && out.uv_trip_bus.is_none() {
                out.uv_trip_bus = Some(i);
            }
        } else {
            state.uv_time[i] = 0.0;
        }
    }
    if out.uv_trip_bus.is_some() {
        state.uv_tripped = true;
    }
    out
}
