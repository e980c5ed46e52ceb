//! Switched model of the active-clamp flyback stage.
//!
//! The primary is referred to a single node X: the source feeds X through the
//! magnetizing inductance `l_m`, and X feeds the drain through the leakage
//! inductance `l_lk`. The ideal transformer winding sits across X and the
//! source rail, so the secondary diode clamps X to `(v_out + v_diode) / n`
//! whenever it conducts. With that connection the volt-second balance on
//! `l_m` gives `v_out = v_in * n / (1 - d)`.
//!
//! The drain node takes one of four forms depending on the two gates:
//!
//! | Q1 (clamp) | Q2 (main) | drain |
//! |---|---|---|
//! | off | on  | `r_on * i_lk` to ground |
//! | on  | off | `v_clamp + r_on_clamp * i_lk`, clamp cap carries `i_lk` |
//! | on  | on  | resistive divider between ground and the clamp cap |
//! | off | off | floating on `c_par`, body diode clamps at `-v_diode` |
//!
//! The last row is where a missing clamp shows up: `i_lk` is dumped into the
//! parasitic capacitance alone and rings to several hundred volts.

use crate::signal::Integrator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlybackParams {
    pub l_m: f64,
    pub l_lk: f64,
    /// Ns / Np.
    pub turns_ratio: f64,
    pub c_clamp: f64,
    pub c_out: f64,
    pub r_load: f64,
    pub f_sw: f64,
    /// Main switch Q2.
    pub r_on: f64,
    /// Clamp switch Q1.
    pub r_on_clamp: f64,
    pub v_diode: f64,
    pub c_par: f64,
    pub r_winding: f64,
    /// Drain voltage the gate driver survives.
    pub v_rating: f64,
    /// Consecutive steps above `v_rating` that destroy the driver.
    pub fail_steps: u32,
    pub integrator: Integrator,
}

impl Default for FlybackParams {
    fn default() -> Self {
        Self {
            l_m: 100e-6,
            l_lk: 2.8e-6,
            turns_ratio: 1.6,
            c_clamp: 1e-6,
            c_out: 20e-6,
            r_load: 49.0,
            f_sw: 50e3,
            r_on: 0.05,
            r_on_clamp: 0.05,
            v_diode: 0.7,
            c_par: 1e-9,
            r_winding: 0.02,
            v_rating: 100.0,
            fail_steps: 10,
            integrator: Integrator::Midpoint,
        }
    }
}

impl FlybackParams {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            ("l_m", self.l_m),
            ("l_lk", self.l_lk),
            ("turns_ratio", self.turns_ratio),
            ("c_clamp", self.c_clamp),
            ("c_out", self.c_out),
            ("r_load", self.r_load),
            ("f_sw", self.f_sw),
            ("r_on", self.r_on),
            ("r_on_clamp", self.r_on_clamp),
            ("c_par", self.c_par),
            ("v_rating", self.v_rating),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(crate::Error::InvalidParameter(format!("flyback {name} must be positive, got {v}")));
            }
        }
        if !(self.v_diode >= 0.0 && self.r_winding >= 0.0) {
            return Err(crate::Error::InvalidParameter("flyback v_diode and r_winding must be non-negative".into()));
        }
        if !(self.l_lk < 0.1 * self.l_m) {
            return Err(crate::Error::InvalidParameter("leakage inductance must be well below l_m".into()));
        }
        Ok(())
    }

    /// Largest step that keeps the drain ringing resolved (about 30 steps per
    /// `l_lk`-`c_par` period) and honours the 100-steps-per-PWM-period rule.
    pub fn max_dt(&self) -> f64 {
        let ring = 2.0 * std::f64::consts::PI * (self.l_lk * self.c_par).sqrt();
        (ring / 30.0).min(1.0 / (100.0 * self.f_sw))
    }
}

/// Energy bookkeeping, joules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTally {
    pub input: f64,
    pub load: f64,
    pub dissipated: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlybackState {
    pub i_m: f64,
    pub i_lk: f64,
    pub v_clamp: f64,
    pub v_out: f64,
    pub v_sw: f64,
    pub diode_on: bool,
    pub over_rating_steps: u32,
    pub destroyed: bool,
    pub energy: EnergyTally,
}

impl FlybackState {
    pub fn stored_energy(&self, p: &FlybackParams) -> f64 {
        0.5 * p.l_m * self.i_m * self.i_m
            + 0.5 * p.l_lk * self.i_lk * self.i_lk
            + 0.5 * p.c_clamp * self.v_clamp * self.v_clamp
            + 0.5 * p.c_out * self.v_out * self.v_out
            + 0.5 * p.c_par * self.v_sw * self.v_sw
    }
}

#[derive(Clone, Copy)]
struct Gates {
    clamp: bool,
    main: bool,
}

/// Drain voltage and clamp-capacitor current for the given gates.
#[inline]
fn drain(p: &FlybackParams, g: Gates, i_lk: f64, v_cl: f64, v_sw_float: f64) -> (f64, f64) {
    let (r, rc) = (p.r_on, p.r_on_clamp);
    match (g.clamp, g.main) {
        (true, true) => {
            let v = (i_lk * r * rc + v_cl * r) / (r + rc);
            (v, (v - v_cl) / rc)
        }
        (false, true) => (r * i_lk, 0.0),
        (true, false) => (v_cl + rc * i_lk, i_lk),
        (false, false) => (v_sw_float, 0.0),
    }
}

/// Power burned in the conducting switches.
#[inline]
fn switch_loss(p: &FlybackParams, g: Gates, i_lk: f64, v_cl: f64) -> f64 {
    let (r, rc) = (p.r_on, p.r_on_clamp);
    match (g.clamp, g.main) {
        (true, true) => {
            let (v, _) = drain(p, g, i_lk, v_cl, 0.0);
            v * v / r + (v - v_cl) * (v - v_cl) / rc
        }
        (false, true) => r * i_lk * i_lk,
        (true, false) => rc * i_lk * i_lk,
        (false, false) => 0.0,
    }
}

// State vector: [i_m, i_lk, v_clamp, v_out, v_sw].
#[inline]
fn derivative(p: &FlybackParams, g: Gates, diode_on: bool, v_in: f64, x: &[f64; 5]) -> [f64; 5] {
    let [i_m, i_lk, v_cl, v_out, v_sw_float] = *x;
    let (v_sw, i_cl) = drain(p, g, i_lk, v_cl, v_sw_float);
    let (di_m, di_lk, i_d) = if diode_on {
        let v_x = (v_out + p.v_diode) / p.turns_ratio;
        ((v_in - v_x - p.r_winding * i_m) / p.l_m, (v_x - v_sw) / p.l_lk, (i_m - i_lk) / p.turns_ratio)
    } else {
        let di = (v_in - v_sw - p.r_winding * i_m) / (p.l_m + p.l_lk);
        (di, di, 0.0)
    };
    let dv_sw = if g.clamp || g.main { 0.0 } else { i_lk / p.c_par };
    [di_m, di_lk, i_cl / p.c_clamp, (i_d - v_out / p.r_load) / p.c_out, dv_sw]
}

/// Power flows at one state, for the trapezoidal energy audit.
#[inline]
fn powers(p: &FlybackParams, g: Gates, diode_on: bool, v_in: f64, x: &[f64; 5]) -> (f64, f64, f64) {
    let [i_m, i_lk, v_cl, v_out, _] = *x;
    let input = v_in * i_m;
    let load = v_out * v_out / p.r_load;
    let diode = if diode_on { p.v_diode * (i_m - i_lk) / p.turns_ratio } else { 0.0 };
    let lost = p.r_winding * i_m * i_m + switch_loss(p, g, i_lk, v_cl) + diode;
    (input, load, lost)
}

pub fn flyback_step(
    params: &FlybackParams,
    state: &FlybackState,
    pwm1: bool,
    pwm2: bool,
    v_in: f64,
    dt: f64,
) -> FlybackState {
    let p = params;
    if state.destroyed {
        return FlybackState { i_m: 0.0, i_lk: 0.0, v_out: -p.v_diode, v_sw: 0.0, diode_on: false, ..*state };
    }
    let g = Gates { clamp: pwm1, main: pwm2 };
    let x = [state.i_m, state.i_lk, state.v_clamp, state.v_out, state.v_sw];

    let mut diode_on = state.diode_on;
    if !diode_on {
        let (v_sw, _) = drain(p, g, x[1], x[2], x[4]);
        let di = (v_in - v_sw - p.r_winding * x[0]) / (p.l_m + p.l_lk);
        let v_x = v_in - p.r_winding * x[0] - p.l_m * di;
        if v_x > (x[3] + p.v_diode) / p.turns_ratio {
            diode_on = true;
        }
    }

    let mut y = p.integrator.step(&x, dt, |s| derivative(p, g, diode_on, v_in, s));

    let (pin0, pl0, pd0) = powers(p, g, diode_on, v_in, &x);
    let (pin1, pl1, pd1) = powers(p, g, diode_on, v_in, &y);
    let mut energy = state.energy;
    energy.input += 0.5 * (pin0 + pin1) * dt;
    energy.load += 0.5 * (pl0 + pl1) * dt;
    energy.dissipated += 0.5 * (pd0 + pd1) * dt;

    let half_cpar = 0.5 * p.c_par;
    if g.clamp || g.main {
        // A conducting switch shorts c_par; whatever it held is burned.
        let (v_sw, _) = drain(p, g, y[1], y[2], y[4]);
        energy.dissipated += half_cpar * (x[4] * x[4] - v_sw * v_sw);
        y[4] = v_sw;
    } else if y[4] < -p.v_diode {
        energy.dissipated += half_cpar * (y[4] * y[4] - p.v_diode * p.v_diode);
        y[4] = -p.v_diode;
    }

    if diode_on && y[0] - y[1] < 0.0 {
        // Secondary current would reverse: the diode blocks and both
        // inductors carry one flux-weighted current from here on.
        let merged = (p.l_m * y[0] + p.l_lk * y[1]) / (p.l_m + p.l_lk);
        energy.dissipated +=
            0.5 * p.l_m * y[0] * y[0] + 0.5 * p.l_lk * y[1] * y[1] - 0.5 * (p.l_m + p.l_lk) * merged * merged;
        y[0] = merged;
        y[1] = merged;
        diode_on = false;
    }

    let over_rating_steps = if y[4] > p.v_rating { state.over_rating_steps + 1 } else { 0 };
    let destroyed = over_rating_steps > p.fail_steps;
    if destroyed {
        return FlybackState {
            i_m: 0.0,
            i_lk: 0.0,
            v_clamp: y[2],
            v_out: -p.v_diode,
            v_sw: y[4],
            diode_on: false,
            over_rating_steps,
            destroyed,
            energy,
        };
    }

    FlybackState {
        i_m: y[0],
        i_lk: y[1],
        v_clamp: y[2],
        v_out: y[3],
        v_sw: y[4],
        diode_on,
        over_rating_steps,
        destroyed,
        energy,
    }
}
