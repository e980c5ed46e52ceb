//! Backward-forward sweep on the radial feeder.

use super::feeder::{FeederModel, LoadModel};
use crate::error::{Error, Result};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    /// Source EMF magnitude behind the short-circuit impedance, pu.
    pub source_v: f64,
    /// Multiplier on every load (capacitors excluded).
    pub load_scale: f64,
    /// Multiplier on capacitor ratings.
    pub shunt_scale: f64,
    /// Complex output of each generator, MVA. Zero when offline.
    pub generation: Vec<Complex64>,
}

impl Injections {
    pub fn nominal(model: &FeederModel) -> Self {
        Self {
            source_v: 1.0,
            load_scale: 1.0,
            shunt_scale: 1.0,
            generation: model.generators.iter().map(|g| Complex64::new(g.p_kw, g.q_kvar) / 1e3).collect(),
        }
    }

    pub fn no_load(model: &FeederModel) -> Self {
        Self {
            source_v: 1.0,
            load_scale: 0.0,
            shunt_scale: 0.0,
            generation: vec![Complex64::new(0.0, 0.0); model.generators.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Bus voltages, pu, indexed like `FeederModel::buses`.
    pub v: Vec<Complex64>,
    pub iterations: usize,
    /// Power delivered by the source EMF, MVA.
    pub s_slack: Complex64,
    /// Series losses including the source impedance, MVA.
    pub losses: Complex64,
    /// Load drawn at the solved voltages, capacitors included, MVA.
    pub load: Complex64,
    pub generation: Complex64,
}

impl PowerFlowSolution {
    pub fn v_mag(&self, bus: usize) -> f64 {
        self.v[bus].norm()
    }
}

/// Net complex power drawn at each bus, pu, at voltages `v`.
pub fn bus_demand(model: &FeederModel, inj: &Injections, v: &[Complex64]) -> Vec<Complex64> {
    let sb = model.s_base_mva * 1e3;
    let mut s = vec![Complex64::new(0.0, 0.0); model.buses.len()];
    for l in &model.loads {
        let s0 = Complex64::new(l.p_kw, l.q_kvar) * inj.load_scale / sb;
        s[l.bus] += match l.model {
            LoadModel::ConstantPower => s0,
            LoadModel::ConstantImpedance => s0 * v[l.bus].norm_sqr(),
        };
    }
    for c in &model.capacitors {
        s[c.bus] -= Complex64::new(0.0, c.kvar * inj.shunt_scale / sb) * v[c.bus].norm_sqr();
    }
    for (g, sg) in model.generators.iter().zip(&inj.generation) {
        s[g.bus] -= sg / model.s_base_mva;
    }
    s
}

fn branch_currents(model: &FeederModel, inj: &Injections, v: &[Complex64]) -> Vec<Complex64> {
    let topo = model.topology();
    let s = bus_demand(model, inj, v);
    let mut j: Vec<Complex64> = s.iter().zip(v).map(|(s, v)| (s / v).conj()).collect();
    for &b in topo.order.iter().rev() {
        if let Some(p) = topo.parent[b] {
            let jb = j[b];
            j[p] += jb;
        }
    }
    j
}

/// Solves the feeder. Failure to converge within `max_iter` sweeps, or a
/// voltage falling to zero, is reported as [`Error::VoltageCollapse`].
pub fn power_flow(model: &FeederModel, inj: &Injections, opts: &PowerFlowOptions) -> Result<PowerFlowSolution> {
    if inj.generation.len() != model.generators.len() {
        return Err(Error::InvalidParameter(format!(
            "{} generator outputs given for {} generators",
            inj.generation.len(),
            model.generators.len()
        )));
    }
    if !(inj.source_v > 0.0) {
        return Err(Error::VoltageCollapse { iterations: 0 });
    }
    let topo = model.topology();
    let zs = model.source_z_pu();
    let e = Complex64::new(inj.source_v, 0.0);
    let mut v = vec![e; model.buses.len()];

    let mut iterations = 0;
    loop {
        iterations += 1;
        // j[b] is the current in the branch feeding b; j[slack] flows through the source.
        let j = branch_currents(model, inj, &v);
        let mut delta = 0.0f64;
        for &b in &topo.order {
            let vb = match (topo.parent[b], topo.feeder_line[b]) {
                (Some(p), Some(k)) => v[p] - model.line_z_pu(k) * j[b],
                _ => e - zs * j[b],
            };
            delta = delta.max((vb - v[b]).norm());
            v[b] = vb;
        }
        if !delta.is_finite() || v.iter().any(|x| !(x.norm() > 1e-3)) {
            return Err(Error::VoltageCollapse { iterations });
        }
        if delta < opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::VoltageCollapse { iterations });
        }
    }

    let sb = model.s_base_mva;
    let j = branch_currents(model, inj, &v);
    let mut losses = zs * j[model.slack_bus].norm_sqr();
    for &b in &topo.order {
        if let Some(k) = topo.feeder_line[b] {
            losses += model.line_z_pu(k) * j[b].norm_sqr();
        }
    }
    let demand = bus_demand(model, inj, &v);
    let generation: Complex64 = inj.generation.iter().sum();
    let load = demand.iter().sum::<Complex64>() + generation / sb;
    Ok(PowerFlowSolution {
        s_slack: e * j[model.slack_bus].conj() * sb,
        losses: losses * sb,
        load: load * sb,
        generation,
        v,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_load_is_flat() {
        let m = FeederModel::ieee13();
        let sol = power_flow(&m, &Injections::no_load(&m), &PowerFlowOptions::default()).unwrap();
        assert!(sol.v.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn nominal_voltages_in_band() {
        let m = FeederModel::ieee13();
        let sol = power_flow(&m, &Injections::nominal(&m), &PowerFlowOptions::default()).unwrap();
        for (b, v) in m.buses.iter().zip(&sol.v) {
            assert!((0.94..=1.0).contains(&v.norm()), "bus {} at {}", b.id, v.norm());
        }
        let balance = sol.s_slack - (sol.load + sol.losses - sol.generation);
        assert!(balance.norm() < 1e-6 * m.s_base_mva, "{balance}");
    }
}
