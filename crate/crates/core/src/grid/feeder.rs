//! Radial feeder model and its text data format.
//!
//! Sections: `[system]` (key = value), `[buses]`, `[lines]`, `[loads]`,
//! `[capacitors]`, `[generators]` (whitespace-separated columns). `#` starts a
//! comment. The slack source sits behind the short-circuit impedance derived
//! from `scc_mva` and `x_over_r` and feeds `slack_bus`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadModel {
    ConstantPower,
    ConstantImpedance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub kv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Load {
    pub bus: usize,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub model: LoadModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capacitor {
    pub bus: usize,
    pub kvar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub rating_kva: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub kv_base: f64,
    pub s_base_mva: f64,
    pub scc_mva: f64,
    pub x_over_r: f64,
    pub slack_bus: usize,
    /// Index into `generators`.
    pub target_dg: usize,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    pub capacitors: Vec<Capacitor>,
    pub generators: Vec<Generator>,
    topo: Topology,
}

/// Buses in breadth-first order from the slack, with the line feeding each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Topology {
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub feeder_line: Vec<Option<usize>>,
}

const IEEE13: &str = include_str!("../../data/ieee13.feeder");

impl FeederModel {
    /// Balanced IEEE 13-node feeder shipped with the crate.
    pub fn ieee13() -> Self {
        Self::parse(IEEE13).expect("bundled feeder data is valid")
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::FeederData { line: 0, msg: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::default().run(text)
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn z_base(&self) -> f64 {
        self.kv_base * self.kv_base / self.s_base_mva
    }

    /// Source impedance behind the slack bus, per unit.
    pub fn source_z_pu(&self) -> Complex64 {
        let z = self.kv_base * self.kv_base / self.scc_mva;
        let r = z / (1.0 + self.x_over_r * self.x_over_r).sqrt();
        Complex64::new(r, r * self.x_over_r) / self.z_base()
    }

    pub fn line_z_pu(&self, line: usize) -> Complex64 {
        let l = &self.lines[line];
        Complex64::new(l.r_ohm, l.x_ohm) / self.z_base()
    }

    /// Total nominal load `(MW, Mvar)`, capacitors excluded.
    pub fn total_load(&self) -> (f64, f64) {
        let p = self.loads.iter().map(|l| l.p_kw).sum::<f64>() / 1e3;
        let q = self.loads.iter().map(|l| l.q_kvar).sum::<f64>() / 1e3;
        (p, q)
    }

    pub fn target_bus(&self) -> usize {
        self.generators[self.target_dg].bus
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::FeederData { line: 0, msg });
        if !(self.kv_base > 0.0 && self.s_base_mva > 0.0 && self.scc_mva > 0.0 && self.x_over_r > 0.0) {
            return bad("system bases, scc and x/r must be positive".into());
        }
        if self.buses.is_empty() {
            return bad("feeder has no buses".into());
        }
        for l in &self.lines {
            if l.r_ohm < 0.0 || l.x_ohm < 0.0 {
                return bad(format!("line {}-{} has negative impedance", self.buses[l.from].id, self.buses[l.to].id));
            }
        }
        if self.target_dg >= self.generators.len() {
            return bad("target generator missing".into());
        }
        build_topology(self.buses.len(), self.slack_bus, &self.lines).map(|_| ())
    }
}

fn build_topology(n: usize, root: usize, lines: &[Line]) -> Result<Topology> {
    if lines.len() + 1 != n {
        return Err(Error::FeederData {
            line: 0,
            msg: format!("radial feeder with {n} buses needs {} lines, found {}", n - 1, lines.len()),
        });
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, l) in lines.iter().enumerate() {
        adj[l.from].push((l.to, k));
        adj[l.to].push((l.from, k));
    }
    let mut topo = Topology { order: vec![root], parent: vec![None; n], feeder_line: vec![None; n] };
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut head = 0;
    while head < topo.order.len() {
        let b = topo.order[head];
        head += 1;
        for &(c, k) in &adj[b] {
            if !seen[c] {
                seen[c] = true;
                topo.parent[c] = Some(b);
                topo.feeder_line[c] = Some(k);
                topo.order.push(c);
            }
        }
    }
    if topo.order.len() != n {
        return Err(Error::FeederData { line: 0, msg: "feeder is not connected to the slack bus".into() });
    }
    Ok(topo)
}

#[derive(Default)]
struct Parser {
    system: HashMap<String, (usize, String)>,
    buses: Vec<Bus>,
    lines: Vec<(usize, String, String, f64, f64)>,
    loads: Vec<(usize, String, f64, f64, LoadModel)>,
    caps: Vec<(usize, String, f64)>,
    gens: Vec<(usize, String, f64, f64, f64)>,
}

fn num(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::FeederData { line, msg: format!("expected a number, found '{tok}'") })
}

impl Parser {
    fn run(mut self, text: &str) -> Result<FeederModel> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["system", "buses", "lines", "loads", "capacitors", "generators"].contains(&section.as_str()) {
                    return Err(Error::FeederData { line: ln, msg: format!("unknown section [{section}]") });
                }
                continue;
            }
            let cols: Vec<&str> = body.split_whitespace().collect();
            let want = |n: usize| -> Result<()> {
                if cols.len() != n {
                    return Err(Error::FeederData {
                        line: ln,
                        msg: format!("[{section}] rows need {n} columns, found {}", cols.len()),
                    });
                }
                Ok(())
            };
            match section.as_str() {
                "system" => {
                    let (k, v) = body
                        .split_once('=')
                        .ok_or_else(|| Error::FeederData { line: ln, msg: "expected key = value".into() })?;
                    self.system.insert(k.trim().to_string(), (ln, v.trim().to_string()));
                }
                "buses" => {
                    want(2)?;
                    self.buses.push(Bus { id: cols[0].to_string(), kv: num(cols[1], ln)? });
                }
                "lines" => {
                    want(4)?;
                    self.lines.push((ln, cols[0].into(), cols[1].into(), num(cols[2], ln)?, num(cols[3], ln)?));
                }
                "loads" => {
                    want(4)?;
                    let model = match cols[3] {
                        "pq" => LoadModel::ConstantPower,
                        "z" => LoadModel::ConstantImpedance,
                        other => {
                            return Err(Error::FeederData { line: ln, msg: format!("unknown load model '{other}'") })
                        }
                    };
                    self.loads.push((ln, cols[0].into(), num(cols[1], ln)?, num(cols[2], ln)?, model));
                }
                "capacitors" => {
                    want(2)?;
                    self.caps.push((ln, cols[0].into(), num(cols[1], ln)?));
                }
                "generators" => {
                    want(4)?;
                    self.gens.push((ln, cols[0].into(), num(cols[1], ln)?, num(cols[2], ln)?, num(cols[3], ln)?));
                }
                _ => return Err(Error::FeederData { line: ln, msg: "data before the first section".into() }),
            }
        }
        self.finish()
    }

    fn sys(&self, key: &str) -> Result<(usize, &str)> {
        self.system
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| Error::FeederData { line: 0, msg: format!("[system] is missing '{key}'") })
    }

    fn sys_num(&self, key: &str) -> Result<f64> {
        let (l, v) = self.sys(key)?;
        num(v, l)
    }

    fn finish(self) -> Result<FeederModel> {
        let known = [
            "kv_base",
            "s_base_mva",
            "scc_mva",
            "x_over_r",
            "slack_bus",
            "target_dg",
            "target_load_mw",
            "target_load_mvar",
        ];
        for (k, (l, _)) in &self.system {
            if !known.contains(&k.as_str()) {
                return Err(Error::FeederData { line: *l, msg: format!("unknown [system] key '{k}'") });
            }
        }
        let idx: HashMap<&str, usize> = self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
        if idx.len() != self.buses.len() {
            return Err(Error::FeederData { line: 0, msg: "duplicate bus id".into() });
        }
        let bus = |ln: usize, id: &str| -> Result<usize> {
            idx.get(id).copied().ok_or_else(|| Error::FeederData { line: ln, msg: format!("unknown bus '{id}'") })
        };

        let lines = self
            .lines
            .iter()
            .map(|(ln, f, t, r, x)| Ok(Line { from: bus(*ln, f)?, to: bus(*ln, t)?, r_ohm: *r, x_ohm: *x }))
            .collect::<Result<Vec<_>>>()?;
        let mut loads = self
            .loads
            .iter()
            .map(|(ln, b, p, q, m)| Ok(Load { bus: bus(*ln, b)?, p_kw: *p, q_kvar: *q, model: *m }))
            .collect::<Result<Vec<_>>>()?;
        let capacitors = self
            .caps
            .iter()
            .map(|(ln, b, kvar)| Ok(Capacitor { bus: bus(*ln, b)?, kvar: *kvar }))
            .collect::<Result<Vec<_>>>()?;
        let generators = self
            .gens
            .iter()
            .map(|(ln, b, p, q, s)| Ok(Generator { bus: bus(*ln, b)?, p_kw: *p, q_kvar: *q, rating_kva: *s }))
            .collect::<Result<Vec<_>>>()?;

        let (sl, slack_id) = self.sys("slack_bus")?;
        let slack_bus = bus(sl, slack_id)?;
        let (tl, target_id) = self.sys("target_dg")?;
        let target_bus = bus(tl, target_id)?;
        let target_dg = generators
            .iter()
            .position(|g| g.bus == target_bus)
            .ok_or_else(|| Error::FeederData { line: tl, msg: format!("no generator at target bus '{target_id}'") })?;

        let p_tot: f64 = loads.iter().map(|l| l.p_kw).sum();
        let q_tot: f64 = loads.iter().map(|l| l.q_kvar).sum();
        if self.system.contains_key("target_load_mw") {
            let sp = self.sys_num("target_load_mw")? * 1e3 / p_tot;
            loads.iter_mut().for_each(|l| l.p_kw *= sp);
        }
        if self.system.contains_key("target_load_mvar") {
            let sq = self.sys_num("target_load_mvar")? * 1e3 / q_tot;
            loads.iter_mut().for_each(|l| l.q_kvar *= sq);
        }

        let topo = build_topology(self.buses.len(), slack_bus, &lines)?;
        let model = FeederModel {
            kv_base: self.sys_num("kv_base")?,
            s_base_mva: self.sys_num("s_base_mva")?,
            scc_mva: self.sys_num("scc_mva")?,
            x_over_r: self.sys_num("x_over_r")?,
            slack_bus,
            target_dg,
            buses: self.buses,
            lines,
            loads,
            capacitors,
            generators,
            topo,
        };
        model.validate()?;
        Ok(model)
    }
}
