//! Independent Newton-Raphson power flow on the bus-admittance form, used as
//! an oracle for the sweep solver.

use ermsim::grid::{FeederModel, Injections, LoadModel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

type C = Complex64;

/// Newton solve of the same network. Zero-impedance lines merge their end
/// buses into one node. Returns per-bus voltages, or `None` when the
/// iteration does not converge.
pub fn newton(model: &FeederModel, inj: &Injections) -> Option<Vec<C>> {
    let nb = model.buses.len();
    let mut node: Vec<usize> = (0..nb).collect();
    fn root(node: &mut [usize], mut i: usize) -> usize {
        while node[i] != i {
            i = node[i];
        }
        i
    }
    for l in &model.lines {
        if l.r_ohm == 0.0 && l.x_ohm == 0.0 {
            let (a, b) = (root(&mut node, l.from), root(&mut node, l.to));
            node[b] = a;
        }
    }
    let roots: Vec<usize> = (0..nb).map(|i| root(&mut node, i)).collect();
    let mut ids: Vec<usize> = roots.clone();
    ids.sort_unstable();
    ids.dedup();
    let idx: Vec<usize> = roots.iter().map(|r| ids.binary_search(r).unwrap()).collect();
    let n = ids.len();

    let zb = model.kv_base * model.kv_base / model.s_base_mva;
    let mut y = vec![vec![C::new(0.0, 0.0); n]; n];
    for l in &model.lines {
        let (a, b) = (idx[l.from], idx[l.to]);
        if a == b {
            continue;
        }
        let yl = C::new(1.0, 0.0) / (C::new(l.r_ohm, l.x_ohm) / zb);
        y[a][a] += yl;
        y[b][b] += yl;
        y[a][b] -= yl;
        y[b][a] -= yl;
    }
    let zs_ohm = model.kv_base * model.kv_base / model.scc_mva;
    let rs = zs_ohm / (1.0 + model.x_over_r * model.x_over_r).sqrt();
    let ys = C::new(1.0, 0.0) / (C::new(rs, rs * model.x_over_r) / zb);
    let slack = idx[model.slack_bus];
    y[slack][slack] += ys;
    let e = C::new(inj.source_v, 0.0);

    let sb_kva = model.s_base_mva * 1e3;
    let demand = |v: &[C]| -> Vec<C> {
        let mut s = vec![C::new(0.0, 0.0); n];
        for ld in &model.loads {
            let k = idx[ld.bus];
            let s0 = C::new(ld.p_kw, ld.q_kvar) * inj.load_scale / sb_kva;
            s[k] += if ld.model == LoadModel::ConstantPower { s0 } else { s0 * v[k].norm_sqr() };
        }
        for c in &model.capacitors {
            let k = idx[c.bus];
            s[k] -= C::new(0.0, c.kvar * inj.shunt_scale / sb_kva) * v[k].norm_sqr();
        }
        for (g, sg) in model.generators.iter().zip(&inj.generation) {
            s[idx[g.bus]] -= sg / model.s_base_mva;
        }
        s
    };
    let mismatch = |x: &DVector<f64>| -> DVector<f64> {
        let v: Vec<C> = (0..n).map(|i| C::new(x[2 * i], x[2 * i + 1])).collect();
        let sd = demand(&v);
        let mut f = DVector::zeros(2 * n);
        for i in 0..n {
            let mut cur: C = (0..n).map(|j| y[i][j] * v[j]).sum();
            if i == slack {
                cur -= ys * e;
            }
            let m = v[i] * cur.conj() + sd[i];
            f[2 * i] = m.re;
            f[2 * i + 1] = m.im;
        }
        f
    };

    let mut x = DVector::from_fn(2 * n, |k, _| if k % 2 == 0 { inj.source_v } else { 0.0 });
    for _ in 0..40 {
        let f = mismatch(&x);
        if f.amax() < 1e-12 {
            let v: Vec<C> = (0..n).map(|i| C::new(x[2 * i], x[2 * i + 1])).collect();
            return Some((0..nb).map(|b| v[idx[b]]).collect());
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..2 * n {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            jac.set_column(k, &((mismatch(&xp) - mismatch(&xm)) / (2.0 * h)));
        }
        let dx = jac.lu().solve(&(-f))?;
        x += dx;
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    None
}
