use serde::{Deserialize, Serialize};

use super::case::{GridCase, Topology};
use crate::conic::{ConicProgram, ConicSolution, LinExpr};
use crate::error::Result;

/// Position of every decision variable in the flat vector, per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarIndex {
    pub p0: Vec<usize>,
    pub q0: Vec<usize>,
    /// `[t][line]`: sending-end flows and squared current.
    pub f: Vec<Vec<usize>>,
    pub q: Vec<Vec<usize>>,
    pub l: Vec<Vec<usize>>,
    /// `[t][bus]`: squared voltage.
    pub v: Vec<Vec<usize>>,
    /// `[t][unit]` for each device list of the case.
    pub dg: Vec<Vec<usize>>,
    pub pv: Vec<Vec<usize>>,
    pub charge: Vec<Vec<usize>>,
    pub discharge: Vec<Vec<usize>>,
    pub soc: Vec<Vec<usize>>,
    pub dr: Vec<Vec<usize>>,
    pub n_vars: usize,
}

impl VarIndex {
    pub fn horizon(&self) -> usize {
        self.p0.len()
    }
}

/// Device membership per bus, used to build bus-level quantities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BusDevices {
    pub dg: Vec<usize>,
    pub pv: Vec<usize>,
    pub batteries: Vec<usize>,
    pub dr: Vec<usize>,
}

pub fn bus_devices(case: &GridCase) -> Vec<BusDevices> {
    let mut out = vec![BusDevices::default(); case.n_buses()];
    for (u, g) in case.generators.iter().enumerate() {
        out[g.bus].dg.push(u);
    }
    for (u, p) in case.pv.iter().enumerate() {
        out[p.bus].pv.push(u);
    }
    for (u, b) in case.batteries.iter().enumerate() {
        out[b.bus].batteries.push(u);
    }
    for (u, d) in case.demand_response.iter().enumerate() {
        out[d.bus].dr.push(u);
    }
    out
}

/// The branch-flow cone program of a case with the operating-cost objective.
#[derive(Debug, Clone)]
pub struct DistFlowProgram {
    pub program: ConicProgram,
    pub index: VarIndex,
    pub topology: Topology,
    pub devices: Vec<BusDevices>,
}

impl DistFlowProgram {
    /// Operating cost ($) of a decision vector.
    pub fn operating_cost(&self, x: &[f64]) -> f64 {
        self.program.objective_value(x)
    }

    /// Linear operating-cost coefficients (a copy of the base objective).
    pub fn cost_vector(&self) -> &[f64] {
        &self.program.objective
    }

    pub fn solve(&self) -> Result<ConicSolution> {
        self.program.solve()
    }

    /// Same constraints, objective `cost + extra·x + constant`.
    pub fn with_extra_objective(&self, extra: &[f64], constant: f64) -> ConicProgram {
        let mut p = self.program.clone();
        for (v, c) in extra.iter().enumerate() {
            p.add_cost(v, *c);
        }
        p.objective_constant += constant;
        p
    }
}

/// Builds the relaxed branch-flow program. For line k feeding bus b from a:
/// `f_k − R l_k = Σ_children f + p^c_b + p^{B,c} − p^{DG} − p^{PV} − p^{B,d} − p^{DR} + G v_b`,
/// the analogous reactive balance, the voltage drop, and `l_k v_a ≥ f² + q²`.
pub fn build_program(case: &GridCase) -> Result<DistFlowProgram> {
    let topology = case.validate()?;
    let devices = bus_devices(case);
    let (nt, nb, nl) = (case.horizon(), case.n_buses(), case.n_lines());
    let mut p = ConicProgram::new();
    let inf = f64::INFINITY;
    let s = &case.substation;
    let scale = case.dt_hours * case.base_mva;

    let mut idx = VarIndex {
        p0: Vec::with_capacity(nt),
        q0: Vec::with_capacity(nt),
        f: Vec::with_capacity(nt),
        q: Vec::with_capacity(nt),
        l: Vec::with_capacity(nt),
        v: Vec::with_capacity(nt),
        dg: Vec::with_capacity(nt),
        pv: Vec::with_capacity(nt),
        charge: Vec::with_capacity(nt),
        discharge: Vec::with_capacity(nt),
        soc: Vec::with_capacity(nt),
        dr: Vec::with_capacity(nt),
        n_vars: 0,
    };
    for t in 0..nt {
        idx.p0.push(p.add_var(s.p_min, s.p_max));
        idx.q0.push(p.add_var(s.q_min, s.q_max));
        idx.f.push((0..nl).map(|_| p.add_var(-inf, inf)).collect());
        idx.q.push((0..nl).map(|_| p.add_var(-inf, inf)).collect());
        idx.l.push(case.lines.iter().map(|l| p.add_var(0.0, l.l_max)).collect());
        idx.v.push(
            (0..nb)
                .map(|b| if b == 0 { p.add_var(s.v_sq, s.v_sq) } else { p.add_var(case.v_min_sq, case.v_max_sq) })
                .collect(),
        );
        idx.dg.push(case.generators.iter().map(|g| p.add_var(g.p_min, g.p_max)).collect());
        idx.pv.push(case.pv.iter().map(|u| p.add_var(0.0, u.profile[t])).collect());
        idx.charge.push(case.batteries.iter().map(|b| p.add_var(0.0, b.charge_max)).collect());
        idx.discharge.push(case.batteries.iter().map(|b| p.add_var(0.0, b.discharge_max)).collect());
        idx.soc.push(case.batteries.iter().map(|b| p.add_var(b.soc_min, b.soc_max)).collect());
        idx.dr.push(case.demand_response.iter().map(|d| p.add_var(0.0, d.cap[t])).collect());
    }
    idx.n_vars = p.n_vars();

    for t in 0..nt {
        // Bus balances. The root's "feeding line" is the substation injection.
        for b in 0..nb {
            let load = &case.buses[b];
            let (mut ep, mut eq) = match topology.feeder[b] {
                Some(k) => {
                    let line = &case.lines[k];
                    (
                        LinExpr::var(idx.f[t][k]).term(idx.l[t][k], -line.r),
                        LinExpr::var(idx.q[t][k]).term(idx.l[t][k], -line.x),
                    )
                }
                None => (LinExpr::var(idx.p0[t]), LinExpr::var(idx.q0[t])),
            };
            for &c in &topology.children[b] {
                ep = ep.term(idx.f[t][c], -1.0);
                eq = eq.term(idx.q[t][c], -1.0);
            }
            ep = ep.plus(-load.p[t]).term(idx.v[t][b], -load.g);
            eq = eq.plus(-load.q[t]);
            let dev = &devices[b];
            for &u in &dev.dg {
                ep = ep.term(idx.dg[t][u], 1.0);
            }
            for &u in &dev.pv {
                ep = ep.term(idx.pv[t][u], 1.0);
            }
            for &u in &dev.batteries {
                ep = ep.term(idx.discharge[t][u], 1.0).term(idx.charge[t][u], -1.0);
            }
            for &u in &dev.dr {
                ep = ep.term(idx.dr[t][u], 1.0);
            }
            p.add_eq(ep);
            p.add_eq(eq);
        }
        for (k, line) in case.lines.iter().enumerate() {
            let (a, b) = (line.from, line.to);
            let z2 = line.r * line.r + line.x * line.x;
            p.add_eq(
                LinExpr::var(idx.v[t][b])
                    .term(idx.v[t][a], -1.0)
                    .term(idx.f[t][k], 2.0 * line.r)
                    .term(idx.q[t][k], 2.0 * line.x)
                    .term(idx.l[t][k], -z2),
            );
            p.add_soc(
                LinExpr::var(idx.l[t][k]).term(idx.v[t][a], 1.0),
                vec![
                    LinExpr::new().term(idx.f[t][k], 2.0),
                    LinExpr::new().term(idx.q[t][k], 2.0),
                    LinExpr::var(idx.l[t][k]).term(idx.v[t][a], -1.0),
                ],
            );
        }
        // State of charge.
        for (u, bat) in case.batteries.iter().enumerate() {
            let mut e = LinExpr::var(idx.soc[t][u])
                .term(idx.charge[t][u], -bat.eta_charge * case.dt_hours)
                .term(idx.discharge[t][u], case.dt_hours / bat.eta_discharge);
            e = if t == 0 { e.plus(-bat.soc_init) } else { e.term(idx.soc[t - 1][u], -1.0) };
            p.add_eq(e);
        }
        // Operating cost.
        p.add_cost(idx.p0[t], case.price[t] * scale);
        for (u, g) in case.generators.iter().enumerate() {
            p.add_cost(idx.dg[t][u], g.cost * scale);
        }
        for (u, d) in case.demand_response.iter().enumerate() {
            p.add_cost(idx.dr[t][u], d.compensation * scale);
        }
    }
    // Storage ends the day no emptier than it started.
    for (u, bat) in case.batteries.iter().enumerate() {
        p.add_le(LinExpr::constant(bat.soc_init).term(idx.soc[nt - 1][u], -1.0));
    }
    Ok(DistFlowProgram { program: p, index: idx, topology, devices })
}

/// Cost-only dispatch.
#[derive(Debug, Clone)]
pub struct CmSolution {
    pub program: DistFlowProgram,
    pub x: Vec<f64>,
    pub cost: f64,
}

pub fn solve_cm(case: &GridCase) -> Result<CmSolution> {
    let program = build_program(case)?;
    let sol = program.solve()?;
    let cost = program.operating_cost(&sol.x);
    Ok(CmSolution { x: sol.x, cost, program })
}

/// Net injection `−p^c + p^{DG} + p^{PV} − p^{B,c} + p^{B,d} + p^{DR}` of a bus.
pub fn net_injection(case: &GridCase, prog: &DistFlowProgram, x: &[f64], t: usize, bus: usize) -> f64 {
    let idx = &prog.index;
    let d = &prog.devices[bus];
    let mut s = -case.buses[bus].p[t];
    s += d.dg.iter().map(|&u| x[idx.dg[t][u]]).sum::<f64>();
    s += d.pv.iter().map(|&u| x[idx.pv[t][u]]).sum::<f64>();
    s += d.batteries.iter().map(|&u| x[idx.discharge[t][u]] - x[idx.charge[t][u]]).sum::<f64>();
    s += d.dr.iter().map(|&u| x[idx.dr[t][u]]).sum::<f64>();
    s
}

#[cfg(test)]
mod tests {
    use super::super::case::{chain_case, Generator, GridCase};
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_load_zero_cost() {
        let mut c = chain_case(4, 3);
        for b in &mut c.buses {
            b.p.iter_mut().for_each(|v| *v = 0.0);
            b.q.iter_mut().for_each(|v| *v = 0.0);
        }
        let s = solve_cm(&c).unwrap();
        assert_abs_diff_eq!(s.cost, 0.0, epsilon = 1e-6);
        for t in 0..3 {
            assert_abs_diff_eq!(s.x[s.program.index.p0[t]], 0.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn conservation_single_line() {
        let mut c = chain_case(2, 1);
        c.buses[1].p = vec![1.0];
        c.buses[1].q = vec![0.0];
        let s = solve_cm(&c).unwrap();
        let f = s.x[s.program.index.f[0][0]];
        assert!(f >= 1.0 - 1e-8, "{f}");
    }

    #[test]
    fn residuals_are_small() {
        let c = chain_case(6, 4);
        let s = solve_cm(&c).unwrap();
        let r = s.program.program.residuals(&s.x);
        assert!(r.equality < 1e-6, "{r:?}");
        assert!(r.cone_margin >= -1e-8, "{r:?}");
    }

    /// Exact power flow on a chain by fixed-point iteration on the losses;
    /// returns the substation injection.
    fn chain_power_flow(c: &GridCase, inj: &[f64]) -> Option<f64> {
        let n = c.n_buses();
        let mut l = vec![0.0; n - 1];
        let mut v = vec![1.0; n];
        for _ in 0..200 {
            // backward sweep: flows on each line (line k feeds bus k+1)
            let mut f = vec![0.0; n - 1];
            let mut q = vec![0.0; n - 1];
            for k in (0..n - 1).rev() {
                let b = k + 1;
                let (fc, qc) = if k + 1 < n - 1 { (f[k + 1], q[k + 1]) } else { (0.0, 0.0) };
                f[k] = fc + c.buses[b].p[0] - inj[b] + c.lines[k].r * l[k];
                q[k] = qc + c.buses[b].q[0] + c.lines[k].x * l[k];
            }
            // forward sweep
            let mut nl = vec![0.0; n - 1];
            for k in 0..n - 1 {
                nl[k] = (f[k] * f[k] + q[k] * q[k]) / v[k];
                let ln = &c.lines[k];
                v[k + 1] = v[k] - 2.0 * (ln.r * f[k] + ln.x * q[k]) + (ln.r * ln.r + ln.x * ln.x) * nl[k];
            }
            let delta: f64 = nl.iter().zip(&l).map(|(a, b)| (a - b).abs()).sum();
            l = nl;
            if delta < 1e-14 {
                if v.iter().skip(1).any(|&x| x < c.v_min_sq || x > c.v_max_sq) {
                    return None;
                }
                return Some(f[0]);
            }
        }
        None
    }

    #[test]
    fn three_bus_matches_grid_search() {
        let mut c = chain_case(3, 1);
        c.price = vec![40.0];
        c.buses[1].p = vec![0.8];
        c.buses[1].q = vec![0.3];
        c.buses[2].p = vec![1.2];
        c.buses[2].q = vec![0.5];
        c.lines[0].r = 0.02;
        c.lines[1].r = 0.05;
        c.lines[1].x = 0.04;
        c.generators.push(Generator { bus: 2, p_min: 0.0, p_max: 0.6, cost: 41.0 });
        c.generators.push(Generator { bus: 1, p_min: 0.0, p_max: 0.5, cost: 40.5 });
        let s = solve_cm(&c).unwrap();

        let steps = 300;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let g2 = 0.6 * i as f64 / steps as f64;
                let g1 = 0.5 * j as f64 / steps as f64;
                if let Some(p0) = chain_power_flow(&c, &[0.0, g1, g2]) {
                    let cost = 2.0 * (40.0 * p0 + 41.0 * g2 + 40.5 * g1);
                    best = best.min(cost);
                }
            }
        }
        assert!((s.cost - best).abs() / best < 1e-3, "solver {} vs grid {}", s.cost, best);
        assert!(s.cost <= best + 1e-6);
    }
}
