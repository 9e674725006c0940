use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Branch from `from` (parent) to `to` (child); impedances in per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Upper bound on the squared current magnitude, per unit.
    pub l_max: f64,
}

/// Fixed consumption per window and shunt conductance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusLoad {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(default)]
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// Marginal cost, $/MWh.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvUnit {
    pub bus: usize,
    pub rating: f64,
    /// Available output per window (curtailable down to zero).
    pub profile: Vec<f64>,
}

/// Energies in per unit · hours, powers in per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub bus: usize,
    pub charge_max: f64,
    pub discharge_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
}

impl Battery {
    pub fn power_max(&self) -> f64 {
        self.charge_max.max(self.discharge_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandResponse {
    pub bus: usize,
    /// Curtailable load per window.
    pub cap: Vec<f64>,
    /// Compensation paid per curtailed MWh.
    pub compensation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Squared voltage magnitude held at the root.
    pub v_sq: f64,
}

/// A radial feeder with its DER fleet over a horizon of equal windows.
/// Bus 0 is the substation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    pub dt_hours: f64,
    /// Energy price per window, $/MWh.
    pub price: Vec<f64>,
    pub substation: Substation,
    pub v_min_sq: f64,
    pub v_max_sq: f64,
    pub buses: Vec<BusLoad>,
    pub lines: Vec<Line>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub pv: Vec<PvUnit>,
    #[serde(default)]
    pub batteries: Vec<Battery>,
    #[serde(default)]
    pub demand_response: Vec<DemandResponse>,
}

/// Parent/child structure of a validated case.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// Line feeding each bus (`None` for the root).
    pub feeder: Vec<Option<usize>>,
    /// Lines leaving each bus.
    pub children: Vec<Vec<usize>>,
    /// Root paths: lines from each bus up to the substation.
    pub paths: Vec<Vec<usize>>,
}

impl GridCase {
    pub fn horizon(&self) -> usize {
        self.price.len()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let case: Self = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the tree structure, impedances, series lengths and DER bounds.
    pub fn validate(&self) -> Result<Topology> {
        let t = self.horizon();
        if t == 0 {
            return Err(Error::invalid("empty horizon"));
        }
        if !(self.dt_hours > 0.0) || !(self.base_mva > 0.0) {
            return Err(Error::invalid("window length and base power must be positive"));
        }
        let n = self.n_buses();
        if n < 2 {
            return Err(Error::invalid("a feeder needs at least one bus beyond the substation"));
        }
        if self.lines.len() != n - 1 {
            return Err(Error::invalid(format!("{} lines for {n} buses: not a tree", self.lines.len())));
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.p.len() != t || b.q.len() != t {
                return Err(Error::invalid(format!("bus {i} load series length differs from horizon {t}")));
            }
        }
        for (k, l) in self.lines.iter().enumerate() {
            if l.from >= n || l.to >= n || l.from == l.to {
                return Err(Error::invalid(format!("line {k} has bad endpoints {}→{}", l.from, l.to)));
            }
            if !(l.r > 0.0) || !(l.x > 0.0) {
                return Err(Error::invalid(format!("line {k} needs positive R and X")));
            }
            if !(l.l_max > 0.0) {
                return Err(Error::invalid(format!("line {k} needs a positive current limit")));
            }
        }
        let s = &self.substation;
        if s.p_min > s.p_max || s.q_min > s.q_max || !(s.v_sq > 0.0) {
            return Err(Error::Infeasible("substation limits are inconsistent".into()));
        }
        if !(self.v_min_sq > 0.0) || self.v_min_sq > self.v_max_sq {
            return Err(Error::Infeasible("voltage limits are inconsistent".into()));
        }
        let check_bus = |what: &str, bus: usize| {
            if bus == 0 || bus >= n {
                Err(Error::invalid(format!("{what} placed at invalid bus {bus}")))
            } else {
                Ok(())
            }
        };
        for g in &self.generators {
            check_bus("generator", g.bus)?;
            if g.p_min < 0.0 || g.p_min > g.p_max {
                return Err(Error::Infeasible(format!("generator at bus {} has bounds [{}, {}]", g.bus, g.p_min, g.p_max)));
            }
        }
        for p in &self.pv {
            check_bus("PV unit", p.bus)?;
            if p.profile.len() != t || p.profile.iter().any(|v| *v < 0.0) {
                return Err(Error::invalid(format!("PV profile at bus {} must be {t} non-negative values", p.bus)));
            }
        }
        for b in &self.batteries {
            check_bus("battery", b.bus)?;
            if !(0.0 <= b.soc_min && b.soc_min <= b.soc_max) {
                return Err(Error::Infeasible(format!(
                    "battery at bus {} needs 0 ≤ SOC_min ≤ SOC_max (got {}, {})",
                    b.bus, b.soc_min, b.soc_max
                )));
            }
            if b.soc_init < b.soc_min || b.soc_init > b.soc_max {
                return Err(Error::Infeasible(format!("battery at bus {} starts outside its SOC range", b.bus)));
            }
            let eff_ok = |e: f64| e > 0.0 && e <= 1.0;
            if !eff_ok(b.eta_charge) || !eff_ok(b.eta_discharge) || b.charge_max < 0.0 || b.discharge_max < 0.0 {
                return Err(Error::invalid(format!("battery at bus {} has bad efficiency or power limits", b.bus)));
            }
        }
        for d in &self.demand_response {
            check_bus("demand response", d.bus)?;
            if d.cap.len() != t || d.cap.iter().any(|v| *v < 0.0) {
                return Err(Error::invalid(format!("DR cap at bus {} must be {t} non-negative values", d.bus)));
            }
        }
        self.topology()
    }

    /// Builds parent/child maps; fails unless the lines form a tree rooted at bus 0.
    pub fn topology(&self) -> Result<Topology> {
        let n = self.n_buses();
        let mut feeder = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (k, l) in self.lines.iter().enumerate() {
            if l.to == 0 {
                return Err(Error::invalid(format!("line {k} feeds the substation")));
            }
            if feeder[l.to].replace(k).is_some() {
                return Err(Error::invalid(format!("bus {} has two feeding lines", l.to)));
            }
            children[l.from].push(k);
        }
        let mut paths = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0usize];
        while let Some(b) = stack.pop() {
            for &k in &children[b] {
                let c = self.lines[k].to;
                let mut p = Vec::with_capacity(paths[b].len() + 1);
                p.push(k);
                p.extend_from_slice(&paths[b]);
                paths[c] = p;
                seen[c] = true;
                stack.push(c);
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("bus {b} is not connected to the substation")));
        }
        Ok(Topology { feeder, children, paths })
    }

    /// Lines on the unique path from `bus` to the substation, nearest first.
    pub fn path_to_root(&self, bus: usize) -> Result<Vec<usize>> {
        if bus >= self.n_buses() {
            return Err(Error::invalid(format!("bus {bus} does not exist")));
        }
        Ok(self.topology()?.paths[bus].clone())
    }

    /// Total consumption per window.
    pub fn total_load(&self) -> Vec<f64> {
        (0..self.horizon()).map(|t| self.buses.iter().map(|b| b.p[t]).sum()).collect()
    }
}

/// Seeded random radial feeder with `n_buses` buses (bus 0 is the
/// substation) and one unit of every DER type on random non-root buses.
pub fn random_feeder(n_buses: usize, horizon: usize, seed: u64) -> Result<GridCase> {
    use rand::Rng;
    if n_buses < 2 || horizon == 0 {
        return Err(Error::invalid("a feeder needs at least two buses and one window"));
    }
    let mut rng = crate::seed::stage_rng(seed, "random-feeder");
    let mut series = |lo: f64, hi: f64| -> Vec<f64> { (0..horizon).map(|_| rng.random_range(lo..hi)).collect() };
    let price = series(20.0, 50.0);
    let buses = (0..n_buses)
        .map(|i| {
            if i == 0 {
                BusLoad { p: vec![0.0; horizon], q: vec![0.0; horizon], g: 0.0 }
            } else {
                let p = series(0.02, 0.12);
                let q = p.iter().map(|v| 0.5 * v).collect();
                BusLoad { p, q, g: 0.0 }
            }
        })
        .collect();
    let mut rng = crate::seed::stage_rng(seed, "random-feeder-topology");
    let lines = (1..n_buses)
        .map(|i| Line {
            from: rng.random_range(0..i),
            to: i,
            r: rng.random_range(0.005..0.02),
            x: rng.random_range(0.004..0.016),
            l_max: 10.0,
        })
        .collect();
    let mut bus = || rng.random_range(1..n_buses);
    let (g, pv, b, dr) = (bus(), bus(), bus(), bus());
    let profile = (0..horizon).map(|t| 0.5 + 0.5 * (t as f64 / horizon as f64 * std::f64::consts::PI).sin()).collect();
    let case = GridCase {
        name: format!("random{n_buses}-{seed}"),
        base_mva: 1.0,
        dt_hours: 2.0,
        price,
        substation: Substation { p_min: -10.0, p_max: 10.0, q_min: -10.0, q_max: 10.0, v_sq: 1.0 },
        v_min_sq: 0.81,
        v_max_sq: 1.21,
        buses,
        lines,
        generators: vec![Generator { bus: g, p_min: 0.0, p_max: 0.3, cost: 50.0 }],
        pv: vec![PvUnit { bus: pv, rating: 0.2, profile }],
        batteries: vec![Battery {
            bus: b,
            charge_max: 0.1,
            discharge_max: 0.1,
            soc_min: 0.0,
            soc_max: 0.4,
            soc_init: 0.2,
            eta_charge: 0.9,
            eta_discharge: 0.9,
        }],
        demand_response: vec![DemandResponse { bus: dr, cap: vec![0.02; horizon], compensation: 60.0 }],
    };
    case.validate()?;
    Ok(case)
}

#[cfg(test)]
pub(crate) fn chain_case(n: usize, horizon: usize) -> GridCase {
    // 0 - 1 - ... - (n-1), small loads, no DERs.
    GridCase {
        name: format!("chain{n}"),
        base_mva: 1.0,
        dt_hours: 2.0,
        price: vec![30.0; horizon],
        substation: Substation { p_min: -10.0, p_max: 10.0, q_min: -10.0, q_max: 10.0, v_sq: 1.0 },
        v_min_sq: 0.81,
        v_max_sq: 1.21,
        buses: (0..n)
            .map(|i| {
                let p = if i == 0 { 0.0 } else { 0.05 + 0.01 * i as f64 };
                BusLoad { p: vec![p; horizon], q: vec![0.5 * p; horizon], g: 0.0 }
            })
            .collect(),
        lines: (1..n).map(|i| Line { from: i - 1, to: i, r: 0.01, x: 0.008, l_max: 10.0 }).collect(),
        generators: vec![],
        pv: vec![],
        batteries: vec![],
        demand_response: vec![],
    }
}
