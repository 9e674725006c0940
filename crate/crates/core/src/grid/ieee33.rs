//! The 33-bus Baran–Wu feeder with the DER fleet of the case study.
//!
//! Buses are numbered from 0 (substation). DER ratings, costs and current
//! limits are placeholder values chosen for a plausible operating regime;
//! the network data is the standard test feeder.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::case::{Battery, BusLoad, DemandResponse, Generator, GridCase, Line, PvUnit, Substation};
use crate::error::{Error, Result};

pub const BASE_KV: f64 = 12.66;
pub const BASE_MVA: f64 = 1.0;

/// (from, to, R Ω, X Ω, P kW at `to`, Q kvar at `to`)
const BRANCHES: [(usize, usize, f64, f64, f64, f64); 32] = [
    (0, 1, 0.0922, 0.0470, 100.0, 60.0),
    (1, 2, 0.4930, 0.2511, 90.0, 40.0),
    (2, 3, 0.3660, 0.1864, 120.0, 80.0),
    (3, 4, 0.3811, 0.1941, 60.0, 30.0),
    (4, 5, 0.8190, 0.7070, 60.0, 20.0),
    (5, 6, 0.1872, 0.6188, 200.0, 100.0),
    (6, 7, 0.7114, 0.2351, 200.0, 100.0),
    (7, 8, 1.0300, 0.7400, 60.0, 20.0),
    (8, 9, 1.0440, 0.7400, 60.0, 20.0),
    (9, 10, 0.1966, 0.0650, 45.0, 30.0),
    (10, 11, 0.3744, 0.1238, 60.0, 35.0),
    (11, 12, 1.4680, 1.1550, 60.0, 35.0),
    (12, 13, 0.5416, 0.7129, 120.0, 80.0),
    (13, 14, 0.5910, 0.5260, 60.0, 10.0),
    (14, 15, 0.7463, 0.5450, 60.0, 20.0),
    (15, 16, 1.2890, 1.7210, 60.0, 20.0),
    (16, 17, 0.7320, 0.5740, 90.0, 40.0),
    (1, 18, 0.1640, 0.1565, 90.0, 40.0),
    (18, 19, 1.5042, 1.3554, 90.0, 40.0),
    (19, 20, 0.4095, 0.4784, 90.0, 40.0),
    (20, 21, 0.7089, 0.9373, 90.0, 40.0),
    (2, 22, 0.4512, 0.3083, 90.0, 50.0),
    (22, 23, 0.8980, 0.7091, 420.0, 200.0),
    (23, 24, 0.8960, 0.7011, 420.0, 200.0),
    (5, 25, 0.2030, 0.1034, 60.0, 25.0),
    (25, 26, 0.2842, 0.1447, 60.0, 25.0),
    (26, 27, 1.0590, 0.9337, 60.0, 20.0),
    (27, 28, 0.8042, 0.7006, 120.0, 70.0),
    (28, 29, 0.5075, 0.2585, 200.0, 600.0),
    (29, 30, 0.9744, 0.9630, 150.0, 70.0),
    (30, 31, 0.3105, 0.3619, 210.0, 100.0),
    (31, 32, 0.3410, 0.5302, 60.0, 40.0),
];

pub const DG_BUSES: [usize; 9] = [15, 16, 17, 18, 21, 23, 24, 26, 30];
pub const BESS_BUSES: [usize; 4] = [17, 18, 23, 24];
pub const DR_BUSES: [usize; 3] = [2, 3, 5];

/// Placeholder DG capacities (MW), aligned with `DG_BUSES`.
const DG_P_MAX: [f64; 9] = [0.10, 0.10, 0.15, 0.15, 0.10, 0.20, 0.20, 0.15, 0.25];
/// Placeholder battery power ratings (MW), aligned with `BESS_BUSES`.
const BESS_P_MAX: [f64; 4] = [0.10, 0.20, 0.20, 0.30];
const BESS_HOURS: f64 = 4.0;
const BESS_EFFICIENCY: f64 = 0.95;
/// DG marginal cost and DR compensation, $/MWh. Both exceed the fixture
/// price ceiling, so a cost-only dispatch leaves them idle.
pub const DG_COST: f64 = 60.0;
pub const DR_COMPENSATION: f64 = 70.0;
/// Share of the bus load that demand response can curtail.
const DR_SHARE: f64 = 0.2;
const LINE_L_MAX: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PvScenario {
    Low,
    High,
}

impl PvScenario {
    /// Total PV rating as a share of peak load.
    pub fn penetration(self) -> f64 {
        match self {
            PvScenario::Low => 0.05,
            PvScenario::High => 0.5,
        }
    }

    /// Low: buses with both DG and storage; high: buses with either.
    pub fn buses(self) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            PvScenario::Low => DG_BUSES.iter().copied().filter(|b| BESS_BUSES.contains(b)).collect(),
            PvScenario::High => DG_BUSES.iter().chain(BESS_BUSES.iter()).copied().collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PvScenario::Low => "low",
            PvScenario::High => "high",
        }
    }
}

impl FromStr for PvScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(PvScenario::Low),
            "high" => Ok(PvScenario::High),
            other => Err(Error::invalid(format!("unknown PV scenario '{other}' (expected low or high)"))),
        }
    }
}

/// Series that drive a one-day case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseInputs {
    /// Multiplier on the nominal bus loads per window (peak ≈ 1).
    pub load_profile: Vec<f64>,
    /// $/MWh per window.
    pub price: Vec<f64>,
    /// Reference PV output per window (any unit; only the shape matters).
    pub pv_reference: Vec<f64>,
}

impl CaseInputs {
    /// One representative day from the bundled fixtures.
    pub fn fixture_day(steps: usize) -> Self {
        use crate::dataset::fixtures;
        Self {
            load_profile: fixtures::system_load_series(1, steps, None, 0),
            price: fixtures::price_series(steps),
            pv_reference: fixtures::pv_reference_profile(steps),
        }
    }
}

/// Splits `total` across buses in proportion to their existing capacity.
pub fn allocate_pv(capacities: &[f64], total: f64) -> Result<Vec<f64>> {
    if capacities.is_empty() {
        return Err(Error::invalid("no PV buses selected"));
    }
    let sum: f64 = capacities.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::invalid("PV buses carry no DG or storage capacity"));
    }
    Ok(capacities.iter().map(|c| c / sum * total).collect())
}

/// Rescales a reference profile so its peak equals `rating`.
pub fn scale_profile(reference: &[f64], rating: f64) -> Result<Vec<f64>> {
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::invalid("PV reference profile never produces power"));
    }
    Ok(reference.iter().map(|v| v * rating / peak).collect())
}

fn z_base() -> f64 {
    BASE_KV * BASE_KV / BASE_MVA
}

/// Builds the 33-bus case for one day under a PV scenario.
pub fn build_case_33bus(scenario: PvScenario, inputs: &CaseInputs) -> Result<GridCase> {
    build_case_with_pv_buses(&scenario.buses(), scenario.penetration(), inputs)
}

/// As [`build_case_33bus`] but with an explicit PV bus set and penetration.
pub fn build_case_with_pv_buses(pv_buses: &[usize], penetration: f64, inputs: &CaseInputs) -> Result<GridCase> {
    let t = inputs.price.len();
    if t == 0 || inputs.load_profile.len() != t || inputs.pv_reference.len() != t {
        return Err(Error::invalid(format!(
            "load ({}), price ({t}) and PV ({}) series must share one nonzero length",
            inputs.load_profile.len(),
            inputs.pv_reference.len()
        )));
    }
    if pv_buses.is_empty() {
        return Err(Error::invalid("PV scenario selects no buses"));
    }
    let zb = z_base();
    let kw = 1e-3 / BASE_MVA;
    let mut buses = vec![BusLoad { p: vec![0.0; t], q: vec![0.0; t], g: 0.0 }; BRANCHES.len() + 1];
    let mut lines = Vec::with_capacity(BRANCHES.len());
    for &(from, to, r, x, p, q) in &BRANCHES {
        lines.push(Line { from, to, r: r / zb, x: x / zb, l_max: LINE_L_MAX });
        buses[to].p = inputs.load_profile.iter().map(|m| m * p * kw).collect();
        buses[to].q = inputs.load_profile.iter().map(|m| m * q * kw).collect();
    }

    let generators: Vec<Generator> = DG_BUSES
        .iter()
        .zip(DG_P_MAX)
        .map(|(&bus, p_max)| Generator { bus, p_min: 0.0, p_max, cost: DG_COST })
        .collect();
    let batteries: Vec<Battery> = BESS_BUSES
        .iter()
        .zip(BESS_P_MAX)
        .map(|(&bus, p)| {
            let e = p * BESS_HOURS;
            Battery {
                bus,
                charge_max: p,
                discharge_max: p,
                soc_min: 0.1 * e,
                soc_max: e,
                soc_init: 0.5 * e,
                eta_charge: BESS_EFFICIENCY,
                eta_discharge: BESS_EFFICIENCY,
            }
        })
        .collect();
    let demand_response = DR_BUSES
        .iter()
        .map(|&bus| DemandResponse {
            bus,
            cap: buses[bus].p.iter().map(|p| DR_SHARE * p).collect(),
            compensation: DR_COMPENSATION,
        })
        .collect();

    let peak = (0..t).map(|k| buses.iter().map(|b| b.p[k]).sum::<f64>()).fold(0.0, f64::max);
    let caps: Vec<f64> = pv_buses
        .iter()
        .map(|&b| {
            let dg = generators.iter().filter(|g| g.bus == b).map(|g| g.p_max).fold(0.0, f64::max);
            let st = batteries.iter().filter(|s| s.bus == b).map(|s| s.power_max()).fold(0.0, f64::max);
            dg.max(st)
        })
        .collect();
    let ratings = allocate_pv(&caps, penetration * peak)?;
    let pv = pv_buses
        .iter()
        .zip(ratings)
        .map(|(&bus, rating)| Ok(PvUnit { bus, rating, profile: scale_profile(&inputs.pv_reference, rating)? }))
        .collect::<Result<Vec<_>>>()?;

    let case = GridCase {
        name: "ieee33".into(),
        base_mva: BASE_MVA,
        dt_hours: 2.0,
        price: inputs.price.clone(),
        substation: Substation { p_min: 0.0, p_max: 6.0, q_min: -3.0, q_max: 5.0, v_sq: 1.0 },
        v_min_sq: 0.9 * 0.9,
        v_max_sq: 1.1 * 1.1,
        buses,
        lines,
        generators,
        pv,
        batteries,
        demand_response,
    };
    case.validate()?;
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nominal_totals() {
        let p: f64 = BRANCHES.iter().map(|b| b.4).sum();
        let q: f64 = BRANCHES.iter().map(|b| b.5).sum();
        assert_eq!((p, q), (3715.0, 2300.0));
    }

    #[test]
    fn fifty_percent_rule() {
        // peak 1.0 MW, high scenario → 0.5 MW
        let total = PvScenario::High.penetration() * 1.0;
        assert_relative_eq!(total, 0.5);
    }

    #[test]
    fn proportional_allocation() {
        let r = allocate_pv(&[100.0, 300.0], 40.0).unwrap();
        assert_relative_eq!(r[0], 10.0);
        assert_relative_eq!(r[1], 30.0);
        assert!(allocate_pv(&[], 1.0).is_err());
    }

    #[test]
    fn profile_scaling() {
        let reference = [0.0, 1.0, 3.33, 2.0];
        let s = scale_profile(&reference, 30.0).unwrap();
        for (a, b) in s.iter().zip(reference) {
            assert_relative_eq!(*a, b * 9.009009009009009, max_relative = 1e-12);
        }
    }

    #[test]
    fn scenario_bus_sets() {
        assert_eq!(PvScenario::Low.buses(), vec![17, 18, 23, 24]);
        assert_eq!(PvScenario::High.buses(), vec![15, 16, 17, 18, 21, 23, 24, 26, 30]);
    }

    #[test]
    fn bus_24_path() {
        let c = build_case_33bus(PvScenario::Low, &CaseInputs::fixture_day(12)).unwrap();
        let path: Vec<usize> = c.path_to_root(24).unwrap().iter().map(|&k| c.lines[k].to).collect();
        assert_eq!(path, vec![24, 23, 22, 2, 1]);
    }

    #[test]
    fn pv_total_matches_penetration() {
        let inputs = CaseInputs::fixture_day(12);
        for s in [PvScenario::Low, PvScenario::High] {
            let c = build_case_33bus(s, &inputs).unwrap();
            let peak = c.total_load().into_iter().fold(0.0, f64::max);
            let total: f64 = c.pv.iter().map(|p| p.rating).sum();
            assert_relative_eq!(total, s.penetration() * peak, max_relative = 1e-12);
            for p in &c.pv {
                let max = p.profile.iter().cloned().fold(0.0, f64::max);
                assert_relative_eq!(max, p.rating, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn path_length_identity() {
        // Σ over buses of path length = Σ over lines of subtree size.
        let c = build_case_33bus(PvScenario::High, &CaseInputs::fixture_day(12)).unwrap();
        let topo = c.topology().unwrap();
        let lhs: usize = topo.paths.iter().map(|p| p.len()).sum();
        fn size(c: &GridCase, children: &[Vec<usize>], bus: usize) -> usize {
            1 + children[bus].iter().map(|&k| size(c, children, c.lines[k].to)).sum::<usize>()
        }
        let subtree: Vec<usize> = c.lines.iter().map(|l| size(&c, &topo.children, l.to)).collect();
        assert_eq!(lhs, subtree.iter().sum::<usize>());
        assert_eq!(subtree[0], 32);
    }
}
