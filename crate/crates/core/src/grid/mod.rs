//! Radial feeder model: topology and DER fleet, the relaxed branch-flow
//! program, the expected de-energization cost and the bundled 33-bus case.

mod case;
mod eens;
mod ieee33;
mod program;

pub use case::{
    random_feeder, Battery, BusLoad, DemandResponse, Generator, GridCase, Line, PvUnit, Substation, Topology,
};
pub use eens::{
    components, interval_unreliability, window_eens, Component, CostWeights, Drivers, EensModel,
    UnreliabilityParams, WindowTerms, PLACEHOLDER_BUS, PLACEHOLDER_LINE, PLACEHOLDER_SUBSTATION,
};
pub use ieee33::{
    allocate_pv, build_case_33bus, build_case_with_pv_buses, scale_profile, CaseInputs, PvScenario, BESS_BUSES,
    DG_BUSES, DG_COST, DR_BUSES, DR_COMPENSATION,
};
pub use program::{build_program, bus_devices, net_injection, solve_cm, BusDevices, CmSolution, DistFlowProgram, VarIndex};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Bus and line drivers of the cost-only dispatch at every snapshot of a
/// season. `load_profile` holds `days × price.len()` multipliers. Returns
/// `(bus drivers, line drivers)` as `snapshots × components` matrices; bus
/// columns skip the substation.
pub fn season_drivers(scenario: PvScenario, load_profile: &[f64], price: &[f64], pv_reference: &[f64]) -> Result<(Matrix, Matrix)> {
    let steps = price.len();
    if steps == 0 || load_profile.len() % steps != 0 {
        return Err(Error::invalid(format!(
            "load series length {} is not a whole number of {steps}-window days",
            load_profile.len()
        )));
    }
    let days: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = load_profile
        .par_chunks(steps)
        .enumerate()
        .map(|(d, day)| {
            let inputs = CaseInputs { load_profile: day.to_vec(), price: price.to_vec(), pv_reference: pv_reference.to_vec() };
            let case = build_case_33bus(scenario, &inputs)?;
            let cm = solve_cm(&case).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("day {d}: {m}")),
                Error::Infeasible(m) => Error::Infeasible(format!("day {d}: {m}")),
                other => other,
            })?;
            let model = EensModel::new(&case, &cm.program, CostWeights::default())?;
            let dr = model.drivers(&cm.x);
            let bus = dr.bus.into_iter().map(|row| row[1..].to_vec()).collect();
            Ok((bus, dr.line))
        })
        .collect::<Result<_>>()?;
    let mut bus_rows = Vec::with_capacity(load_profile.len());
    let mut line_rows = Vec::with_capacity(load_profile.len());
    for (b, l) in days {
        bus_rows.extend(b);
        line_rows.extend(l);
    }
    Ok((Matrix::from_rows(&bus_rows)?, Matrix::from_rows(&line_rows)?))
}
