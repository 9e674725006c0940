//! Sequential convex programming for the cost-plus-reliability dispatch.
//!
//! Each iteration replaces the expected de-energization cost by its
//! first-order expansion around the previous iterate and solves the
//! resulting cone program. When an iterate leaves the driver range a
//! logistic curve was fitted on, the curves are refitted against the
//! probability oracle (typically a calibrated ensemble).

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate, CalibrationParams};
use crate::dataset::ComponentKind;
use crate::ensemble::ModelDocument;
use crate::error::{Error, Result};
use crate::grid::{build_program, components, Component, CostWeights, DistFlowProgram, EensModel, GridCase, UnreliabilityParams};
use crate::logistic::{fit_univariate, LogisticCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScpConfig {
    pub k_max: usize,
    /// Total absolute change of the decision vector.
    pub eps_variable: f64,
    /// |true − linearized| objective.
    pub eps_lin: f64,
    /// |true − linearized| / |true|.
    pub eps_ratio: f64,
    pub n_reg: usize,
    pub seed: u64,
    /// Refit the logistic curves when an iterate leaves their range.
    pub refit: bool,
    /// Move halfway toward each subproblem solution instead of all the way.
    pub damping: bool,
}

impl Default for ScpConfig {
    fn default() -> Self {
        Self { k_max: 40, eps_variable: 1e-3, eps_lin: 1e-2, eps_ratio: 1e-3, n_reg: 200, seed: 0, refit: true, damping: false }
    }
}

impl ScpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        if !(self.eps_variable > 0.0 && self.eps_lin > 0.0 && self.eps_ratio > 0.0) {
            return Err(Error::invalid("convergence tolerances must be positive"));
        }
        if self.n_reg < 10 {
            return Err(Error::invalid("n_reg must be at least 10"));
        }
        Ok(())
    }
}

/// Driver interval a curve is fitted on: the current iterate's extremes
/// widened by two standard deviations of the accumulated history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRange {
    pub lower: f64,
    pub upper: f64,
}

impl SamplingRange {
    pub fn new(current: &[f64], history: &[f64]) -> Result<Self> {
        if current.is_empty() || history.is_empty() {
            return Err(Error::invalid("sampling range needs a nonempty history"));
        }
        let n = history.len() as f64;
        let mean = history.iter().sum::<f64>() / n;
        let sd = (history.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let lo = current.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = current.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { lower: lo - 2.0 * sd, upper: hi + 2.0 * sd })
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-9 * (1.0 + x.abs());
        x >= self.lower - slack && x <= self.upper + slack
    }
}

/// Source of failure probabilities for a component at a window and driver.
pub trait ProbabilityOracle: Sync {
    fn prob(&self, component: Component, t: usize, driver: f64) -> f64;
}

/// Oracle that evaluates a fixed table of logistic curves.
#[derive(Debug, Clone)]
pub struct CurveOracle(pub UnreliabilityParams);

impl ProbabilityOracle for CurveOracle {
    fn prob(&self, component: Component, _t: usize, driver: f64) -> f64 {
        self.0.curve(component).prob(driver)
    }
}

/// Calibrated ensemble probabilities with the weather of one day held fixed.
pub struct EnsembleOracle<'a> {
    pub bus: &'a ModelDocument,
    pub line: &'a ModelDocument,
    pub bus_calibration: CalibrationParams,
    pub line_calibration: CalibrationParams,
    /// Raw weather row per window.
    pub weather: Vec<Vec<f64>>,
}

impl ProbabilityOracle for EnsembleOracle<'_> {
    fn prob(&self, component: Component, t: usize, driver: f64) -> f64 {
        let w = &self.weather[t % self.weather.len()];
        match component.model_kind() {
            ComponentKind::Line => calibrate(self.line.raw_failure_prob(w, driver), &self.line_calibration),
            ComponentKind::Bus => calibrate(self.bus.raw_failure_prob(w, driver), &self.bus_calibration),
        }
    }
}

/// Fits one component's curve to oracle probabilities at `n_reg` uniform
/// drivers from `range`; draw j uses window `j mod horizon`.
pub fn refit_component(
    oracle: &dyn ProbabilityOracle,
    component: Component,
    range: SamplingRange,
    horizon: usize,
    n_reg: usize,
    seed: u64,
) -> Result<LogisticCurve> {
    if horizon == 0 || n_reg == 0 {
        return Err(Error::invalid("refit needs a horizon and samples"));
    }
    let mut rng = crate::seed::stage_rng(seed, &format!("scp-refit-{}", component.label()));
    let xs: Vec<f64> = (0..n_reg)
        .map(|_| if range.upper > range.lower { rng.random_range(range.lower..=range.upper) } else { range.lower })
        .collect();
    let ys: Vec<f64> = xs.iter().enumerate().map(|(j, &x)| oracle.prob(component, j % horizon, x)).collect();
    let (a, b) = fit_univariate(&xs, &ys)?;
    LogisticCurve::new((-a).exp(), b)
        .map_err(|e| Error::numerical(format!("refit of {} gave an unusable curve: {e}", component.label())))
}

/// First-order model `value + grad·(x − x0)` of the expected cost.
#[derive(Debug, Clone)]
pub struct AffineEens {
    pub x0: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl AffineEens {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.value + self.gradient.iter().zip(x.iter().zip(&self.x0)).map(|(g, (a, b))| g * (a - b)).sum::<f64>()
    }

    /// Constant term once the model is written as `grad·x + c`.
    pub fn offset(&self) -> f64 {
        self.value - self.gradient.iter().zip(&self.x0).map(|(g, x)| g * x).sum::<f64>()
    }
}

pub fn linearize_eens(model: &EensModel<'_>, params: &UnreliabilityParams, x0: &[f64]) -> AffineEens {
    let (value, gradient) = model.value_and_gradient(x0, params);
    AffineEens { x0: x0.to_vec(), value, gradient }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    VariableDifference,
    LinearizationDeviation,
    LinearizationRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub variable_diff: f64,
    pub lin_dev: f64,
    pub lin_ratio_dev: f64,
    /// First satisfied test, if any.
    pub met: Option<Criterion>,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.met.is_some()
    }
}

pub fn convergence_checks(prev: &[f64], x: &[f64], obj_true: f64, obj_appx: f64, cfg: &ScpConfig) -> ConvergenceReport {
    let variable_diff: f64 = prev.iter().zip(x).map(|(a, b)| (a - b).abs()).sum();
    let lin_dev = (obj_true - obj_appx).abs();
    let lin_ratio_dev = if obj_true != 0.0 { lin_dev / obj_true.abs() } else if lin_dev == 0.0 { 0.0 } else { f64::INFINITY };
    let met = if variable_diff <= cfg.eps_variable {
        Some(Criterion::VariableDifference)
    } else if lin_dev <= cfg.eps_lin {
        Some(Criterion::LinearizationDeviation)
    } else if lin_ratio_dev <= cfg.eps_ratio {
        Some(Criterion::LinearizationRatio)
    } else {
        None
    };
    ConvergenceReport { variable_diff, lin_dev, lin_ratio_dev, met }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Operating cost of the iterate.
    pub obj_cm: f64,
    /// Operating cost plus exact expected cost under the curves in force.
    pub obj_mcrm: f64,
    /// Operating cost plus linearized expected cost.
    pub obj_appx: f64,
    pub eens: f64,
    pub eens_appx: f64,
    pub best_seen: f64,
    pub refit: bool,
    pub convergence: Option<ConvergenceReport>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScpTrace {
    pub rows: Vec<TraceRow>,
    /// Decision vector per row.
    pub iterates: Vec<Vec<f64>>,
    /// Curves in force when each row was evaluated.
    pub params: Vec<UnreliabilityParams>,
}

impl ScpTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "obj_cm",
            "obj_mcrm",
            "obj_mcrm_appx",
            "eens",
            "eens_appx",
            "best_seen",
            "refit",
            "variable_diff",
            "lin_dev",
            "lin_ratio_dev",
        ])?;
        for r in &self.rows {
            let (vd, ld, lr) = r
                .convergence
                .map(|c| (c.variable_diff.to_string(), c.lin_dev.to_string(), c.lin_ratio_dev.to_string()))
                .unwrap_or_default();
            w.write_record([
                r.iteration.to_string(),
                r.obj_cm.to_string(),
                r.obj_mcrm.to_string(),
                r.obj_appx.to_string(),
                r.eens.to_string(),
                r.eens_appx.to_string(),
                r.best_seen.to_string(),
                r.refit.to_string(),
                vd,
                ld,
                lr,
            ])?;
        }
        w.flush().map_err(|e| Error::io("trace.csv", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged(Criterion),
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct ScpOutcome {
    pub program: DistFlowProgram,
    /// Accepted decision vector.
    pub x: Vec<f64>,
    /// Its operating cost plus expected cost under the final curves.
    pub objective: f64,
    pub accepted_iteration: usize,
    pub cm_x: Vec<f64>,
    pub cm_cost: f64,
    /// Cost-only dispatch evaluated with the same objective as `objective`.
    pub cm_objective: f64,
    pub params: UnreliabilityParams,
    pub trace: ScpTrace,
    pub stop: StopReason,
}

impl ScpOutcome {
    /// Relative objective reduction against the cost-only dispatch.
    pub fn reduction(&self) -> f64 {
        (self.cm_objective - self.objective) / self.cm_objective.abs()
    }
}

fn refit_all(
    oracle: &dyn ProbabilityOracle,
    comps: &[Component],
    current: &[Vec<f64>],
    history: &[Vec<f64>],
    horizon: usize,
    cfg: &ScpConfig,
    event: u64,
) -> Result<(Vec<LogisticCurve>, Vec<SamplingRange>)> {
    let seed = crate::seed::derive_indexed(cfg.seed, "scp-refit", event);
    let fitted: Vec<(LogisticCurve, SamplingRange)> = (0..comps.len())
        .into_par_iter()
        .map(|i| {
            let range = SamplingRange::new(&current[i], &history[i])?;
            Ok((refit_component(oracle, comps[i], range, horizon, cfg.n_reg, seed)?, range))
        })
        .collect::<Result<_>>()?;
    Ok(fitted.into_iter().unzip())
}

fn component_drivers(model: &EensModel<'_>, comps: &[Component], x: &[f64]) -> Vec<Vec<f64>> {
    let d = model.drivers(x);
    let nt = model.case.horizon();
    comps.iter().map(|&c| (0..nt).map(|t| d.get(c, t)).collect()).collect()
}

/// Runs the loop from the cost-only dispatch. With an oracle and
/// `cfg.refit`, curves are fitted on the cost-only drivers first and refitted
/// whenever any component's driver leaves its range.
pub fn solve_mcrm(
    case: &GridCase,
    weights: CostWeights,
    initial: &UnreliabilityParams,
    oracle: Option<&dyn ProbabilityOracle>,
    cfg: &ScpConfig,
) -> Result<ScpOutcome> {
    cfg.validate()?;
    initial.check(case)?;
    let program = build_program(case)?;
    let cm = program.solve().map_err(|e| with_iteration(e, 0))?;
    let model = EensModel::new(case, &program, weights)?;
    let comps = components(case);
    let nt = case.horizon();
    let mut params = initial.clone();
    let mut trace = ScpTrace::default();

    let cm_x = cm.x.clone();
    let cm_cost = program.operating_cost(&cm_x);
    let mut current = component_drivers(&model, &comps, &cm_x);
    let mut history = current.clone();
    let mut ranges = None;
    let mut event = 0u64;
    let refitting = cfg.refit && oracle.is_some();
    if let (true, Some(o)) = (refitting, oracle) {
        let (curves, r) = refit_all(o, &comps, &current, &history, nt, cfg, event)?;
        event += 1;
        for (c, curve) in comps.iter().zip(curves) {
            params.set(*c, curve);
        }
        ranges = Some(r);
    }
    let eens0 = model.value(&cm_x, &params);
    let mut best = cm_cost + eens0;
    trace.rows.push(TraceRow {
        iteration: 0,
        obj_cm: cm_cost,
        obj_mcrm: cm_cost + eens0,
        obj_appx: cm_cost,
        eens: eens0,
        eens_appx: 0.0,
        best_seen: best,
        refit: refitting,
        convergence: None,
    });
    trace.iterates.push(cm_x.clone());
    trace.params.push(params.clone());

    let mut prev = cm_x.clone();
    let mut stop = StopReason::MaxIterations;
    for k in 1..=cfg.k_max {
        let lin = linearize_eens(&model, &params, &prev);
        let sub = program.with_extra_objective(&lin.gradient, lin.offset());
        let sol = sub.solve().map_err(|e| with_iteration(e, k))?;
        let x: Vec<f64> = if cfg.damping {
            prev.iter().zip(&sol.x).map(|(a, b)| a + 0.5 * (b - a)).collect()
        } else {
            sol.x
        };
        let cost = program.operating_cost(&x);
        let eens_appx = lin.eval(&x);
        let eens = model.value(&x, &params);
        let (obj_mcrm, obj_appx) = (cost + eens, cost + eens_appx);
        if !obj_mcrm.is_finite() || !obj_appx.is_finite() {
            return Err(Error::numerical(format!("iteration {k}: objective is not finite")));
        }
        let conv = convergence_checks(&prev, &x, obj_mcrm, obj_appx, cfg);
        best = best.min(obj_mcrm);
        current = component_drivers(&model, &comps, &x);
        for (h, c) in history.iter_mut().zip(&current) {
            h.extend_from_slice(c);
        }
        trace.rows.push(TraceRow {
            iteration: k,
            obj_cm: cost,
            obj_mcrm,
            obj_appx,
            eens,
            eens_appx,
            best_seen: best,
            refit: false,
            convergence: Some(conv),
        });
        trace.iterates.push(x.clone());
        trace.params.push(params.clone());
        if let Some(c) = conv.met {
            stop = StopReason::Converged(c);
            break;
        }
        if let (Some(o), Some(r)) = (oracle.filter(|_| refitting), ranges.as_ref()) {
            let outside = current.iter().zip(r).any(|(vals, range)| vals.iter().any(|&v| !range.contains(v)));
            if outside {
                let (curves, nr) = refit_all(o, &comps, &current, &history, nt, cfg, event)?;
                event += 1;
                for (c, curve) in comps.iter().zip(curves) {
                    params.set(*c, curve);
                }
                ranges = Some(nr);
                trace.rows.last_mut().expect("row pushed above").refit = true;
            }
        }
        prev = x;
    }

    // Accept the best iterate under the final curves; the cost-only dispatch
    // is a candidate, so the result never does worse than it.
    let scored: Vec<f64> =
        trace.iterates.iter().map(|x| program.operating_cost(x) + model.value(x, &params)).collect();
    let (accepted_iteration, objective) = scored
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let cm_objective = scored[0];
    let x = trace.iterates[accepted_iteration].clone();
    Ok(ScpOutcome { program, x, objective, accepted_iteration, cm_x, cm_cost, cm_objective, params, trace, stop })
}

fn with_iteration(e: Error, k: usize) -> Error {
    match e {
        Error::Infeasible(m) => Error::Infeasible(format!("subproblem at iteration {k}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("subproblem at iteration {k}: {m}")),
        other => other,
    }
}

/// Summed DG and DR output over the horizon.
pub fn dg_dr_total(program: &DistFlowProgram, x: &[f64]) -> (f64, f64) {
    let idx = &program.index;
    let dg = idx.dg.iter().flatten().map(|&v| x[v]).sum();
    let dr = idx.dr.iter().flatten().map(|&v| x[v]).sum();
    (dg, dr)
}

/// Per-device, per-window setpoints and utilization of the power available
/// in that window, one block per labeled solution.
pub fn write_dispatch_csv<W: Write>(
    case: &GridCase,
    program: &DistFlowProgram,
    solutions: &[(&str, &[f64])],
    out: W,
) -> Result<()> {
    let idx = &program.index;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "device", "unit", "bus", "t", "setpoint_mw", "limit_mw", "utilization_pct"])?;
    for &(model, x) in solutions {
        if x.len() != idx.n_vars {
            return Err(Error::invalid(format!("{model}: {} values for {} variables", x.len(), idx.n_vars)));
        }
        let mut row = |device: &str, unit: usize, bus: usize, t: usize, value: f64, limit: f64| -> Result<()> {
            let util = if limit > 0.0 { 100.0 * value / limit } else { 0.0 };
            w.write_record([
                model.to_string(),
                device.to_string(),
                unit.to_string(),
                bus.to_string(),
                t.to_string(),
                (value * case.base_mva).to_string(),
                (limit * case.base_mva).to_string(),
                util.to_string(),
            ])?;
            Ok(())
        };
        for t in 0..case.horizon() {
            for (u, g) in case.generators.iter().enumerate() {
                row("DG", u, g.bus, t, x[idx.dg[t][u]], g.p_max)?;
            }
            for (u, p) in case.pv.iter().enumerate() {
                row("PV", u, p.bus, t, x[idx.pv[t][u]], p.profile[t])?;
            }
            for (u, b) in case.batteries.iter().enumerate() {
                row("BESS_C", u, b.bus, t, x[idx.charge[t][u]], b.charge_max)?;
                row("BESS_D", u, b.bus, t, x[idx.discharge[t][u]], b.discharge_max)?;
            }
            for (u, d) in case.demand_response.iter().enumerate() {
                row("DR", u, d.bus, t, x[idx.dr[t][u]], d.cap[t])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("dispatch.csv", e))?;
    Ok(())
}
