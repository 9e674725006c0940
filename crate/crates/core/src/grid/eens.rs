use serde::{Deserialize, Serialize};

use super::case::GridCase;
use super::program::{net_injection, DistFlowProgram};
use crate::dataset::ComponentKind;
use crate::error::{Error, Result};
use crate::logistic::LogisticCurve;

/// A component whose failure is modeled: the substation, a bus (≥ 1) or a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Substation,
    Bus(usize),
    Line(usize),
}

impl Component {
    /// Which trained model scores this component; the substation uses the bus model.
    pub fn model_kind(self) -> ComponentKind {
        match self {
            Component::Line(_) => ComponentKind::Line,
            _ => ComponentKind::Bus,
        }
    }

    pub fn label(self) -> String {
        match self {
            Component::Substation => "substation".into(),
            Component::Bus(i) => format!("bus{i}"),
            Component::Line(k) => format!("line{k}"),
        }
    }
}

/// All modeled components of a case, in a fixed order.
pub fn components(case: &GridCase) -> Vec<Component> {
    std::iter::once(Component::Substation)
        .chain((1..case.n_buses()).map(Component::Bus))
        .chain((0..case.n_lines()).map(Component::Line))
        .collect()
}

/// `Pr = 1/(1 + λ e^{−βx})`.
pub fn interval_unreliability(curve: &LogisticCurve, driver: f64) -> f64 {
    curve.prob(driver)
}

/// Logistic curve per component. The driver is `|p_0|` for the substation,
/// the net-demand magnitude for a bus and the squared current for a line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnreliabilityParams {
    pub substation: LogisticCurve,
    /// Indexed by `bus − 1`.
    pub buses: Vec<LogisticCurve>,
    pub lines: Vec<LogisticCurve>,
}

/// Placeholder curves: a 0.5–2% failure chance per window at typical
/// operating points of the bundled feeder, with slopes gentle enough for
/// full-step linearization to settle. Not calibrated to any field data.
pub const PLACEHOLDER_SUBSTATION: LogisticCurve = LogisticCurve { lambda: 400.0, beta: 0.2 };
pub const PLACEHOLDER_BUS: LogisticCurve = LogisticCurve { lambda: 150.0, beta: 1.0 };
pub const PLACEHOLDER_LINE: LogisticCurve = LogisticCurve { lambda: 100.0, beta: 0.08 };

impl UnreliabilityParams {
    pub fn uniform(case: &GridCase, substation: LogisticCurve, bus: LogisticCurve, line: LogisticCurve) -> Self {
        Self { substation, buses: vec![bus; case.n_buses() - 1], lines: vec![line; case.n_lines()] }
    }

    pub fn placeholder(case: &GridCase) -> Self {
        Self::uniform(case, PLACEHOLDER_SUBSTATION, PLACEHOLDER_BUS, PLACEHOLDER_LINE)
    }

    pub fn check(&self, case: &GridCase) -> Result<()> {
        if self.buses.len() + 1 != case.n_buses() || self.lines.len() != case.n_lines() {
            return Err(Error::invalid("unreliability table does not match the case size"));
        }
        let all = std::iter::once(&self.substation).chain(&self.buses).chain(&self.lines);
        for c in all {
            LogisticCurve::new(c.lambda, c.beta)?;
        }
        Ok(())
    }

    pub fn curve(&self, c: Component) -> &LogisticCurve {
        match c {
            Component::Substation => &self.substation,
            Component::Bus(i) => &self.buses[i - 1],
            Component::Line(k) => &self.lines[k],
        }
    }

    pub fn set(&mut self, c: Component, curve: LogisticCurve) {
        match c {
            Component::Substation => self.substation = curve,
            Component::Bus(i) => self.buses[i - 1] = curve,
            Component::Line(k) => self.lines[k] = curve,
        }
    }
}

/// Cost of each de-energized quantity, $ per MW over one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub theta_b0: f64,
    pub theta_c: f64,
    pub theta_pv: f64,
    pub theta_dg: f64,
    pub theta_bc: f64,
    pub theta_bd: f64,
    pub theta_dr: f64,
}

impl Default for CostWeights {
    /// Placeholder values: lost load at $500/MWh over a two-hour window,
    /// lost DER output at a tenth of that.
    fn default() -> Self {
        Self {
            theta_b0: 1000.0,
            theta_c: 1000.0,
            theta_pv: 100.0,
            theta_dg: 100.0,
            theta_bc: 100.0,
            theta_bd: 100.0,
            theta_dr: 100.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.theta_b0,
            self.theta_c,
            self.theta_pv,
            self.theta_dg,
            self.theta_bc,
            self.theta_bd,
            self.theta_dr,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("cost weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Everything the expected-cost formula needs for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTerms {
    pub theta0: f64,
    pub pr0: f64,
    /// Indexed by bus; entry 0 is unused (zero).
    pub theta: Vec<f64>,
    pub pr_bus: Vec<f64>,
    pub pr_line: Vec<f64>,
}

/// Expected de-energization cost of one window:
/// `Θ₀Pr₀ + Σ_i Θ_i (1 − (1 − Pr_i) Π_{j ∈ path(i)} (1 − Pr_j))`.
pub fn window_eens(w: &WindowTerms, paths: &[Vec<usize>]) -> f64 {
    let mut total = w.theta0 * w.pr0;
    for i in 1..w.theta.len() {
        let up: f64 = paths[i].iter().map(|&j| 1.0 - w.pr_line[j]).product();
        total += w.theta[i] * (1.0 - (1.0 - w.pr_bus[i]) * up);
    }
    total
}

/// Power-flow drivers of every component per window.
#[derive(Debug, Clone, PartialEq)]
pub struct Drivers {
    /// `[t]`
    pub substation: Vec<f64>,
    /// `[t][bus]`, entry 0 unused.
    pub bus: Vec<Vec<f64>>,
    /// `[t][line]`
    pub line: Vec<Vec<f64>>,
}

impl Drivers {
    pub fn get(&self, c: Component, t: usize) -> f64 {
        match c {
            Component::Substation => self.substation[t],
            Component::Bus(i) => self.bus[t][i],
            Component::Line(k) => self.line[t][k],
        }
    }
}

/// Expected-cost evaluator tied to one case and program layout.
#[derive(Debug, Clone)]
pub struct EensModel<'a> {
    pub case: &'a GridCase,
    pub program: &'a DistFlowProgram,
    pub weights: CostWeights,
}

impl<'a> EensModel<'a> {
    pub fn new(case: &'a GridCase, program: &'a DistFlowProgram, weights: CostWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self { case, program, weights })
    }

    pub fn drivers(&self, x: &[f64]) -> Drivers {
        let idx = &self.program.index;
        let nt = self.case.horizon();
        let nb = self.case.n_buses();
        Drivers {
            substation: (0..nt).map(|t| x[idx.p0[t]].abs()).collect(),
            bus: (0..nt)
                .map(|t| {
                    (0..nb)
                        .map(|b| if b == 0 { 0.0 } else { net_injection(self.case, self.program, x, t, b).abs() })
                        .collect()
                })
                .collect(),
            line: (0..nt).map(|t| idx.l[t].iter().map(|&v| x[v]).collect()).collect(),
        }
    }

    /// Θ of every bus in window t.
    fn thetas(&self, x: &[f64], t: usize) -> Vec<f64> {
        let idx = &self.program.index;
        let w = &self.weights;
        (0..self.case.n_buses())
            .map(|b| {
                if b == 0 {
                    return 0.0;
                }
                let d = &self.program.devices[b];
                let mut th = w.theta_c * self.case.buses[b].p[t];
                th += d.dg.iter().map(|&u| w.theta_dg * x[idx.dg[t][u]]).sum::<f64>();
                th += d.pv.iter().map(|&u| w.theta_pv * x[idx.pv[t][u]]).sum::<f64>();
                th += d
                    .batteries
                    .iter()
                    .map(|&u| w.theta_bc * x[idx.charge[t][u]] + w.theta_bd * x[idx.discharge[t][u]])
                    .sum::<f64>();
                th += d.dr.iter().map(|&u| w.theta_dr * x[idx.dr[t][u]]).sum::<f64>();
                th
            })
            .collect()
    }

    pub fn window_terms(&self, x: &[f64], params: &UnreliabilityParams) -> Vec<WindowTerms> {
        let dr = self.drivers(x);
        let idx = &self.program.index;
        (0..self.case.horizon())
            .map(|t| WindowTerms {
                theta0: self.weights.theta_b0 * x[idx.p0[t]],
                pr0: params.substation.prob(dr.substation[t]),
                theta: self.thetas(x, t),
                pr_bus: (0..self.case.n_buses())
                    .map(|b| if b == 0 { 0.0 } else { params.buses[b - 1].prob(dr.bus[t][b]) })
                    .collect(),
                pr_line: dr.line[t].iter().zip(&params.lines).map(|(&l, c)| c.prob(l)).collect(),
            })
            .collect()
    }

    /// Expected de-energization cost per window.
    pub fn per_window(&self, x: &[f64], params: &UnreliabilityParams) -> Vec<f64> {
        let paths = &self.program.topology.paths;
        self.window_terms(x, params).iter().map(|w| window_eens(w, paths)).collect()
    }

    pub fn value(&self, x: &[f64], params: &UnreliabilityParams) -> f64 {
        self.per_window(x, params).iter().sum()
    }

    /// Value and exact gradient with respect to the full decision vector.
    pub fn value_and_gradient(&self, x: &[f64], params: &UnreliabilityParams) -> (f64, Vec<f64>) {
        let idx = &self.program.index;
        let case = self.case;
        let w = &self.weights;
        let paths = &self.program.topology.paths;
        let mut g = vec![0.0; x.len()];
        let mut total = 0.0;
        for (t, wt) in self.window_terms(x, params).into_iter().enumerate() {
            total += window_eens(&wt, paths);
            // Substation: θ_b0 p0 Pr0(|p0|).
            let p0 = x[idx.p0[t]];
            let s = sign(p0);
            g[idx.p0[t]] += w.theta_b0 * wt.pr0 + wt.theta0 * params.substation.derivative(p0.abs()) * s;

            let mut line_grad = vec![0.0; case.n_lines()];
            for b in 1..case.n_buses() {
                let path = &paths[b];
                let up: f64 = path.iter().map(|&j| 1.0 - wt.pr_line[j]).product();
                let survive_bus = 1.0 - wt.pr_bus[b];
                let unserved = 1.0 - survive_bus * up;
                let theta = wt.theta[b];
                let d = &self.program.devices[b];

                // dΘ/dx · U
                for &u in &d.dg {
                    g[idx.dg[t][u]] += w.theta_dg * unserved;
                }
                for &u in &d.pv {
                    g[idx.pv[t][u]] += w.theta_pv * unserved;
                }
                for &u in &d.batteries {
                    g[idx.charge[t][u]] += w.theta_bc * unserved;
                    g[idx.discharge[t][u]] += w.theta_bd * unserved;
                }
                for &u in &d.dr {
                    g[idx.dr[t][u]] += w.theta_dr * unserved;
                }

                // Θ · dU/dPr_bus · dPr_bus/dx
                let ptil = net_injection(case, self.program, x, t, b);
                let dbus = theta * up * params.buses[b - 1].derivative(ptil.abs()) * sign(ptil);
                if dbus != 0.0 {
                    for &u in &d.dg {
                        g[idx.dg[t][u]] += dbus;
                    }
                    for &u in &d.pv {
                        g[idx.pv[t][u]] += dbus;
                    }
                    for &u in &d.batteries {
                        g[idx.charge[t][u]] -= dbus;
                        g[idx.discharge[t][u]] += dbus;
                    }
                    for &u in &d.dr {
                        g[idx.dr[t][u]] += dbus;
                    }
                }

                // Θ · dU/dPr_line for each path line (product without that line).
                for (pos, &j) in path.iter().enumerate() {
                    let others: f64 = path
                        .iter()
                        .enumerate()
                        .filter(|(q, _)| *q != pos)
                        .map(|(_, &k)| 1.0 - wt.pr_line[k])
                        .product();
                    line_grad[j] += theta * survive_bus * others;
                }
            }
            for (j, lg) in line_grad.into_iter().enumerate() {
                let v = idx.l[t][j];
                g[v] += lg * params.lines[j].derivative(x[v]);
            }
        }
        (total, g)
    }
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::super::case::{chain_case, Battery, DemandResponse, Generator, PvUnit};
    use super::super::program::build_program;
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn logistic_examples() {
        let c = LogisticCurve::new(3.0, 2.0).unwrap();
        assert_relative_eq!(interval_unreliability(&c, 0.0), 0.25);
        let c = LogisticCurve::new(1.0, 1.0).unwrap();
        assert_relative_eq!(interval_unreliability(&c, 3f64.ln()), 0.75, max_relative = 1e-14);
        let c = LogisticCurve::new(4.0, 0.0).unwrap();
        for x in [-5.0, 0.0, 10.0] {
            assert_relative_eq!(interval_unreliability(&c, x), 0.2, max_relative = 1e-14);
        }
    }

    #[test]
    fn hand_expansion() {
        let w = WindowTerms { theta0: 0.0, pr0: 0.0, theta: vec![0.0, 1.0], pr_bus: vec![0.0, 0.1], pr_line: vec![0.2] };
        assert_relative_eq!(window_eens(&w, &[vec![], vec![0]]), 0.28, max_relative = 1e-14);
        let zero = WindowTerms { theta0: 3.0, pr0: 0.0, theta: vec![0.0, 5.0], pr_bus: vec![0.0, 0.0], pr_line: vec![0.0] };
        assert_eq!(window_eens(&zero, &[vec![], vec![0]]), 0.0);
    }

    #[test]
    fn monotone_in_probabilities() {
        let paths = vec![vec![], vec![0], vec![1, 0]];
        let base = WindowTerms {
            theta0: 2.0,
            pr0: 0.1,
            theta: vec![0.0, 1.0, 3.0],
            pr_bus: vec![0.0, 0.2, 0.05],
            pr_line: vec![0.1, 0.3],
        };
        let e0 = window_eens(&base, &paths);
        let mut w = base.clone();
        w.pr0 += 0.05;
        assert!(window_eens(&w, &paths) >= e0);
        for b in 1..3 {
            let mut w = base.clone();
            w.pr_bus[b] += 0.05;
            assert!(window_eens(&w, &paths) >= e0);
        }
        for l in 0..2 {
            let mut w = base.clone();
            w.pr_line[l] += 0.05;
            assert!(window_eens(&w, &paths) >= e0);
        }
    }

    pub(crate) fn five_bus_case() -> GridCase {
        let mut c = chain_case(5, 2);
        // branch: bus 4 hangs off bus 2
        c.lines[3].from = 2;
        c.generators.push(Generator { bus: 3, p_min: 0.0, p_max: 0.3, cost: 50.0 });
        c.pv.push(PvUnit { bus: 4, rating: 0.2, profile: vec![0.1, 0.2] });
        c.batteries.push(Battery {
            bus: 2,
            charge_max: 0.1,
            discharge_max: 0.1,
            soc_min: 0.0,
            soc_max: 0.4,
            soc_init: 0.2,
            eta_charge: 0.9,
            eta_discharge: 0.9,
        });
        c.demand_response.push(DemandResponse { bus: 1, cap: vec![0.02, 0.03], compensation: 60.0 });
        c
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let case = five_bus_case();
        let prog = build_program(&case).unwrap();
        let mut params = UnreliabilityParams::uniform(
            &case,
            LogisticCurve { lambda: 30.0, beta: 0.8 },
            LogisticCurve { lambda: 20.0, beta: 4.0 },
            LogisticCurve { lambda: 50.0, beta: 2.0 },
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for k in 0..case.n_lines() {
            params.lines[k].beta = rng.random_range(0.5..3.0);
        }
        let model = EensModel::new(&case, &prog, CostWeights::default()).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..prog.index.n_vars).map(|_| rng.random_range(0.05..0.6)).collect();
            let (_, g) = model.value_and_gradient(&x, &params);
            for v in 0..x.len() {
                let h = 1e-6;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[v] += h;
                xm[v] -= h;
                let fd = (model.value(&xp, &params) - model.value(&xm, &params)) / (2.0 * h);
                let scale = fd.abs().max(g[v].abs()).max(1.0);
                assert!((fd - g[v]).abs() / scale < 1e-5, "var {v}: fd {fd} vs analytic {}", g[v]);
            }
        }
    }
}
