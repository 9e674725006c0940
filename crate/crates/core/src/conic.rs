//! Linear-objective second-order-cone programs and their solution through
//! the Clarabel interior-point solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};

/// Affine expression `Σ coef·x[var] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: usize) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, v: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>() + self.constant
    }
}

/// `min c·x + c0` subject to equalities, `≤ 0` inequalities, variable
/// bounds and second-order cones `‖(e1, …, ek)‖ ≤ e0`.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    equalities: Vec<LinExpr>,
    inequalities: Vec<LinExpr>,
    cones: Vec<Vec<LinExpr>>,
}

/// Outcome of a successful solve.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    /// True when the solver reported reduced accuracy.
    pub reduced_accuracy: bool,
}

/// Worst constraint violations of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub equality: f64,
    pub inequality: f64,
    pub bound: f64,
    /// Smallest `e0 - ‖(e1..)‖` over the cones; negative means outside.
    pub cone_margin: f64,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn n_cones(&self) -> usize {
        self.cones.len()
    }

    /// Adds a variable with bounds (use infinities for free sides).
    pub fn add_var(&mut self, lower: f64, upper: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(0.0);
        self.lower.len() - 1
    }

    pub fn bounds(&self, v: usize) -> (f64, f64) {
        (self.lower[v], self.upper[v])
    }

    pub fn add_cost(&mut self, v: usize, c: f64) {
        self.objective[v] += c;
    }

    pub fn add_eq(&mut self, e: LinExpr) {
        self.equalities.push(e);
    }

    /// Adds `e ≤ 0`.
    pub fn add_le(&mut self, e: LinExpr) {
        self.inequalities.push(e);
    }

    pub fn add_soc(&mut self, head: LinExpr, tail: Vec<LinExpr>) {
        let mut c = Vec::with_capacity(tail.len() + 1);
        c.push(head);
        c.extend(tail);
        self.cones.push(c);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_constant
    }

    /// Checks bounds for contradictions before handing off to the solver.
    pub fn check_bounds(&self) -> Result<()> {
        for (v, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Infeasible(format!("variable {v} has bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn residuals(&self, x: &[f64]) -> Residuals {
        let equality = self.equalities.iter().map(|e| e.eval(x).abs()).fold(0.0, f64::max);
        let inequality = self.inequalities.iter().map(|e| e.eval(x).max(0.0)).fold(0.0, f64::max);
        let bound = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        let cone_margin = self
            .cones
            .iter()
            .map(|c| {
                let head = c[0].eval(x);
                let norm = c[1..].iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                head - norm
            })
            .fold(f64::INFINITY, f64::min);
        Residuals { equality, inequality, bound, cone_margin }
    }

    /// Solves the program. Infeasibility and solver breakdowns are errors.
    pub fn solve(&self) -> Result<ConicSolution> {
        self.check_bounds()?;
        let n = self.n_vars();
        let (mut ri, mut ci, mut vals, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut row = 0usize;
        let mut push_row = |terms: &[(usize, f64)], scale: f64, rhs: f64, b: &mut Vec<f64>| {
            for &(v, c) in terms {
                ri.push(row);
                ci.push(v);
                vals.push(scale * c);
            }
            b.push(rhs);
            row += 1;
        };

        // Fixed variables and equalities: a·x = -c0.
        let mut n_zero = 0;
        for v in 0..n {
            if self.lower[v] == self.upper[v] {
                push_row(&[(v, 1.0)], 1.0, self.lower[v], &mut b);
                n_zero += 1;
            }
        }
        for e in &self.equalities {
            push_row(&e.terms, 1.0, -e.constant, &mut b);
            n_zero += 1;
        }
        // Inequalities a·x + c0 ≤ 0 and finite bounds.
        let mut n_nonneg = 0;
        for e in &self.inequalities {
            push_row(&e.terms, 1.0, -e.constant, &mut b);
            n_nonneg += 1;
        }
        for v in 0..n {
            if self.lower[v] == self.upper[v] {
                continue;
            }
            if self.upper[v].is_finite() {
                push_row(&[(v, 1.0)], 1.0, self.upper[v], &mut b);
                n_nonneg += 1;
            }
            if self.lower[v].is_finite() {
                push_row(&[(v, 1.0)], -1.0, -self.lower[v], &mut b);
                n_nonneg += 1;
            }
        }
        // Cones: s = e = g·x + h, so -g·x + s = h.
        let mut cone_dims = Vec::with_capacity(self.cones.len());
        for c in &self.cones {
            for e in c {
                push_row(&e.terms, -1.0, e.constant, &mut b);
            }
            cone_dims.push(c.len());
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);
        let p = CscMatrix::zeros((n, n));
        let mut cones = Vec::with_capacity(2 + cone_dims.len());
        if n_zero > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_zero));
        }
        if n_nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
        }
        cones.extend(cone_dims.into_iter().map(SupportedConeT::SecondOrderConeT));

        let settings = DefaultSettings::<f64> { verbose: false, max_iter: 300, ..Default::default() };
        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &b, &cones, settings)
            .map_err(|e| Error::numerical(format!("solver setup failed: {e}")))?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(ConicSolution {
                objective: self.objective_value(&sol.x),
                x: sol.x.clone(),
                iterations: sol.iterations,
                reduced_accuracy: sol.status == SolverStatus::AlmostSolved,
            }),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Err(Error::Infeasible("cone program has no feasible point".into()))
            }
            status => Err(Error::numerical(format!(
                "solver stopped with {status:?} after {} iterations (primal residual {:.3e}, dual residual {:.3e})",
                sol.iterations, sol.r_prim, sol.r_dual
            ))),
        }
    }
}
