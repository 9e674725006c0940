//! Logistic regression by damped Newton / iteratively reweighted least squares.
//!
//! Two entry points share one solver: [`fit_binary`] for {0,1} responses with
//! several predictors (category weighting) and [`fit_univariate`] for a single
//! regressor with fractional targets (the interval-unreliability refit).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Ridge added to the Hessian diagonal.
pub const HESSIAN_RIDGE: f64 = 1e-8;

/// Coefficient magnitude (in standardized predictor units) past which a fit is
/// treated as diverging under perfect separation.
const SEPARATION_NORM: f64 = 1e3;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per predictor column.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn neg_log_likelihood(x: &DMatrix<f64>, t: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut nll = 0.0;
    for i in 0..t.len() {
        let z = eta[i];
        // log(1+e^z) computed stably
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        nll += softplus - t[i] * z;
    }
    nll
}

/// Newton iterations on the Bernoulli log-likelihood with fractional targets.
/// `x` must already contain the intercept column.
fn newton(x: &DMatrix<f64>, t: &DVector<f64>, init: DVector<f64>, tol: f64, max_iter: usize) -> Result<LogisticFit> {
    let p_dim = x.ncols();
    let mut beta = init;
    let mut loss = neg_log_likelihood(x, t, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let eta = x * &beta;
        let mut grad = DVector::zeros(p_dim);
        let mut hess = DMatrix::zeros(p_dim, p_dim);
        for i in 0..x.nrows() {
            let p = sigmoid(eta[i]);
            let w = (p * (1.0 - p)).max(1e-300);
            let r = p - t[i];
            for a in 0..p_dim {
                let xa = x[(i, a)];
                grad[a] += xa * r;
                for b in a..p_dim {
                    hess[(a, b)] += w * xa * x[(i, b)];
                }
            }
        }
        for a in 0..p_dim {
            hess[(a, a)] += HESSIAN_RIDGE;
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => hess
                .lu()
                .solve(&grad)
                .ok_or_else(|| Error::numerical("singular Hessian in logistic fit"))?,
        };
        // step halving keeps the likelihood monotone
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta - &step * scale;
            let cand_loss = neg_log_likelihood(x, t, &cand);
            if cand_loss.is_finite() && cand_loss <= loss + 1e-12 * loss.abs().max(1.0) {
                beta = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let max_step = step.amax() * scale;
        if !accepted || max_step < tol {
            converged = true;
            break;
        }
    }
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        iterations,
        converged,
    })
}

/// Fits `logit Pr(y=1) = a0 + Σ a_m z_m` to binary responses.
///
/// `predictors` is row-major (`n × M`), `positive[i]` marks y_i = 1.
/// Predictors are standardized internally and coefficients mapped back.
/// Perfect separation is reported as an error rather than returning
/// meaningless coefficients.
pub fn fit_binary(predictors: &[Vec<f64>], positive: &[bool]) -> Result<LogisticFit> {
    let n = predictors.len();
    if n == 0 || n != positive.len() {
        return Err(Error::invalid("logistic fit needs matching, nonempty predictors and responses"));
    }
    let m = predictors[0].len();
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::data("logistic fit needs both classes present"));
    }
    let (means, scales) = column_scaling(predictors, m);
    let mut x = DMatrix::zeros(n, m + 1);
    for (i, row) in predictors.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for j in 0..m {
            x[(i, j + 1)] = (row[j] - means[j]) / scales[j];
        }
    }
    let t = DVector::from_iterator(n, positive.iter().map(|&p| if p { 1.0 } else { 0.0 }));
    let prior = n_pos as f64 / n as f64;
    let mut init = DVector::zeros(m + 1);
    init[0] = (prior / (1.0 - prior)).ln();
    let fit = newton(&x, &t, init, DEFAULT_TOL, DEFAULT_MAX_ITER)?;

    let slope_norm = fit.coefficients[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
    if !fit.converged || slope_norm > SEPARATION_NORM {
        return Err(Error::numerical(format!(
            "logistic coefficients diverge (norm {slope_norm:.3e} after {} iterations): \
             the classes look perfectly separable; use a ridge-penalized fit instead",
            fit.iterations
        )));
    }
    Ok(unscale(fit, &means, &scales))
}

/// Fits `Pr = 1/(1+exp(-(a+bx)))` to fractional targets by cross-entropy
/// minimization. Returns `(a, b)`. All-equal targets give the flat fit `b = 0`.
pub fn fit_univariate(x: &[f64], targets: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n == 0 || n != targets.len() {
        return Err(Error::invalid("univariate logistic fit needs matching, nonempty inputs"));
    }
    if let Some(bad) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("target {bad} outside [0,1]")));
    }
    let mean_t = targets.iter().sum::<f64>() / n as f64;
    let first = targets[0];
    let flat = targets.iter().all(|&t| (t - first).abs() <= 1e-15 * first.abs().max(1e-300));
    let x_first = x[0];
    let x_flat = x.iter().all(|&v| v == x_first);
    if flat || x_flat {
        let p = mean_t.clamp(1e-300, 1.0 - 1e-16);
        return Ok(((p / (1.0 - p)).ln(), 0.0));
    }
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let (means, scales) = column_scaling(&rows, 1);
    let mut xm = DMatrix::zeros(n, 2);
    for i in 0..n {
        xm[(i, 0)] = 1.0;
        xm[(i, 1)] = (x[i] - means[0]) / scales[0];
    }
    let t = DVector::from_column_slice(targets);
    let p0 = mean_t.clamp(1e-300, 1.0 - 1e-16);
    let mut init = DVector::zeros(2);
    init[0] = (p0 / (1.0 - p0)).ln();
    let fit = newton(&xm, &t, init, DEFAULT_TOL, 200)?;
    let fit = unscale(fit, &means, &scales);
    let (a, b) = (fit.coefficients[0], fit.coefficients[1]);
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::numerical("univariate logistic fit produced non-finite coefficients"));
    }
    Ok((a, b))
}

fn column_scaling(rows: &[Vec<f64>], m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut means = vec![0.0; m];
    for r in rows {
        for j in 0..m {
            means[j] += r[j];
        }
    }
    means.iter_mut().for_each(|v| *v /= n);
    let mut scales = vec![0.0; m];
    for r in rows {
        for j in 0..m {
            scales[j] += (r[j] - means[j]).powi(2);
        }
    }
    for s in &mut scales {
        *s = (*s / n).sqrt();
        if *s <= 0.0 || !s.is_finite() {
            *s = 1.0;
        }
    }
    (means, scales)
}

fn unscale(mut fit: LogisticFit, means: &[f64], scales: &[f64]) -> LogisticFit {
    let mut intercept = fit.coefficients[0];
    for j in 0..means.len() {
        let c = fit.coefficients[j + 1] / scales[j];
        intercept -= c * means[j];
        fit.coefficients[j + 1] = c;
    }
    fit.coefficients[0] = intercept;
    fit
}

/// Interval-unreliability curve `Pr(x) = 1/(1 + λ e^{-βx})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticCurve {
    pub lambda: f64,
    pub beta: f64,
}

impl LogisticCurve {
    pub fn new(lambda: f64, beta: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() || !beta.is_finite() {
            return Err(Error::invalid(format!("logistic curve needs λ > 0 and finite β (got {lambda}, {beta})")));
        }
        Ok(Self { lambda, beta })
    }

    /// From the `a + b x` parameterization: λ = e^{-a}, β = b.
    pub fn from_intercept_slope(a: f64, b: f64) -> Self {
        Self { lambda: (-a).exp(), beta: b }
    }

    #[inline]
    pub fn prob(&self, x: f64) -> f64 {
        // 1/(1+λe^{-βx}) = σ(βx - ln λ)
        sigmoid(self.beta * x - self.lambda.ln())
    }

    /// d Pr / dx = β Pr (1 - Pr).
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let p = self.prob(x);
        self.beta * p * (1.0 - p)
    }
}
