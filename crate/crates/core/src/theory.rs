//! Evaluation of the random-forest MSE upper bound for uniform and
//! δ-targeted split-feature sampling, and a grid check that targeted
//! sampling gives the strictly smaller bound.
//!
//! Logarithms are natural.

use std::f64::consts::{E, LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Scheme {
    Uniform,
    Targeted { delta: f64 },
}

/// Deviation ξ_j of each strong feature's selection probability from 1/ς.
pub fn xi_from_scheme(scheme: Scheme, kappa: usize, sigma: usize) -> Result<Vec<f64>> {
    if sigma < 2 || sigma > kappa {
        return Err(Error::invalid(format!("need 2 <= strong features ({sigma}) <= features ({kappa})")));
    }
    let (k, s) = (kappa as f64, sigma as f64);
    let xi = match scheme {
        Scheme::Uniform => (s - k) / k,
        Scheme::Targeted { delta } => {
            if !(delta >= 1.0) {
                return Err(Error::invalid(format!("targeting factor {delta} below 1")));
            }
            if s * delta > k {
                return Err(Error::invalid(format!(
                    "targeting factors sum to {} > {kappa} features",
                    s * delta
                )));
            }
            if delta >= k / 2.0 {
                return Err(Error::invalid(format!("targeting factor {delta} not below features/2 = {}", k / 2.0)));
            }
            (delta * s - k) / k
        }
    };
    Ok(vec![xi; sigma])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub kappa: usize,
    /// ς, the number of strong features.
    pub sigma: usize,
    pub n: f64,
    pub leaves: f64,
    pub noise_var: f64,
    pub lipschitz: f64,
    pub sup_tf2: f64,
    /// ξ_{n,j} for each strong feature.
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub variance_term: f64,
    pub bias_term: f64,
    pub total: f64,
    pub big_xi: f64,
    pub xi_n: f64,
    pub varpi: f64,
}

/// `(1+ξ)^{-1}(1-ξ/(ς-1))^{-1}`, the per-feature factor of ξ_n.
pub fn xi_factor(xi: f64, sigma: f64) -> f64 {
    (sigma - 1.0) / (sigma - 1.0 + xi * (sigma - 2.0 - xi))
}

pub fn mse_bound(b: &BoundInputs) -> Result<Bound> {
    let (k, s) = (b.kappa as f64, b.sigma as f64);
    if b.sigma < 2 || b.sigma > b.kappa {
        return Err(Error::invalid("need 2 <= strong features <= features"));
    }
    if b.xi.len() != b.sigma {
        return Err(Error::invalid(format!("{} deviations for {} strong features", b.xi.len(), b.sigma)));
    }
    if !(b.leaves >= 1.0) || !(b.n > 0.0) {
        return Err(Error::invalid("need leaves >= 1 and n > 0"));
    }
    let mut prod = 1.0;
    for &x in &b.xi {
        let a = 1.0 + x;
        let c = 1.0 - x / (s - 1.0);
        if !(a > 0.0) || !(c > 0.0) {
            return Err(Error::invalid(format!("deviation {x} outside the bound's validity region")));
        }
        prod *= 1.0 / (a * c);
    }
    let xi_n = prod.powf(1.0 / (2.0 * k)) - 1.0;
    let e = s / (2.0 * k);
    let big_xi = 288.0 / PI * (PI * LN_2 / 16.0).powf(e) * b.noise_var * (s * s / (s - 1.0)).powf(e) * (1.0 + xi_n)
        + 2.0 / E * b.sup_tf2;
    let varpi = b.xi.iter().cloned().fold(f64::INFINITY, f64::min);
    let variance_term = big_xi * b.leaves / b.n;
    let bias_term = 2.0 * s * b.lipschitz.powi(2) / b.leaves.powf(0.75 / (s * LN_2) * (1.0 + varpi));
    let total = variance_term + bias_term;
    if !total.is_finite() {
        return Err(Error::numerical("bound evaluates to a non-finite value"));
    }
    Ok(Bound { variance_term, bias_term, total, big_xi, xi_n, varpi })
}

/// The two boundary values whose positivity keeps the ξ factor's
/// denominator positive over the admissible deviation range.
pub fn positivity_checks(kappa: usize, sigma: usize) -> (f64, f64) {
    let (k, s) = (kappa as f64, sigma as f64);
    let g = |x: f64| s - 1.0 + x * (-x + s - 2.0);
    (g((s - k) / k), g((k / 2.0 * s - k) / k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub kappas: Vec<usize>,
    pub sigmas: Vec<usize>,
    pub deltas: Vec<f64>,
    pub ns: Vec<f64>,
    /// Leaves = ⌈n^exponent⌉.
    pub leaf_exponent: f64,
    pub noise_var: f64,
    pub lipschitz: f64,
    pub sup_tf2: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            kappas: vec![6, 10, 20],
            sigmas: vec![2, 3, 5],
            deltas: vec![1.2, 1.5, 2.0],
            ns: vec![1e3, 1e4, 1e5],
            leaf_exponent: 0.6,
            noise_var: 1.0,
            lipschitz: 1.0,
            sup_tf2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub kappa: usize,
    pub sigma: usize,
    pub delta: f64,
    pub n: f64,
    pub leaves: f64,
    pub uniform_total: f64,
    pub targeted_total: f64,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    /// Grid points outside the hypotheses, as (κ, ς, δ).
    pub skipped: Vec<(usize, usize, f64)>,
}

impl GridReport {
    pub fn all_strict(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.strict)
    }

    pub fn violations(&self) -> Vec<&GridRow> {
        self.rows.iter().filter(|r| !r.strict).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kappa", "sigma", "delta", "n", "leaves", "uniform_total", "targeted_total", "strict"])?;
        for r in &self.rows {
            w.write_record(&[
                r.kappa.to_string(),
                r.sigma.to_string(),
                r.delta.to_string(),
                r.n.to_string(),
                r.leaves.to_string(),
                format!("{:.17e}", r.uniform_total),
                format!("{:.17e}", r.targeted_total),
                r.strict.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn pair(spec: &GridSpec, kappa: usize, sigma: usize, delta: f64, n: f64) -> Result<GridRow> {
    let leaves = n.powf(spec.leaf_exponent).ceil();
    let inputs = |scheme| -> Result<BoundInputs> {
        Ok(BoundInputs {
            kappa,
            sigma,
            n,
            leaves,
            noise_var: spec.noise_var,
            lipschitz: spec.lipschitz,
            sup_tf2: spec.sup_tf2,
            xi: xi_from_scheme(scheme, kappa, sigma)?,
        })
    };
    let u = mse_bound(&inputs(Scheme::Uniform)?)?.total;
    let t = mse_bound(&inputs(Scheme::Targeted { delta })?)?.total;
    Ok(GridRow { kappa, sigma, delta, n, leaves, uniform_total: u, targeted_total: t, strict: t < u })
}

/// Compares the two bounds at every admissible grid point. Points that
/// violate the targeting hypotheses (ςδ ≤ κ, 1 ≤ δ < κ/2, ς < κ) are listed
/// as skipped.
pub fn verify_proposition1(spec: &GridSpec) -> Result<GridReport> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &kappa in &spec.kappas {
        for &sigma in &spec.sigmas {
            for &delta in &spec.deltas {
                let (k, s) = (kappa as f64, sigma as f64);
                if sigma < 2 || sigma >= kappa || s * delta > k || delta < 1.0 || delta >= k / 2.0 {
                    skipped.push((kappa, sigma, delta));
                    continue;
                }
                for &n in &spec.ns {
                    rows.push(pair(spec, kappa, sigma, delta, n)?);
                }
            }
        }
    }
    Ok(GridReport { rows, skipped })
}

/// Uniform and targeted totals at a single point.
pub fn compare_point(kappa: usize, sigma: usize, delta: f64, n: f64, leaves: f64) -> Result<(f64, f64)> {
    let spec = GridSpec::default();
    let mk = |scheme| -> Result<f64> {
        Ok(mse_bound(&BoundInputs {
            kappa,
            sigma,
            n,
            leaves,
            noise_var: spec.noise_var,
            lipschitz: spec.lipschitz,
            sup_tf2: spec.sup_tf2,
            xi: xi_from_scheme(scheme, kappa, sigma)?,
        })?
        .total)
    };
    Ok((mk(Scheme::Uniform)?, mk(Scheme::Targeted { delta })?))
}
