use crate::error::{Error, Result};
use crate::logistic::fit_binary;

use super::schema::{Coordinates, Site};
use super::tensor::{FeatureTensor, FAILURE};

/// Smallest weight any site or category may receive, before renormalization.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Site sampling weights inversely proportional to the planar distance (in
/// raw degrees) between each site and the substation.
pub fn site_weights(sites: &[Site], substation: Coordinates) -> Result<Vec<f64>> {
    if sites.is_empty() {
        return Err(Error::invalid("no sites"));
    }
    let mut inv = Vec::with_capacity(sites.len());
    for s in sites {
        let r = (s.latitude - substation.latitude).hypot(s.longitude - substation.longitude);
        if !(r > 0.0) {
            return Err(Error::invalid(format!(
                "site '{}' coincides with the substation; inverse-distance weight undefined",
                s.id
            )));
        }
        inv.push(1.0 / r);
    }
    Ok(normalize(inv))
}

/// Normalized |coefficient| weights from a logistic fit of the label on the
/// per-category means over all sites and features.
pub fn category_weights(t: &FeatureTensor) -> Result<Vec<f64>> {
    let labels = t.labels()?;
    let dims = &t.dims;
    let m_count = dims.n_categories();
    if m_count == 1 {
        return Ok(vec![1.0]);
    }
    let z = category_means(t);
    let positive: Vec<bool> = labels.iter().map(|&l| l == FAILURE).collect();
    let fit = fit_binary(&z, &positive)?;
    Ok(weights_from_coefficients(&fit.coefficients[1..]))
}

/// Row-major `n × M` matrix of unweighted means over every site and every
/// feature of each category.
pub fn category_means(t: &FeatureTensor) -> Vec<Vec<f64>> {
    let dims = &t.dims;
    let m_count = dims.n_categories();
    let blocks: Vec<Vec<usize>> = (0..m_count)
        .map(|m| (0..dims.n_sites).flat_map(|d| dims.block(d, m)).collect())
        .collect();
    (0..t.n_samples())
        .map(|i| {
            blocks
                .iter()
                .map(|cols| cols.iter().map(|&c| t.weather.get(i, c)).sum::<f64>() / cols.len() as f64)
                .collect()
        })
        .collect()
}

/// `|α_m| / Σ|α_h|`, floored so every weight stays strictly positive.
pub fn weights_from_coefficients(alpha: &[f64]) -> Vec<f64> {
    let total: f64 = alpha.iter().map(|a| a.abs()).sum();
    if !(total > 0.0) || !total.is_finite() {
        return vec![1.0 / alpha.len() as f64; alpha.len()];
    }
    let raw: Vec<f64> = alpha.iter().map(|a| (a.abs() / total).max(WEIGHT_FLOOR)).collect();
    normalize(raw)
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}
