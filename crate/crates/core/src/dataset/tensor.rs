use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tree::ColumnLayout;

use super::schema::TensorDims;

/// Label of a failure observation.
pub const FAILURE: i8 = -1;
/// Label of normal operation.
pub const NORMAL: i8 = 1;

/// Which component family a power-flow driver describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    /// Driver: net active-power demand magnitude at the bus.
    Bus,
    /// Driver: squared current magnitude on the line.
    Line,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Bus => "bus",
            ComponentKind::Line => "line",
        }
    }
}

impl std::str::FromStr for ComponentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bus" => Ok(ComponentKind::Bus),
            "line" => Ok(ComponentKind::Line),
            other => Err(Error::invalid(format!("unknown component kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowColumn {
    pub kind: ComponentKind,
    pub values: Vec<f64>,
}

/// Observations indexed by (sample, site, category, feature), plus the
/// optional power-flow column, labels and sample weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    pub dims: TensorDims,
    /// `n × (D·W)`; see [`TensorDims::column`].
    pub weather: Matrix,
    pub powerflow: Option<PowerFlowColumn>,
    pub labels: Option<Vec<i8>>,
    /// Non-negative, summing to one.
    pub sample_weights: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(dims: TensorDims, weather: Matrix) -> Result<Self> {
        if weather.cols() != dims.n_weather_columns() {
            return Err(Error::invalid(format!(
                "weather block has {} columns, dims call for {}",
                weather.cols(),
                dims.n_weather_columns()
            )));
        }
        let n = weather.rows();
        Ok(Self {
            dims,
            weather,
            powerflow: None,
            labels: None,
            sample_weights: uniform_weights(n),
        })
    }

    pub fn with_powerflow(mut self, kind: ComponentKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n_samples() {
            return Err(Error::invalid("power-flow column length differs from sample count"));
        }
        self.powerflow = Some(PowerFlowColumn { kind, values });
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != self.n_samples() {
            return Err(Error::invalid("label count differs from sample count"));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l != FAILURE && l != NORMAL) {
            return Err(Error::invalid(format!("label {l} at row {i} is not -1 or +1")));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.weather.rows()
    }

    pub fn value(&self, sample: usize, site: usize, category: usize, feature: usize) -> f64 {
        self.weather.get(sample, self.dims.column(site, category, feature))
    }

    pub fn labels(&self) -> Result<&[i8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::invalid("tensor is unlabeled"))
    }

    pub fn failure_count(&self) -> Result<usize> {
        Ok(self.labels()?.iter().filter(|&&l| l == FAILURE).count())
    }

    /// Subset of rows (duplicates allowed); sample weights are renormalized.
    pub fn select(&self, rows: &[usize]) -> Self {
        let weather = self.weather.select_rows(rows);
        let powerflow = self.powerflow.as_ref().map(|pf| PowerFlowColumn {
            kind: pf.kind,
            values: rows.iter().map(|&i| pf.values[i]).collect(),
        });
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&i| l[i]).collect());
        let mut w: Vec<f64> = rows.iter().map(|&i| self.sample_weights[i]).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|v| *v /= total);
        } else {
            w = uniform_weights(rows.len());
        }
        Self {
            dims: self.dims.clone(),
            weather,
            powerflow,
            labels,
            sample_weights: w,
        }
    }

    /// Weather columns followed by the power-flow column (if any).
    pub fn design_matrix(&self) -> Matrix {
        let mut m = self.weather.clone();
        if let Some(pf) = &self.powerflow {
            m.push_col(&pf.values).expect("lengths checked on construction");
        }
        m
    }

    /// Column layout of [`design_matrix`](Self::design_matrix): one block per
    /// (site, category); the power-flow column is a candidate at every split.
    pub fn column_layout(&self) -> ColumnLayout {
        let blocks = (0..self.dims.n_sites)
            .map(|d| {
                (0..self.dims.n_categories())
                    .map(|m| self.dims.block(d, m))
                    .collect()
            })
            .collect();
        let always = match self.powerflow {
            Some(_) => vec![self.dims.n_weather_columns()],
            None => Vec::new(),
        };
        ColumnLayout::new(blocks, always)
    }
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    if n == 0 {
        Vec::new()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Per-column affine map learned on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub weather: Vec<ColumnStats>,
    pub powerflow: Option<ColumnStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation (divide by n).
    pub stdev: f64,
}

impl ColumnStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, stdev: var.sqrt() }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.stdev
    }
}

/// Z-scores every weather column (and the power-flow column) using the
/// population standard deviation.
///
/// Columns with zero variance are refused rather than silently dropped.
pub fn standardize(t: &FeatureTensor) -> Result<(FeatureTensor, Standardizer)> {
    if t.n_samples() == 0 {
        return Err(Error::data("cannot standardize an empty tensor"));
    }
    let mut constant = Vec::new();
    let mut stats = Vec::with_capacity(t.weather.cols());
    for j in 0..t.weather.cols() {
        let s = ColumnStats::of(t.weather.col(j));
        if !(s.stdev > 0.0) || !s.stdev.is_finite() {
            constant.push(describe_column(&t.dims, j));
        }
        stats.push(s);
    }
    let pf_stats = t.powerflow.as_ref().map(|pf| ColumnStats::of(&pf.values));
    if let Some(s) = pf_stats {
        if !(s.stdev > 0.0) || !s.stdev.is_finite() {
            constant.push("power-flow".to_string());
        }
    }
    if !constant.is_empty() {
        return Err(Error::data(format!(
            "zero-variance column(s) cannot be standardized: {}",
            constant.join(", ")
        )));
    }
    let standardizer = Standardizer {
        weather: stats,
        powerflow: pf_stats,
    };
    let out = standardizer.apply(t)?;
    Ok((out, standardizer))
}

fn describe_column(dims: &TensorDims, col: usize) -> String {
    let w = dims.features_per_site();
    let site = col / w;
    let feature = col % w;
    let cat = dims.category_of(feature);
    format!("(site {site}, category {cat}, feature {})", feature - dims.category_offset(cat))
}

impl Standardizer {
    pub fn apply(&self, t: &FeatureTensor) -> Result<FeatureTensor> {
        if t.weather.cols() != self.weather.len() {
            return Err(Error::invalid("standardizer column count mismatch"));
        }
        let mut out = t.clone();
        for (j, s) in self.weather.iter().enumerate() {
            for v in out.weather.col_mut(j) {
                *v = s.apply(*v);
            }
        }
        match (&mut out.powerflow, &self.powerflow) {
            (Some(pf), Some(s)) => pf.values.iter_mut().for_each(|v| *v = s.apply(*v)),
            (None, None) => {}
            (Some(_), None) => {
                return Err(Error::invalid("tensor has a power-flow column the standardizer never saw"))
            }
            (None, Some(_)) => return Err(Error::invalid("tensor lacks the power-flow column")),
        }
        Ok(out)
    }

    /// Standardized design row from raw weather values and a raw driver.
    pub fn design_row(&self, weather: &[f64], driver: Option<f64>) -> Vec<f64> {
        let mut row: Vec<f64> = weather
            .iter()
            .zip(&self.weather)
            .map(|(&x, s)| s.apply(x))
            .collect();
        if let (Some(d), Some(s)) = (driver, &self.powerflow) {
            row.push(s.apply(d));
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_col(values: &[f64]) -> FeatureTensor {
        let dims = TensorDims {
            n_sites: 1,
            category_sizes: vec![1],
        };
        FeatureTensor::new(dims, Matrix::from_columns(values.len(), vec![values.to_vec()]).unwrap()).unwrap()
    }

    #[test]
    fn z_score_uses_population_stdev() {
        let (s, st) = standardize(&one_col(&[2.0, 4.0, 6.0])).unwrap();
        assert_relative_eq!(st.weather[0].mean, 4.0);
        assert_relative_eq!(st.weather[0].stdev, (8.0f64 / 3.0).sqrt());
        let c = s.weather.col(0);
        assert_relative_eq!(c[0], -1.224744871391589, epsilon = 1e-12);
        assert_relative_eq!(c[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(c[2], 1.224744871391589, epsilon = 1e-12);
    }

    #[test]
    fn constant_column_is_refused() {
        let err = standardize(&one_col(&[3.0, 3.0, 3.0])).unwrap_err();
        assert!(err.to_string().contains("site 0, category 0, feature 0"), "{err}");
    }

    #[test]
    fn labels_are_checked() {
        assert!(one_col(&[1.0, 2.0]).with_labels(vec![1, 0]).is_err());
        assert!(one_col(&[1.0, 2.0]).with_labels(vec![1, -1]).is_ok());
    }
}
