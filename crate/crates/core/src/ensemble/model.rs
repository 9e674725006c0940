use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ComponentKind, FeatureTensor, Standardizer, FAILURE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::tcsmsb::TcsmsbModel;
use super::wmsdte::WmsdteModel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Wmsdte,
    Tcsmsb,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Wmsdte => "wmsdte",
            ModelKind::Tcsmsb => "tcsmsb",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wmsdte" => Ok(ModelKind::Wmsdte),
            "tcsmsb" => Ok(ModelKind::Tcsmsb),
            other => Err(Error::invalid(format!("unknown model '{other}' (expected wmsdte or tcsmsb)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Ensemble {
    Wmsdte(WmsdteModel),
    Tcsmsb(TcsmsbModel),
}

impl Ensemble {
    pub fn kind(&self) -> ModelKind {
        match self {
            Ensemble::Wmsdte(_) => ModelKind::Wmsdte,
            Ensemble::Tcsmsb(_) => ModelKind::Tcsmsb,
        }
    }

    pub fn failure_prob(&self, row: &[f64]) -> f64 {
        match self {
            Ensemble::Wmsdte(m) => m.failure_prob(row),
            Ensemble::Tcsmsb(m) => m.failure_prob(row),
        }
    }

    pub fn predict(&self, row: &[f64]) -> i8 {
        match self {
            Ensemble::Wmsdte(m) => m.predict(row),
            Ensemble::Tcsmsb(m) => m.predict(row),
        }
    }

    /// `(label, failure probability)` for every row of a design matrix.
    pub fn score_rows(&self, x: &Matrix) -> Vec<(i8, f64)> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                (self.predict(&row), self.failure_prob(&row))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    /// Mean of (P̂r_fail − 1[y = −1])².
    pub mse: f64,
}

impl Metrics {
    pub fn from_scores(scores: &[(i8, f64)], labels: &[i8]) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::invalid("evaluation needs a nonempty labeled set"));
        }
        let n = scores.len() as f64;
        let hits = scores.iter().zip(labels).filter(|((p, _), y)| p == *y).count();
        let mse = scores
            .iter()
            .zip(labels)
            .map(|((_, p), &y)| (p - if y == FAILURE { 1.0 } else { 0.0 }).powi(2))
            .sum::<f64>()
            / n;
        Ok(Self { n: scores.len(), accuracy: hits as f64 / n, mse })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W, model: &str, component: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "component", "n", "accuracy", "mse"])?;
        w.write_record([
            model.to_string(),
            component.to_string(),
            self.n.to_string(),
            format!("{:.6}", self.accuracy),
            format!("{:.6}", self.mse),
        ])?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Accuracy and probability MSE on a labeled, standardized tensor.
pub fn evaluate(model: &Ensemble, test: &FeatureTensor) -> Result<Metrics> {
    let scores = model.score_rows(&test.design_matrix());
    Metrics::from_scores(&scores, test.labels()?)
}

/// A trained ensemble with everything needed to score raw observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub component: ComponentKind,
    pub standardizer: Standardizer,
    pub site_weights: Vec<f64>,
    pub category_weights: Vec<f64>,
    /// Corpus size and failure count, for calibration.
    pub n_syn: usize,
    pub n_fail: usize,
    pub model: Ensemble,
}

impl ModelDocument {
    /// Raw (uncalibrated) failure probability from raw weather values and a raw driver.
    pub fn raw_failure_prob(&self, weather: &[f64], driver: f64) -> f64 {
        self.model.failure_prob(&self.standardizer.design_row(weather, Some(driver)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn digest(&self) -> Result<String> {
        Ok(crate::seed::digest_hex(self.to_json()?.as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Self = serde_json::from_str(&text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "model format version {} unsupported (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}
