use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTensor, FAILURE, NORMAL};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::tree::{SamplingPlan, Tree, TreeConfig};

use super::pca::{Grouping, PcaGroup};

/// Leaf probabilities are clipped to `[EPS_P, 1 - EPS_P]` before taking log-odds.
pub const EPS_P: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcsmsbConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub sites_per_split: usize,
    pub categories_per_split: usize,
    pub gamma_cw: f64,
    pub gamma_sw: f64,
    pub seed: u64,
}

impl Default for TcsmsbConfig {
    fn default() -> Self {
        Self {
            rounds: 150,
            max_depth: 8,
            min_samples_split: 2,
            sites_per_split: 2,
            categories_per_split: 2,
            gamma_cw: 0.9,
            gamma_sw: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLearner {
    pub grouping: Grouping,
    pub tree: Tree,
    pub error_cw: f64,
    pub error_sw: f64,
}

impl WeakLearner {
    /// ½·ln(p/(1−p)) of the clipped weighted class +1 share at the leaf.
    pub fn confidence(&self, row: &[f64]) -> f64 {
        psi(self.tree.leaf(row).weighted_pos_share)
    }
}

pub fn psi(p: f64) -> f64 {
    let p = p.clamp(EPS_P, 1.0 - EPS_P);
    0.5 * (p / (1.0 - p)).ln()
}

/// Failure probability from the summed confidences: `1 − 1/(1+e^{−2Σψ})`.
pub fn failure_prob_from_score(score: f64) -> f64 {
    crate::logistic::sigmoid(-2.0 * score)
}

/// Real-AdaBoost over category-wise and site-wise PCA learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcsmsbModel {
    pub config: TcsmsbConfig,
    pub pca_cw: PcaGroup,
    pub pca_sw: PcaGroup,
    pub site_weights: Vec<f64>,
    pub category_weights: Vec<f64>,
    pub learners: Vec<WeakLearner>,
    /// Sample weights after the last round.
    #[serde(skip)]
    pub final_weights: Vec<f64>,
}

fn weighted_error(tree: &Tree, x: &Matrix, labels: &[i8], w: &[f64]) -> f64 {
    let mut row = vec![0.0; x.cols()];
    (0..x.rows())
        .filter(|&i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x.get(i, j);
            }
            tree.predict(&row) != labels[i]
        })
        .map(|i| w[i])
        .sum()
}

impl TcsmsbModel {
    pub fn fit(train: &FeatureTensor, site_weights: &[f64], category_weights: &[f64], cfg: &TcsmsbConfig) -> Result<Self> {
        let labels = train.labels()?;
        let n = train.n_samples();
        if n == 0 {
            return Err(Error::invalid("empty training set"));
        }
        let fails = labels.iter().filter(|&&l| l == FAILURE).count();
        if fails == 0 || fails == n {
            return Err(Error::data("boosting needs both classes in the training set"));
        }
        let x = train.design_matrix();
        let all: Vec<usize> = (0..n).collect();
        let pca_cw = PcaGroup::fit(&x, &all, &train.dims, Grouping::CategoryWise, cfg.gamma_cw)?;
        let pca_sw = PcaGroup::fit(&x, &all, &train.dims, Grouping::SiteWise, cfg.gamma_sw)?;
        let x_cw = pca_cw.transform(&x);
        let x_sw = pca_sw.transform(&x);
        let m = category_weights.len();
        let plan_cw = SamplingPlan::new(site_weights.to_vec(), category_weights.to_vec(), cfg.sites_per_split, m)?;
        let plan_sw = SamplingPlan::new(vec![1.0], category_weights.to_vec(), 1, cfg.categories_per_split)?;

        let mut w = train.sample_weights.clone();
        let mut learners = Vec::with_capacity(cfg.rounds);
        for j in 0..cfg.rounds {
            let tc = |plan: &SamplingPlan, label: &str| TreeConfig {
                max_depth: cfg.max_depth,
                min_samples_split: cfg.min_samples_split,
                plan: plan.clone(),
                seed: seed::derive_indexed(cfg.seed, label, j as u64),
            };
            let (cw, sw) = rayon::join(
                || -> Result<(Tree, f64)> {
                    let t = Tree::grow(&x_cw, labels, &w, &all, &pca_cw.layout, &tc(&plan_cw, "tcsmsb-cw"))?;
                    let e = weighted_error(&t, &x_cw, labels, &w);
                    Ok((t, e))
                },
                || -> Result<(Tree, f64)> {
                    let t = Tree::grow(&x_sw, labels, &w, &all, &pca_sw.layout, &tc(&plan_sw, "tcsmsb-sw"))?;
                    let e = weighted_error(&t, &x_sw, labels, &w);
                    Ok((t, e))
                },
            );
            let ((t_cw, e_cw), (t_sw, e_sw)) = (cw?, sw?);
            let (grouping, tree, xm) = if e_sw < e_cw {
                (Grouping::SiteWise, t_sw, &x_sw)
            } else {
                (Grouping::CategoryWise, t_cw, &x_cw)
            };
            let learner = WeakLearner { grouping, tree, error_cw: e_cw, error_sw: e_sw };
            let mut row = vec![0.0; xm.cols()];
            for i in 0..n {
                for (k, r) in row.iter_mut().enumerate() {
                    *r = xm.get(i, k);
                }
                let y = if labels[i] == NORMAL { 1.0 } else { -1.0 };
                w[i] *= (-y * learner.confidence(&row)).exp();
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::numerical(format!("sample weights degenerate in boosting round {j}")));
            }
            w.iter_mut().for_each(|v| *v /= total);
            debug_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            learners.push(learner);
        }
        Ok(Self {
            config: cfg.clone(),
            pca_cw,
            pca_sw,
            site_weights: site_weights.to_vec(),
            category_weights: category_weights.to_vec(),
            learners,
            final_weights: w,
        })
    }

    /// Σψ for a standardized design row.
    pub fn score(&self, row: &[f64]) -> f64 {
        let cw = self.pca_cw.transform_row(row);
        let sw = self.pca_sw.transform_row(row);
        self.learners
            .iter()
            .map(|l| match l.grouping {
                Grouping::CategoryWise => l.confidence(&cw),
                Grouping::SiteWise => l.confidence(&sw),
            })
            .sum()
    }

    pub fn failure_prob(&self, row: &[f64]) -> f64 {
        failure_prob_from_score(self.score(row))
    }

    pub fn predict(&self, row: &[f64]) -> i8 {
        if self.failure_prob(row) >= 0.5 {
            FAILURE
        } else {
            NORMAL
        }
    }
}
