use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTensor, FAILURE, NORMAL};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::tree::{ColumnLayout, SamplingPlan, Tree, TreeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmsdteConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub sites_per_split: usize,
    pub categories_per_split: usize,
    /// Bootstrap size per tree; `None` uses the training size.
    pub bootstrap_size: Option<usize>,
    pub seed: u64,
}

impl Default for WmsdteConfig {
    fn default() -> Self {
        Self {
            n_trees: 150,
            max_depth: 8,
            min_samples_split: 2,
            sites_per_split: 2,
            categories_per_split: 2,
            bootstrap_size: None,
            seed: 0,
        }
    }
}

/// Bagged weighted trees; probability is the mean leaf failure share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmsdteModel {
    pub config: WmsdteConfig,
    pub plan: SamplingPlan,
    pub layout: ColumnLayout,
    pub trees: Vec<Tree>,
}

impl WmsdteModel {
    /// Fits on the design matrix of `train` with the given site and category weights.
    pub fn fit(train: &FeatureTensor, site_weights: &[f64], category_weights: &[f64], cfg: &WmsdteConfig) -> Result<Self> {
        let plan = SamplingPlan::new(
            site_weights.to_vec(),
            category_weights.to_vec(),
            cfg.sites_per_split,
            cfg.categories_per_split,
        )?;
        let x = train.design_matrix();
        Self::fit_matrix(&x, train.labels()?, &train.sample_weights, train.column_layout(), plan, cfg)
    }

    /// Unweighted random-forest baseline: every design column is its own
    /// group, drawn uniformly, ⌈√p⌉ candidates per split.
    pub fn fit_random_forest(train: &FeatureTensor, cfg: &WmsdteConfig) -> Result<Self> {
        let x = train.design_matrix();
        let p = x.cols();
        let mtry = ((p as f64).sqrt().ceil() as usize).clamp(1, p);
        let plan = SamplingPlan::uniform(p, 1, mtry, 1)?;
        let cfg = WmsdteConfig { sites_per_split: mtry, categories_per_split: 1, ..cfg.clone() };
        Self::fit_matrix(&x, train.labels()?, &train.sample_weights, ColumnLayout::flat(p), plan, &cfg)
    }

    pub fn fit_matrix(
        x: &Matrix,
        labels: &[i8],
        weights: &[f64],
        layout: ColumnLayout,
        plan: SamplingPlan,
        cfg: &WmsdteConfig,
    ) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::invalid("empty training set"));
        }
        if cfg.n_trees == 0 {
            return Err(Error::invalid("need at least one tree"));
        }
        let n_h = cfg.bootstrap_size.unwrap_or(n);
        if n_h == 0 {
            return Err(Error::invalid("bootstrap size must be positive"));
        }
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|j| {
                let mut rng = seed::rng(seed::derive_indexed(cfg.seed, "wmsdte-bootstrap", j as u64));
                let rows: Vec<usize> = (0..n_h).map(|_| rng.random_range(0..n)).collect();
                let tc = TreeConfig {
                    max_depth: cfg.max_depth,
                    min_samples_split: cfg.min_samples_split,
                    plan: plan.clone(),
                    seed: seed::derive_indexed(cfg.seed, "wmsdte-tree", j as u64),
                };
                Tree::grow(x, labels, weights, &rows, &layout, &tc)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config: cfg.clone(), plan, layout, trees })
    }

    /// Majority vote; a split vote predicts failure.
    pub fn predict(&self, row: &[f64]) -> i8 {
        let pos = self.trees.iter().filter(|t| t.predict(row) == NORMAL).count();
        if 2 * pos > self.trees.len() {
            NORMAL
        } else {
            FAILURE
        }
    }

    pub fn failure_prob(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.failure_prob(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::LeafStats;
    use approx::assert_relative_eq;

    fn toy(n: usize, seed: u64) -> (Matrix, Vec<i8>) {
        let mut rng = crate::seed::rng(seed);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let labels = (0..n)
            .map(|i| if cols[0][i] + 0.3 * rng.random::<f64>() > 0.65 { -1 } else { 1 })
            .collect();
        (Matrix::from_columns(n, cols).unwrap(), labels)
    }

    fn fit(x: &Matrix, l: &[i8], trees: usize, seed: u64, bootstrap: Option<usize>) -> WmsdteModel {
        let n = x.rows();
        let cfg = WmsdteConfig { n_trees: trees, max_depth: 4, bootstrap_size: bootstrap, seed, ..Default::default() };
        let plan = SamplingPlan::uniform(3, 1, 2, 1).unwrap();
        WmsdteModel::fit_matrix(x, l, &vec![1.0 / n as f64; n], ColumnLayout::flat(3), plan, &cfg).unwrap()
    }

    #[test]
    fn probability_is_mean_of_tree_leaves() {
        let (x, l) = toy(20, 1);
        let m = fit(&x, &l, 3, 2, None);
        for i in 0..20 {
            let row = x.row(i);
            let manual: f64 = m.trees.iter().map(|t| t.leaf(&row).failure_share).sum::<f64>() / 3.0;
            assert_relative_eq!(m.failure_prob(&row), manual, epsilon = 1e-15);
        }
    }

    #[test]
    fn vote_ties_go_to_failure() {
        let leaf = |pos: f64| {
            Tree {
                nodes: vec![crate::tree::Node::Leaf(LeafStats {
                    n_pos: 1,
                    n_neg: 1,
                    weighted_pos_share: pos,
                    failure_share: 1.0 - pos,
                })],
            }
        };
        let (x, l) = toy(10, 1);
        let mut m = fit(&x, &l, 2, 0, None);
        m.trees = vec![leaf(0.8), leaf(0.4)];
        assert_eq!(m.predict(&[0.0; 3]), FAILURE);
        assert_relative_eq!(m.failure_prob(&[0.0; 3]), 0.4);
        m.trees = vec![leaf(0.8), leaf(0.6)];
        assert_eq!(m.predict(&[0.0; 3]), NORMAL);
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let (x, l) = toy(80, 3);
        let a = fit(&x, &l, 7, 11, None);
        let b = fit(&x, &l, 7, 11, None);
        assert_eq!(a, b);
        let mut r = a.clone();
        r.trees.reverse();
        for i in 0..80 {
            assert_relative_eq!(a.failure_prob(&x.row(i)), r.failure_prob(&x.row(i)), epsilon = 1e-12);
        }
    }

    #[test]
    fn single_exhaustive_tree_is_cart() {
        let (x, l) = toy(50, 4);
        let n = 50;
        let cfg = WmsdteConfig { n_trees: 1, max_depth: 4, seed: 1, ..Default::default() };
        let plan = SamplingPlan::uniform(3, 1, 3, 1).unwrap();
        let w = vec![1.0 / n as f64; n];
        let m = WmsdteModel::fit_matrix(&x, &l, &w, ColumnLayout::flat(3), plan.clone(), &cfg).unwrap();
        let mut rng = seed::rng(seed::derive_indexed(1, "wmsdte-bootstrap", 0));
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let tc = TreeConfig { max_depth: 4, min_samples_split: 2, plan, seed: 0 };
        let cart = Tree::grow(&x, &l, &w, &rows, &ColumnLayout::flat(3), &tc).unwrap();
        for i in 0..n {
            assert_eq!(m.trees[0].failure_prob(&x.row(i)), cart.failure_prob(&x.row(i)));
        }
    }

    #[test]
    fn bagging_variance_shrinks_with_more_trees() {
        let (x, l) = toy(120, 5);
        let probe: Vec<Vec<f64>> = (0..10).map(|i| x.row(i * 7)).collect();
        let variance = |trees: usize| {
            let fits: Vec<Vec<f64>> = (0..20)
                .map(|s| {
                    let m = fit(&x, &l, trees, 100 + s, None);
                    probe.iter().map(|r| m.failure_prob(r)).collect()
                })
                .collect();
            (0..probe.len())
                .map(|k| {
                    let v: Vec<f64> = fits.iter().map(|f| f[k]).collect();
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    v.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / v.len() as f64
                })
                .sum::<f64>()
        };
        let (v1, v10, v50) = (variance(1), variance(10), variance(50));
        assert!(v1 >= v10 && v10 >= v50, "{v1} {v10} {v50}");
    }
}
