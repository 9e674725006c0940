use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::TensorDims;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tree::ColumnLayout;

/// Cumulative-variance comparisons allow this much slack.
const GAMMA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// One group per (site, category) block.
    CategoryWise,
    /// One group per feature, spanning all sites.
    SiteWise,
}

impl Grouping {
    pub fn tag(self) -> &'static str {
        match self {
            Grouping::CategoryWise => "c-w",
            Grouping::SiteWise => "s-w",
        }
    }
}

/// Principal components retained for one column group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProjection {
    pub columns: Vec<usize>,
    pub mean: Vec<f64>,
    /// Descending, all of them.
    pub eigenvalues: Vec<f64>,
    /// `k` unit loading vectors over `columns`.
    pub loadings: Vec<Vec<f64>>,
}

impl GroupProjection {
    pub fn k(&self) -> usize {
        self.loadings.len()
    }

    pub fn explained(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total > 0.0 {
            self.eigenvalues[..self.k()].iter().sum::<f64>() / total
        } else {
            1.0
        }
    }

    fn project(&self, x: &Matrix, row: usize, c: usize) -> f64 {
        self.columns
            .iter()
            .zip(&self.mean)
            .zip(&self.loadings[c])
            .map(|((&j, &m), &l)| (x.get(row, j) - m) * l)
            .sum()
    }
}

/// Fitted group-wise PCA over the weather columns of a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaGroup {
    pub kind: Grouping,
    pub gamma: f64,
    pub groups: Vec<GroupProjection>,
    /// Layout of [`transform`](Self::transform) output.
    pub layout: ColumnLayout,
    /// Design columns copied through after the components.
    pub passthrough: Vec<usize>,
}

/// Smallest k whose leading eigenvalues explain at least `gamma` of the total.
pub fn retained_components(eigenvalues: &[f64], gamma: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return 1;
    }
    let mut acc = 0.0;
    for (k, &e) in eigenvalues.iter().enumerate() {
        acc += e;
        if acc / total >= gamma - GAMMA_SLACK {
            return k + 1;
        }
    }
    eigenvalues.len()
}

fn fit_group(x: &Matrix, rows: &[usize], columns: Vec<usize>, gamma: f64) -> Result<GroupProjection> {
    let p = columns.len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = columns
        .iter()
        .map(|&j| rows.iter().map(|&i| x.get(i, j)).sum::<f64>() / n)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let (ca, cb) = (x.col(columns[a]), x.col(columns[b]));
            let s: f64 = rows.iter().map(|&i| (ca[i] - mean[a]) * (cb[i] - mean[b])).sum::<f64>() / n;
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite covariance for columns {columns:?}")));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let k = retained_components(&eigenvalues, gamma);
    let loadings = order[..k]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v.iter().cloned().fold(0.0, |acc: f64, e| if e.abs() > acc.abs() { e } else { acc });
            if lead < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            v
        })
        .collect();
    Ok(GroupProjection { columns, mean, eigenvalues, loadings })
}

impl PcaGroup {
    /// Fits the grouping on `rows` of a design matrix whose first
    /// `dims.n_weather_columns()` columns are standardized weather.
    pub fn fit(x: &Matrix, rows: &[usize], dims: &TensorDims, kind: Grouping, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!("explained-variance threshold {gamma} outside (0,1]")));
        }
        if rows.is_empty() {
            return Err(Error::invalid("cannot fit PCA on zero rows"));
        }
        let n_weather = dims.n_weather_columns();
        let passthrough: Vec<usize> = (n_weather..x.cols()).collect();
        let mut groups = Vec::new();
        let mut blocks: Vec<Vec<Vec<usize>>>;
        let mut next = 0;
        let mut take = |k: usize| {
            let out: Vec<usize> = (next..next + k).collect();
            next += k;
            out
        };
        match kind {
            Grouping::CategoryWise => {
                blocks = vec![vec![Vec::new(); dims.n_categories()]; dims.n_sites];
                for d in 0..dims.n_sites {
                    for m in 0..dims.n_categories() {
                        let g = fit_group(x, rows, dims.block(d, m), gamma)?;
                        blocks[d][m] = take(g.k());
                        groups.push(g);
                    }
                }
            }
            Grouping::SiteWise => {
                blocks = vec![vec![Vec::new(); dims.n_categories()]];
                let w_count = dims.features_per_site();
                for w in 0..w_count {
                    let cols = (0..dims.n_sites).map(|d| d * w_count + w).collect();
                    let g = fit_group(x, rows, cols, gamma)?;
                    let m = dims.category_of(w);
                    blocks[0][m].extend(take(g.k()));
                    groups.push(g);
                }
            }
        }
        let always = (next..next + passthrough.len()).collect();
        Ok(Self { kind, gamma, groups, layout: ColumnLayout::new(blocks, always), passthrough })
    }

    pub fn n_components(&self) -> usize {
        self.groups.iter().map(GroupProjection::k).sum()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_components() + self.passthrough.len()
    }

    /// Component scores for every row, then the passthrough columns.
    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut cols = Vec::with_capacity(self.n_outputs());
        for g in &self.groups {
            for c in 0..g.k() {
                cols.push((0..x.rows()).map(|i| g.project(x, i, c)).collect());
            }
        }
        for &j in &self.passthrough {
            cols.push(x.col(j).to_vec());
        }
        Matrix::from_columns(x.rows(), cols).expect("consistent lengths")
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_outputs());
        for g in &self.groups {
            for l in &g.loadings {
                out.push(g.columns.iter().zip(&g.mean).zip(l).map(|((&j, &m), &v)| (row[j] - m) * v).sum());
            }
        }
        out.extend(self.passthrough.iter().map(|&j| row[j]));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn dims1(width: usize) -> TensorDims {
        TensorDims { n_sites: 1, category_sizes: vec![width] }
    }

    fn fit(cols: Vec<Vec<f64>>, gamma: f64) -> PcaGroup {
        let n = cols[0].len();
        let w = cols.len();
        let x = Matrix::from_columns(n, cols).unwrap();
        PcaGroup::fit(&x, &(0..n).collect::<Vec<_>>(), &dims1(w), Grouping::CategoryWise, gamma).unwrap()
    }

    #[test]
    fn identical_columns_need_one_component() {
        let c: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let p = fit(vec![c.clone(), c.clone(), c], 0.9);
        assert_eq!(p.groups[0].k(), 1);
        assert!(p.groups[0].loadings[0].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn correlation_point_eight() {
        assert_eq!(retained_components(&[1.8, 0.2], 0.9), 1);
        assert_eq!(retained_components(&[1.0, 1.0, 1.0], 1.0), 3);
        let mut rng = crate::seed::rng(1);
        let n = 20_000;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let u: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            a.push(u);
            b.push(0.8 * u + 0.6 * v);
        }
        let p = fit(vec![a, b], 0.85);
        let e = &p.groups[0].eigenvalues;
        assert_relative_eq!(e[0] / (e[0] + e[1]), 0.9, epsilon = 0.01);
        assert_eq!(p.groups[0].k(), 1);
    }

    #[test]
    fn independent_columns_full_rank() {
        let mut rng = crate::seed::rng(2);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..500).map(|_| rng.sample(StandardNormal)).collect()).collect();
        assert_eq!(fit(cols, 1.0).groups[0].k(), 4);
    }

    #[test]
    fn orthonormal_and_reconstruction_bound() {
        let mut rng = crate::seed::rng(3);
        let n = 400;
        let base: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|j| base.iter().map(|b| b * (1.0 + j as f64 * 0.1) + 0.4 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        for gamma in [0.6, 0.8, 0.9, 0.99] {
            let p = fit(cols.clone(), gamma);
            let g = &p.groups[0];
            for a in 0..g.k() {
                for b in 0..g.k() {
                    let dot: f64 = g.loadings[a].iter().zip(&g.loadings[b]).map(|(x, y)| x * y).sum();
                    assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-8);
                }
            }
            let x = Matrix::from_columns(n, cols.clone()).unwrap();
            let mut loss = 0.0;
            for i in 0..n {
                let scores = p.transform_row(&x.row(i));
                for (j, m) in g.mean.iter().enumerate() {
                    let back: f64 = m + (0..g.k()).map(|c| scores[c] * g.loadings[c][j]).sum::<f64>();
                    loss += (x.get(i, j) - back).powi(2);
                }
            }
            loss /= n as f64;
            let total: f64 = g.eigenvalues.iter().sum();
            assert!(loss <= (1.0 - gamma) * total + 1e-8, "gamma {gamma}: {loss} vs {total}");
        }
    }

    #[test]
    fn site_wise_layout() {
        let dims = TensorDims { n_sites: 2, category_sizes: vec![2, 1] };
        let mut rng = crate::seed::rng(4);
        let cols: Vec<Vec<f64>> = (0..7).map(|_| (0..100).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let x = Matrix::from_columns(100, cols).unwrap();
        let rows: Vec<usize> = (0..100).collect();
        let p = PcaGroup::fit(&x, &rows, &dims, Grouping::SiteWise, 1.0).unwrap();
        assert_eq!(p.groups.len(), 3);
        assert_eq!(p.groups[0].columns, vec![0, 3]);
        assert_eq!(p.layout.blocks[0][0], vec![0, 1, 2, 3]);
        assert_eq!(p.layout.blocks[0][1], vec![4, 5]);
        assert_eq!(p.layout.always, vec![6]);
        let t = p.transform(&x);
        assert_eq!(t.col(6), x.col(6));
        assert_eq!(t.row(5), p.transform_row(&x.row(5)));
    }
}
