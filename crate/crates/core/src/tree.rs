//! Weighted CART for ±1 labels with site/category candidate sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FAILURE, NORMAL};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Two impurities closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Groups design-matrix columns into (site, category) blocks. `always`
/// columns join every candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLayout {
    /// `blocks[d][m]` lists the columns of category `m` at site `d`.
    pub blocks: Vec<Vec<Vec<usize>>>,
    pub always: Vec<usize>,
}

impl ColumnLayout {
    pub fn new(blocks: Vec<Vec<Vec<usize>>>, always: Vec<usize>) -> Self {
        Self { blocks, always }
    }

    /// Every column as its own site within a single category.
    pub fn flat(n_columns: usize) -> Self {
        Self::new((0..n_columns).map(|c| vec![vec![c]]).collect(), Vec::new())
    }

    pub fn n_sites(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_categories(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.len())
    }

    pub fn all_columns(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.blocks.iter().flatten().flatten().chain(&self.always).copied().collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    fn check(&self) -> Result<()> {
        let m = self.n_categories();
        if self.blocks.is_empty() || m == 0 {
            return Err(Error::invalid("column layout needs at least one site and one category"));
        }
        if self.blocks.iter().any(|b| b.len() != m) {
            return Err(Error::invalid("every site must list the same categories"));
        }
        Ok(())
    }
}

/// Probability vectors over sites and categories with per-split draw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub site_weights: Vec<f64>,
    pub category_weights: Vec<f64>,
    pub sites_per_split: usize,
    pub categories_per_split: usize,
}

impl SamplingPlan {
    pub fn new(
        site_weights: Vec<f64>,
        category_weights: Vec<f64>,
        sites_per_split: usize,
        categories_per_split: usize,
    ) -> Result<Self> {
        for (name, w, k) in [
            ("site", &site_weights, sites_per_split),
            ("category", &category_weights, categories_per_split),
        ] {
            if w.is_empty() {
                return Err(Error::invalid(format!("empty {name} weight vector")));
            }
            if let Some(bad) = w.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!("{name} weight {bad} is not strictly positive")));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("{name} weights sum to {s}, not 1")));
            }
            if k < 1 || k > w.len() {
                return Err(Error::invalid(format!(
                    "{name} draws per split {k} outside 1..={}",
                    w.len()
                )));
            }
        }
        Ok(Self { site_weights, category_weights, sites_per_split, categories_per_split })
    }

    pub fn uniform(n_sites: usize, n_categories: usize, sites_per_split: usize, categories_per_split: usize) -> Result<Self> {
        Self::new(
            vec![1.0 / n_sites as f64; n_sites],
            vec![1.0 / n_categories as f64; n_categories],
            sites_per_split,
            categories_per_split,
        )
    }

    fn check_layout(&self, layout: &ColumnLayout) -> Result<()> {
        layout.check()?;
        if layout.n_sites() != self.site_weights.len() || layout.n_categories() != self.category_weights.len() {
            return Err(Error::invalid(format!(
                "plan covers {}×{} site/category blocks, layout has {}×{}",
                self.site_weights.len(),
                self.category_weights.len(),
                layout.n_sites(),
                layout.n_categories()
            )));
        }
        Ok(())
    }
}

/// Draws `k` distinct indices: each draw is proportional to the weights of
/// the items not yet taken.
pub fn sample_without_replacement(weights: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(weights.len()) {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, &i) in remaining.iter().enumerate() {
            u -= weights[i];
            if u < 0.0 {
                pick = pos;
                break;
            }
        }
        out.push(remaining.remove(pick));
    }
    out
}

/// Candidate columns for one split, sorted ascending.
pub fn sample_candidates(layout: &ColumnLayout, plan: &SamplingPlan, rng: &mut impl Rng) -> Vec<usize> {
    let sites = sample_without_replacement(&plan.site_weights, plan.sites_per_split, rng);
    let cats = sample_without_replacement(&plan.category_weights, plan.categories_per_split, rng);
    let mut c: Vec<usize> = layout.always.clone();
    for &d in &sites {
        for &m in &cats {
            c.extend_from_slice(&layout.blocks[d][m]);
        }
    }
    c.sort_unstable();
    c.dedup();
    c
}

/// Weighted share of class +1 among `indices`.
pub fn weighted_class_share(indices: &[usize], labels: &[i8], weights: &[f64]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::invalid("empty node"));
    }
    let (mut pos, mut tot) = (0.0, 0.0);
    for &i in indices {
        tot += weights[i];
        if labels[i] == NORMAL {
            pos += weights[i];
        }
    }
    if !(tot > 0.0) {
        return Err(Error::invalid("node carries zero total weight"));
    }
    Ok(pos / tot)
}

#[inline]
pub fn gini(pr: f64) -> f64 {
    2.0 * pr * (1.0 - pr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Count-weighted child Gini.
    pub impurity: f64,
}

fn child_gini(pos_w: f64, tot_w: f64) -> f64 {
    if tot_w > 0.0 {
        gini(pos_w / tot_w)
    } else {
        0.0
    }
}

/// Midpoint between consecutive distinct values `a < b`, nudged so that
/// `a < τ ≤ b` survives rounding.
#[inline]
pub fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t > a {
        t
    } else {
        b
    }
}

/// Minimizes `(|L|/|I|)·GI_L + (|R|/|I|)·GI_R` over the candidate columns and
/// all midpoints between consecutive distinct values. Ties go to the lower
/// column, then the lower threshold. `None` when every candidate is
/// constant on the node.
pub fn best_split(
    x: &Matrix,
    indices: &[usize],
    candidates: &[usize],
    labels: &[i8],
    weights: &[f64],
) -> Option<SplitChoice> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let (mut tot_pos, mut tot_w) = (0.0, 0.0);
    for &i in indices {
        tot_w += weights[i];
        if labels[i] == NORMAL {
            tot_pos += weights[i];
        }
    }
    let mut best: Option<SplitChoice> = None;
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    for &f in &cands {
        let col = x.col(f);
        sorted.clear();
        sorted.extend(indices.iter().map(|&i| (col[i], i)));
        sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let (mut lp, mut lw) = (0.0, 0.0);
        for k in 0..n - 1 {
            let (v, i) = sorted[k];
            lw += weights[i];
            if labels[i] == NORMAL {
                lp += weights[i];
            }
            let next = sorted[k + 1].0;
            if next <= v {
                continue;
            }
            let nl = (k + 1) as f64;
            let q = nl / nf * child_gini(lp, lw) + (nf - nl) / nf * child_gini(tot_pos - lp, tot_w - lw);
            if best.is_none_or(|b| q < b.impurity - TIE_TOLERANCE) {
                best = Some(SplitChoice { feature: f, threshold: midpoint(v, next), impurity: q });
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Weighted share of class +1.
    pub weighted_pos_share: f64,
    /// Unweighted share of class −1.
    pub failure_share: f64,
}

impl LeafStats {
    fn of(indices: &[usize], labels: &[i8], weights: &[f64]) -> Self {
        let n_neg = indices.iter().filter(|&&i| labels[i] == FAILURE).count();
        let n_pos = indices.len() - n_neg;
        let weighted_pos_share = weighted_class_share(indices, labels, weights)
            .unwrap_or(n_pos as f64 / indices.len().max(1) as f64);
        Self {
            n_pos,
            n_neg,
            weighted_pos_share,
            failure_share: n_neg as f64 / indices.len().max(1) as f64,
        }
    }

    /// +1 when the weighted class +1 share exceeds one half; ties predict −1.
    pub fn label(&self) -> i8 {
        if self.weighted_pos_share > 0.5 {
            NORMAL
        } else {
            FAILURE
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(LeafStats),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub plan: SamplingPlan,
    pub seed: u64,
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::invalid("max depth must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("minimum samples to split must be at least 2"));
        }
        Ok(())
    }
}

/// Node list in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Grows a tree on `rows` of `x` (duplicates allowed).
    pub fn grow(
        x: &Matrix,
        labels: &[i8],
        weights: &[f64],
        rows: &[usize],
        layout: &ColumnLayout,
        cfg: &TreeConfig,
    ) -> Result<Tree> {
        cfg.validate()?;
        cfg.plan.check_layout(layout)?;
        if rows.is_empty() {
            return Err(Error::invalid("cannot grow a tree on zero rows"));
        }
        if labels.len() != x.rows() || weights.len() != x.rows() {
            return Err(Error::invalid("labels/weights length differs from row count"));
        }
        let mut rng = crate::seed::rng(cfg.seed);
        let mut nodes = Vec::new();
        grow_node(&mut nodes, x, labels, weights, rows.to_vec(), 0, layout, cfg, &mut rng);
        Ok(Tree { nodes })
    }

    pub fn leaf(&self, row: &[f64]) -> &LeafStats {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf(s) => return s,
                Node::Split { feature, threshold, left, right } => {
                    k = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> i8 {
        self.leaf(row).label()
    }

    pub fn failure_prob(&self, row: &[f64]) -> f64 {
        self.leaf(row).failure_share
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match &nodes[k] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[allow(clippy::too_many_arguments)]
fn grow_node(
    nodes: &mut Vec<Node>,
    x: &Matrix,
    labels: &[i8],
    weights: &[f64],
    idx: Vec<usize>,
    depth: usize,
    layout: &ColumnLayout,
    cfg: &TreeConfig,
    rng: &mut impl Rng,
) -> usize {
    let me = nodes.len();
    let stats = LeafStats::of(&idx, labels, weights);
    nodes.push(Node::Leaf(stats));
    if depth >= cfg.max_depth || idx.len() < cfg.min_samples_split || stats.n_pos == 0 || stats.n_neg == 0 {
        return me;
    }
    let candidates = sample_candidates(layout, &cfg.plan, rng);
    let Some(split) = best_split(x, &idx, &candidates, labels, weights) else {
        return me;
    };
    let parent = gini(stats.weighted_pos_share);
    if split.impurity > parent + TIE_TOLERANCE {
        return me;
    }
    let col = x.col(split.feature);
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] < split.threshold);
    drop(idx);
    let left = grow_node(nodes, x, labels, weights, l, depth + 1, layout, cfg, rng);
    let right = grow_node(nodes, x, labels, weights, r, depth + 1, layout, cfg, rng);
    nodes[me] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
    me
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn one_feature(values: &[f64]) -> Matrix {
        Matrix::from_columns(values.len(), vec![values.to_vec()]).unwrap()
    }

    fn exhaustive(n_cols: usize, seed: u64) -> TreeConfig {
        TreeConfig {
            max_depth: 64,
            min_samples_split: 2,
            plan: SamplingPlan::uniform(n_cols, 1, n_cols, 1).unwrap(),
            seed,
        }
    }

    #[test]
    fn class_share() {
        assert_eq!(weighted_class_share(&[0, 1], &[1, -1], &[0.5, 0.5]).unwrap(), 0.5);
        assert_relative_eq!(weighted_class_share(&[0, 1, 2], &[1, -1, -1], &[1.0; 3]).unwrap(), 1.0 / 3.0);
        assert_relative_eq!(weighted_class_share(&[0, 1], &[1, -1], &[0.9, 0.1]).unwrap(), 0.9);
        assert!(weighted_class_share(&[], &[], &[]).is_err());
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(0.5), 0.5);
        assert_eq!(gini(0.0), 0.0);
        assert_eq!(gini(0.25), 0.375);
    }

    #[test]
    fn separable_one_d() {
        let x = one_feature(&[1.0, 2.0, 3.0, 4.0]);
        let s = best_split(&x, &[0, 1, 2, 3], &[0], &[-1, -1, 1, 1], &[0.25; 4]).unwrap();
        assert_eq!(s.threshold, 2.5);
        assert_eq!(s.impurity, 0.0);
    }

    #[test]
    fn constant_candidates_signal_leaf() {
        let x = one_feature(&[1.0, 1.0, 1.0]);
        assert!(best_split(&x, &[0, 1, 2], &[0], &[-1, 1, 1], &[1.0; 3]).is_none());
    }

    #[test]
    fn stump_and_full_tree() {
        let x = one_feature(&[1.0, 2.0, 3.0, 4.0]);
        let labels = [-1, -1, 1, 1];
        let layout = ColumnLayout::flat(1);
        let cfg = TreeConfig { max_depth: 1, ..exhaustive(1, 0) };
        let t = Tree::grow(&x, &labels, &[0.25; 4], &[0, 1, 2, 3], &layout, &cfg).unwrap();
        assert_eq!(t.depth(), 1);
        for i in 0..4 {
            assert_eq!(t.predict(&[x.get(i, 0)]), labels[i]);
        }

        let mut rng = crate::seed::rng(5);
        let n = 40;
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let labels: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let x = Matrix::from_columns(n, cols).unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let t = Tree::grow(&x, &labels, &vec![1.0 / n as f64; n], &rows, &ColumnLayout::flat(3), &exhaustive(3, 1)).unwrap();
        for i in 0..n {
            let leaf = t.leaf(&x.row(i));
            assert!(leaf.n_pos == 0 || leaf.n_neg == 0);
            assert_eq!(t.predict(&x.row(i)), labels[i]);
        }
    }

    #[test]
    fn deterministic_serialization() {
        let mut rng = crate::seed::rng(2);
        let n = 60;
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let labels: Vec<i8> = (0..n).map(|i| if cols[0][i] + cols[2][i] > 1.0 { 1 } else { -1 }).collect();
        let x = Matrix::from_columns(n, cols).unwrap();
        let layout = ColumnLayout::new(vec![vec![vec![0], vec![1]], vec![vec![2], vec![3]]], vec![]);
        let cfg = TreeConfig {
            max_depth: 5,
            min_samples_split: 2,
            plan: SamplingPlan::uniform(2, 2, 1, 1).unwrap(),
            seed: 9,
        };
        let rows: Vec<usize> = (0..n).collect();
        let w = vec![1.0 / n as f64; n];
        let a = Tree::grow(&x, &labels, &w, &rows, &layout, &cfg).unwrap();
        let b = Tree::grow(&x, &labels, &w, &rows, &layout, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(Tree::from_json(&a.to_json()).unwrap(), a);
        assert!(a.depth() <= 5);
    }

    #[test]
    fn candidate_cardinality() {
        let schema = crate::dataset::fixtures::default_schema();
        let dims = schema.dims();
        let blocks = (0..dims.n_sites)
            .map(|d| (0..dims.n_categories()).map(|m| dims.block(d, m)).collect())
            .collect();
        let layout = ColumnLayout::new(blocks, vec![]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let all = SamplingPlan::uniform(4, 4, 4, 4).unwrap();
        assert_eq!(sample_candidates(&layout, &all, &mut rng).len(), 72);
        let one = SamplingPlan::uniform(4, 4, 1, 1).unwrap();
        for _ in 0..50 {
            let c = sample_candidates(&layout, &one, &mut rng);
            assert!(c.len() == 4 || c.len() == 5);
            let site = c[0] / 18;
            assert!(c.iter().all(|&j| j / 18 == site));
        }
    }

    #[test]
    fn dominant_site_frequency() {
        let eps = 1e-3;
        let plan = SamplingPlan::new(vec![1.0 - eps, eps / 2.0, eps / 2.0], vec![1.0], 1, 1).unwrap();
        let layout = ColumnLayout::new(vec![vec![vec![0]], vec![vec![1]], vec![vec![2]]], vec![]);
        let mut rng = crate::seed::rng(4);
        let hits = (0..10_000)
            .filter(|_| sample_candidates(&layout, &plan, &mut rng) == vec![0])
            .count();
        assert!(hits as f64 / 1e4 >= 0.99, "{hits}");
    }

    #[test]
    fn plan_validation() {
        assert!(SamplingPlan::new(vec![0.5, 0.5], vec![1.0], 3, 1).is_err());
        assert!(SamplingPlan::new(vec![0.0, 1.0], vec![1.0], 1, 1).is_err());
        assert!(SamplingPlan::new(vec![0.4, 0.5], vec![1.0], 1, 1).is_err());
    }
}
