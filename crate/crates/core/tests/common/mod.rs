//! Oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relgrid::dataset::NORMAL;
use relgrid::grid::{build_program, random_feeder, CostWeights, EensModel, UnreliabilityParams};
use relgrid::logistic::LogisticCurve;
use relgrid::matrix::Matrix;
use relgrid::tree::{best_split, gini, SplitChoice};

/// A random tree node: values on a coarse grid so ties and constant
/// columns occur, random labels and positive weights.
pub struct RandomNode {
    pub x: Matrix,
    pub labels: Vec<i8>,
    pub weights: Vec<f64>,
    pub indices: Vec<usize>,
    pub candidates: Vec<usize>,
}

pub fn random_node(rng: &mut ChaCha8Rng) -> RandomNode {
    let n = rng.random_range(1..=50);
    let p = rng.random_range(1..=5);
    let levels = rng.random_range(1..=8);
    let columns = (0..p)
        .map(|_| (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5 - 1.0).collect())
        .collect();
    let x = Matrix::from_columns(n, columns).unwrap();
    let labels = (0..n).map(|_| if rng.random_bool(0.4) { -1 } else { 1 }).collect();
    let weights = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    // a random subset of rows forms the node
    let indices: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.8)).collect();
    let candidates: Vec<usize> = (0..p).filter(|_| rng.random_bool(0.7)).collect();
    RandomNode { x, labels, weights, indices, candidates }
}

/// Exhaustive enumeration: every candidate column and every threshold
/// strictly between two observed values, children recounted from scratch.
/// Same tie rule as the production search: lowest column, then lowest threshold.
pub fn exhaustive_split(node: &RandomNode) -> Option<SplitChoice> {
    let n = node.indices.len();
    if n < 2 {
        return None;
    }
    let mut cands = node.candidates.clone();
    cands.sort_unstable();
    cands.dedup();
    let mut best: Option<SplitChoice> = None;
    for &f in &cands {
        let mut values: Vec<f64> = node.indices.iter().map(|&i| node.x.get(i, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let tau = w[0] + (w[1] - w[0]) / 2.0;
            let (left, right): (Vec<usize>, Vec<usize>) = node.indices.iter().partition(|&&i| node.x.get(i, f) < tau);
            let share = |rows: &[usize]| {
                let tot: f64 = rows.iter().map(|&i| node.weights[i]).sum();
                let pos: f64 = rows.iter().filter(|&&i| node.labels[i] == NORMAL).map(|&i| node.weights[i]).sum();
                pos / tot
            };
            let q = left.len() as f64 / n as f64 * gini(share(&left)) + right.len() as f64 / n as f64 * gini(share(&right));
            if best.map_or(true, |b| q < b.impurity - 1e-12) {
                best = Some(SplitChoice { feature: f, threshold: tau, impurity: q });
            }
        }
    }
    best
}

/// Number of nodes, out of `nodes`, where the production search and the
/// exhaustive oracle disagree on column, threshold or impurity.
pub fn split_mismatches(nodes: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..nodes)
        .filter(|_| {
            let node = random_node(&mut rng);
            let fast = best_split(&node.x, &node.indices, &node.candidates, &node.labels, &node.weights);
            let slow = exhaustive_split(&node);
            match (fast, slow) {
                (None, None) => false,
                (Some(a), Some(b)) => {
                    a.feature != b.feature || a.threshold != b.threshold || (a.impurity - b.impurity).abs() > 1e-12
                }
                _ => true,
            }
        })
        .count()
}

/// Largest relative gap between the analytic expected-cost gradient and
/// central differences over `points` random (feeder, curves, point) draws
/// on feeders of 3 to 10 buses, step 1e-6. Entries where both are exactly
/// zero (variables the cost ignores) are skipped.
pub fn gradient_max_relative_error(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for p in 0..points {
        let n = rng.random_range(3..=10);
        let case = random_feeder(n, 2, seed ^ p as u64).unwrap();
        let prog = build_program(&case).unwrap();
        let mut curve = || LogisticCurve { lambda: rng.random_range(5.0..100.0), beta: rng.random_range(0.5..3.0) };
        let mut params = UnreliabilityParams::uniform(&case, curve(), curve(), curve());
        for b in 0..params.buses.len() {
            params.buses[b] = curve();
        }
        for l in 0..params.lines.len() {
            params.lines[l] = curve();
        }
        let model = EensModel::new(&case, &prog, CostWeights::default()).unwrap();
        let x: Vec<f64> = (0..prog.index.n_vars).map(|_| rng.random_range(0.05..0.6)).collect();
        let (_, g) = model.value_and_gradient(&x, &params);
        for v in 0..x.len() {
            let h = 1e-6;
            let f = |d: f64| {
                let mut y = x.clone();
                y[v] += d;
                model.value(&y, &params)
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            if fd == 0.0 && g[v] == 0.0 {
                continue;
            }
            worst = worst.max((fd - g[v]).abs() / fd.abs().max(g[v].abs()));
        }
    }
    worst
}
