//! Seeded inputs for the benchmarks.

use rand::Rng;
use relgrid::grid::{build_case_33bus, build_program, CaseInputs, DistFlowProgram, GridCase, PvScenario};
use relgrid::matrix::Matrix;

/// A dense node of `n` rows and `p` columns with random labels and weights.
pub struct Node {
    pub x: Matrix,
    pub labels: Vec<i8>,
    pub weights: Vec<f64>,
    pub indices: Vec<usize>,
    pub candidates: Vec<usize>,
}

pub fn random_node(n: usize, p: usize, seed: u64) -> Node {
    let mut rng = relgrid::seed::rng(seed);
    let columns = (0..p).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    Node {
        x: Matrix::from_columns(n, columns).expect("consistent shape"),
        labels: (0..n).map(|_| if rng.random_bool(0.3) { -1 } else { 1 }).collect(),
        weights: (0..n).map(|_| rng.random_range(0.1..2.0)).collect(),
        indices: (0..n).collect(),
        candidates: (0..p).collect(),
    }
}

/// The 33-bus case on a fixture day with its program and a random interior point.
pub fn feeder(seed: u64) -> (GridCase, DistFlowProgram, Vec<f64>) {
    let case = build_case_33bus(PvScenario::Low, &CaseInputs::fixture_day(12)).expect("bundled case");
    let program = build_program(&case).expect("bundled case");
    let mut rng = relgrid::seed::rng(seed);
    let x = (0..program.index.n_vars).map(|_| rng.random_range(0.05..0.6)).collect();
    (case, program, x)
}
