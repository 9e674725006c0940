//! Outage simulation for a fixed dispatch: independent Bernoulli failures
//! and replay of failure labels drawn from the synthetic corpus.
//!
//! A failed substation costs `Θ₀`; bus i is unserved (costing `Θ_i`) when
//! the bus itself or any line on its root path fails. Failures last one
//! window.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FAILURE;
use crate::error::{Error, Result};
use crate::grid::{window_eens, EensModel, UnreliabilityParams, WindowTerms};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub trials: usize,
    pub mean: f64,
    pub stdev: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
    /// 5, 25, 50, 75 and 95 percent quantiles.
    pub quantiles: [f64; 5],
    pub samples: Vec<f64>,
}

impl SimSummary {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::invalid("no samples to summarize"));
        }
        let mean = neumaier_sum(&samples) / n as f64;
        let var = if n > 1 {
            neumaier_sum(&samples.iter().map(|v| (v - mean).powi(2)).collect::<Vec<_>>()) / (n - 1) as f64
        } else {
            0.0
        };
        let stdev = var.sqrt();
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (n - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Ok(Self {
            trials: n,
            mean,
            stdev,
            std_error: stdev / (n as f64).sqrt(),
            min: sorted[0],
            max: sorted[n - 1],
            quantiles: [q(0.05), q(0.25), q(0.5), q(0.75), q(0.95)],
            samples,
        })
    }
}

fn neumaier_sum(v: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in v {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// `(bus, feeding line, parent bus)` with every parent before its children.
fn feed_order(paths: &[Vec<usize>]) -> Vec<(usize, Option<usize>, Option<usize>)> {
    let mut order: Vec<usize> = (0..paths.len()).collect();
    order.sort_by_key(|&b| paths[b].len());
    let mut fed_by = vec![0; paths.len()];
    for (b, p) in paths.iter().enumerate() {
        if let Some(&k) = p.first() {
            fed_by[k] = b;
        }
    }
    order
        .into_iter()
        .map(|b| {
            let feed = paths[b].first().copied();
            let parent = feed.map(|_| paths[b].get(1).map_or(0, |&k| fed_by[k]));
            (b, feed, parent)
        })
        .collect()
}

/// Realized de-energization cost of one window given failure indicators.
fn realized(w: &WindowTerms, order: &[(usize, Option<usize>, Option<usize>)], sub: bool, bus: &[bool], line: &[bool], dead: &mut [bool]) -> f64 {
    let mut cost = if sub { w.theta0 } else { 0.0 };
    for &(b, feed, parent) in order {
        let upstream = match (feed, parent) {
            (Some(k), Some(p)) => line[k] || dead[p],
            _ => false,
        };
        // dead[b] tracks path failures only; the bus's own failure does not
        // cut off its children.
        dead[b] = upstream;
        if b != 0 && (upstream || bus[b]) {
            cost += w.theta[b];
        }
    }
    cost
}

fn run_chunks<F>(trials: usize, seed: u64, label: &str, f: F) -> Vec<Option<f64>>
where
    F: Fn(&mut crate::seed::StageRng) -> Option<f64> + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = crate::seed::rng(crate::seed::derive_indexed(seed, label, c as u64));
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n).map(|_| f(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// Monte Carlo objective sample with independent failures per component and window.
pub fn monte_carlo_terms(op_cost: f64, terms: &[WindowTerms], paths: &[Vec<usize>], trials: usize, seed: u64) -> Result<SimSummary> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let order = feed_order(paths);
    let nb = paths.len();
    let nl = terms.first().map_or(0, |w| w.pr_line.len());
    let samples = run_chunks(trials, seed, "sim-monte-carlo", |rng| {
        let mut bus = vec![false; nb];
        let mut line = vec![false; nl];
        let mut dead = vec![false; nb];
        let mut total = op_cost;
        for w in terms {
            let sub = rng.random::<f64>() < w.pr0;
            for (b, f) in bus.iter_mut().enumerate() {
                *f = b != 0 && rng.random::<f64>() < w.pr_bus[b];
            }
            for (k, f) in line.iter_mut().enumerate() {
                *f = rng.random::<f64>() < w.pr_line[k];
            }
            total += realized(w, &order, sub, &bus, &line, &mut dead);
        }
        Some(total)
    });
    SimSummary::from_samples(samples.into_iter().flatten().collect())
}

/// Analytic expectation matching [`monte_carlo_terms`].
pub fn expected_objective(op_cost: f64, terms: &[WindowTerms], paths: &[Vec<usize>]) -> f64 {
    op_cost + terms.iter().map(|w| window_eens(w, paths)).sum::<f64>()
}

/// Monte Carlo for a dispatch `x` with probabilities from `params`.
pub fn monte_carlo(model: &EensModel<'_>, x: &[f64], params: &UnreliabilityParams, trials: usize, seed: u64) -> Result<SimSummary> {
    let terms = model.window_terms(x, params);
    monte_carlo_terms(model.program.operating_cost(x), &terms, &model.program.topology.paths, trials, seed)
}

/// Failure labels of the synthetic corpora with the field rates they are
/// thinned to.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySource {
    pub bus_labels: Vec<i8>,
    pub line_labels: Vec<i8>,
    pub bus_prior: f64,
    pub line_prior: f64,
}

impl ReplaySource {
    /// Share of failure labels per kind, and the thinning ratios `prior / share`.
    pub fn thinning(&self) -> Result<(f64, f64)> {
        let ratio = |labels: &[i8], prior: f64, what: &str| -> Result<f64> {
            if labels.is_empty() {
                return Err(Error::invalid(format!("{what} corpus is empty")));
            }
            let share = labels.iter().filter(|&&l| l == FAILURE).count() as f64 / labels.len() as f64;
            if share == 0.0 {
                return Err(Error::data(format!("{what} corpus has no failures to replay")));
            }
            if !(prior > 0.0) || prior > share {
                return Err(Error::invalid(format!(
                    "{what} prior {prior} must lie in (0, {share}] (the corpus failure share)"
                )));
            }
            Ok(prior / share)
        };
        Ok((ratio(&self.bus_labels, self.bus_prior, "bus")?, ratio(&self.line_labels, self.line_prior, "line")?))
    }
}

/// Replay: every component-window draws a corpus label; failures are kept
/// with probability `prior / share`. Only trials with at least one failure
/// are returned.
pub fn replay_terms(
    op_cost: f64,
    terms: &[WindowTerms],
    paths: &[Vec<usize>],
    source: &ReplaySource,
    trials: usize,
    seed: u64,
) -> Result<SimSummary> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let (bus_ratio, line_ratio) = source.thinning()?;
    let order = feed_order(paths);
    let nb = paths.len();
    let nl = terms.first().map_or(0, |w| w.pr_line.len());
    let draw = |rng: &mut crate::seed::StageRng, labels: &[i8], ratio: f64| {
        labels[rng.random_range(0..labels.len())] == FAILURE && rng.random::<f64>() < ratio
    };
    let samples = run_chunks(trials, seed, "sim-replay", |rng| {
        let mut bus = vec![false; nb];
        let mut line = vec![false; nl];
        let mut dead = vec![false; nb];
        let mut total = op_cost;
        let mut any = false;
        for w in terms {
            let sub = draw(rng, &source.bus_labels, bus_ratio);
            any |= sub;
            for (b, f) in bus.iter_mut().enumerate() {
                *f = b != 0 && draw(rng, &source.bus_labels, bus_ratio);
                any |= *f;
            }
            for f in line.iter_mut() {
                *f = draw(rng, &source.line_labels, line_ratio);
                any |= *f;
            }
            total += realized(w, &order, sub, &bus, &line, &mut dead);
        }
        any.then_some(total)
    });
    let kept: Vec<f64> = samples.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::data(format!("no replay trial out of {trials} had a failure; increase the trial count")));
    }
    SimSummary::from_samples(kept)
}

pub fn replay_synthetic(model: &EensModel<'_>, x: &[f64], source: &ReplaySource, trials: usize, seed: u64) -> Result<SimSummary> {
    // Θ does not depend on the probabilities; any table gives the same terms.
    let params = UnreliabilityParams::placeholder(model.case);
    let terms = model.window_terms(x, &params);
    replay_terms(model.program.operating_cost(x), &terms, &model.program.topology.paths, source, trials, seed)
}

/// Equal-width histogram of a sample.
pub fn write_histogram_csv<W: Write>(samples: &[f64], bins: usize, label: &str, out: W) -> Result<()> {
    if samples.is_empty() || bins == 0 {
        return Err(Error::invalid("histogram needs samples and at least one bin"));
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let b = (((s - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample", "bin_lower", "bin_upper", "count", "density"])?;
    let n = samples.len() as f64;
    for (i, c) in counts.iter().enumerate() {
        let a = lo + i as f64 * width;
        w.write_record([
            label.to_string(),
            a.to_string(),
            (a + width).to_string(),
            c.to_string(),
            (*c as f64 / n / width).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("histogram", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_bus(pr: f64, theta: f64) -> (Vec<WindowTerms>, Vec<Vec<usize>>) {
        let w = WindowTerms { theta0: 0.0, pr0: 0.0, theta: vec![0.0, theta], pr_bus: vec![0.0, pr], pr_line: vec![0.0] };
        (vec![w], vec![vec![], vec![0]])
    }

    fn branchy() -> (Vec<WindowTerms>, Vec<Vec<usize>>) {
        // 0 -l0- 1 -l1- 2, 1 -l2- 3
        let paths = vec![vec![], vec![0], vec![1, 0], vec![2, 0]];
        let w = |s: f64| WindowTerms {
            theta0: 4.0 * s,
            pr0: 0.05,
            theta: vec![0.0, 1.0, 2.0 * s, 3.0],
            pr_bus: vec![0.0, 0.1, 0.05, 0.2],
            pr_line: vec![0.1, 0.15, 0.05 * s],
        };
        (vec![w(1.0), w(1.5)], paths)
    }

    #[test]
    fn zero_probability_is_deterministic() {
        let (terms, paths) = single_bus(0.0, 5.0);
        let s = monte_carlo_terms(7.0, &terms, &paths, 1000, 1).unwrap();
        assert_eq!(s.mean, 7.0);
        assert_eq!(s.stdev, 0.0);
    }

    #[test]
    fn binomial_oracle() {
        let (terms, paths) = single_bus(0.5, 2.0);
        let s = monte_carlo_terms(0.0, &terms, &paths, 100_000, 3).unwrap();
        assert!((s.mean - 1.0).abs() < 0.02, "{}", s.mean);
    }

    #[test]
    fn mean_matches_expectation_across_sizes() {
        let (terms, paths) = branchy();
        let exact = expected_objective(10.0, &terms, &paths);
        for trials in [1_000, 10_000, 100_000] {
            let s = monte_carlo_terms(10.0, &terms, &paths, trials, 11).unwrap();
            assert!((s.mean - exact).abs() <= 4.0 * s.std_error, "{trials}: {} vs {exact} (se {})", s.mean, s.std_error);
        }
    }

    #[test]
    fn seeds_reproduce() {
        let (terms, paths) = branchy();
        let a = monte_carlo_terms(1.0, &terms, &paths, 5000, 9).unwrap();
        let b = monte_carlo_terms(1.0, &terms, &paths, 5000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn line_failure_cuts_descendants_only() {
        let paths = vec![vec![], vec![0], vec![1, 0], vec![2, 0]];
        let order = feed_order(&paths);
        let w = WindowTerms { theta0: 0.0, pr0: 0.0, theta: vec![0.0, 1.0, 10.0, 100.0], pr_bus: vec![0.0; 4], pr_line: vec![0.0; 3] };
        let mut dead = vec![false; 4];
        // line 1 feeds bus 2 only
        assert_eq!(realized(&w, &order, false, &[false; 4], &[false, true, false], &mut dead), 10.0);
        // line 0 takes everything down
        assert_eq!(realized(&w, &order, false, &[false; 4], &[true, false, false], &mut dead), 111.0);
        // a failed bus does not take its children with it
        assert_eq!(realized(&w, &order, false, &[false, true, false, false], &[false; 3], &mut dead), 1.0);
    }

    #[test]
    fn replay_needs_failures() {
        let (terms, paths) = branchy();
        let src = ReplaySource { bus_labels: vec![1; 10], line_labels: vec![-1, 1], bus_prior: 0.01, line_prior: 0.01 };
        assert!(replay_terms(0.0, &terms, &paths, &src, 100, 1).is_err());
    }

    #[test]
    fn no_thinning_when_prior_equals_share() {
        let src = ReplaySource { bus_labels: vec![-1, 1, 1, 1], line_labels: vec![-1, 1], bus_prior: 0.25, line_prior: 0.5 };
        assert_eq!(src.thinning().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn replay_conditional_mean_exceeds_unconditional() {
        let (terms, paths) = branchy();
        let src = ReplaySource {
            bus_labels: vec![-1, 1, 1, 1, 1],
            line_labels: vec![-1, -1, 1, 1, 1],
            bus_prior: 0.01,
            line_prior: 0.01,
        };
        // Bernoulli rates equal to the field rates the replay is thinned to.
        let at_prior: Vec<WindowTerms> = terms
            .iter()
            .map(|w| WindowTerms {
                pr0: 0.01,
                pr_bus: w.pr_bus.iter().map(|_| 0.01).collect(),
                pr_line: w.pr_line.iter().map(|_| 0.01).collect(),
                ..w.clone()
            })
            .collect();
        let mc = monte_carlo_terms(10.0, &at_prior, &paths, 20_000, 2).unwrap();
        let rp = replay_terms(10.0, &terms, &paths, &src, 20_000, 2).unwrap();
        assert!(rp.mean > mc.mean, "{} vs {}", rp.mean, mc.mean);
        assert!(rp.min > 10.0);
    }

    #[test]
    fn histogram_counts_everything() {
        let mut buf = Vec::new();
        write_histogram_csv(&[1.0, 2.0, 2.5, 4.0], 3, "mc", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let total: usize = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 4);
    }
}
