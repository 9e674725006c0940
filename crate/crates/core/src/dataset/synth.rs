use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::tensor::{standardize, ComponentKind, FeatureTensor, FAILURE, NORMAL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub days: usize,
    pub steps_per_day: usize,
    /// Bootstrap rows per snapshot.
    pub replication: usize,
    /// Share of all rows labeled failure unconditionally.
    pub random_fraction: f64,
    /// Share of exceedance rows labeled failure.
    pub exceedance_fraction: f64,
    /// Exceedance threshold in column standard deviations above the mean.
    pub exceedance_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 122,
            steps_per_day: 12,
            replication: 20,
            random_fraction: 0.05,
            exceedance_fraction: 0.75,
            exceedance_sd: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replication < 1 {
            return Err(Error::invalid("replication factor must be at least 1"));
        }
        for (name, f) in [("random", self.random_fraction), ("exceedance", self.exceedance_fraction)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} failure fraction {f} outside [0,1]")));
            }
        }
        if self.days == 0 || self.steps_per_day == 0 {
            return Err(Error::invalid("day span and steps per day must be positive"));
        }
        Ok(())
    }

    pub fn n_snapshots(&self) -> usize {
        self.days * self.steps_per_day
    }
}

/// Labeled bootstrap corpus for one component kind, in raw units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub tensor: FeatureTensor,
    /// Source snapshot of each row.
    pub snapshot: Vec<usize>,
    /// Source component of each row.
    pub component: Vec<usize>,
}

impl SyntheticCorpus {
    pub fn failure_share(&self) -> f64 {
        let f = self.tensor.failure_count().unwrap_or(0);
        f as f64 / self.tensor.n_samples().max(1) as f64
    }

    /// One row per sample: source snapshot, component, driver and label.
    /// The weather columns are recovered from the source table on reading.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let pf = self.tensor.powerflow.as_ref().ok_or_else(|| Error::invalid("corpus has no power-flow column"))?;
        let labels = self.tensor.labels()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["snapshot", "component", "driver", "label"])?;
        for i in 0..self.tensor.n_samples() {
            w.write_record(&[
                self.snapshot[i].to_string(),
                self.component[i].to_string(),
                format!("{}", pf.values[i]),
                labels[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Rebuilds a corpus written by [`SyntheticCorpus::write_csv`] against
    /// the raw weather table it was drawn from.
    pub fn read_csv<R: std::io::Read>(input: R, weather: &FeatureTensor, kind: ComponentKind) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            snapshot: usize,
            component: usize,
            driver: f64,
            label: i8,
        }
        let mut rdr = csv::Reader::from_reader(input);
        let (mut snapshot, mut component, mut pf, mut labels) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.deserialize::<Row>().enumerate() {
            let r = rec?;
            if r.snapshot >= weather.n_samples() {
                return Err(Error::data(format!(
                    "corpus row {}: snapshot {} outside the {}-snapshot weather table",
                    line + 1,
                    r.snapshot,
                    weather.n_samples()
                )));
            }
            if r.label != FAILURE && r.label != NORMAL {
                return Err(Error::data(format!("corpus row {}: label {} is not -1 or 1", line + 1, r.label)));
            }
            snapshot.push(r.snapshot);
            component.push(r.component);
            pf.push(r.driver);
            labels.push(r.label);
        }
        if snapshot.is_empty() {
            return Err(Error::data("corpus is empty"));
        }
        let n = snapshot.len();
        let mut tensor = weather.select(&snapshot).with_powerflow(kind, pf)?.with_labels(labels)?;
        tensor.sample_weights = super::tensor::uniform_weights(n);
        Ok(Self { tensor, snapshot, component })
    }
}

/// Bootstraps (snapshot, component) pairs and labels them.
///
/// `weather` has one raw row per snapshot; `drivers` is `snapshots ×
/// components` and holds the power-flow driver of each component at each
/// snapshot. Labels: a random share of rows fail outright; then every row
/// whose site-weighted category mean or driver exceeds the column mean by
/// `exceedance_sd` standard deviations joins a pool, a share of which fails.
pub fn synthesize_corpus(
    weather: &FeatureTensor,
    drivers: &Matrix,
    kind: ComponentKind,
    site_weights: &[f64],
    cfg: &SynthConfig,
) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let n_snap = weather.n_samples();
    if drivers.rows() != n_snap {
        return Err(Error::invalid(format!(
            "{} driver snapshots for {n_snap} weather snapshots",
            drivers.rows()
        )));
    }
    if drivers.cols() == 0 {
        return Err(Error::invalid("no components"));
    }
    if site_weights.len() != weather.dims.n_sites {
        return Err(Error::invalid("site weight count differs from site count"));
    }
    let n = n_snap * cfg.replication;
    let mut rng = crate::seed::stage_rng(cfg.seed, &format!("synth-bootstrap-{}", kind.as_str()));
    let mut snapshot = Vec::with_capacity(n);
    let mut component = Vec::with_capacity(n);
    for _ in 0..n {
        snapshot.push(rng.random_range(0..n_snap));
        component.push(rng.random_range(0..drivers.cols()));
    }
    let pf: Vec<f64> = snapshot
        .iter()
        .zip(&component)
        .map(|(&s, &c)| drivers.get(s, c))
        .collect();
    let unlabeled = weather.select(&snapshot).with_powerflow(kind, pf)?;
    let labels = label_rows(&unlabeled, site_weights, cfg, kind)?;
    let mut tensor = unlabeled.with_labels(labels)?;
    tensor.sample_weights = super::tensor::uniform_weights(n);
    Ok(SyntheticCorpus { tensor, snapshot, component })
}

/// Aggregate matrix: one site-weighted category mean of the standardized
/// weather per category, then the standardized power-flow column.
pub fn aggregate_matrix(standardized: &FeatureTensor, site_weights: &[f64]) -> Vec<Vec<f64>> {
    let dims = &standardized.dims;
    let mut cols = Vec::with_capacity(dims.n_categories() + 1);
    for m in 0..dims.n_categories() {
        let blocks: Vec<Vec<usize>> = (0..dims.n_sites).map(|d| dims.block(d, m)).collect();
        let col = (0..standardized.n_samples())
            .map(|i| {
                blocks
                    .iter()
                    .zip(site_weights)
                    .map(|(b, &pi)| {
                        pi * b.iter().map(|&c| standardized.weather.get(i, c)).sum::<f64>() / b.len() as f64
                    })
                    .sum()
            })
            .collect();
        cols.push(col);
    }
    if let Some(pf) = &standardized.powerflow {
        cols.push(pf.values.clone());
    }
    cols
}

fn label_rows(t: &FeatureTensor, site_weights: &[f64], cfg: &SynthConfig, kind: ComponentKind) -> Result<Vec<i8>> {
    let n = t.n_samples();
    let mut labels = vec![NORMAL; n];

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::seed::stage_rng(cfg.seed, &format!("synth-random-{}", kind.as_str())));
    let k = (cfg.random_fraction * n as f64).round() as usize;
    for &i in &order[..k] {
        labels[i] = FAILURE;
    }

    let (z, _) = standardize(t)?;
    let agg = aggregate_matrix(&z, site_weights);
    let thresholds: Vec<f64> = agg
        .iter()
        .map(|c| {
            let s = super::tensor::ColumnStats::of(c);
            s.mean + cfg.exceedance_sd * s.stdev
        })
        .collect();
    let mut pool: Vec<usize> = (0..n)
        .filter(|&i| agg.iter().zip(&thresholds).any(|(c, &th)| c[i] > th))
        .collect();
    pool.shuffle(&mut crate::seed::stage_rng(cfg.seed, &format!("synth-exceedance-{}", kind.as_str())));
    let k = (cfg.exceedance_fraction * pool.len() as f64).round() as usize;
    for &i in &pool[..k] {
        labels[i] = FAILURE;
    }
    Ok(labels)
}
