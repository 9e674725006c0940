//! End-to-end glue over the bundled fixtures: the seeded season, the two
//! labeled corpora and model training with a stratified holdout.

use serde::{Deserialize, Serialize};

use crate::calibrate::CalibrationParams;
use crate::dataset::fixtures::{
    default_schema, heat_index, price_series, pv_reference_profile, synthetic_weather, system_load_series, SEASON_DAYS,
    STEPS_PER_DAY,
};
use crate::dataset::{
    category_weights, site_weights, split_stratified, standardize, synthesize_corpus, ComponentKind, FeatureSchema,
    FeatureTensor, Split, SynthConfig, SyntheticCorpus, WeatherTable,
};
use crate::ensemble::{
    evaluate, Ensemble, Metrics, ModelDocument, ModelKind, TcsmsbConfig, TcsmsbModel, WmsdteConfig, WmsdteModel,
    MODEL_FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::grid::{season_drivers, CaseInputs, PvScenario};
use crate::matrix::Matrix;

/// Weather, load, price and PV inputs for one season.
#[derive(Debug, Clone)]
pub struct Season {
    pub weather: WeatherTable,
    /// Peak-normalized system load, one value per snapshot.
    pub load: Vec<f64>,
    /// Price per window of a day.
    pub price: Vec<f64>,
    /// Reference PV output per window of a day.
    pub pv_reference: Vec<f64>,
    pub steps_per_day: usize,
}

impl Season {
    pub fn days(&self) -> usize {
        self.load.len() / self.steps_per_day
    }

    /// Case inputs of day `d`.
    pub fn day_inputs(&self, d: usize) -> Result<CaseInputs> {
        if d >= self.days() {
            return Err(Error::invalid(format!("day {d} outside a {}-day season", self.days())));
        }
        let s = self.steps_per_day;
        Ok(CaseInputs {
            load_profile: self.load[d * s..(d + 1) * s].to_vec(),
            price: self.price.clone(),
            pv_reference: self.pv_reference.clone(),
        })
    }

    /// Raw weather rows of day `d`, one per window.
    pub fn day_weather(&self, d: usize) -> Result<Vec<Vec<f64>>> {
        if d >= self.days() {
            return Err(Error::invalid(format!("day {d} outside a {}-day season", self.days())));
        }
        let w = &self.weather.tensor.weather;
        Ok((d * self.steps_per_day..(d + 1) * self.steps_per_day).map(|k| w.row(k)).collect())
    }
}

/// Seeded fixture season of `days` days; load follows the site-averaged heat.
pub fn fixture_season_days(days: usize, seed: u64) -> Season {
    let weather = synthetic_weather(days, STEPS_PER_DAY, seed);
    let heat = heat_index(&weather);
    let load = system_load_series(days, STEPS_PER_DAY, Some(&heat), seed);
    Season {
        weather,
        load,
        price: price_series(STEPS_PER_DAY),
        pv_reference: pv_reference_profile(STEPS_PER_DAY),
        steps_per_day: STEPS_PER_DAY,
    }
}

/// The full fixture season.
pub fn fixture_season(seed: u64) -> Season {
    fixture_season_days(SEASON_DAYS, seed)
}

/// Cost-only dispatch drivers of every bus and line at every snapshot.
#[derive(Debug, Clone)]
pub struct SeasonDrivers {
    pub bus: Matrix,
    pub line: Matrix,
}

pub fn season_dispatch_drivers(season: &Season, scenario: PvScenario) -> Result<SeasonDrivers> {
    let (bus, line) = season_drivers(scenario, &season.load, &season.price, &season.pv_reference)?;
    Ok(SeasonDrivers { bus, line })
}

/// Bus and line corpora synthesized from one season.
pub fn build_corpora(
    season: &Season,
    drivers: &SeasonDrivers,
    schema: &FeatureSchema,
    cfg: &SynthConfig,
) -> Result<(SyntheticCorpus, SyntheticCorpus)> {
    let cfg = SynthConfig { days: season.days(), steps_per_day: season.steps_per_day, ..cfg.clone() };
    let sw = site_weights(&schema.sites, schema.substation)?;
    let bus = synthesize_corpus(&season.weather.tensor, &drivers.bus, ComponentKind::Bus, &sw, &cfg)?;
    let line = synthesize_corpus(&season.weather.tensor, &drivers.line, ComponentKind::Line, &sw, &cfg)?;
    Ok((bus, line))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub test_fraction: f64,
    pub folds: usize,
    /// Also score every cross-validation fold (one extra fit per fold).
    pub cross_validate: bool,
    /// Also fit the unweighted random-forest baseline.
    pub baseline: bool,
    pub wmsdte: WmsdteConfig,
    pub tcsmsb: TcsmsbConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Wmsdte,
            test_fraction: 0.2,
            folds: 5,
            cross_validate: false,
            baseline: false,
            wmsdte: WmsdteConfig::default(),
            tcsmsb: TcsmsbConfig::default(),
            seed: 0,
        }
    }
}

/// A fitted model with its holdout and optional fold and baseline scores.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub document: ModelDocument,
    pub split: Split,
    pub test: Metrics,
    pub folds: Vec<Metrics>,
    pub baseline: Option<Metrics>,
}

impl TrainOutcome {
    pub fn calibration(&self) -> Result<CalibrationParams> {
        CalibrationParams::for_kind(self.document.component, self.document.n_syn, self.document.n_fail)
    }
}

fn fit_kind(kind: ModelKind, train: &FeatureTensor, sw: &[f64], cw: &[f64], cfg: &TrainConfig, seed: u64) -> Result<Ensemble> {
    Ok(match kind {
        ModelKind::Wmsdte => {
            Ensemble::Wmsdte(WmsdteModel::fit(train, sw, cw, &WmsdteConfig { seed, ..cfg.wmsdte.clone() })?)
        }
        ModelKind::Tcsmsb => {
            Ensemble::Tcsmsb(TcsmsbModel::fit(train, sw, cw, &TcsmsbConfig { seed, ..cfg.tcsmsb.clone() })?)
        }
    })
}

/// Standardizes on the training rows, fits, and scores the holdout.
fn fit_and_score(
    corpus: &FeatureTensor,
    fit_rows: &[usize],
    eval_rows: &[usize],
    sw: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Ensemble, crate::dataset::Standardizer, Vec<f64>, Metrics)> {
    let (train, standardizer) = standardize(&corpus.select(fit_rows))?;
    let eval = standardizer.apply(&corpus.select(eval_rows))?;
    let cw = category_weights(&train)?;
    let model = fit_kind(cfg.model, &train, sw, &cw, cfg, seed)?;
    let metrics = evaluate(&model, &eval)?;
    Ok((model, standardizer, cw, metrics))
}

/// Trains the configured model on a corpus with a stratified holdout.
pub fn train_model(corpus: &SyntheticCorpus, schema: &FeatureSchema, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let t = &corpus.tensor;
    let kind = t
        .powerflow
        .as_ref()
        .map(|p| p.kind)
        .ok_or_else(|| Error::invalid("corpus has no power-flow column"))?;
    let n_fail = t.failure_count()?;
    let sw = site_weights(&schema.sites, schema.substation)?;
    let split = split_stratified(t, cfg.test_fraction, cfg.folds, crate::seed::derive(cfg.seed, "train-split"))?;
    let train_rows = split.train();
    let fit_seed = crate::seed::derive(cfg.seed, "train-fit");
    let (model, standardizer, cw, test) = fit_and_score(t, &train_rows, &split.test, &sw, cfg, fit_seed)?;
    let folds = if cfg.cross_validate {
        (0..cfg.folds)
            .map(|k| {
                let (fit, hold) = split.cv_pair(k);
                let seed = crate::seed::derive_indexed(cfg.seed, "train-fold", k as u64);
                fit_and_score(t, &fit, &hold, &sw, cfg, seed).map(|r| r.3)
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let baseline = if cfg.baseline {
        let (train, standardizer) = standardize(&t.select(&train_rows))?;
        let test_t = standardizer.apply(&t.select(&split.test))?;
        let wcfg = WmsdteConfig { seed: crate::seed::derive(cfg.seed, "train-baseline"), ..cfg.wmsdte.clone() };
        let rf = Ensemble::Wmsdte(WmsdteModel::fit_random_forest(&train, &wcfg)?);
        Some(evaluate(&rf, &test_t)?)
    } else {
        None
    };
    let document = ModelDocument {
        format_version: MODEL_FORMAT_VERSION,
        component: kind,
        standardizer,
        site_weights: sw,
        category_weights: cw,
        n_syn: t.n_samples(),
        n_fail,
        model,
    };
    Ok(TrainOutcome { document, split, test, folds, baseline })
}

/// The bundled schema, re-exported for callers that only use fixtures.
pub fn fixture_schema() -> FeatureSchema {
    default_schema()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn season_shapes() {
        let s = fixture_season_days(3, 1);
        assert_eq!(s.days(), 3);
        assert_eq!(s.load.len(), 3 * STEPS_PER_DAY);
        assert_eq!(s.weather.tensor.n_samples(), 3 * STEPS_PER_DAY);
        assert_eq!(s.day_inputs(2).unwrap().load_profile.len(), STEPS_PER_DAY);
        assert_eq!(s.day_weather(1).unwrap().len(), STEPS_PER_DAY);
        assert!(s.day_inputs(3).is_err());
    }

    #[test]
    fn small_pipeline_trains_and_is_deterministic() {
        let season = fixture_season_days(4, 3);
        let drivers = season_dispatch_drivers(&season, PvScenario::Low).unwrap();
        assert_eq!(drivers.bus.rows(), 48);
        assert_eq!(drivers.bus.cols(), 32);
        assert_eq!(drivers.line.cols(), 32);
        let schema = fixture_schema();
        let synth = SynthConfig { replication: 5, seed: 3, ..SynthConfig::default() };
        let (bus, line) = build_corpora(&season, &drivers, &schema, &synth).unwrap();
        assert_eq!(bus.tensor.n_samples(), 240);
        assert_eq!(line.tensor.n_samples(), 240);
        let cfg = TrainConfig {
            wmsdte: WmsdteConfig { n_trees: 10, ..WmsdteConfig::default() },
            cross_validate: true,
            baseline: true,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_model(&bus, &schema, &cfg).unwrap();
        let b = train_model(&bus, &schema, &cfg).unwrap();
        assert_eq!(a.document.digest().unwrap(), b.document.digest().unwrap());
        assert_eq!(a.folds.len(), 5);
        assert!(a.baseline.is_some());
        assert!(a.test.accuracy > 0.5);
        assert_eq!(a.document.n_syn, 240);
        a.calibration().unwrap();
    }
}
