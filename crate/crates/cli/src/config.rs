//! Run configuration: a versioned TOML document with defaults for every key.

use std::path::{Path, PathBuf};

use relgrid::dataset::SynthConfig;
use relgrid::ensemble::{ModelKind, TcsmsbConfig, WmsdteConfig};
use relgrid::experiment::TrainConfig;
use relgrid::grid::{CostWeights, PvScenario};
use relgrid::scp::ScpConfig;
use relgrid::theory::GridSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Root seed; every stage derives its own stream from it.
    pub seed: u64,
    pub scenario: PvScenario,
    pub model: ModelKind,
    pub paths: Paths,
    pub season: SeasonSection,
    pub synth: SynthSection,
    pub train: TrainSection,
    pub optimize: OptimizeSection,
    pub simulate: SimulateSection,
    pub theory: GridSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            scenario: PvScenario::Low,
            model: ModelKind::Wmsdte,
            paths: Paths::default(),
            season: SeasonSection::default(),
            synth: SynthSection::default(),
            train: TrainSection::default(),
            optimize: OptimizeSection::default(),
            simulate: SimulateSection::default(),
            theory: GridSpec::default(),
        }
    }
}

/// Optional input files; each missing entry falls back to the bundled fixture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Feature schema (TOML).
    pub schema: Option<PathBuf>,
    /// Directory of per-site weather CSVs.
    pub weather: Option<PathBuf>,
    /// CSV with a `load` column, one peak-normalized value per snapshot.
    pub loads: Option<PathBuf>,
    /// CSV with a `price` column, one value per window of a day.
    pub prices: Option<PathBuf>,
    /// Feeder case (JSON) used for dispatch instead of the bundled 33-bus case.
    pub case: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeasonSection {
    /// Length of the fixture season when no weather directory is given.
    pub days: usize,
    /// Day to dispatch; defaults to the day with the highest peak load.
    pub dispatch_day: Option<usize>,
}

impl Default for SeasonSection {
    fn default() -> Self {
        Self { days: relgrid::dataset::fixtures::SEASON_DAYS, dispatch_day: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub replication: usize,
    pub random_fraction: f64,
    pub exceedance_fraction: f64,
    pub exceedance_sd: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            replication: d.replication,
            random_fraction: d.random_fraction,
            exceedance_fraction: d.exceedance_fraction,
            exceedance_sd: d.exceedance_sd,
        }
    }
}

impl SynthSection {
    pub fn to_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            replication: self.replication,
            random_fraction: self.random_fraction,
            exceedance_fraction: self.exceedance_fraction,
            exceedance_sd: self.exceedance_sd,
            seed,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub test_fraction: f64,
    pub folds: usize,
    pub cross_validate: bool,
    pub baseline: bool,
    pub wmsdte: WmsdteConfig,
    pub tcsmsb: TcsmsbConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            test_fraction: d.test_fraction,
            folds: d.folds,
            cross_validate: false,
            baseline: true,
            wmsdte: d.wmsdte,
            tcsmsb: d.tcsmsb,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, model: ModelKind, seed: u64) -> TrainConfig {
        TrainConfig {
            model,
            test_fraction: self.test_fraction,
            folds: self.folds,
            cross_validate: self.cross_validate,
            baseline: self.baseline,
            wmsdte: self.wmsdte.clone(),
            tcsmsb: self.tcsmsb.clone(),
            seed,
        }
    }
}

/// Where the per-component failure curves come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveSource {
    /// Refit to the calibrated ensemble probabilities.
    Ensemble,
    /// Keep the built-in demonstration curves fixed.
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub curves: CurveSource,
    pub weights: CostWeights,
    pub scp: ScpConfig,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self { curves: CurveSource::Ensemble, weights: CostWeights::default(), scp: ScpConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub trials: usize,
    pub replay_trials: usize,
    pub bins: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { trials: 100_000, replay_trials: 100_000, bins: 40 }
    }
}

impl RunConfig {
    /// Parses a TOML document; syntax and schema errors carry line and column.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "{origin}: schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Loads and resolves a config file; relative input paths are taken
    /// from the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.paths.all_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Checks value ranges and that every referenced input exists.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        for (name, p) in self.paths.named() {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("paths.{name}: {} does not exist", p.display()));
                }
            }
        }
        if self.season.days == 0 {
            return bad("season.days must be positive".into());
        }
        self.synth.to_config(0).validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;
        if !(0.0..1.0).contains(&self.train.test_fraction) || self.train.folds == 0 {
            return bad("train: test_fraction must lie in [0, 1) and folds must be positive".into());
        }
        self.optimize.scp.validate().map_err(|e| CliError::Config(format!("optimize.scp: {e}")))?;
        self.optimize.weights.validate().map_err(|e| CliError::Config(format!("optimize.weights: {e}")))?;
        if self.simulate.trials == 0 || self.simulate.replay_trials == 0 || self.simulate.bins == 0 {
            return bad("simulate: trials, replay_trials and bins must be positive".into());
        }
        Ok(())
    }
}

impl Paths {
    fn named(&self) -> [(&'static str, &Option<PathBuf>); 5] {
        [
            ("schema", &self.schema),
            ("weather", &self.weather),
            ("loads", &self.loads),
            ("prices", &self.prices),
            ("case", &self.case),
        ]
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        [&mut self.schema, &mut self.weather, &mut self.loads, &mut self.prices, &mut self.case]
            .into_iter()
            .flatten()
    }
}
