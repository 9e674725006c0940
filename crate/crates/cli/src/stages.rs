//! Pipeline stages. Each reads its inputs from the run directory, writes
//! its artifacts there, and derives its seed from the root seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use relgrid::calibrate::{calibrate, default_prior, CalibrationParams};
use relgrid::dataset::fixtures::{
    default_schema, heat_index, price_series, pv_reference_profile, synthetic_weather, system_load_series,
    STEPS_PER_DAY,
};
use relgrid::dataset::{
    format_timestamp, ingest_weather_dir, write_site_csv, ComponentKind, FeatureSchema, SyntheticCorpus, WeatherTable,
    FAILURE,
};
use relgrid::ensemble::{Metrics, ModelDocument};
use relgrid::experiment::{build_corpora, season_dispatch_drivers, train_model, Season};
use relgrid::grid::{build_case_33bus, EensModel, GridCase, UnreliabilityParams};
use relgrid::scp::{
    dg_dr_total, solve_mcrm, write_dispatch_csv, CurveOracle, EnsembleOracle, ProbabilityOracle, StopReason,
};
use relgrid::seed::{derive, derive_indexed, digest_hex};
use relgrid::sim::{expected_objective, monte_carlo_terms, replay_terms, write_histogram_csv, ReplaySource, SimSummary};
use relgrid::theory::verify_proposition1;
use serde::{Deserialize, Serialize};

use crate::config::{CurveSource, RunConfig};
use crate::error::CliError;

pub const SCHEMA: &str = "dataset/schema.toml";
pub const WEATHER_DIR: &str = "dataset/weather";
pub const LOAD: &str = "dataset/load.csv";
pub const DAY_PROFILE: &str = "dataset/day_profile.csv";
pub const CORPUS_SUMMARY: &str = "corpus/summary.csv";
pub const METRICS: &str = "model/metrics.csv";
pub const CALIBRATION: &str = "calibration/params.json";
pub const CALIBRATION_CURVE: &str = "calibration/curve.csv";
pub const CASE: &str = "optimize/case.json";
pub const PARAMS: &str = "optimize/params.json";
pub const SOLUTION: &str = "optimize/solution.json";
pub const TRACE: &str = "optimize/trace.csv";
pub const DISPATCH: &str = "optimize/dispatch.csv";
pub const SIM_SUMMARY: &str = "simulate/summary.csv";
pub const THEORY: &str = "theory/grid.csv";
pub const MANIFEST: &str = "report/manifest.csv";

const KINDS: [ComponentKind; 2] = [ComponentKind::Bus, ComponentKind::Line];

fn corpus_path(kind: ComponentKind) -> String {
    format!("corpus/{}.csv", kind.as_str())
}

fn model_path(kind: ComponentKind) -> String {
    format!("model/{}.json", kind.as_str())
}

/// A run directory plus the resolved configuration.
pub struct Run {
    pub cfg: RunConfig,
    pub dir: PathBuf,
}

impl Run {
    pub fn new(cfg: RunConfig, dir: PathBuf) -> Self {
        Self { cfg, dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Path of an upstream artifact, or an error naming the stage that makes it.
    fn require(&self, rel: &str, stage: &'static str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact { path: p, stage })
        }
    }

    fn seed(&self, label: &str) -> u64 {
        derive(self.cfg.seed, label)
    }

    fn create(&self, rel: &str) -> Result<BufWriter<File>> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        let mut w = self.create(rel)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        self.write_text(rel, &serde_json::to_string_pretty(value)?)
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str, stage: &'static str) -> Result<T> {
        let p = self.require(rel, stage)?;
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    fn schema(&self) -> Result<FeatureSchema> {
        let p = self.require(SCHEMA, "ingest")?;
        Ok(FeatureSchema::load(p)?)
    }

    fn season(&self) -> Result<(FeatureSchema, Season)> {
        let schema = self.schema()?;
        let weather = ingest_weather_dir(self.require(WEATHER_DIR, "ingest")?, &schema)?;
        let load: Vec<f64> = read_column(&self.require(LOAD, "ingest")?, "load")?;
        let day = self.require(DAY_PROFILE, "ingest")?;
        let price = read_column(&day, "price")?;
        let pv_reference = read_column(&day, "pv_reference_kw")?;
        let steps_per_day = price.len();
        Ok((schema, Season { weather, load, price, pv_reference, steps_per_day }))
    }
}

fn read_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Config(format!("{}: no '{name}' column", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec
            .get(col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Config(format!("{}: row {} has no numeric '{name}'", path.display(), i + 2)))?;
        out.push(v);
    }
    Ok(out)
}

/// Collects the season inputs (files or fixtures) into the run directory.
pub fn ingest(run: &Run) -> Result<()> {
    let cfg = &run.cfg;
    let seed = run.seed("ingest");
    let schema = match &cfg.paths.schema {
        Some(p) => FeatureSchema::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => default_schema(),
    };
    let weather: WeatherTable = match &cfg.paths.weather {
        Some(dir) => ingest_weather_dir(dir, &schema)?,
        None => synthetic_weather(cfg.season.days, STEPS_PER_DAY, seed),
    };
    if weather.tensor.dims != schema.dims() {
        return Err(CliError::Config("schema does not match the weather layout; supply both or neither".into()).into());
    }
    let n = weather.tensor.n_samples();
    if n == 0 || n % STEPS_PER_DAY != 0 {
        return Err(CliError::Config(format!("{n} weather snapshots do not form whole {STEPS_PER_DAY}-window days")).into());
    }
    let days = n / STEPS_PER_DAY;
    let load = match &cfg.paths.loads {
        Some(p) => read_column(p, "load")?,
        None => system_load_series(days, STEPS_PER_DAY, Some(&heat_index(&weather)), seed),
    };
    if load.len() != n {
        return Err(CliError::Config(format!("{} load values for {n} weather snapshots", load.len())).into());
    }
    let price = match &cfg.paths.prices {
        Some(p) => read_column(p, "price")?,
        None => price_series(STEPS_PER_DAY),
    };
    if price.len() != STEPS_PER_DAY {
        return Err(CliError::Config(format!("{} prices for {STEPS_PER_DAY} windows per day", price.len())).into());
    }
    let pv = pv_reference_profile(STEPS_PER_DAY);

    run.write_text(SCHEMA, &schema.to_toml_string())?;
    for (s, site) in schema.sites.iter().enumerate() {
        write_site_csv(run.create(&format!("{WEATHER_DIR}/{}.csv", site.id))?, &weather, &schema, s)?;
    }
    let mut w = csv::Writer::from_writer(run.create(LOAD)?);
    w.write_record(["timestamp", "load"])?;
    for (ts, v) in weather.timestamps.iter().zip(&load) {
        w.write_record([format_timestamp(ts), v.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(run.create(DAY_PROFILE)?);
    w.write_record(["window", "price", "pv_reference_kw"])?;
    for t in 0..STEPS_PER_DAY {
        w.write_record([t.to_string(), price[t].to_string(), pv[t].to_string()])?;
    }
    w.flush()?;
    info!("ingest: {days} days, {} sites, {n} snapshots", schema.sites.len());
    Ok(())
}

/// Cost-only drivers over the season, then the bus and line corpora.
pub fn synth(run: &Run) -> Result<()> {
    let (schema, season) = run.season()?;
    let drivers = season_dispatch_drivers(&season, run.cfg.scenario)?;
    let cfg = run.cfg.synth.to_config(run.seed("synth"));
    let (bus, line) = build_corpora(&season, &drivers, &schema, &cfg)?;
    let mut w = csv::Writer::from_writer(run.create(CORPUS_SUMMARY)?);
    w.write_record(["component", "rows", "failures", "failure_share"])?;
    for c in [&bus, &line] {
        let kind = c.tensor.powerflow.as_ref().map(|p| p.kind).unwrap_or(ComponentKind::Bus);
        c.write_csv(run.create(&corpus_path(kind))?)?;
        let fails = c.tensor.failure_count()?;
        w.write_record([kind.as_str().to_string(), c.tensor.n_samples().to_string(), fails.to_string(), c.failure_share().to_string()])?;
        info!("synth: {} corpus, {} rows, failure share {:.4}", kind.as_str(), c.tensor.n_samples(), c.failure_share());
    }
    w.flush()?;
    Ok(())
}

fn metric_row(w: &mut csv::Writer<BufWriter<File>>, model: &str, kind: ComponentKind, eval: &str, m: &Metrics) -> Result<()> {
    w.write_record([
        model.to_string(),
        kind.as_str().to_string(),
        eval.to_string(),
        m.n.to_string(),
        format!("{:.6}", m.accuracy),
        format!("{:.6}", m.mse),
    ])?;
    Ok(())
}

/// Fits the configured ensemble for buses and lines.
pub fn train(run: &Run) -> Result<()> {
    let (schema, season) = run.season()?;
    let model = run.cfg.model;
    let mut w = csv::Writer::from_writer(run.create(METRICS)?);
    w.write_record(["model", "component", "evaluation", "n", "accuracy", "mse"])?;
    for kind in KINDS {
        let p = run.require(&corpus_path(kind), "synth")?;
        let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
        let corpus = SyntheticCorpus::read_csv(f, &season.weather.tensor, kind)?;
        let cfg = run.cfg.train.to_config(model, run.seed(&format!("train-{}", kind.as_str())));
        let out = train_model(&corpus, &schema, &cfg)?;
        out.document.save(run.path(&model_path(kind)))?;
        metric_row(&mut w, model.as_str(), kind, "test", &out.test)?;
        for (k, m) in out.folds.iter().enumerate() {
            metric_row(&mut w, model.as_str(), kind, &format!("fold-{}", k + 1), m)?;
        }
        if let Some(b) = &out.baseline {
            metric_row(&mut w, "random-forest", kind, "test", b)?;
        }
        info!(
            "train: {} {} test accuracy {:.4}, digest {}",
            model.as_str(),
            kind.as_str(),
            out.test.accuracy,
            &out.document.digest()?[..16]
        );
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Calibration {
    bus: CalibrationParams,
    line: CalibrationParams,
}

fn load_model(run: &Run, kind: ComponentKind) -> Result<ModelDocument> {
    Ok(ModelDocument::load(run.require(&model_path(kind), "train")?)?)
}

/// Prior-shift parameters of both models and their calibration curves.
pub fn calibrate_stage(run: &Run) -> Result<()> {
    let params = |kind| -> Result<CalibrationParams> {
        let doc = load_model(run, kind)?;
        Ok(CalibrationParams::for_kind(kind, doc.n_syn, doc.n_fail)?)
    };
    let cal = Calibration { bus: params(ComponentKind::Bus)?, line: params(ComponentKind::Line)? };
    run.write_json(CALIBRATION, &cal)?;
    let mut w = csv::Writer::from_writer(run.create(CALIBRATION_CURVE)?);
    w.write_record(["raw", "bus", "line"])?;
    for k in 0..=100 {
        let raw = k as f64 / 100.0;
        w.write_record([raw.to_string(), calibrate(raw, &cal.bus).to_string(), calibrate(raw, &cal.line).to_string()])?;
    }
    w.flush()?;
    info!("calibrate: bus share {:.4}, line share {:.4}", cal.bus.synthetic_share(), cal.line.synthetic_share());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub day: usize,
    pub scenario: String,
    pub curves: CurveSource,
    pub stop: String,
    pub iterations: usize,
    pub accepted_iteration: usize,
    pub objective: f64,
    pub cm_objective: f64,
    pub cm_cost: f64,
    pub reduction: f64,
    pub dg_total: f64,
    pub dr_total: f64,
    pub cm_dg_total: f64,
    pub cm_dr_total: f64,
    pub x: Vec<f64>,
    pub cm_x: Vec<f64>,
}

fn dispatch_day(run: &Run, season: &Season) -> Result<usize> {
    let days = season.days();
    match run.cfg.season.dispatch_day {
        Some(d) if d < days => Ok(d),
        Some(d) => Err(CliError::Config(format!("season.dispatch_day {d} outside the {days}-day season")).into()),
        None => {
            let s = season.steps_per_day;
            let peak = |d: usize| season.load[d * s..(d + 1) * s].iter().cloned().fold(f64::MIN, f64::max);
            Ok((0..days).max_by(|&a, &b| peak(a).total_cmp(&peak(b)).then(b.cmp(&a))).unwrap_or(0))
        }
    }
}

/// Cost-only dispatch, then the reliability-aware loop on one day.
pub fn optimize(run: &Run) -> Result<()> {
    let (_, season) = run.season()?;
    let day = dispatch_day(run, &season)?;
    let case = match &run.cfg.paths.case {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            GridCase::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => build_case_33bus(run.cfg.scenario, &season.day_inputs(day)?)?,
    };
    let opt = &run.cfg.optimize;
    let scp = relgrid::scp::ScpConfig { seed: run.seed("optimize"), ..opt.scp.clone() };
    let initial = UnreliabilityParams::placeholder(&case);
    let (bus_doc, line_doc, cal);
    let ensemble;
    let curve;
    let oracle: &dyn ProbabilityOracle = match opt.curves {
        CurveSource::Ensemble => {
            bus_doc = load_model(run, ComponentKind::Bus)?;
            line_doc = load_model(run, ComponentKind::Line)?;
            cal = run.read_json::<Calibration>(CALIBRATION, "calibrate")?;
            ensemble = EnsembleOracle {
                bus: &bus_doc,
                line: &line_doc,
                bus_calibration: cal.bus,
                line_calibration: cal.line,
                weather: season.day_weather(day)?,
            };
            &ensemble
        }
        CurveSource::Placeholder => {
            curve = CurveOracle(initial.clone());
            &curve
        }
    };
    let out = solve_mcrm(&case, opt.weights, &initial, Some(oracle), &scp)?;
    run.write_text(CASE, &case.to_json()?)?;
    run.write_json(PARAMS, &out.params)?;
    out.trace.write_csv(run.create(TRACE)?)?;
    write_dispatch_csv(&case, &out.program, &[("CM", &out.cm_x), ("MCRM", &out.x)], run.create(DISPATCH)?)?;
    let (dg, dr) = dg_dr_total(&out.program, &out.x);
    let (cm_dg, cm_dr) = dg_dr_total(&out.program, &out.cm_x);
    let stop = match out.stop {
        StopReason::Converged(c) => format!("converged:{c:?}"),
        StopReason::MaxIterations => "max-iterations".to_string(),
    };
    let record = SolutionRecord {
        day,
        scenario: run.cfg.scenario.as_str().to_string(),
        curves: opt.curves,
        stop: stop.clone(),
        iterations: out.trace.rows.last().map_or(0, |r| r.iteration),
        accepted_iteration: out.accepted_iteration,
        objective: out.objective,
        cm_objective: out.cm_objective,
        cm_cost: out.cm_cost,
        reduction: out.reduction(),
        dg_total: dg,
        dr_total: dr,
        cm_dg_total: cm_dg,
        cm_dr_total: cm_dr,
        x: out.x.clone(),
        cm_x: out.cm_x.clone(),
    };
    run.write_json(SOLUTION, &record)?;
    info!(
        "optimize: day {day}, {stop}, objective {:.4} vs cost-only {:.4} ({:.3}% lower)",
        out.objective,
        out.cm_objective,
        100.0 * out.reduction()
    );
    Ok(())
}

fn corpus_labels(run: &Run, kind: ComponentKind) -> Result<Vec<i8>> {
    let p = run.require(&corpus_path(kind), "synth")?;
    let mut rdr = csv::Reader::from_path(&p)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| CliError::Config(format!("{}: no label column", p.display())))?;
    rdr.records()
        .map(|r| -> Result<i8> {
            let r = r?;
            Ok(r.get(col).and_then(|s| s.parse().ok()).unwrap_or(FAILURE))
        })
        .collect()
}

/// Monte Carlo and corpus replay of both dispatches.
pub fn simulate(run: &Run) -> Result<()> {
    let case_path = run.require(CASE, "optimize")?;
    let case = GridCase::from_json(&std::fs::read_to_string(&case_path)?)?;
    let sol: SolutionRecord = run.read_json(SOLUTION, "optimize")?;
    let params: UnreliabilityParams = run.read_json(PARAMS, "optimize")?;
    let program = relgrid::grid::build_program(&case)?;
    let model = EensModel::new(&case, &program, run.cfg.optimize.weights)?;
    let source = ReplaySource {
        bus_labels: corpus_labels(run, ComponentKind::Bus)?,
        line_labels: corpus_labels(run, ComponentKind::Line)?,
        bus_prior: default_prior(ComponentKind::Bus),
        line_prior: default_prior(ComponentKind::Line),
    };
    let paths = &program.topology.paths;
    let sim = &run.cfg.simulate;
    let mut w = csv::Writer::from_writer(run.create(SIM_SUMMARY)?);
    w.write_record([
        "model", "method", "trials", "analytic", "mean", "stdev", "std_error", "z_score", "min", "q05", "q25", "q50",
        "q75", "q95", "max",
    ])?;
    for (i, (label, x)) in [("cm", &sol.cm_x), ("mcrm", &sol.x)].into_iter().enumerate() {
        if x.len() != program.index.n_vars {
            return Err(CliError::Config(format!("{SOLUTION} does not match {CASE}")).into());
        }
        let op = program.operating_cost(x);
        let terms = model.window_terms(x, &params);
        let analytic = expected_objective(op, &terms, paths);
        let mc = monte_carlo_terms(op, &terms, paths, sim.trials, derive_indexed(run.seed("simulate-mc"), label, i as u64))?;
        let replay = replay_terms(op, &terms, paths, &source, sim.replay_trials, run.seed(&format!("simulate-replay-{label}")))?;
        for (method, s) in [("monte_carlo", &mc), ("replay", &replay)] {
            summary_row(&mut w, label, method, analytic, s)?;
            write_histogram_csv(&s.samples, sim.bins, &format!("{label}-{method}"), run.create(&format!("simulate/histogram_{label}_{method}.csv"))?)?;
        }
        info!(
            "simulate: {label} analytic {analytic:.4}, Monte Carlo {:.4} ± {:.4}, replay {:.4} over {} trials",
            mc.mean, mc.std_error, replay.mean, replay.trials
        );
    }
    w.flush()?;
    Ok(())
}

fn summary_row(w: &mut csv::Writer<BufWriter<File>>, model: &str, method: &str, analytic: f64, s: &SimSummary) -> Result<()> {
    let z = if s.std_error > 0.0 { (s.mean - analytic) / s.std_error } else { 0.0 };
    let mut rec = vec![
        model.to_string(),
        method.to_string(),
        s.trials.to_string(),
        analytic.to_string(),
        s.mean.to_string(),
        s.stdev.to_string(),
        s.std_error.to_string(),
        if method == "monte_carlo" { z.to_string() } else { String::new() },
        s.min.to_string(),
    ];
    rec.extend(s.quantiles.iter().map(|q| q.to_string()));
    rec.push(s.max.to_string());
    w.write_record(&rec)?;
    Ok(())
}

/// Bound comparison over the configured grid; fails if any point is not strict.
pub fn theory_check(run: &Run) -> Result<()> {
    let report = verify_proposition1(&run.cfg.theory)?;
    report.write_csv(run.create(THEORY)?)?;
    info!("theory-check: {} grid points, {} skipped", report.rows.len(), report.skipped.len());
    if !report.all_strict() {
        return Err(CliError::Numerical(format!(
            "targeted bound is not strictly below the uniform bound at {} of {} points",
            report.violations().len(),
            report.rows.len()
        ))
        .into());
    }
    Ok(())
}

fn copy_columns(src: &Path, dst: &mut csv::Writer<BufWriter<File>>, columns: &[&str]) -> Result<()> {
    let mut rdr = csv::Reader::from_path(src)?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).ok_or_else(|| anyhow::anyhow!("{}: no '{c}' column", src.display())))
        .collect::<Result<_>>()?;
    dst.write_record(columns)?;
    for rec in rdr.records() {
        let rec = rec?;
        dst.write_record(idx.iter().map(|&i| rec.get(i).unwrap_or("")))?;
    }
    dst.flush()?;
    Ok(())
}

/// Collates the summary tables and a digest manifest of every artifact.
pub fn report(run: &Run) -> Result<()> {
    let metrics = run.require(METRICS, "train")?;
    let trace = run.require(TRACE, "optimize")?;
    let sim = run.require(SIM_SUMMARY, "simulate")?;
    let theory = run.require(THEORY, "theory-check")?;
    let sol: SolutionRecord = run.read_json(SOLUTION, "optimize")?;

    copy_columns(&metrics, &mut csv::Writer::from_writer(run.create("report/models.csv")?), &["model", "component", "evaluation", "n", "accuracy", "mse"])?;
    copy_columns(
        &trace,
        &mut csv::Writer::from_writer(run.create("report/trace.csv")?),
        &["iteration", "obj_cm", "obj_mcrm", "obj_mcrm_appx", "best_seen"],
    )?;
    copy_columns(
        &sim,
        &mut csv::Writer::from_writer(run.create("report/simulation.csv")?),
        &["model", "method", "trials", "analytic", "mean", "std_error", "q05", "q50", "q95"],
    )?;
    let mut strict = true;
    let mut points = 0;
    let mut rdr = csv::Reader::from_path(&theory)?;
    let col = rdr.headers()?.iter().position(|h| h == "strict").unwrap_or(usize::MAX);
    for rec in rdr.records() {
        points += 1;
        strict &= rec?.get(col) == Some("true");
    }
    let mut w = csv::Writer::from_writer(run.create("report/summary.csv")?);
    w.write_record(["key", "value"])?;
    for (k, v) in [
        ("scenario", sol.scenario.clone()),
        ("dispatch_day", sol.day.to_string()),
        ("curves", format!("{:?}", sol.curves).to_lowercase()),
        ("stop", sol.stop.clone()),
        ("iterations", sol.iterations.to_string()),
        ("objective", sol.objective.to_string()),
        ("cost_only_objective", sol.cm_objective.to_string()),
        ("reduction", sol.reduction.to_string()),
        ("dg_plus_dr", (sol.dg_total + sol.dr_total).to_string()),
        ("cost_only_dg_plus_dr", (sol.cm_dg_total + sol.cm_dr_total).to_string()),
        ("theory_points", points.to_string()),
        ("theory_all_strict", strict.to_string()),
    ] {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    write_manifest(run)?;
    info!("report: collated into {}", run.path("report").display());
    Ok(())
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// `path,bytes,sha256` for every artifact except the manifest itself.
pub fn write_manifest(run: &Run) -> Result<()> {
    let mut files = Vec::new();
    files_under(&run.dir, &mut files)?;
    let manifest = run.path(MANIFEST);
    let mut rows: Vec<(String, usize, String)> = files
        .into_iter()
        .filter(|p| *p != manifest)
        .map(|p| -> Result<_> {
            let bytes = std::fs::read(&p)?;
            let rel = p.strip_prefix(&run.dir)?.to_string_lossy().replace('\\', "/");
            Ok((rel, bytes.len(), digest_hex(&bytes)))
        })
        .collect::<Result<_>>()?;
    rows.sort();
    let mut w = csv::Writer::from_writer(run.create(MANIFEST)?);
    w.write_record(["path", "bytes", "sha256"])?;
    for (p, n, d) in rows {
        w.write_record([p, n.to_string(), d])?;
    }
    w.flush()?;
    Ok(())
}

/// Every stage in order.
pub fn pipeline(run: &Run) -> Result<()> {
    ingest(run)?;
    synth(run)?;
    train(run)?;
    calibrate_stage(run)?;
    optimize(run)?;
    simulate(run)?;
    theory_check(run)?;
    report(run)
}
