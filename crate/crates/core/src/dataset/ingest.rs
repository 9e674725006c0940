use std::io::Read;
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::schema::FeatureSchema;
use super::tensor::FeatureTensor;

/// Weather records must be spaced exactly this far apart.
pub const STEP_HOURS: i64 = 2;

const TIME_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| NaiveDateTime::parse_from_str(&format!("{s} 00:00"), "%Y-%m-%d %H:%M").ok())
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M").to_string()
}

/// Ingested weather: timestamps and the (unstandardized, unlabeled) tensor.
#[derive(Debug, Clone)]
pub struct WeatherTable {
    pub timestamps: Vec<NaiveDateTime>,
    pub tensor: FeatureTensor,
}

struct SiteTable {
    timestamps: Vec<NaiveDateTime>,
    /// `[feature][row]` in schema order.
    columns: Vec<Vec<f64>>,
}

fn read_site<R: Read>(site: &str, reader: R, schema: &FeatureSchema) -> Result<SiteTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ts_col = headers
        .iter()
        .position(|h| h == "timestamp")
        .ok_or_else(|| Error::data(format!("site '{site}': missing 'timestamp' column")))?;
    let names = schema.feature_names();
    let mut positions = Vec::with_capacity(names.len());
    for name in &names {
        let pos = headers.iter().position(|h| h == *name).ok_or_else(|| {
            Error::data(format!("site '{site}': feature '{name}' missing from header"))
        })?;
        positions.push(pos);
    }

    let step = TimeDelta::hours(STEP_HOURS);
    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw_ts = rec.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| {
            Error::data(format!("site '{site}', step {row}: unparseable timestamp '{raw_ts}'"))
        })?;
        if let Some(&first) = timestamps.first() {
            let expected = first + step * row as i32;
            if ts != expected {
                return Err(Error::data(format!(
                    "site '{site}': missing timestamp at step {row} (expected {}, found {})",
                    format_timestamp(&expected),
                    format_timestamp(&ts)
                )));
            }
        }
        timestamps.push(ts);
        for (k, &pos) in positions.iter().enumerate() {
            let cell = rec.get(pos).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::data(format!(
                    "site '{site}', step {row} ({}): feature '{}' missing",
                    format_timestamp(&ts),
                    names[k]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!(
                    "site '{site}', step {row} ({}), feature '{}': non-numeric cell '{cell}'",
                    format_timestamp(&ts),
                    names[k]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "site '{site}', step {row}, feature '{}': non-finite value",
                    names[k]
                )));
            }
            columns[k].push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::data(format!("site '{site}': no records")));
    }
    Ok(SiteTable { timestamps, columns })
}

/// Reads one CSV per schema site (`timestamp,<feature>...`) into a tensor
/// ordered by timestamp. No standardization is applied.
///
/// `sources` pairs each schema site id with a reader; order does not matter.
pub fn ingest_weather<R: Read>(sources: Vec<(String, R)>, schema: &FeatureSchema) -> Result<WeatherTable> {
    schema.validate()?;
    let mut by_site: Vec<Option<SiteTable>> = (0..schema.sites.len()).map(|_| None).collect();
    for (id, reader) in sources {
        let d = schema
            .sites
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::data(format!("file for unknown site '{id}'")))?;
        by_site[d] = Some(read_site(&id, reader, schema)?);
    }
    let mut tables = Vec::with_capacity(by_site.len());
    for (d, t) in by_site.into_iter().enumerate() {
        tables.push(t.ok_or_else(|| Error::data(format!("no file for site '{}'", schema.sites[d].id)))?);
    }
    let reference = &tables[0].timestamps;
    for (d, t) in tables.iter().enumerate().skip(1) {
        let n = reference.len().min(t.timestamps.len());
        if let Some(k) = (0..n).find(|&k| reference[k] != t.timestamps[k]) {
            return Err(Error::data(format!(
                "site '{}': timestamp {} at step {k} differs from site '{}' ({})",
                schema.sites[d].id,
                format_timestamp(&t.timestamps[k]),
                schema.sites[0].id,
                format_timestamp(&reference[k])
            )));
        }
        if t.timestamps.len() != reference.len() {
            let k = n;
            return Err(Error::data(format!(
                "site '{}' has {} steps but site '{}' has {}; first unmatched step {k}",
                schema.sites[d].id,
                t.timestamps.len(),
                schema.sites[0].id,
                reference.len()
            )));
        }
    }
    let n = reference.len();
    let mut columns = Vec::with_capacity(schema.sites.len() * schema.feature_names().len());
    let timestamps = tables[0].timestamps.clone();
    for t in tables {
        columns.extend(t.columns);
    }
    let tensor = FeatureTensor::new(schema.dims(), Matrix::from_columns(n, columns)?)?;
    Ok(WeatherTable { timestamps, tensor })
}

/// Reads `<dir>/<site id>.csv` for every schema site.
pub fn ingest_weather_dir(dir: impl AsRef<Path>, schema: &FeatureSchema) -> Result<WeatherTable> {
    let mut sources = Vec::new();
    for s in &schema.sites {
        let path = dir.as_ref().join(format!("{}.csv", s.id));
        let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        sources.push((s.id.clone(), f));
    }
    ingest_weather(sources, schema)
}

/// Writes one site's slice of a weather table in the ingestion format.
pub fn write_site_csv<W: std::io::Write>(
    out: W,
    table: &WeatherTable,
    schema: &FeatureSchema,
    site: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names = schema.feature_names();
    let mut header = vec!["timestamp".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let dims = &table.tensor.dims;
    let width = dims.features_per_site();
    for (i, ts) in table.timestamps.iter().enumerate() {
        let mut rec = vec![format_timestamp(ts)];
        for f in 0..width {
            rec.push(format!("{}", table.tensor.weather.get(i, site * width + f)));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
