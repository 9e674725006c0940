//! Bundled stand-ins for the external inputs: site/feature schema, a
//! synthetic warm-season weather record, a normalized system-load series,
//! energy prices and a reference PV profile.

use chrono::{NaiveDate, TimeDelta};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matrix::Matrix;

use super::ingest::{WeatherTable, STEP_HOURS};
use super::schema::{Category, Coordinates, Feature, FeatureSchema, Site, SCHEMA_VERSION};
use super::tensor::FeatureTensor;

pub const SEASON_DAYS: usize = 122;
pub const STEPS_PER_DAY: usize = 12;

/// Reference PV inverter peak, kW AC.
pub const PV_REFERENCE_PEAK_KW: f64 = 3.33;

const CATEGORIES: [(&str, &[(&str, &str)]); 4] = [
    (
        "heat",
        &[
            ("2m_temperature", "K"),
            ("2m_dewpoint_temperature", "K"),
            ("surface_net_solar_radiation", "J m-2"),
            ("surface_net_thermal_radiation", "J m-2"),
            ("surface_sensible_heat_flux", "J m-2"),
        ],
    ),
    (
        "precipitation",
        &[
            ("convective_precipitation", "m"),
            ("total_precipitation", "m"),
            ("convective_snowfall", "m"),
            ("snow_density", "kg m-3"),
        ],
    ),
    (
        "wind",
        &[
            ("10m_u_component_of_neutral_wind", "m s-1"),
            ("10m_u_component_of_wind", "m s-1"),
            ("10m_v_component_of_neutral_wind", "m s-1"),
            ("10m_v_component_of_wind", "m s-1"),
        ],
    ),
    (
        "other",
        &[
            ("leaf_area_index_high_vegetation", "m2 m-2"),
            ("leaf_area_index_low_vegetation", "m2 m-2"),
            ("high_vegetation_cover", "1"),
            ("total_cloud_cover", "1"),
            ("surface_runoff", "m"),
        ],
    ),
];

/// Four grid points around the substation at 40.55 N, 74.34 W, with 18
/// features in four categories.
pub fn default_schema() -> FeatureSchema {
    let sites = [(40.54, -74.21), (40.54, -74.46), (40.79, -74.21), (40.79, -74.46)]
        .iter()
        .enumerate()
        .map(|(k, &(latitude, longitude))| Site {
            id: format!("site{}", k + 1),
            latitude,
            longitude,
        })
        .collect();
    let categories = CATEGORIES
        .iter()
        .map(|(id, feats)| Category {
            id: id.to_string(),
            features: feats
                .iter()
                .map(|(n, u)| Feature { name: n.to_string(), unit: u.to_string() })
                .collect(),
        })
        .collect();
    FeatureSchema {
        schema_version: SCHEMA_VERSION,
        substation: Coordinates { latitude: 40.55, longitude: -74.34 },
        sites,
        categories,
    }
}

pub fn season_start() -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 4, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

/// Diurnal shape in [0,1] peaking mid-afternoon.
fn diurnal(step: usize, steps: usize) -> f64 {
    let hour = 24.0 * step as f64 / steps as f64;
    0.5 * (1.0 - ((hour - 3.0) / 24.0 * std::f64::consts::TAU).cos())
}

fn solar(step: usize, steps: usize) -> f64 {
    let hour = 24.0 * (step as f64 + 0.5) / steps as f64;
    if (6.0..20.0).contains(&hour) {
        ((hour - 6.0) / 14.0 * std::f64::consts::PI).sin()
    } else {
        0.0
    }
}

fn ar1(rng: &mut impl Rng, n: usize, phi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let innov = (1.0 - phi * phi).sqrt();
    let mut x: f64 = rng.sample(StandardNormal);
    for _ in 0..n {
        out.push(x);
        let e: f64 = rng.sample(StandardNormal);
        x = phi * x + innov * e;
    }
    out
}

/// Latent per-category drivers over the season: warmth, wetness, wind, cover.
struct Drivers {
    heat: Vec<f64>,
    wet: Vec<f64>,
    wind_u: Vec<f64>,
    wind_v: Vec<f64>,
    other: Vec<f64>,
}

fn drivers(rng: &mut impl Rng, days: usize, steps: usize) -> Drivers {
    let n = days * steps;
    let daily_heat = ar1(rng, days, 0.8);
    let hourly = ar1(rng, n, 0.7);
    let heat = (0..n)
        .map(|k| {
            let (d, s) = (k / steps, k % steps);
            let season = d as f64 / days.max(1) as f64;
            1.6 * season - 0.8 + 0.9 * daily_heat[d] + 0.9 * (diurnal(s, steps) - 0.5) + 0.3 * hourly[k]
        })
        .collect();
    let wet = ar1(rng, n, 0.8);
    let wind_u = ar1(rng, n, 0.85);
    let wind_v = ar1(rng, n, 0.85);
    let other_daily = ar1(rng, days, 0.9);
    let other = (0..n)
        .map(|k| {
            let d = k / steps;
            0.8 * (d as f64 / days.max(1) as f64) + 0.6 * other_daily[d] + 0.5 * wet[k]
        })
        .collect();
    Drivers { heat, wet, wind_u, wind_v, other }
}

/// Synthetic multi-site weather over `days` × `steps` two-hour windows,
/// starting 2024-04-01. Features of one category share a common latent
/// driver; sites differ by small offsets and independent noise.
pub fn synthetic_weather(days: usize, steps: usize, seed: u64) -> WeatherTable {
    let schema = default_schema();
    let dims = schema.dims();
    let mut rng = crate::seed::stage_rng(seed, "fixture-weather");
    let dr = drivers(&mut rng, days, steps);
    let n = days * steps;
    let mut columns = Vec::with_capacity(dims.n_weather_columns());
    for _ in 0..dims.n_sites {
        let site_shift: f64 = 0.15 * rng.sample::<f64, _>(StandardNormal);
        let mut noise = |scale: f64| -> f64 { scale * rng.sample::<f64, _>(StandardNormal) };
        let col = |f: &mut dyn FnMut(usize) -> f64| (0..n).map(&mut *f).collect::<Vec<f64>>();
        // heat
        columns.push(col(&mut |k| 293.0 + 6.0 * (dr.heat[k] + site_shift) + noise(0.8)));
        columns.push(col(&mut |k| 285.0 + 4.5 * (dr.heat[k] + site_shift) + 1.5 * dr.wet[k].max(0.0) + noise(1.0)));
        columns.push(col(&mut |k| {
            let s = solar(k % steps, steps);
            (1.4e6 * s * (1.0 + 0.25 * dr.heat[k]) + noise(5e4) + 1e5 * s).max(0.0) + 1e3 * noise(1.0).abs()
        }));
        columns.push(col(&mut |k| -2.0e5 + 4.0e4 * (dr.heat[k] + site_shift) + noise(1.5e4)));
        columns.push(col(&mut |k| 1.0e5 * (dr.heat[k] + site_shift) * (0.5 + solar(k % steps, steps)) + noise(2e4)));
        // precipitation
        columns.push(col(&mut |k| 2.0e-4 * (1.2 * dr.wet[k] - 0.8 + noise(0.3)).exp()));
        columns.push(col(&mut |k| 5.0e-4 * (1.1 * dr.wet[k] - 0.5 + noise(0.3)).exp()));
        columns.push(col(&mut |k| 1.0e-7 * (0.5 * dr.wet[k] - 0.5 * dr.heat[k] + noise(0.5)).exp()));
        columns.push(col(&mut |k| 100.0 + 5.0 * dr.wet[k] - 2.0 * dr.heat[k] + noise(1.0)));
        // wind
        columns.push(col(&mut |k| 3.0 * dr.wind_u[k] + 0.5 + noise(0.4)));
        columns.push(col(&mut |k| 2.8 * dr.wind_u[k] + 0.4 + noise(0.4)));
        columns.push(col(&mut |k| 3.0 * dr.wind_v[k] + 0.3 * dr.wind_u[k] + noise(0.4)));
        columns.push(col(&mut |k| 2.8 * dr.wind_v[k] + 0.3 * dr.wind_u[k] + noise(0.4)));
        // other
        columns.push(col(&mut |k| (3.0 + 0.8 * dr.other[k] + noise(0.15)).max(0.0)));
        columns.push(col(&mut |k| (2.0 + 0.6 * dr.other[k] + noise(0.15)).max(0.0)));
        columns.push(col(&mut |k| (0.55 + 0.08 * dr.other[k] + noise(0.02)).clamp(0.0, 1.0)));
        columns.push(col(&mut |k| (0.5 + 0.2 * dr.other[k] + 0.1 * dr.wet[k] + noise(0.05)).clamp(0.0, 1.0)));
        columns.push(col(&mut |k| 1.0e-5 * (0.8 * dr.other[k] + 0.8 * dr.wet[k] + noise(0.3)).exp()));
    }
    debug_assert_eq!(columns.len(), dims.n_weather_columns());
    let weather = Matrix::from_columns(n, columns).expect("column lengths agree");
    let tensor = FeatureTensor::new(dims, weather).expect("dims agree");
    let start = season_start();
    let timestamps = (0..n)
        .map(|k| start + TimeDelta::hours(STEP_HOURS * k as i64))
        .collect();
    WeatherTable { timestamps, tensor }
}

/// Normalized (peak 1) system load over the season with a double-peaked
/// daily shape. Daily level follows `heat`, one value per snapshot, if given.
pub fn system_load_series(days: usize, steps: usize, heat: Option<&[f64]>, seed: u64) -> Vec<f64> {
    let mut rng = crate::seed::stage_rng(seed, "fixture-load");
    let n = days * steps;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (d, s) = (k / steps, k % steps);
        let hour = 24.0 * s as f64 / steps as f64;
        let morning = (-((hour - 8.0) / 2.5).powi(2)).exp();
        let evening = (-((hour - 18.0) / 3.0).powi(2)).exp();
        let shape = 0.55 + 0.2 * morning + 0.35 * evening;
        let season = 0.85 + 0.25 * d as f64 / days.max(1) as f64;
        let weather = heat.map_or(0.0, |h| 0.04 * h[k]);
        let e: f64 = StandardNormal.sample(&mut rng);
        out.push((shape * season * (1.0 + weather) + 0.015 * e).max(0.05));
    }
    let peak = out.iter().cloned().fold(f64::MIN, f64::max);
    out.iter_mut().for_each(|v| *v /= peak);
    out
}

/// Standardized warmth per snapshot: the site-averaged 2 m temperature.
pub fn heat_index(table: &WeatherTable) -> Vec<f64> {
    let t = &table.tensor;
    let cols: Vec<usize> = (0..t.dims.n_sites).map(|d| t.dims.column(d, 0, 0)).collect();
    let raw: Vec<f64> = (0..t.n_samples())
        .map(|i| cols.iter().map(|&c| t.weather.get(i, c)).sum::<f64>() / cols.len() as f64)
        .collect();
    let s = super::tensor::ColumnStats::of(&raw);
    raw.iter().map(|&v| if s.stdev > 0.0 { s.apply(v) } else { 0.0 }).collect()
}

/// Day-ahead energy price per two-hour window, $/MWh.
pub fn price_series(steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|s| {
            let hour = 24.0 * s as f64 / steps as f64;
            25.0 + 20.0 * (-((hour - 17.0) / 3.5).powi(2)).exp() + 8.0 * (-((hour - 9.0) / 2.5).powi(2)).exp()
        })
        .collect()
}

/// Output of the reference PV system per window, kW AC.
pub fn pv_reference_profile(steps: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..steps).map(|s| solar(s, steps)).collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    raw.iter().map(|v| PV_REFERENCE_PEAK_KW * v / peak).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::standardize;

    #[test]
    fn schema_shape() {
        let s = default_schema();
        s.validate().unwrap();
        let dims = s.dims();
        assert_eq!(dims.n_sites, 4);
        assert_eq!(dims.category_sizes, vec![5, 4, 4, 5]);
        assert_eq!(dims.n_weather_columns(), 72);
    }

    #[test]
    fn weather_is_standardizable_and_reproducible() {
        let a = synthetic_weather(10, 12, 3);
        assert_eq!(a.tensor.n_samples(), 120);
        standardize(&a.tensor).unwrap();
        let b = synthetic_weather(10, 12, 3);
        assert_eq!(a.tensor.weather, b.tensor.weather);
        assert_eq!(a.timestamps[1] - a.timestamps[0], TimeDelta::hours(2));
    }

    #[test]
    fn profiles() {
        let pv = pv_reference_profile(12);
        assert!((pv.iter().cloned().fold(0.0, f64::max) - PV_REFERENCE_PEAK_KW).abs() < 1e-12);
        assert_eq!(pv[0], 0.0);
        let load = system_load_series(3, 12, None, 1);
        assert!((load.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        assert!(load.iter().all(|&v| v > 0.0));
    }
}
