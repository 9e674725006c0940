//! Prior-shift calibration of raw ensemble probabilities.

use serde::{Deserialize, Serialize};

use crate::dataset::ComponentKind;
use crate::error::{Error, Result};

/// Average field failure probability per two-hour window.
pub const BUS_PRIOR: f64 = 4.93e-6;
pub const LINE_PRIOR: f64 = 1.14e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub prior: f64,
    pub n_syn: usize,
    pub n_fail: usize,
    /// Closed interval of raw probabilities that get rescaled.
    pub lo: f64,
    pub hi: f64,
}

impl CalibrationParams {
    pub fn new(prior: f64, n_syn: usize, n_fail: usize) -> Result<Self> {
        let p = Self { prior, n_syn, n_fail, lo: 0.05, hi: 0.95 };
        p.validate()?;
        Ok(p)
    }

    pub fn for_kind(kind: ComponentKind, n_syn: usize, n_fail: usize) -> Result<Self> {
        Self::new(default_prior(kind), n_syn, n_fail)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(Error::invalid(format!("prior {} outside (0,1)", self.prior)));
        }
        if !(self.n_fail > 0 && self.n_fail < self.n_syn) {
            return Err(Error::invalid(format!(
                "need 0 < failures ({}) < samples ({})",
                self.n_fail, self.n_syn
            )));
        }
        if !(0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(Error::invalid(format!("interval [{}, {}] invalid", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn synthetic_share(&self) -> f64 {
        self.n_fail as f64 / self.n_syn as f64
    }

    pub fn in_interval(&self, raw: f64) -> bool {
        (self.lo..=self.hi).contains(&raw)
    }
}

pub fn default_prior(kind: ComponentKind) -> f64 {
    match kind {
        ComponentKind::Bus => BUS_PRIOR,
        ComponentKind::Line => LINE_PRIOR,
    }
}

/// Rescales `raw` from the synthetic failure share to the field prior when
/// it lies in the central interval; passes it through otherwise.
pub fn calibrate(raw: f64, p: &CalibrationParams) -> f64 {
    if !p.in_interval(raw) {
        return raw;
    }
    let ratio = p.n_syn as f64 / p.n_fail as f64;
    let num = raw * p.prior * ratio;
    let den = num + (1.0 - raw) * (1.0 - p.prior) * (p.n_syn as f64 / (p.n_syn - p.n_fail) as f64);
    num / den
}

/// Elementwise calibration; verifies the map kept the ordering of the
/// in-interval inputs.
pub fn calibrate_batch(raws: &[f64], p: &CalibrationParams) -> Result<Vec<f64>> {
    if let Some(bad) = raws.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::invalid(format!("raw probability {bad} outside [0,1]")));
    }
    let out: Vec<f64> = raws.iter().map(|&r| calibrate(r, p)).collect();
    let mut inside: Vec<(f64, f64)> = raws
        .iter()
        .zip(&out)
        .filter(|(r, _)| p.in_interval(**r))
        .map(|(&r, &c)| (r, c))
        .collect();
    inside.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in inside.windows(2) {
        if (w[1].0 > w[0].0 && w[1].1 <= w[0].1) || (w[1].0 == w[0].0 && w[1].1 != w[0].1) {
            return Err(Error::numerical(format!(
                "calibration broke the ordering between {} and {}",
                w[0].0, w[1].0
            )));
        }
    }
    Ok(out)
}

/// Jumps of the calibrated value at the two interval endpoints.
pub fn boundary_jumps(p: &CalibrationParams) -> (f64, f64) {
    (p.lo - calibrate(p.lo, p), p.hi - calibrate(p.hi, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn params(prior: f64, share: f64) -> CalibrationParams {
        let n = 100_000;
        CalibrationParams::new(prior, n, (share * n as f64).round() as usize).unwrap()
    }

    #[test]
    fn reference_value() {
        assert_relative_eq!(calibrate(0.5, &params(BUS_PRIOR, 0.44)), 6.274537018145228e-06, max_relative = 1e-12);
    }

    #[test]
    fn matched_prior_is_identity() {
        let p = params(0.44, 0.44);
        for raw in [0.05, 0.3, 0.44, 0.8, 0.95] {
            assert!((calibrate(raw, &p) - raw).abs() <= 1e-12);
        }
    }

    #[test]
    fn share_maps_to_prior() {
        let p = params(LINE_PRIOR, 0.44);
        assert!((calibrate(0.44, &p) - LINE_PRIOR).abs() <= 1e-12);
    }

    #[test]
    fn passthrough_and_closed_endpoints() {
        let p = params(BUS_PRIOR, 0.44);
        assert_eq!(calibrate(0.96, &p), 0.96);
        assert_eq!(calibrate(0.01, &p), 0.01);
        assert!(calibrate(0.05, &p) < 0.05);
        assert!(calibrate(0.95, &p) < 0.95);
    }

    #[test]
    fn monotone_and_rank_preserving() {
        let p = params(BUS_PRIOR, 0.44);
        let mut last = -1.0;
        for k in 0..=9000 {
            let x = 0.05 + 0.9 * k as f64 / 9000.0;
            let c = calibrate(x, &p);
            assert!(c > last);
            last = c;
        }
        let mut rng = crate::seed::rng(3);
        let raws: Vec<f64> = (0..1000).map(|_| rng.random_range(0.05..=0.95)).collect();
        let out = calibrate_batch(&raws, &p).unwrap();
        for i in 0..raws.len() {
            for j in 0..raws.len() {
                assert_eq!(raws[i] < raws[j], out[i] < out[j]);
            }
        }
    }

    #[test]
    fn invalid_params() {
        assert!(CalibrationParams::new(0.0, 10, 5).is_err());
        assert!(CalibrationParams::new(0.1, 10, 10).is_err());
    }
}
