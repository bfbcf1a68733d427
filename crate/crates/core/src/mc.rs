//! Monte Carlo estimates with log-scaled accumulation and a deterministic parallel map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{LogScaled, C64};

/// Sample mean of complex values, stored as `mean · e^{log_scale}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: C64,
    pub standard_error: f64,
    pub se_re: f64,
    pub se_im: f64,
    pub sample_count: u64,
    /// Common exponent of `mean` and the standard errors (0 for plain accumulation).
    pub log_scale: f64,
}

impl MCEstimate {
    pub fn from_values(values: &[C64]) -> Self {
        Self::accumulate(values, 0.0)
    }

    /// Mean of log-scaled values, taken relative to the largest magnitude so that
    /// products far outside the floating-point range can still be averaged.
    pub fn from_log_scaled(values: &[LogScaled]) -> Self {
        let reference = values.iter().filter(|v| !v.is_zero()).map(|v| v.ln_abs()).fold(f64::NEG_INFINITY, f64::max);
        let reference = if reference.is_finite() { reference } else { 0.0 };
        let rel: Vec<C64> = values.iter().map(|v| v.relative_to(reference)).collect();
        Self::accumulate(&rel, reference)
    }

    fn accumulate(values: &[C64], log_scale: f64) -> Self {
        let m = values.len();
        let n = m as f64;
        let mean = values.iter().sum::<C64>() / n;
        let (mut vre, mut vim) = (0.0, 0.0);
        for v in values {
            vre += (v.re - mean.re).powi(2);
            vim += (v.im - mean.im).powi(2);
        }
        let denom = (n - 1.0).max(1.0) * n;
        let (se_re, se_im) = if m > 1 { ((vre / denom).sqrt(), (vim / denom).sqrt()) } else { (f64::INFINITY, f64::INFINITY) };
        Self { mean, standard_error: se_re.hypot(se_im), se_re, se_im, sample_count: m as u64, log_scale }
    }

    /// Mean and errors re-expressed with exponent `log_scale`.
    pub fn rescaled(&self, log_scale: f64) -> Self {
        let f = (self.log_scale - log_scale).exp();
        Self {
            mean: self.mean * f,
            standard_error: self.standard_error * f,
            se_re: self.se_re * f,
            se_im: self.se_im * f,
            log_scale,
            ..*self
        }
    }

    /// Plain value of the mean (may overflow for large `log_scale`).
    pub fn value(&self) -> C64 {
        self.mean * self.log_scale.exp()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.re.is_finite() && self.mean.im.is_finite() && self.standard_error.is_finite()
    }
}

/// Relative resolution below which differences of means are treated as round-off.
pub const RESOLUTION: f64 = 1e-12;

/// `max(|Δre|/σ_re, |Δim|/σ_im)` with `σ² = se_a² + se_b²`, component-wise.
/// Errors are floored at the relative round-off resolution.
pub fn z_score(a: &MCEstimate, b: &MCEstimate) -> f64 {
    let l = a.log_scale.max(b.log_scale);
    let (a, b) = (a.rescaled(l), b.rescaled(l));
    // floating-point resolution floor: a constant observable has a round-off "error" only
    let floor = RESOLUTION * a.mean.norm().max(b.mean.norm());
    let part = |d: f64, s1: f64, s2: f64| {
        let s = s1.hypot(s2).max(floor);
        if s > 0.0 {
            d.abs() / s
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    part(a.mean.re - b.mean.re, a.se_re, b.se_re).max(part(a.mean.im - b.mean.im, a.se_im, b.se_im))
}

/// z-score of an estimate against an exact value.
pub fn z_score_exact(a: &MCEstimate, exact: C64) -> f64 {
    let e = MCEstimate { mean: exact, standard_error: 0.0, se_re: 0.0, se_im: 0.0, sample_count: 0, log_scale: 0.0 };
    z_score(a, &e)
}

/// Runs `f(0..m)` on the rayon pool and returns results in index order, so any
/// subsequent reduction is independent of the thread count. The first failure (by
/// index) is returned wrapped with its replica index.
pub fn par_map<T: Send>(m: u64, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..m).into_par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e @ Error::Replica { .. }) => return Err(e),
            Err(e) => return Err(Error::Replica { replica: i as u64, source: Box::new(e) }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_mean_and_error() {
        let v: Vec<C64> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| C64::new(x, -x)).collect();
        let e = MCEstimate::from_values(&v);
        assert!((e.mean - C64::new(2.5, -2.5)).norm() < 1e-15);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((e.se_re - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.sample_count, 4);
    }

    #[test]
    fn log_scaled_mean_survives_overflow() {
        let vals: Vec<LogScaled> = (0..10).map(|k| LogScaled { mantissa: C64::new(1.0 + k as f64, 0.0), log_scale: 800.0 }).collect();
        let e = MCEstimate::from_log_scaled(&vals);
        assert!(e.is_finite());
        let plain = MCEstimate::from_values(&(0..10).map(|k| C64::new(1.0 + k as f64, 0.0)).collect::<Vec<_>>());
        let r = e.rescaled(800.0);
        assert!((r.mean - plain.mean).norm() < 1e-12);
        assert!((r.se_re - plain.se_re).abs() < 1e-12);
    }

    #[test]
    fn z_scores() {
        let a = MCEstimate { mean: C64::new(1.0, 0.0), standard_error: 0.1, se_re: 0.1, se_im: 0.0, sample_count: 10, log_scale: 0.0 };
        let b = MCEstimate { mean: C64::new(1.3, 0.0), ..a };
        let z = z_score(&a, &b);
        assert!((z - 0.3 / 0.1f64.hypot(0.1)).abs() < 1e-12);
        assert!((z_score_exact(&a, C64::new(0.8, 0.0)) - 2.0).abs() < 1e-12);
        assert!(z_score_exact(&a, C64::new(1.0, 0.5)) > 1e10);
    }

    #[test]
    fn par_map_is_ordered_and_tags_failures() {
        let v = par_map(100, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        let err = par_map(10, |i| if i == 7 { Err(Error::Domain("x".into())) } else { Ok(i) }).unwrap_err();
        assert!(matches!(err, Error::Replica { replica: 7, .. }));
    }
}
