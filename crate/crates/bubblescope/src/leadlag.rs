//! Lagged cross-correlation analysis between two series on a common regular
//! grid: which one leads, and by how many steps.
//!
//! Correlations are plain Pearson coefficients computed on the overlapping
//! window at each lag, with means and variances recomputed per lag.

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use serde::{Deserialize, Serialize};

/// Minimum overlapping points for a correlation to be reported.
pub const MIN_OVERLAP: usize = 8;

/// Result of a lag scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagResult {
    /// Lag maximizing |correlation|, in sampling steps. Positive means the
    /// second series lags (follows) the first.
    pub best_lag: i64,
    pub best_correlation: f64,
    /// Correlation at every scanned lag, ordered from `-max_lag` to
    /// `+max_lag`.
    pub curve: Vec<(i64, f64)>,
}

/// Rescale to zero mean and unit sample variance.
pub fn standardize(series: &TimeSeries) -> Result<TimeSeries> {
    if series.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: series.len(),
        });
    }
    let n = series.len() as f64;
    let mean = series.values().iter().sum::<f64>() / n;
    let var = series
        .values()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1.0);
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    TimeSeries::new(
        series.times().to_vec(),
        series.values().iter().map(|v| (v - mean) / sd).collect(),
        format!("std({})", series.label()),
    )
}

/// First differences: `v[i+1] - v[i]` stamped at the later time.
pub fn difference(series: &TimeSeries) -> Result<TimeSeries> {
    if series.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: series.len(),
        });
    }
    let times = series.times()[1..].to_vec();
    let values = series.values().windows(2).map(|w| w[1] - w[0]).collect();
    TimeSeries::new(times, values, format!("diff({})", series.label()))
}

fn check_aligned(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.len() != b.len() || a.times() != b.times() {
        return Err(Error::InvalidSeries(
            "series must share one regular grid; align them first".into(),
        ));
    }
    Ok(())
}

/// Pearson correlation between `a_t` and `b_{t+lag}` over the overlapping
/// index range.
pub fn lagged_correlation(a: &TimeSeries, b: &TimeSeries, lag: i64) -> Result<f64> {
    check_aligned(a, b)?;
    let n = a.len() as i64;
    // Pairs (a_i, b_{i+lag}) with both indices in range.
    let i_lo = 0.max(-lag);
    let i_hi = n.min(n - lag);
    let overlap = (i_hi - i_lo).max(0) as usize;
    if overlap < MIN_OVERLAP {
        return Err(Error::InsufficientOverlap {
            lag,
            got: overlap,
            needed: MIN_OVERLAP,
        });
    }

    let av = a.values();
    let bv = b.values();
    let m = overlap as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for i in i_lo..i_hi {
        sa += av[i as usize];
        sb += bv[(i + lag) as usize];
    }
    let (ma, mb) = (sa / m, sb / m);
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for i in i_lo..i_hi {
        let da = av[i as usize] - ma;
        let db = bv[(i + lag) as usize] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Correlation at every lag in `[-max_lag, +max_lag]`, plus the argmax of
/// |correlation|. Ties break toward smaller |lag|, then toward negative lag.
pub fn lag_scan(a: &TimeSeries, b: &TimeSeries, max_lag: usize) -> Result<LagResult> {
    check_aligned(a, b)?;
    let max_lag = max_lag as i64;
    let mut curve = Vec::with_capacity((2 * max_lag + 1) as usize);
    for lag in -max_lag..=max_lag {
        curve.push((lag, lagged_correlation(a, b, lag)?));
    }
    let (best_lag, best_correlation) = curve
        .iter()
        .copied()
        .min_by(|(la, ca), (lb, cb)| {
            cb.abs()
                .total_cmp(&ca.abs())
                .then(la.abs().cmp(&lb.abs()))
                .then(la.cmp(lb))
        })
        .expect("curve is non-empty");
    Ok(LagResult {
        best_lag,
        best_correlation,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn series(values: &[f64]) -> TimeSeries {
        let times: Vec<f64> = (0..values.len())
            .map(|i| 2000.0 + i as f64 / 12.0)
            .collect();
        TimeSeries::new(times, values.to_vec(), "test").unwrap()
    }

    fn noise_series(n: usize, seed: u64) -> TimeSeries {
        let mut rng = Prng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        series(&values)
    }

    /// Random-walk pair where `b` is `a` delayed by `shift` steps.
    fn shifted_pair(n: usize, shift: i64, seed: u64) -> (TimeSeries, TimeSeries) {
        let mut rng = Prng::seed_from_u64(seed);
        let pad = shift.unsigned_abs() as usize;
        let mut walk = vec![0.0];
        for _ in 0..(n + 2 * pad) {
            let last = *walk.last().unwrap();
            walk.push(last + rng.normal());
        }
        let a: Vec<f64> = (0..n).map(|i| walk[i + pad]).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| walk[(i as i64 + pad as i64 - shift) as usize])
            .collect();
        (series(&a), series(&b))
    }

    #[test]
    fn standardize_two_points() {
        let s = standardize(&series(&[1.0, 3.0])).unwrap();
        assert!((s.values()[0] + s.values()[1]).abs() < 1e-12);
        let var: f64 = s.values().iter().map(|v| v * v).sum::<f64>() / 1.0;
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_rejects_constant() {
        assert!(matches!(
            standardize(&series(&[5.0, 5.0, 5.0])),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn standardize_moments_on_random_input() {
        let s = standardize(&noise_series(500, 3)).unwrap();
        let n = s.len() as f64;
        let mean = s.values().iter().sum::<f64>() / n;
        let var = s
            .values()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1.0);
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_correlation_at_lag_zero_is_one() {
        let s = noise_series(100, 1);
        let c = lagged_correlation(&s, &s, 0).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_copy_correlates_perfectly_at_its_shift() {
        for &shift in &[-5i64, -1, 0, 3, 8] {
            let (a, b) = shifted_pair(120, shift, 42);
            let c = lagged_correlation(&a, &b, shift).unwrap();
            assert!((c - 1.0).abs() < 1e-12, "shift {shift}: corr {c}");
        }
    }

    #[test]
    fn insufficient_overlap_is_an_error() {
        let s = noise_series(10, 2);
        assert!(matches!(
            lagged_correlation(&s, &s, 5),
            Err(Error::InsufficientOverlap { .. })
        ));
    }

    #[test]
    fn antisymmetry_in_arguments() {
        let a = noise_series(200, 7);
        let b = noise_series(200, 8);
        for lag in [-10i64, -3, 0, 4, 9] {
            let ab = lagged_correlation(&a, &b, lag).unwrap();
            let ba = lagged_correlation(&b, &a, -lag).unwrap();
            assert!((ab - ba).abs() < 1e-12, "lag {lag}");
        }
    }

    #[test]
    fn affine_invariance() {
        let a = noise_series(200, 9);
        let b = noise_series(200, 10);
        let a_scaled = TimeSeries::new(
            a.times().to_vec(),
            a.values().iter().map(|v| 3.0 * v + 7.0).collect(),
            "scaled",
        )
        .unwrap();
        for lag in [-6i64, 0, 6] {
            let orig = lagged_correlation(&a, &b, lag).unwrap();
            let scaled = lagged_correlation(&a_scaled, &b, lag).unwrap();
            assert!((orig - scaled).abs() < 1e-12);
        }
    }

    #[test]
    fn scan_recovers_shift_exactly() {
        for &shift in &[-12i64, -4, 0, 1, 7, 12] {
            let (a, b) = shifted_pair(200, shift, 11);
            let result = lag_scan(&a, &b, 12).unwrap();
            assert_eq!(result.best_lag, shift, "curve {:?}", result.curve);
            assert!((result.best_correlation - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_series_tie_break_to_zero() {
        let a = noise_series(150, 13);
        let result = lag_scan(&a, &a, 10).unwrap();
        assert_eq!(result.best_lag, 0);
    }

    #[test]
    fn best_correlation_matches_curve_maximum() {
        let a = noise_series(150, 14);
        let b = noise_series(150, 15);
        let result = lag_scan(&a, &b, 10).unwrap();
        let max_abs = result
            .curve
            .iter()
            .map(|(_, c)| c.abs())
            .fold(0.0f64, f64::max);
        assert!((result.best_correlation.abs() - max_abs).abs() < 1e-15);
        assert!(result.curve.iter().all(|(_, c)| c.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn white_noise_stays_under_four_sigma() {
        let trials = 60;
        let n = 400usize;
        let max_lag = 8usize;
        let mut ok = 0;
        for seed in 0..trials {
            let a = noise_series(n, 1000 + seed);
            let b = noise_series(n, 2000 + seed);
            let result = lag_scan(&a, &b, max_lag).unwrap();
            let within = result.curve.iter().all(|(lag, c)| {
                let overlap = n - lag.unsigned_abs() as usize;
                c.abs() <= 4.0 / (overlap as f64).sqrt()
            });
            if within {
                ok += 1;
            }
        }
        assert!(
            ok * 100 >= trials * 95,
            "{ok}/{trials} trials inside 4-sigma"
        );
    }
}
