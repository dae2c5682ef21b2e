//! The super-exponential log-periodic model kernel.
//!
//! The model for log-price is
//!
//! ```text
//! ln p(t) = A + B*(tc - t)^m + (tc - t)^m * [C1*cos(w*ln(tc - t)) + C2*sin(w*ln(tc - t))]
//! ```
//!
//! with `0 < m < 1` so the trend accelerates into the critical time `tc`,
//! and `B < 0` for a rising log-price. The oscillation is carried as the
//! `(C1, C2)` pair rather than amplitude/phase so that, for fixed
//! `(tc, m, w)`, the model is linear in `(A, B, C1, C2)` and those four
//! parameters can be subordinated by least squares.

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

/// Evaluation requires `tc - t >= TC_GUARD` years; closer points are a
/// domain error, never a clamp.
pub const TC_GUARD: f64 = 1e-9;

/// Minimum window length for the linear subordination: twice the number of
/// linear parameters.
pub const MIN_SUBORDINATION_POINTS: usize = 8;

/// The seven model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplsParams {
    /// Critical time, decimal years. Must exceed every evaluation time.
    pub tc: f64,
    /// Power exponent, in (0, 1) for the accelerating regime.
    pub m: f64,
    /// Log-frequency of the oscillation.
    pub omega: f64,
    /// Log-price level.
    pub a: f64,
    /// Power-law amplitude; negative for a rising log-price.
    pub b: f64,
    /// Oscillation amplitudes: C1 = C cos(phi), C2 = C sin(phi).
    pub c1: f64,
    pub c2: f64,
}

impl LpplsParams {
    /// Oscillation amplitude `|C| = sqrt(C1^2 + C2^2)`.
    pub fn oscillation_amplitude(&self) -> f64 {
        self.c1.hypot(self.c2)
    }

    /// Oscillation phase, recovered on demand.
    pub fn phase(&self) -> f64 {
        self.c2.atan2(self.c1)
    }
}

#[inline]
fn basis(dt: f64, m: f64, omega: f64) -> (f64, f64, f64) {
    // (tc - t)^m computed as exp(m ln dt); the same path is used everywhere
    // so that subordination residuals are exact on noiseless data.
    let log_dt = dt.ln();
    let f = (m * log_dt).exp();
    let (sin, cos) = (omega * log_dt).sin_cos();
    (f, f * cos, f * sin)
}

/// Model value at time `t`. Errors when `t` is not strictly below `tc`
/// (with the `TC_GUARD` margin).
pub fn lppls_value(params: &LpplsParams, t: f64) -> Result<f64> {
    let dt = params.tc - t;
    if dt < TC_GUARD {
        return Err(Error::PastCriticalTime {
            time: t,
            tc: params.tc,
        });
    }
    let (f, fcos, fsin) = basis(dt, params.m, params.omega);
    Ok(params.a + params.b * f + params.c1 * fcos + params.c2 * fsin)
}

/// Pointwise model evaluation over an ascending time grid.
pub fn lppls_series(params: &LpplsParams, times: &[f64]) -> Result<TimeSeries> {
    let values = times
        .iter()
        .map(|&t| lppls_value(params, t))
        .collect::<Result<Vec<f64>>>()?;
    TimeSeries::new(
        times.to_vec(),
        values,
        format!(
            "lppls(tc={:.4}, m={:.4}, omega={:.4})",
            params.tc, params.m, params.omega
        ),
    )
}

/// Least-squares solution of the linear parameters for fixed `(tc, m, omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    /// Sum of squared residuals at the solution.
    pub sse: f64,
}

/// Solve `(A, B, C1, C2)` by least squares over the basis
/// `{1, f, f cos(w g), f sin(w g)}` with `f = (tc-t)^m`, `g = ln(tc-t)`,
/// against a log-price series.
pub fn subordinate_linear(
    tc: f64,
    m: f64,
    omega: f64,
    log_series: &TimeSeries,
) -> Result<LinearFit> {
    if log_series.len() < MIN_SUBORDINATION_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_SUBORDINATION_POINTS,
            got: log_series.len(),
        });
    }
    let mut scratch = Vec::new();
    subordinate_raw(
        log_series.times(),
        log_series.values(),
        tc,
        m,
        omega,
        &mut scratch,
    )
}

/// Allocation-light core of [`subordinate_linear`]; `scratch` holds the basis
/// rows and is reused across calls by the calibrator's objective.
pub(crate) fn subordinate_raw(
    times: &[f64],
    log_prices: &[f64],
    tc: f64,
    m: f64,
    omega: f64,
    scratch: &mut Vec<[f64; 4]>,
) -> Result<LinearFit> {
    scratch.clear();
    scratch.reserve(times.len());

    // One pass: basis rows plus normal-equation accumulators.
    let mut gram = [[0.0f64; 4]; 4];
    let mut xty = [0.0f64; 4];
    for (&t, &y) in times.iter().zip(log_prices) {
        let dt = tc - t;
        if dt < TC_GUARD {
            return Err(Error::PastCriticalTime { time: t, tc });
        }
        let (f, fcos, fsin) = basis(dt, m, omega);
        let row = [1.0, f, fcos, fsin];
        for i in 0..4 {
            for j in i..4 {
                gram[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * y;
        }
        scratch.push(row);
    }

    // Column equilibration keeps the 4x4 solve well scaled.
    let mut scale = [0.0f64; 4];
    for i in 0..4 {
        let d = gram[i][i];
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::DegenerateDesign { tc, m, omega });
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let mut g = Matrix4::zeros();
    let mut rhs = Vector4::zeros();
    for i in 0..4 {
        for j in i..4 {
            let v = gram[i][j] * scale[i] * scale[j];
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        rhs[i] = xty[i] * scale[i];
    }
    let chol = g
        .cholesky()
        .ok_or(Error::DegenerateDesign { tc, m, omega })?;
    let solution = chol.solve(&rhs);
    let coeffs = [
        solution[0] * scale[0],
        solution[1] * scale[1],
        solution[2] * scale[2],
        solution[3] * scale[3],
    ];
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::DegenerateDesign { tc, m, omega });
    }

    // Residuals from the stored basis rows; avoids the cancellation that a
    // Gram-based rearrangement would suffer on near-perfect fits.
    let mut sse = 0.0;
    for (row, &y) in scratch.iter().zip(log_prices) {
        let fit = coeffs[0] * row[0] + coeffs[1] * row[1] + coeffs[2] * row[2] + coeffs[3] * row[3];
        let r = y - fit;
        sse += r * r;
    }

    Ok(LinearFit {
        a: coeffs[0],
        b: coeffs[1],
        c1: coeffs[2],
        c2: coeffs[3],
        sse,
    })
}

/// Sum of squared residuals of a log-price series against the model.
pub fn sse(params: &LpplsParams, log_series: &TimeSeries) -> Result<f64> {
    let mut total = 0.0;
    for (&t, &y) in log_series.times().iter().zip(log_series.values()) {
        let r = y - lppls_value(params, t)?;
        total += r * r;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_params() -> LpplsParams {
        LpplsParams {
            tc: 2008.5,
            m: 0.5,
            omega: 8.0,
            a: 5.0,
            b: -0.6,
            c1: 0.04,
            c2: -0.03,
        }
    }

    #[test]
    fn value_with_unit_dt_kills_the_sine() {
        // ln 1 = 0, so f = 1 and only the cosine term survives.
        let params = LpplsParams {
            tc: 10.0,
            m: 0.5,
            omega: 10.0,
            a: 1.0,
            b: -0.5,
            c1: 0.1,
            c2: 0.7,
        };
        let v = lppls_value(&params, 9.0).unwrap();
        assert!((v - 0.6).abs() < 1e-12, "v = {v}");
    }

    #[test]
    fn degenerate_constant_params() {
        let params = LpplsParams {
            tc: 5.0,
            m: 0.3,
            omega: 6.0,
            a: 2.0,
            b: 0.0,
            c1: 0.0,
            c2: 0.0,
        };
        for t in [0.0, 1.0, 4.9] {
            assert!((lppls_value(&params, t).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_square_root_case() {
        let params = LpplsParams {
            tc: 8.0,
            m: 0.5,
            omega: 6.0,
            a: 2.0,
            b: -1.0,
            c1: 0.0,
            c2: 0.0,
        };
        // tc - t = 4, so A + B*sqrt(4) = 2 - 2 = 0.
        let v = lppls_value(&params, 4.0).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn rejects_times_at_or_past_tc() {
        let params = sample_params();
        assert!(lppls_value(&params, params.tc).is_err());
        assert!(lppls_value(&params, params.tc + 1.0).is_err());
        assert!(lppls_value(&params, params.tc - 1e-12).is_err());
        assert!(lppls_value(&params, params.tc - 1e-6).is_ok());
    }

    #[test]
    fn series_preserves_times() {
        let params = sample_params();
        let times: Vec<f64> = (0..50).map(|i| 2004.0 + i as f64 * 0.05).collect();
        let ts = lppls_series(&params, &times).unwrap();
        assert_eq!(ts.times(), times.as_slice());
    }

    #[test]
    fn series_matches_independent_evaluation() {
        // Oracle: literal powf/cos/sin transcription of the model, an
        // independent evaluation path from the exp(m ln dt) + sin_cos one.
        let mut rng = crate::rng::Prng::seed_from_u64(11);
        for _ in 0..10 {
            let params = LpplsParams {
                tc: 2010.0 + rng.uniform(),
                m: 0.2 + 0.6 * rng.uniform(),
                omega: 4.0 + 11.0 * rng.uniform(),
                a: 2.0 + rng.uniform(),
                b: -1.0 + 0.5 * rng.uniform(),
                c1: 0.2 * (rng.uniform() - 0.5),
                c2: 0.2 * (rng.uniform() - 0.5),
            };
            let times: Vec<f64> = (0..200).map(|i| 2004.0 + i as f64 * 0.025).collect();
            let ts = lppls_series(&params, &times).unwrap();
            for (&t, &v) in ts.times().iter().zip(ts.values()) {
                let dt: f64 = params.tc - t;
                let oracle = params.a
                    + params.b * dt.powf(params.m)
                    + dt.powf(params.m)
                        * (params.c1 * (params.omega * dt.ln()).cos()
                            + params.c2 * (params.omega * dt.ln()).sin());
                assert!(
                    (v - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                    "mismatch at t={t}: {v} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn subordination_recovers_exact_linear_params() {
        let params = sample_params();
        let times: Vec<f64> = (0..100).map(|i| 2004.0 + i as f64 * 0.04).collect();
        let log_series = lppls_series(&params, &times).unwrap();
        let fit = subordinate_linear(params.tc, params.m, params.omega, &log_series).unwrap();
        assert!((fit.a - params.a).abs() < 1e-9);
        assert!((fit.b - params.b).abs() < 1e-9);
        assert!((fit.c1 - params.c1).abs() < 1e-9);
        assert!((fit.c2 - params.c2).abs() < 1e-9);
        let scale: f64 = log_series.values().iter().map(|v| v * v).sum();
        assert!(fit.sse / scale < 1e-18, "relative sse {}", fit.sse / scale);
    }

    #[test]
    fn subordination_beats_a_linear_parameter_grid() {
        // Brute-force oracle: 20^4 grid over (A, B, C1, C2) around truth must
        // not find a lower sse than the least-squares solution.
        let params = sample_params();
        let times: Vec<f64> = (0..80).map(|i| 2004.0 + i as f64 * 0.05).collect();
        let clean = lppls_series(&params, &times).unwrap();
        let mut rng = crate::rng::Prng::seed_from_u64(5);
        let noisy: Vec<f64> = clean
            .values()
            .iter()
            .map(|v| v + 0.01 * rng.normal())
            .collect();
        let noisy_series = TimeSeries::new(times.clone(), noisy, "noisy").unwrap();

        let fit = subordinate_linear(params.tc, params.m, params.omega, &noisy_series).unwrap();

        let mut best_grid = f64::INFINITY;
        let steps = 20;
        let span = 0.1;
        let grid =
            |center: f64, k: usize| center - span + 2.0 * span * k as f64 / (steps - 1) as f64;
        for ia in 0..steps {
            for ib in 0..steps {
                for ic in 0..steps {
                    for id in 0..steps {
                        let cand = LpplsParams {
                            a: grid(params.a, ia),
                            b: grid(params.b, ib),
                            c1: grid(params.c1, ic),
                            c2: grid(params.c2, id),
                            ..params
                        };
                        let s = sse(&cand, &noisy_series).unwrap();
                        if s < best_grid {
                            best_grid = s;
                        }
                    }
                }
            }
        }
        assert!(
            fit.sse <= best_grid + 1e-12,
            "lsq {} vs grid {}",
            fit.sse,
            best_grid
        );
    }

    #[test]
    fn subordination_needs_eight_points() {
        let params = sample_params();
        let times: Vec<f64> = (0..7).map(|i| 2004.0 + i as f64 * 0.1).collect();
        let series = lppls_series(&params, &times).unwrap();
        assert!(matches!(
            subordinate_linear(params.tc, params.m, params.omega, &series),
            Err(Error::TooFewPoints { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn subordination_rejects_constant_basis() {
        // m = 0 makes the power column identical to the intercept column.
        let times: Vec<f64> = (0..20).map(|i| 2000.0 + i as f64 * 0.1).collect();
        let values = vec![1.0; 20];
        let series = TimeSeries::new(times, values, "flat").unwrap();
        let result = subordinate_linear(2010.0, 0.0, 0.0, &series);
        assert!(matches!(result, Err(Error::DegenerateDesign { .. })));
    }

    #[test]
    fn subordination_residual_orthogonal_to_basis() {
        let params = sample_params();
        let times: Vec<f64> = (0..60).map(|i| 2004.0 + i as f64 * 0.06).collect();
        let clean = lppls_series(&params, &times).unwrap();
        let mut rng = crate::rng::Prng::seed_from_u64(9);
        let noisy: Vec<f64> = clean
            .values()
            .iter()
            .map(|v| v + 0.05 * rng.normal())
            .collect();
        let series = TimeSeries::new(times.clone(), noisy, "noisy").unwrap();
        let fit = subordinate_linear(params.tc, params.m, params.omega, &series).unwrap();

        let mut dot = [0.0f64; 4];
        let mut col_norm = [0.0f64; 4];
        let mut res_norm = 0.0f64;
        for (&t, &y) in series.times().iter().zip(series.values()) {
            let dt = params.tc - t;
            let (f, fcos, fsin) = basis(dt, params.m, params.omega);
            let row = [1.0, f, fcos, fsin];
            let r = y - (fit.a + fit.b * f + fit.c1 * fcos + fit.c2 * fsin);
            res_norm += r * r;
            for i in 0..4 {
                dot[i] += row[i] * r;
                col_norm[i] += row[i] * row[i];
            }
        }
        for i in 0..4 {
            let rel = dot[i].abs() / (col_norm[i].sqrt() * res_norm.sqrt());
            assert!(rel < 1e-8, "column {i} correlation {rel}");
        }
    }

    #[test]
    fn sse_zero_on_generating_params() {
        let params = sample_params();
        let times: Vec<f64> = (0..40).map(|i| 2004.0 + i as f64 * 0.1).collect();
        let series = lppls_series(&params, &times).unwrap();
        let scale: f64 = series.values().iter().map(|v| v * v).sum();
        assert!(sse(&params, &series).unwrap() / scale < 1e-18);
    }

    #[test]
    fn sse_sum_is_permutation_invariant() {
        // A series is never actually reordered (times are strictly
        // increasing), but the computed sum must not care about term order.
        let params = sample_params();
        let times: Vec<f64> = (0..50).map(|i| 2004.0 + i as f64 * 0.08).collect();
        let mut rng = crate::rng::Prng::seed_from_u64(31);
        let values: Vec<f64> = (0..50).map(|_| 5.0 + 0.1 * rng.normal()).collect();
        let series = TimeSeries::new(times.clone(), values.clone(), "noise").unwrap();
        let forward = sse(&params, &series).unwrap();
        let mut reversed = 0.0;
        for (&t, &y) in times.iter().zip(&values).rev() {
            let r = y - lppls_value(&params, t).unwrap();
            reversed += r * r;
        }
        assert!((forward - reversed).abs() <= 1e-12 * forward.max(1e-30));
    }

    #[test]
    fn sse_matches_double_loop_oracle() {
        let mut rng = crate::rng::Prng::seed_from_u64(21);
        for _ in 0..5 {
            let params = LpplsParams {
                tc: 2009.0,
                m: 0.2 + 0.6 * rng.uniform(),
                omega: 3.0 + 10.0 * rng.uniform(),
                a: 4.0,
                b: -0.5,
                c1: 0.1 * rng.uniform(),
                c2: 0.1 * rng.uniform(),
            };
            let times: Vec<f64> = (0..30).map(|i| 2004.0 + i as f64 * 0.15).collect();
            let values: Vec<f64> = (0..30).map(|_| 4.0 + rng.normal()).collect();
            let series = TimeSeries::new(times, values, "noise").unwrap();
            // Naive oracle: recompute every term from scratch.
            let mut expected = 0.0;
            for (&t, &y) in series.times().iter().zip(series.values()) {
                let dt: f64 = params.tc - t;
                let model = params.a
                    + params.b * dt.powf(params.m)
                    + dt.powf(params.m)
                        * (params.c1 * (params.omega * dt.ln()).cos()
                            + params.c2 * (params.omega * dt.ln()).sin());
                expected += (y - model) * (y - model);
            }
            let got = sse(&params, &series).unwrap();
            assert!(
                (got - expected).abs() <= 1e-10 * expected.max(1.0),
                "{got} vs {expected}"
            );
        }
    }

    #[test]
    fn pure_power_term_is_monotone_increasing() {
        // B < 0 with no oscillation rises strictly into tc.
        let params = LpplsParams {
            tc: 2010.0,
            m: 0.4,
            omega: 6.0,
            a: 3.0,
            b: -0.8,
            c1: 0.0,
            c2: 0.0,
        };
        let times: Vec<f64> = (0..500).map(|i| 2000.0 + i as f64 * 0.019).collect();
        let series = lppls_series(&params, &times).unwrap();
        for pair in series.values().windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn analytic_derivative_matches_finite_differences() {
        let params = LpplsParams {
            tc: 2010.0,
            m: 0.6,
            omega: 6.0,
            a: 3.0,
            b: -0.8,
            c1: 0.0,
            c2: 0.0,
        };
        for &t in &[2000.0, 2005.0, 2009.0] {
            let dt = params.tc - t;
            // d/dt of B(tc - t)^m is -B m (tc - t)^(m-1), positive here.
            let analytic = -params.b * params.m * dt.powf(params.m - 1.0);
            let h = 1e-5;
            let fd = (lppls_value(&params, t + h).unwrap() - lppls_value(&params, t - h).unwrap())
                / (2.0 * h);
            assert!(
                ((fd - analytic) / analytic).abs() < 1e-6,
                "t={t}: fd {fd} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn slope_diverges_toward_tc() {
        let params = LpplsParams {
            tc: 2010.0,
            m: 0.5,
            omega: 6.0,
            a: 3.0,
            b: -0.8,
            c1: 0.0,
            c2: 0.0,
        };
        let slope_at = |offset: f64| {
            let t = params.tc - offset;
            let h = offset * 1e-3;
            (lppls_value(&params, t + h).unwrap() - lppls_value(&params, t - h).unwrap())
                / (2.0 * h)
        };
        assert!(slope_at(1e-4) > slope_at(1e-2));
    }
}
