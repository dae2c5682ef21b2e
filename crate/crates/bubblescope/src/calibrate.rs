//! Multi-start calibration of the nonlinear parameters `(tc, m, omega)` with
//! subordinated linear parameters, fit qualification, shrinking-window
//! ensembles, and the confidence window for the critical time.
//!
//! The search is a Nelder-Mead local minimization of the subordinated sum of
//! squared residuals, multi-started from a seeded low-discrepancy sequence
//! over the `(tc, m, omega)` box. Results are gathered and ranked by
//! `(sse, start_index)`, so the outcome is bit-identical regardless of how
//! the starts are scheduled across threads.

use crate::error::{Error, Result};
use crate::lppls::{subordinate_raw, LpplsParams};
use crate::optim::{multistart_points, nelder_mead, Box3, NmOptions, NmResult};
use crate::series::TimeSeries;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Calibration settings. Parameter bounds double as qualification bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Lower bound for `tc - t2`, as a fraction of the window length.
    pub tc_min_frac: f64,
    /// Upper bound for `tc - t2`, as a fraction of the window length.
    /// Predictions further out than this are not considered reliable.
    pub tc_max_frac: f64,
    pub m_bounds: (f64, f64),
    pub omega_bounds: (f64, f64),
    /// Number of multi-start seeds per calibration.
    pub starts: usize,
    pub seed: u64,
    /// Iteration cap per local search.
    pub max_iterations: usize,
    /// Relative convergence tolerance on the objective.
    pub tol_rel: f64,
    /// Minimum points per calibration window.
    pub min_window_points: usize,
    /// A fit whose `m` sits within this distance of its bounds counts as
    /// bound-pinned (diagnosed NoBubble rather than Valid).
    pub m_interior_margin: f64,
    /// A fit whose `tc` sits within this fraction of the searchable offset
    /// range from either edge is rejected as bound-pinned.
    pub tc_interior_margin_frac: f64,
    /// Minimum swing of the power-law term over the window, in log-price
    /// units; smaller means the trend amplitude is indistinguishable from 0.
    pub min_b_swing: f64,
    /// Minimum deviation of the power-law term from its own secant over the
    /// window, in log-price units. A term this close to a straight line is
    /// growth, not acceleration.
    pub min_trend_curvature: f64,
    /// Maximum `|C|/|B|`: the oscillation must stay subordinate to the trend.
    pub max_oscillation_ratio: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tc_min_frac: 0.0,
            tc_max_frac: 0.5,
            m_bounds: (0.1, 0.9),
            omega_bounds: (2.0, 25.0),
            starts: 50,
            seed: 42,
            max_iterations: 500,
            tol_rel: 1e-10,
            min_window_points: 30,
            m_interior_margin: 1e-3,
            tc_interior_margin_frac: 0.05,
            min_b_swing: 0.01,
            min_trend_curvature: 0.02,
            max_oscillation_ratio: 1.0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.starts < 1 {
            return Err(Error::InvalidParameter("starts must be >= 1".into()));
        }
        if !(self.tc_max_frac > self.tc_min_frac && self.tc_min_frac >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tc bounds ({}, {}] are empty",
                self.tc_min_frac, self.tc_max_frac
            )));
        }
        for (name, (lo, hi)) in [("m", self.m_bounds), ("omega", self.omega_bounds)] {
            if !hi.is_finite() || !lo.is_finite() || hi <= lo {
                return Err(Error::InvalidParameter(format!(
                    "{name} bounds [{lo}, {hi}] are empty"
                )));
            }
        }
        Ok(())
    }
}

/// Qualification outcome of one calibration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    /// Passed every qualification check: a positive-bubble diagnosis.
    Valid,
    /// The data shows no super-exponential signature (bound-pinned `m` or a
    /// trend amplitude indistinguishable from zero).
    NoBubble,
    /// Failed a structural check, with the reason.
    Rejected(String),
}

impl FitStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, FitStatus::Valid)
    }
}

/// One calibration outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: LpplsParams,
    pub sse: f64,
    /// Calibration window `[t1, t2]` in decimal years.
    pub window: (f64, f64),
    pub n_points: usize,
    pub status: FitStatus,
    /// Which multi-start seed produced the result (tie-break key).
    pub start_index: usize,
    /// Profile-likelihood standard error of `tc` (nuisance parameters
    /// re-optimized), from the local curvature of the residual profile.
    /// Zero when not computed.
    #[serde(default)]
    pub tc_stderr: f64,
}

/// A `[lower, upper]` interval for the critical time at a stated confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalWindow {
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    /// Number of Valid fits the interval was computed from.
    pub n_fits: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    start_index: usize,
    params: LpplsParams,
    sse: f64,
}

fn search_box(t2: f64, window_len: f64, config: &FitConfig) -> Box3 {
    // The tc axis never touches t2 itself: a small positive floor keeps the
    // basis finite at the last observation.
    let lo_off = (config.tc_min_frac * window_len).max(1e-4 * window_len);
    Box3 {
        lo: [t2 + lo_off, config.m_bounds.0, config.omega_bounds.0],
        hi: [
            t2 + config.tc_max_frac * window_len,
            config.m_bounds.1,
            config.omega_bounds.1,
        ],
    }
}

/// Calibrate the model on a price series (log taken internally): the best
/// qualified result across all multi-starts.
pub fn calibrate(series: &TimeSeries, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if series.len() < config.min_window_points {
        return Err(Error::TooFewPoints {
            needed: config.min_window_points,
            got: series.len(),
        });
    }
    let log_series = series.to_log()?;
    let times = log_series.times().to_vec();
    let values = log_series.values().to_vec();
    let t1 = times[0];
    let t2 = *times.last().unwrap();
    let bounds = search_box(t2, t2 - t1, config);

    let nm_opts = NmOptions {
        max_iterations: config.max_iterations,
        tol_rel: config.tol_rel,
        ..NmOptions::default()
    };

    let run_start = |x0: [f64; 3], opts: &NmOptions| -> Option<([f64; 3], f64)> {
        let mut scratch = Vec::new();
        let mut objective = |x: &[f64; 3]| -> f64 {
            match subordinate_raw(&times, &values, x[0], x[1], x[2], &mut scratch) {
                Ok(fit) => fit.sse,
                Err(_) => f64::INFINITY,
            }
        };
        let NmResult { x, fx, .. } = nelder_mead(&mut objective, x0, &bounds, opts);
        fx.is_finite().then_some((x, fx))
    };

    let start_points = multistart_points(config.starts, config.seed, &bounds);
    let mut outcomes: Vec<Option<([f64; 3], f64)>> = start_points
        .par_iter()
        .map(|&x0| run_start(x0, &nm_opts))
        .collect();

    // Polish the three best starts with a tight restarted simplex; results
    // stay attached to their start index so ranking is unchanged in form.
    let mut order: Vec<usize> = (0..outcomes.len())
        .filter(|&i| outcomes[i].is_some())
        .collect();
    order.sort_by(|&a, &b| {
        let fa = outcomes[a].unwrap().1;
        let fb = outcomes[b].unwrap().1;
        fa.total_cmp(&fb).then(a.cmp(&b))
    });
    let polish_opts = NmOptions {
        init_step: 0.01,
        ..nm_opts
    };
    for &i in order.iter().take(3) {
        let (x, fx) = outcomes[i].unwrap();
        if let Some((px, pfx)) = run_start(x, &polish_opts) {
            if pfx < fx {
                outcomes[i] = Some((px, pfx));
            }
        }
    }

    let mut scratch = Vec::new();
    let candidates: Vec<Candidate> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(start_index, outcome)| {
            let (x, _) = (*outcome)?;
            let fit = subordinate_raw(&times, &values, x[0], x[1], x[2], &mut scratch).ok()?;
            Some(Candidate {
                start_index,
                params: LpplsParams {
                    tc: x[0],
                    m: x[1],
                    omega: x[2],
                    a: fit.a,
                    b: fit.b,
                    c1: fit.c1,
                    c2: fit.c2,
                },
                sse: fit.sse,
            })
        })
        .collect();

    if candidates.is_empty() {
        return Err(Error::AllStartsFailed("degenerate design".into()));
    }

    let results: Vec<FitResult> = candidates
        .iter()
        .map(|c| {
            let mut result = FitResult {
                params: c.params,
                sse: c.sse,
                window: (t1, t2),
                n_points: series.len(),
                status: FitStatus::Valid,
                start_index: c.start_index,
                tc_stderr: 0.0,
            };
            result.status = qualify(&result, config);
            result
        })
        .collect();

    let best_valid = results
        .iter()
        .filter(|r| r.status.is_valid())
        .min_by(|a, b| {
            a.sse
                .total_cmp(&b.sse)
                .then(a.start_index.cmp(&b.start_index))
        });
    if let Some(best) = best_valid {
        let mut best = best.clone();
        best.tc_stderr = profile_tc_stderr(&times, &values, &best, &bounds, &nm_opts);
        return Ok(best);
    }

    // No start qualified: report the modal diagnosis on the best-fitting
    // candidate that carries it.
    let modal = aggregate_status(results.iter().map(|r| &r.status));
    let representative = results
        .iter()
        .filter(|r| r.status == modal)
        .min_by(|a, b| {
            a.sse
                .total_cmp(&b.sse)
                .then(a.start_index.cmp(&b.start_index))
        })
        .expect("modal status always has a representative");
    Ok(representative.clone())
}

/// Standard error of `tc` from the curvature of the residual profile, with
/// `(m, omega)` re-optimized at each probed `tc` (the profile, not a slice:
/// the nonlinear parameters co-move strongly with `tc`).
fn profile_tc_stderr(
    times: &[f64],
    values: &[f64],
    fit: &FitResult,
    bounds: &Box3,
    nm_opts: &NmOptions,
) -> f64 {
    let n = times.len();
    if n <= 8 || fit.sse <= 0.0 {
        return 0.0;
    }
    let noise_var = fit.sse / (n - 7) as f64;
    let profile = |tc: f64| -> f64 {
        let frozen = Box3 {
            lo: [tc, bounds.lo[1], bounds.lo[2]],
            hi: [tc, bounds.hi[1], bounds.hi[2]],
        };
        let mut scratch = Vec::new();
        let mut objective = |x: &[f64; 3]| -> f64 {
            match subordinate_raw(times, values, x[0], x[1], x[2], &mut scratch) {
                Ok(linear) => linear.sse,
                Err(_) => f64::INFINITY,
            }
        };
        let opts = NmOptions {
            max_iterations: 150,
            init_step: 0.02,
            ..*nm_opts
        };
        nelder_mead(
            &mut objective,
            [tc, fit.params.m, fit.params.omega],
            &frozen,
            &opts,
        )
        .fx
    };

    // Probe outward until the profile rises clearly above the noise floor.
    let window_len = fit.window.1 - fit.window.0;
    for k in 0..5 {
        let delta = window_len * 0.005 * (1 << k) as f64;
        let (lo, hi) = (fit.params.tc - delta, fit.params.tc + delta);
        if lo <= bounds.lo[0] || hi >= bounds.hi[0] {
            return delta;
        }
        let rise = 0.5 * (profile(lo) + profile(hi)) - fit.sse;
        if !rise.is_finite() {
            return delta;
        }
        if rise > 0.5 * noise_var {
            let curvature = 2.0 * rise / (delta * delta);
            return (2.0 * noise_var / curvature).sqrt().min(window_len);
        }
    }
    // Profile flat at every probed scale: report the widest probe.
    window_len * 0.08
}

/// Inverse standard normal CDF (Acklam's rational approximation, absolute
/// error below 1.2e-9).
fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Overall diagnosis of an ensemble: Valid when any window qualified,
/// otherwise the modal non-Valid status.
pub fn ensemble_diagnosis(fits: &[FitResult]) -> FitStatus {
    if fits.iter().any(|f| f.status.is_valid()) {
        FitStatus::Valid
    } else {
        aggregate_status(fits.iter().map(|f| &f.status))
    }
}

/// Modal status over a set of non-Valid outcomes; NoBubble wins ties against
/// any rejection reason.
pub(crate) fn aggregate_status<'a>(statuses: impl Iterator<Item = &'a FitStatus>) -> FitStatus {
    let mut no_bubble = 0usize;
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for status in statuses {
        match status {
            FitStatus::Valid => {}
            FitStatus::NoBubble => no_bubble += 1,
            FitStatus::Rejected(reason) => *reasons.entry(reason).or_insert(0) += 1,
        }
    }
    let top_reason = reasons
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)));
    match top_reason {
        Some((reason, count)) if count > no_bubble => FitStatus::Rejected(reason.to_string()),
        _ => FitStatus::NoBubble,
    }
}

/// Qualification of a candidate fit. Total on finite candidates.
pub fn qualify(candidate: &FitResult, config: &FitConfig) -> FitStatus {
    let p = &candidate.params;
    let (t1, t2) = candidate.window;
    let finite = [p.tc, p.m, p.omega, p.a, p.b, p.c1, p.c2, candidate.sse]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return FitStatus::Rejected("non-finite parameters".into());
    }

    let (m_lo, m_hi) = config.m_bounds;
    if p.m - m_lo <= config.m_interior_margin || m_hi - p.m <= config.m_interior_margin {
        return FitStatus::NoBubble;
    }

    let (w_lo, w_hi) = config.omega_bounds;
    let omega_margin = 1e-3 * (w_hi - w_lo);
    if p.omega - w_lo <= omega_margin || w_hi - p.omega <= omega_margin {
        return FitStatus::Rejected("omega at bound".into());
    }

    if p.b >= 0.0 {
        return FitStatus::Rejected("B sign".into());
    }

    // Swing of the power-law term across the window.
    let swing = p.b.abs() * (p.tc - t1).powf(p.m);
    if swing < config.min_b_swing {
        return FitStatus::NoBubble;
    }

    let window_len = t2 - t1;
    if p.tc <= t2 || p.tc > t2 + config.tc_max_frac * window_len {
        return FitStatus::Rejected("tc out of range".into());
    }

    // A critical time hugging either edge of its searchable band means the
    // optimizer wanted out of the band; on noise this shows up as tc jammed
    // against the window end.
    let offset_lo = (config.tc_min_frac * window_len).max(1e-4 * window_len);
    let offset_hi = config.tc_max_frac * window_len;
    let tc_margin = config.tc_interior_margin_frac * (offset_hi - offset_lo);
    let offset = p.tc - t2;
    if offset - offset_lo < tc_margin || offset_hi - offset < tc_margin {
        return FitStatus::Rejected("tc at bound".into());
    }

    // The power term must genuinely accelerate, not just reproduce a linear
    // trend: require a minimum deviation from its own secant.
    if power_term_curvature(p, t1, t2) < config.min_trend_curvature {
        return FitStatus::Rejected("trend not accelerating".into());
    }

    if p.oscillation_amplitude() / p.b.abs() > config.max_oscillation_ratio {
        return FitStatus::Rejected("oscillation dominates".into());
    }

    FitStatus::Valid
}

/// Largest deviation of `B (tc - t)^m` from the straight line through its
/// window endpoints, sampled on a uniform grid.
fn power_term_curvature(p: &LpplsParams, t1: f64, t2: f64) -> f64 {
    let f = |t: f64| p.b * (p.tc - t).powf(p.m);
    let (f1, f2) = (f(t1), f(t2));
    let slope = (f2 - f1) / (t2 - t1);
    let samples = 64;
    (1..samples)
        .map(|k| {
            let t = t1 + (t2 - t1) * k as f64 / samples as f64;
            (f(t) - (f1 + slope * (t - t1))).abs()
        })
        .fold(0.0, f64::max)
}

/// Window start times for a shrinking-start ensemble: `n_windows` starts
/// spaced evenly from the first observation toward the midpoint of the span
/// (endpoint excluded), all sharing the last observation as their end.
pub(crate) fn ensemble_starts(t_first: f64, t_last: f64, n_windows: usize) -> Vec<f64> {
    let midpoint = 0.5 * (t_first + t_last);
    let stride = (midpoint - t_first) / n_windows as f64;
    (0..n_windows)
        .map(|k| t_first + k as f64 * stride)
        .collect()
}

/// Calibrate over a shrinking-window ensemble with a common end at the last
/// observation. Returns every window's result, including non-Valid ones.
pub fn calibrate_ensemble(
    series: &TimeSeries,
    config: &FitConfig,
    n_windows: usize,
) -> Result<Vec<FitResult>> {
    if n_windows < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 windows, got {n_windows}"
        )));
    }
    config.validate()?;
    let starts = ensemble_starts(series.first_time(), series.last_time(), n_windows);
    let windows: Vec<TimeSeries> = starts
        .iter()
        .map(|&s| series.window_from(s))
        .collect::<Result<_>>()?;
    if let Some(short) = windows.iter().find(|w| w.len() < config.min_window_points) {
        return Err(Error::TooFewPoints {
            needed: config.min_window_points,
            got: short.len(),
        });
    }
    windows.par_iter().map(|w| calibrate(w, config)).collect()
}

/// Critical-time window over the Valid fits of an ensemble:
/// linear-interpolated quantiles of `tc` at `(1 - c)/2` and `(1 + c)/2`,
/// widened by the normal `(1 + c)/2` quantile of the mean per-fit `tc`
/// standard error. Shrinking windows reuse most of the same data, so their
/// estimates are strongly correlated and the between-window spread alone
/// understates the uncertainty; the profile stderr restores the within-fit
/// component.
pub fn critical_window(ensemble: &[FitResult], confidence: f64) -> Result<CriticalWindow> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let valid: Vec<&FitResult> = ensemble.iter().filter(|r| r.status.is_valid()).collect();
    if valid.is_empty() {
        return Err(Error::NoValidFits);
    }
    let mut tcs: Vec<f64> = valid.iter().map(|r| r.params.tc).collect();
    tcs.sort_by(f64::total_cmp);
    let mean_stderr = valid.iter().map(|r| r.tc_stderr).sum::<f64>() / valid.len() as f64;
    let half_width = normal_quantile((1.0 + confidence) / 2.0) * mean_stderr;
    Ok(CriticalWindow {
        lower: quantile_type7(&tcs, (1.0 - confidence) / 2.0) - half_width,
        upper: quantile_type7(&tcs, (1.0 + confidence) / 2.0) + half_width,
        confidence,
        n_fits: tcs.len(),
    })
}

/// Linear-interpolated empirical quantile (the R type-7 convention).
pub(crate) fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One row of a causal scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    /// The as-of time; only data at or before it was used.
    pub as_of: f64,
    pub status: FitStatus,
    pub window: Option<CriticalWindow>,
}

/// Walk an as-of time across the series in steps, rerunning the ensemble
/// diagnosis on each causal truncation. Per-row failures land in the row's
/// status without aborting the scan.
pub fn scan(
    series: &TimeSeries,
    config: &FitConfig,
    n_windows: usize,
    confidence: f64,
    step: f64,
) -> Result<Vec<ScanRow>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {step}"
        )));
    }
    config.validate()?;

    let times = series.times();
    let first_admissible = times.iter().position(|&t| {
        let starts = ensemble_starts(times[0], t, n_windows);
        starts.iter().all(|&s| {
            let count = times
                .iter()
                .take_while(|&&x| x <= t)
                .filter(|&&x| x >= s)
                .count();
            count >= config.min_window_points
        })
    });
    let t_start = match first_admissible {
        Some(i) => times[i],
        None => {
            return Err(Error::TooFewPoints {
                needed: config.min_window_points,
                got: series.len(),
            })
        }
    };

    let span = series.last_time() - t_start;
    let n_rows = ((span / step) + 1e-9).floor() as usize + 1;
    let rows = (0..n_rows)
        .map(|k| {
            let as_of = t_start + k as f64 * step;
            let prefix = series
                .truncated_at(as_of)
                .expect("admissible prefix is non-empty");
            match calibrate_ensemble(&prefix, config, n_windows) {
                Ok(fits) => {
                    let status = ensemble_diagnosis(&fits);
                    let window = status
                        .is_valid()
                        .then(|| critical_window(&fits, confidence).expect("valid fits exist"));
                    ScanRow {
                        as_of,
                        status,
                        window,
                    }
                }
                Err(e) => ScanRow {
                    as_of,
                    status: FitStatus::Rejected(e.to_string()),
                    window: None,
                },
            }
        })
        .collect();
    Ok(rows)
}
