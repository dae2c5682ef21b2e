//! Ground-truth generation and brute-force verification: synthetic model
//! series with controlled noise, and an exhaustive grid-search calibrator
//! used as the independent oracle for the refined one.

use crate::calibrate::{qualify, FitConfig, FitResult, FitStatus};
use crate::error::{Error, Result};
use crate::lppls::{lppls_series, subordinate_raw, LpplsParams};
use crate::rng::Prng;
use crate::series::TimeSeries;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sampling grid for synthetic series: either explicit timestamps or a
/// uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    Uniform { start: f64, end: f64, n: usize },
    Explicit(Vec<f64>),
}

impl TimeGrid {
    pub fn materialize(&self) -> Result<Vec<f64>> {
        match self {
            TimeGrid::Explicit(times) => {
                if times.is_empty() {
                    return Err(Error::EmptyInput);
                }
                Ok(times.clone())
            }
            TimeGrid::Uniform { start, end, n } => {
                if *n < 2 || !end.is_finite() || !start.is_finite() || end <= start {
                    return Err(Error::InvalidParameter(format!(
                        "uniform grid needs n >= 2 and end > start, got n={n}, [{start}, {end}]"
                    )));
                }
                let dt = (end - start) / (*n as f64 - 1.0);
                Ok((0..*n).map(|i| start + i as f64 * dt).collect())
            }
        }
    }
}

/// Recipe for one synthetic price series: model parameters, sampling grid
/// and additive Gaussian noise on log-price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub params: LpplsParams,
    pub times: TimeGrid,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self, times: &[f64]) -> Result<()> {
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.params.m > 0.0 && self.params.m < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "m must lie in (0, 1), got {}",
                self.params.m
            )));
        }
        let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if t_max >= self.params.tc {
            return Err(Error::PastCriticalTime {
                time: t_max,
                tc: self.params.tc,
            });
        }
        Ok(())
    }
}

/// Generate a synthetic price series: `p_i = exp(model(t_i) + eps_i)` with
/// `eps_i ~ N(0, sigma^2)` drawn from the seeded ChaCha8 stream documented
/// in [`crate::rng`]. `noise_sigma = 0` is exact.
pub fn generate_lppls(spec: &SynthSpec) -> Result<TimeSeries> {
    let times = spec.times.materialize()?;
    spec.validate(&times)?;
    let log_clean = lppls_series(&spec.params, &times)?;
    let mut rng = Prng::seed_from_u64(spec.seed);
    let prices: Vec<f64> = log_clean
        .values()
        .iter()
        .map(|&v| {
            let eps = if spec.noise_sigma > 0.0 {
                spec.noise_sigma * rng.normal()
            } else {
                0.0
            };
            (v + eps).exp()
        })
        .collect();
    TimeSeries::new(times, prices, format!("synthetic(seed={})", spec.seed))
}

/// Exhaustive subordinated-sse evaluation over a `(tc, m, omega)` grid.
/// Deliberately simple — no refinement — so it can serve as an independent
/// check on the multi-start calibrator. Returns the global grid minimum;
/// inadmissible nodes are skipped and counted.
pub fn grid_oracle(
    series: &TimeSeries,
    config: &FitConfig,
    resolution: usize,
) -> Result<FitResult> {
    if resolution < 3 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be >= 3, got {resolution}"
        )));
    }
    let log_series = series.to_log()?;
    let times = log_series.times();
    let values = log_series.values();
    let t1 = log_series.first_time();
    let t2 = log_series.last_time();
    let window_len = t2 - t1;

    let axis = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (resolution - 1) as f64;
    let tc_lo = t2 + (config.tc_min_frac * window_len).max(1e-4 * window_len);
    let tc_hi = t2 + config.tc_max_frac * window_len;

    let nodes: Vec<(usize, [f64; 3])> = (0..resolution.pow(3))
        .map(|idx| {
            let k_tc = idx / (resolution * resolution);
            let k_m = (idx / resolution) % resolution;
            let k_w = idx % resolution;
            (
                idx,
                [
                    axis(tc_lo, tc_hi, k_tc),
                    axis(config.m_bounds.0, config.m_bounds.1, k_m),
                    axis(config.omega_bounds.0, config.omega_bounds.1, k_w),
                ],
            )
        })
        .collect();

    let best = nodes
        .par_iter()
        .filter_map(|&(idx, [tc, m, omega])| {
            let mut scratch = Vec::new();
            subordinate_raw(times, values, tc, m, omega, &mut scratch)
                .ok()
                .filter(|fit| fit.sse.is_finite())
                .map(|fit| (idx, tc, m, omega, fit))
        })
        .min_by(|a, b| a.4.sse.total_cmp(&b.4.sse).then(a.0.cmp(&b.0)));

    let (idx, tc, m, omega, fit) = best.ok_or(Error::AllNodesInadmissible)?;
    let mut result = FitResult {
        params: LpplsParams {
            tc,
            m,
            omega,
            a: fit.a,
            b: fit.b,
            c1: fit.c1,
            c2: fit.c2,
        },
        sse: fit.sse,
        window: (t1, t2),
        n_points: series.len(),
        status: FitStatus::Valid,
        start_index: idx,
        tc_stderr: 0.0,
    };
    result.status = qualify(&result, config);
    Ok(result)
}

/// Outcome of one generate-then-recover trial against known truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub tc_error: f64,
    pub m_error: f64,
    pub omega_error: f64,
    pub status: FitStatus,
    pub sse: f64,
}

/// Generate a synthetic series from `truth`, calibrate it, and report the
/// parameter errors.
pub fn recovery_trial(truth: &SynthSpec, config: &FitConfig) -> Result<RecoveryReport> {
    let series = generate_lppls(truth)?;
    let fit = crate::calibrate::calibrate(&series, config)?;
    Ok(RecoveryReport {
        tc_error: fit.params.tc - truth.params.tc,
        m_error: fit.params.m - truth.params.m,
        omega_error: fit.params.omega - truth.params.omega,
        status: fit.status,
        sse: fit.sse,
    })
}
