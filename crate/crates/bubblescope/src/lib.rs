//! Diagnostics for super-exponential bubbles in financial time series.
//!
//! The core of the crate calibrates a log-periodic power-law model on
//! log-prices to estimate the critical time of an unsustainable growth
//! regime, with shrinking-window ensembles turning point estimates into
//! confidence windows. Around it sit the companion analyses: lagged
//! cross-correlation for lead-lag questions, a self-excited point process
//! for the degree of reflexivity of an event stream, and the elementary
//! macro arithmetic (annualized returns, ratio series, linear trends) used
//! to frame the evidence.
//!
//! Everything is a pure function over immutable values: safe to call
//! concurrently and deterministic for a fixed seed regardless of thread
//! count.

pub mod calibrate;
pub mod error;
pub mod hawkes;
pub mod leadlag;
pub mod lppls;
pub mod optim;
pub mod rng;
pub mod series;
pub mod synth;

pub use calibrate::{
    calibrate, calibrate_ensemble, critical_window, ensemble_diagnosis, qualify, scan,
    CriticalWindow, FitConfig, FitResult, FitStatus, ScanRow,
};
pub use error::{Error, Result};
pub use hawkes::{
    fit_hawkes, hawkes_loglik, ingest_events, simulate_hawkes, EventSeries, HawkesFit,
    HawkesFitConfig,
};
pub use leadlag::{lag_scan, lagged_correlation, standardize, LagResult};
pub use lppls::{lppls_series, lppls_value, sse, subordinate_linear, LinearFit, LpplsParams};
pub use series::{
    align, annualized_return, extrapolate, ingest_csv, linear_trend, parse_timestamp, ratio_series,
    AlignMode, TimeSeries, TrendLine,
};
pub use synth::{generate_lppls, grid_oracle, recovery_trial, RecoveryReport, SynthSpec, TimeGrid};
