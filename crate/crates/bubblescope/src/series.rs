//! Time-series data model, CSV ingestion and the elementary macro
//! computations: log transform, annualized returns, alignment, ratio series
//! and linear trends.
//!
//! Timestamps are decimal years throughout. Calendar dates convert as
//! `year + (day_of_year - 1) / days_in_year`, so `2000-01-01` is exactly
//! `2000.0` and `2000-07-02` (day 184 of a 366-day year) is exactly `2000.5`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A validated time series: strictly increasing decimal-year timestamps with
/// finite values. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    label: String,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyInput);
        }
        if times.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if !times.iter().all(|t| t.is_finite()) || !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite entry".into()));
        }
        for pair in times.windows(2) {
            if pair[1] <= pair[0] {
                if pair[1] == pair[0] {
                    return Err(Error::DuplicateTimestamp { time: pair[0] });
                }
                return Err(Error::InvalidSeries(format!(
                    "times not strictly increasing at {} -> {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self {
            times,
            values,
            label: label.into(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first_time(&self) -> f64 {
        self.times[0]
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Sub-series with timestamps `<= cutoff`. Errors when nothing remains.
    pub fn truncated_at(&self, cutoff: f64) -> Result<TimeSeries> {
        let n = self.times.partition_point(|&t| t <= cutoff);
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        TimeSeries::new(
            self.times[..n].to_vec(),
            self.values[..n].to_vec(),
            self.label.clone(),
        )
    }

    /// Sub-series with timestamps `>= start`. Errors when nothing remains.
    pub fn window_from(&self, start: f64) -> Result<TimeSeries> {
        let i = self.times.partition_point(|&t| t < start);
        if i == self.times.len() {
            return Err(Error::EmptyInput);
        }
        TimeSeries::new(
            self.times[i..].to_vec(),
            self.values[i..].to_vec(),
            self.label.clone(),
        )
    }

    /// Natural log of every value; times unchanged. Errors on the first
    /// non-positive value, naming its timestamp.
    pub fn to_log(&self) -> Result<TimeSeries> {
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if v <= 0.0 {
                return Err(Error::NonPositiveValue { time: t, value: v });
            }
        }
        TimeSeries::new(
            self.times.clone(),
            self.values.iter().map(|v| v.ln()).collect(),
            format!("log({})", self.label),
        )
    }

    /// Two-column CSV mirror of the ingestion format. Times are emitted as
    /// decimal years with 6 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t:.6},{v}\n"));
        }
        out
    }
}

/// Parse a timestamp that is either an ISO-8601 date (`YYYY-MM-DD`) or a
/// decimal year.
pub fn parse_timestamp(text: &str) -> Result<f64> {
    let text = text.trim();
    if let Some(t) = parse_iso_date(text) {
        return Ok(t);
    }
    match text.parse::<f64>() {
        Ok(t) if t.is_finite() => Ok(t),
        _ => Err(Error::InvalidParameter(format!(
            "cannot parse `{text}` as an ISO date or decimal year"
        ))),
    }
}

fn is_leap_year(year: i64) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

const CUMULATIVE_DAYS: [u32; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];

fn parse_iso_date(text: &str) -> Option<f64> {
    let mut parts = text.splitn(3, '-');
    let year: i64 = parts.next()?.parse().ok()?;
    let month: u32 = parts.next()?.parse().ok()?;
    let day: u32 = parts.next()?.parse().ok()?;
    if !(1..=12).contains(&month) {
        return None;
    }
    let leap = is_leap_year(year);
    let month_len = match month {
        2 if leap => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    };
    if day < 1 || day > month_len {
        return None;
    }
    let mut day_of_year = CUMULATIVE_DAYS[(month - 1) as usize] + day;
    if leap && month > 2 {
        day_of_year += 1;
    }
    let days_in_year = if leap { 366.0 } else { 365.0 };
    Some(year as f64 + (day_of_year - 1) as f64 / days_in_year)
}

/// Ingest a two-column CSV with header `date,value`. Dates are ISO-8601 or
/// decimal years; rows are sorted ascending; duplicate timestamps are
/// rejected rather than averaged.
pub fn ingest_csv(text: &str) -> Result<TimeSeries> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((i, line)) => break (i, line),
            None => return Err(Error::EmptyInput),
        }
    };
    let normalized: String = header
        .1
        .split(',')
        .map(|f| f.trim())
        .collect::<Vec<_>>()
        .join(",");
    if !normalized.eq_ignore_ascii_case("date,value") {
        return Err(Error::MalformedRow {
            line: header.0 + 1,
            reason: format!("expected header `date,value`, got `{}`", header.1.trim()),
        });
    }

    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(',');
        let (date, value) = match (fields.next(), fields.next(), fields.next()) {
            (Some(d), Some(v), None) => (d, v),
            _ => {
                return Err(Error::MalformedRow {
                    line: line_no,
                    reason: "expected exactly two comma-separated fields".into(),
                })
            }
        };
        let t = parse_timestamp(date).map_err(|e| Error::MalformedRow {
            line: line_no,
            reason: e.to_string(),
        })?;
        let v: f64 = value.trim().parse().map_err(|_| Error::MalformedRow {
            line: line_no,
            reason: format!("cannot parse value `{}`", value.trim()),
        })?;
        if !v.is_finite() {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: format!("non-finite value `{}`", value.trim()),
            });
        }
        rows.push((t, v));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateTimestamp { time: pair[0].0 });
        }
    }
    let (times, values) = rows.into_iter().unzip();
    TimeSeries::new(times, values, "csv")
}

/// Geometric annualized rate of return: `(v1/v0)^(1/years) - 1`.
pub fn annualized_return(v0: f64, v1: f64, years: f64) -> Result<f64> {
    if v0 <= 0.0 || v1 <= 0.0 || years <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "annualized_return needs positive inputs, got v0={v0}, v1={v1}, years={years}"
        )));
    }
    Ok((v1 / v0).powf(1.0 / years) - 1.0)
}

/// How two series are brought onto a common time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignMode {
    /// Keep exactly the timestamps present in both (exact equality).
    Intersect,
    /// Linearly interpolate `b` at `a`'s timestamps. `a`'s span must lie
    /// within `b`'s span; extrapolation is an error.
    InterpolateOntoA,
}

/// Align two series onto a shared grid. The returned pair has identical
/// timestamps.
pub fn align(a: &TimeSeries, b: &TimeSeries, mode: AlignMode) -> Result<(TimeSeries, TimeSeries)> {
    match mode {
        AlignMode::Intersect => {
            let mut times = Vec::new();
            let mut va = Vec::new();
            let mut vb = Vec::new();
            let (mut i, mut j) = (0, 0);
            while i < a.len() && j < b.len() {
                let (ta, tb) = (a.times[i], b.times[j]);
                if ta == tb {
                    times.push(ta);
                    va.push(a.values[i]);
                    vb.push(b.values[j]);
                    i += 1;
                    j += 1;
                } else if ta < tb {
                    i += 1;
                } else {
                    j += 1;
                }
            }
            if times.is_empty() {
                return Err(Error::EmptyOverlap);
            }
            Ok((
                TimeSeries::new(times.clone(), va, a.label.clone())?,
                TimeSeries::new(times, vb, b.label.clone())?,
            ))
        }
        AlignMode::InterpolateOntoA => {
            let (lo, hi) = (b.first_time(), b.last_time());
            if a.first_time() < lo || a.last_time() > hi {
                let bad = if a.first_time() < lo {
                    a.first_time()
                } else {
                    a.last_time()
                };
                return Err(Error::Extrapolation { time: bad, lo, hi });
            }
            let vb: Vec<f64> = a.times.iter().map(|&t| interpolate(b, t)).collect();
            Ok((
                a.clone(),
                TimeSeries::new(a.times.clone(), vb, b.label.clone())?,
            ))
        }
    }
}

fn interpolate(series: &TimeSeries, t: f64) -> f64 {
    // Caller guarantees t lies within the series span.
    let idx = series.times.partition_point(|&x| x < t);
    if idx < series.len() && series.times[idx] == t {
        return series.values[idx];
    }
    let (t0, t1) = (series.times[idx - 1], series.times[idx]);
    let (v0, v1) = (series.values[idx - 1], series.values[idx]);
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Ratio of two series in percent at their shared timestamps:
/// `100 * numerator / denominator`.
pub fn ratio_series(numerator: &TimeSeries, denominator: &TimeSeries) -> Result<TimeSeries> {
    let (num, den) = align(numerator, denominator, AlignMode::Intersect)?;
    let mut values = Vec::with_capacity(num.len());
    for ((&t, &n), &d) in num.times.iter().zip(&num.values).zip(&den.values) {
        if d == 0.0 {
            return Err(Error::ZeroDenominator { time: t });
        }
        values.push(100.0 * n / d);
    }
    TimeSeries::new(
        num.times.clone(),
        values,
        format!("{}/{} (%)", numerator.label, denominator.label),
    )
}

/// A fitted line, anchored at `reference_year`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendLine {
    /// Value units per year.
    pub slope: f64,
    /// Value at the reference year.
    pub intercept: f64,
    pub reference_year: f64,
}

/// Ordinary least-squares line through the series, anchored at the first
/// timestamp.
pub fn linear_trend(series: &TimeSeries) -> Result<TrendLine> {
    if series.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: series.len(),
        });
    }
    let n = series.len() as f64;
    let t_mean = series.times.iter().sum::<f64>() / n;
    let v_mean = series.values.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&t, &v) in series.times.iter().zip(&series.values) {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (v - v_mean);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidSeries("all timestamps equal".into()));
    }
    let slope = sxy / sxx;
    let reference_year = series.first_time();
    Ok(TrendLine {
        slope,
        intercept: v_mean + slope * (reference_year - t_mean),
        reference_year,
    })
}

/// Evaluate a trend line at an arbitrary year.
pub fn extrapolate(trend: &TrendLine, t: f64) -> f64 {
    trend.intercept + trend.slope * (t - trend.reference_year)
}
