//! Shared generators for the integration and acceptance suites.
// Each test target compiles this module separately and uses its own subset.
#![allow(dead_code)]

use bubblescope::rng::Prng;
use bubblescope::{generate_lppls, LpplsParams, SynthSpec, TimeGrid, TimeSeries};

/// Draw bubble parameters in the well-identified regime: mid-range exponent
/// and frequency, trend dominating the oscillation, critical time inside the
/// searchable band past the window end.
pub fn draw_truth(rng: &mut Prng, t1: f64, t2: f64) -> LpplsParams {
    let window = t2 - t1;
    let b = -(0.3 + 0.7 * rng.uniform());
    let c_amp = b.abs() * (0.05 + 0.25 * rng.uniform());
    let phase = std::f64::consts::TAU * rng.uniform();
    LpplsParams {
        tc: t2 + window * (0.05 + 0.30 * rng.uniform()),
        m: 0.2 + 0.6 * rng.uniform(),
        omega: 4.0 + 11.0 * rng.uniform(),
        a: 5.0,
        b,
        c1: c_amp * phase.cos(),
        c2: c_amp * phase.sin(),
    }
}

pub fn synthetic_prices(
    params: &LpplsParams,
    t1: f64,
    t2: f64,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> TimeSeries {
    generate_lppls(&SynthSpec {
        params: *params,
        times: TimeGrid::Uniform {
            start: t1,
            end: t2,
            n,
        },
        noise_sigma,
        seed,
    })
    .unwrap()
}

/// Geometric Brownian motion price path.
pub fn gbm_prices(drift: f64, vol: f64, t1: f64, t2: f64, n: usize, seed: u64) -> TimeSeries {
    let mut rng = Prng::seed_from_u64(seed);
    let dt = (t2 - t1) / (n - 1) as f64;
    let mut log_price: f64 = 4.0;
    let mut times = Vec::with_capacity(n);
    let mut prices = Vec::with_capacity(n);
    for i in 0..n {
        times.push(t1 + i as f64 * dt);
        prices.push(log_price.exp());
        log_price += (drift - 0.5 * vol * vol) * dt + vol * dt.sqrt() * rng.normal();
    }
    TimeSeries::new(times, prices, "gbm").unwrap()
}
