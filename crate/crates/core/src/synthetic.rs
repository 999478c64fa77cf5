//! Deterministic synthetic OHLCV markets on a weekday calendar.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::market_data::{AssetSeries, Bar};
use crate::seed::rng_for;

/// `n` consecutive weekdays starting at (or after) `start`.
pub fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Weekdays in `[start, end]`.
pub fn weekdays_between(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let days = (end - start).num_days().max(0) as usize + 1;
    weekdays(start, days)
        .into_iter()
        .take_while(|d| *d <= end)
        .collect()
}

fn bar(date: NaiveDate, open: f64, close: f64, volume: f64) -> Bar {
    Bar {
        date,
        open,
        high: open.max(close) * 1.002,
        low: open.min(close) * 0.998,
        close,
        volume,
    }
}

/// Every asset compounds at a constant daily rate; each day opens at the
/// previous close.
pub fn drift_market(tickers: &[&str], daily_drift: &[f64], dates: &[NaiveDate]) -> Vec<AssetSeries> {
    tickers
        .iter()
        .zip(daily_drift)
        .map(|(ticker, drift)| {
            let mut close = 100.0;
            let bars = dates
                .iter()
                .map(|&date| {
                    let open = close;
                    close *= 1.0 + drift;
                    bar(date, open, close, 1e6)
                })
                .collect();
            AssetSeries {
                ticker: ticker.to_string(),
                bars,
            }
        })
        .collect()
}

/// Geometric random walks with daily log-volatility `vol` and intraday
/// open noise.
pub fn random_walk_market(
    tickers: &[&str],
    dates: &[NaiveDate],
    vol: f64,
    seed: u64,
) -> Vec<AssetSeries> {
    tickers
        .iter()
        .enumerate()
        .map(|(i, ticker)| {
            let mut rng = rng_for(seed, &[i as u64]);
            let mut close = 50.0 + 25.0 * i as f64;
            let bars = dates
                .iter()
                .map(|&date| {
                    let z: f64 = rng.sample(StandardNormal);
                    let gap: f64 = rng.sample(StandardNormal);
                    let open = close * (0.3 * vol * gap).exp();
                    close = open * (vol * z).exp();
                    let volume = (1e6 * (1.0 + rng.random::<f64>())).round();
                    bar(date, open, close, volume)
                })
                .collect();
            AssetSeries {
                ticker: ticker.to_string(),
                bars,
            }
        })
        .collect()
}

/// A market in which only the first asset's close-to-open move carries
/// information: when it closes above its open on day `t`, it gains
/// `edge` on day `t + 2`, otherwise it loses `edge`. That lag matches a
/// lag-1 decision at the close of day `t + 1` earning the next day's move.
/// Its high and low sit at fixed bands around the close, so among its
/// features only `open_L1` varies. Remaining assets are noise.
pub fn signal_market(
    tickers: &[&str],
    dates: &[NaiveDate],
    edge: f64,
    seed: u64,
) -> Vec<AssetSeries> {
    let mut rng = rng_for(seed, &[u64::MAX]);
    let n_days = dates.len();
    let ups: Vec<bool> = (0..n_days).map(|_| rng.random::<bool>()).collect();
    let mut series = random_walk_market(tickers, dates, 0.01, seed);
    let mut close = 100.0;
    series[0].bars = dates
        .iter()
        .enumerate()
        .map(|(t, &date)| {
            let drift = if t >= 2 && ups[t - 2] { edge } else if t >= 2 { -edge } else { 0.0 };
            let prev = close;
            close = prev * (1.0 + drift);
            // Intraday move sets the signal without changing close-to-close.
            let open = if ups[t] { close * 0.8 } else { close * 1.2 };
            Bar {
                date,
                open,
                high: close * 1.25,
                low: close * 0.75,
                close,
                volume: 1e6,
            }
        })
        .collect();
    series
}
