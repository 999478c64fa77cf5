//! OHLCV ingestion, calendar alignment, lag-1 feature construction and
//! date-range splitting.
//!
//! The indicator layout is fixed everywhere as open, high, low, close.

mod align;
mod cache;
mod csv;
mod features;

pub use align::{align_panel, FillPolicy};
pub use cache::{decode_panel_cache, encode_panel_cache, PANEL_MAGIC};
pub use csv::{parse_ohlcv_csv, write_ohlcv_csv, ParsedSeries, OHLCV_HEADER};
pub use features::{build_features, split_by_date, write_features_csv, DateRange};

use chrono::NaiveDate;
use thiserror::Error;

/// Indicator names in column-layout order.
pub const INDICATORS: [&str; 4] = ["open", "high", "low", "close"];

/// Index of the close price inside a `[f64; 4]` indicator block.
pub const CLOSE: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum MarketDataError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },
    #[error("line {line}: {reason}")]
    UnparsableRow { line: usize, reason: String },
    #[error("series `{0}` has no valid rows")]
    EmptySeries(String),
    #[error("no series to align")]
    NoSeries,
    #[error("ticker `{0}` appears more than once")]
    DuplicateTicker(String),
    #[error("series share no common dates")]
    NoCommonDates,
    #[error("need at least 2 dates to build lag-1 features, got {0}")]
    InsufficientHistory(usize),
    #[error("date range {start}..={end} is empty or inverted")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
    #[error("training and trading ranges overlap")]
    OverlappingRanges,
    #[error("{0} split captures no rows")]
    EmptySplit(&'static str),
    #[error("corrupt panel cache: {0}")]
    CorruptCache(String),
}

pub type Result<T, E = MarketDataError> = std::result::Result<T, E>;

/// One trading day for one asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    pub fn prices(&self) -> [f64; 4] {
        [self.open, self.high, self.low, self.close]
    }

    /// Checks the price-ordering invariants. Returns a reason on failure.
    pub fn validate(&self) -> Result<(), String> {
        let prices = self.prices();
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and strictly positive".into());
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err("volume must be finite and non-negative".into());
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(format!(
                "inconsistent range: low {} high {} open {} close {}",
                self.low, self.high, self.open, self.close
            ));
        }
        Ok(())
    }
}

/// Date-ascending bars for one ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetSeries {
    pub ticker: String,
    pub bars: Vec<Bar>,
}

/// Calendar-aligned prices for N assets over T dates.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Row-major `T x N`, each cell in indicator order.
    pub values: Vec<[f64; 4]>,
    /// Row-major `T x N`.
    pub volumes: Vec<f64>,
}

impl AlignedPanel {
    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn cell(&self, t: usize, n: usize) -> &[f64; 4] {
        &self.values[t * self.n_assets() + n]
    }

    pub fn volume(&self, t: usize, n: usize) -> f64 {
        self.volumes[t * self.n_assets() + n]
    }
}

/// Lag-1 normalized feature rows plus the price relatives the environment
/// needs to account portfolio growth.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub tickers: Vec<String>,
    pub feature_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Row-major `T' x D`.
    pub rows: Vec<f64>,
    /// Row-major `T' x N`, `close_t / close_{t-1}`.
    pub price_relatives: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.n_features();
        &self.rows[t * d..(t + 1) * d]
    }

    pub fn relatives(&self, t: usize) -> &[f64] {
        let n = self.n_assets();
        &self.price_relatives[t * n..(t + 1) * n]
    }

    /// Per-column mean and population standard deviation.
    pub fn column_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.n_features();
        let m = self.n_rows().max(1) as f64;
        let mut mean = vec![0.0; d];
        for t in 0..self.n_rows() {
            for (acc, v) in mean.iter_mut().zip(self.row(t)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; d];
        for t in 0..self.n_rows() {
            for ((acc, v), mu) in var.iter_mut().zip(self.row(t)).zip(&mean) {
                *acc += (v - mu).powi(2);
            }
        }
        let std = var.into_iter().map(|v| (v / m).sqrt()).collect();
        (mean, std)
    }

    pub(crate) fn select_rows(&self, keep: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix {
            tickers: self.tickers.clone(),
            feature_names: self.feature_names.clone(),
            dates: Vec::with_capacity(keep.len()),
            rows: Vec::with_capacity(keep.len() * self.n_features()),
            price_relatives: Vec::with_capacity(keep.len() * self.n_assets()),
        };
        for &t in keep {
            out.dates.push(self.dates[t]);
            out.rows.extend_from_slice(self.row(t));
            out.price_relatives.extend_from_slice(self.relatives(t));
        }
        out
    }
}
