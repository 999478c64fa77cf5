use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{AlignedPanel, FeatureMatrix, MarketDataError, Result, CLOSE, INDICATORS};

/// Inclusive calendar range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Builds lag-1 features: the row for date `t` holds every indicator of
/// date `t-1` divided by that asset's close at `t-1`.
pub fn build_features(panel: &AlignedPanel) -> Result<FeatureMatrix> {
    let t_len = panel.n_dates();
    if t_len < 2 {
        return Err(MarketDataError::InsufficientHistory(t_len));
    }
    let n = panel.n_assets();
    let feature_names = panel
        .tickers
        .iter()
        .flat_map(|ticker| INDICATORS.iter().map(move |ind| format!("{ticker}_{ind}_L1")))
        .collect();

    let mut rows = Vec::with_capacity((t_len - 1) * 4 * n);
    let mut price_relatives = Vec::with_capacity((t_len - 1) * n);
    for t in 1..t_len {
        for a in 0..n {
            let prev = panel.cell(t - 1, a);
            let prev_close = prev[CLOSE];
            rows.extend(prev.iter().map(|v| v / prev_close));
            price_relatives.push(panel.cell(t, a)[CLOSE] / prev_close);
        }
    }

    Ok(FeatureMatrix {
        tickers: panel.tickers.clone(),
        feature_names,
        dates: panel.dates[1..].to_vec(),
        rows,
        price_relatives,
    })
}

/// Splits rows by date into a training and a trading matrix.
pub fn split_by_date(
    features: &FeatureMatrix,
    train: DateRange,
    trade: DateRange,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    for r in [train, trade] {
        if r.start > r.end {
            return Err(MarketDataError::InvalidRange {
                start: r.start,
                end: r.end,
            });
        }
    }
    if train.end >= trade.start {
        return Err(MarketDataError::OverlappingRanges);
    }
    let pick = |range: DateRange| -> Vec<usize> {
        (0..features.n_rows())
            .filter(|&t| range.contains(features.dates[t]))
            .collect()
    };
    let (train_idx, trade_idx) = (pick(train), pick(trade));
    if train_idx.is_empty() {
        return Err(MarketDataError::EmptySplit("training"));
    }
    if trade_idx.is_empty() {
        return Err(MarketDataError::EmptySplit("trading"));
    }
    Ok((features.select_rows(&train_idx), features.select_rows(&trade_idx)))
}

/// `date,<feature names...>` with shortest round-trip float formatting.
pub fn write_features_csv(features: &FeatureMatrix) -> String {
    let mut out = String::from("date");
    for name in &features.feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for t in 0..features.n_rows() {
        let _ = write!(out, "{}", features.dates[t].format("%Y-%m-%d"));
        for v in features.row(t) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
