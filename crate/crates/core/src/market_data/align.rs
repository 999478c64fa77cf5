use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{AlignedPanel, AssetSeries, MarketDataError, Result};

/// How to reconcile differing trading calendars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Keep only dates every asset traded.
    IntersectDates,
    /// Union of dates starting at the latest first observation; gaps repeat
    /// the asset's previous bar.
    #[default]
    ForwardFill,
}

pub fn align_panel(series: &[AssetSeries], fill: FillPolicy) -> Result<AlignedPanel> {
    if series.is_empty() {
        return Err(MarketDataError::NoSeries);
    }
    let mut seen = HashSet::new();
    for s in series {
        if !seen.insert(s.ticker.as_str()) {
            return Err(MarketDataError::DuplicateTicker(s.ticker.clone()));
        }
        if s.bars.is_empty() {
            return Err(MarketDataError::EmptySeries(s.ticker.clone()));
        }
    }

    let dates: Vec<_> = match fill {
        FillPolicy::IntersectDates => {
            let mut common: BTreeSet<_> = series[0].bars.iter().map(|b| b.date).collect();
            for s in &series[1..] {
                let these: HashSet<_> = s.bars.iter().map(|b| b.date).collect();
                common.retain(|d| these.contains(d));
            }
            common.into_iter().collect()
        }
        FillPolicy::ForwardFill => {
            let start = series.iter().map(|s| s.bars[0].date).max().unwrap();
            let union: BTreeSet<_> = series
                .iter()
                .flat_map(|s| s.bars.iter().map(|b| b.date))
                .filter(|d| *d >= start)
                .collect();
            union.into_iter().collect()
        }
    };
    if dates.is_empty() {
        return Err(MarketDataError::NoCommonDates);
    }

    let n = series.len();
    let t_len = dates.len();
    let mut values = vec![[0.0; 4]; t_len * n];
    let mut volumes = vec![0.0; t_len * n];
    for (col, s) in series.iter().enumerate() {
        // Both sequences are ascending, so a single cursor walks each series.
        let mut cursor = 0usize;
        for (t, date) in dates.iter().enumerate() {
            while cursor + 1 < s.bars.len() && s.bars[cursor + 1].date <= *date {
                cursor += 1;
            }
            let bar = &s.bars[cursor];
            debug_assert!(bar.date <= *date);
            values[t * n + col] = bar.prices();
            volumes[t * n + col] = bar.volume;
        }
    }

    Ok(AlignedPanel {
        tickers: series.iter().map(|s| s.ticker.clone()).collect(),
        dates,
        values,
        volumes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::Bar;
    use chrono::NaiveDate;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 1, day).unwrap()
    }

    fn series(ticker: &str, days: &[u32]) -> AssetSeries {
        AssetSeries {
            ticker: ticker.into(),
            bars: days
                .iter()
                .map(|&day| {
                    let p = day as f64;
                    Bar {
                        date: d(day),
                        open: p,
                        high: p + 1.0,
                        low: p - 0.5,
                        close: p + 0.5,
                        volume: 10.0 * p,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn identical_axes_unchanged() {
        let a = series("A", &[2, 5, 6]);
        let b = series("B", &[2, 5, 6]);
        for fill in [FillPolicy::IntersectDates, FillPolicy::ForwardFill] {
            let p = align_panel(&[a.clone(), b.clone()], fill).unwrap();
            assert_eq!(p.dates, vec![d(2), d(5), d(6)]);
        }
    }

    #[test]
    fn intersect_keeps_common_dates() {
        let p = align_panel(
            &[series("A", &[2, 3, 4]), series("B", &[2, 4])],
            FillPolicy::IntersectDates,
        )
        .unwrap();
        assert_eq!(p.dates, vec![d(2), d(4)]);
    }

    #[test]
    fn forward_fill_repeats_previous_bar() {
        let p = align_panel(
            &[series("A", &[2, 3, 4]), series("B", &[2, 4])],
            FillPolicy::ForwardFill,
        )
        .unwrap();
        assert_eq!(p.dates, vec![d(2), d(3), d(4)]);
        assert_eq!(p.cell(1, 1), p.cell(0, 1));
        assert_eq!(p.volume(1, 1), p.volume(0, 1));
        assert_eq!(p.cell(2, 1)[0], 4.0);
    }

    #[test]
    fn forward_fill_drops_dates_before_first_observation() {
        let p = align_panel(
            &[series("A", &[2, 3, 4, 5]), series("B", &[4, 5])],
            FillPolicy::ForwardFill,
        )
        .unwrap();
        assert_eq!(p.dates, vec![d(4), d(5)]);
    }

    #[test]
    fn disjoint_intersection_errors() {
        let err = align_panel(
            &[series("A", &[2, 3]), series("B", &[4, 5])],
            FillPolicy::IntersectDates,
        )
        .unwrap_err();
        assert_eq!(err, MarketDataError::NoCommonDates);
    }

    #[test]
    fn rejects_duplicates_and_empty_input() {
        assert_eq!(
            align_panel(&[], FillPolicy::ForwardFill).unwrap_err(),
            MarketDataError::NoSeries
        );
        let a = series("A", &[2]);
        assert_eq!(
            align_panel(&[a.clone(), a], FillPolicy::ForwardFill).unwrap_err(),
            MarketDataError::DuplicateTicker("A".into())
        );
    }
}
