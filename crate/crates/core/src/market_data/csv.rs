use std::fmt::Write as _;

use chrono::NaiveDate;

use super::{AssetSeries, Bar, MarketDataError, Result};

pub const OHLCV_HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume";

/// Result of parsing one vendor export.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSeries {
    pub series: AssetSeries,
    /// Rows dropped because a price field was empty or `null`.
    pub dropped_rows: usize,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("null")
}

fn parse_number(field: &str, name: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| MarketDataError::UnparsableRow {
            line,
            reason: format!("{name} `{field}` is not a number"),
        })
}

/// Parses a `Date,Open,High,Low,Close,Adj Close,Volume` export.
///
/// Rows with any empty or `null` price field are dropped and counted; a
/// missing volume reads as zero. Bars come back sorted by date.
pub fn parse_ohlcv_csv(text: &str, ticker: &str) -> Result<ParsedSeries> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim_end_matches('\r'))
        .unwrap_or("");
    if header != OHLCV_HEADER {
        return Err(MarketDataError::MalformedHeader {
            expected: OHLCV_HEADER.to_string(),
            found: header.chars().take(80).collect(),
        });
    }

    let mut bars = Vec::new();
    let mut dropped_rows = 0;
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(MarketDataError::UnparsableRow {
                line,
                reason: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d").map_err(|_| {
            MarketDataError::UnparsableRow {
                line,
                reason: format!("date `{}` is not ISO-8601", fields[0]),
            }
        })?;
        if fields[1..6].iter().any(|f| is_missing(f)) {
            dropped_rows += 1;
            continue;
        }
        let open = parse_number(fields[1], "Open", line)?;
        let high = parse_number(fields[2], "High", line)?;
        let low = parse_number(fields[3], "Low", line)?;
        let close = parse_number(fields[4], "Close", line)?;
        parse_number(fields[5], "Adj Close", line)?;
        let volume = if is_missing(fields[6]) {
            0.0
        } else {
            parse_number(fields[6], "Volume", line)?
        };
        let bar = Bar {
            date,
            open,
            high,
            low,
            close,
            volume,
        };
        bar.validate()
            .map_err(|reason| MarketDataError::UnparsableRow { line, reason })?;
        bars.push((line, bar));
    }

    if bars.is_empty() {
        return Err(MarketDataError::EmptySeries(ticker.to_string()));
    }
    bars.sort_by_key(|(_, b)| b.date);
    for pair in bars.windows(2) {
        if pair[0].1.date == pair[1].1.date {
            return Err(MarketDataError::UnparsableRow {
                line: pair[0].0.max(pair[1].0),
                reason: format!("duplicate date {}", pair[1].1.date),
            });
        }
    }

    Ok(ParsedSeries {
        series: AssetSeries {
            ticker: ticker.to_string(),
            bars: bars.into_iter().map(|(_, b)| b).collect(),
        },
        dropped_rows,
    })
}

/// Writes a series in the vendor-export schema. `Adj Close` repeats the close.
pub fn write_ohlcv_csv(series: &AssetSeries) -> String {
    let mut out = String::with_capacity(64 * (series.bars.len() + 1));
    out.push_str(OHLCV_HEADER);
    out.push('\n');
    for b in &series.bars {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            b.date.format("%Y-%m-%d"),
            b.open,
            b.high,
            b.low,
            b.close,
            b.close,
            b.volume
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(rows: &[&str]) -> String {
        let mut s = String::from(OHLCV_HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    #[test]
    fn single_row_maps_fields() {
        let p = parse_ohlcv_csv(&csv(&["2015-01-02,10,11,9,10.5,10.5,100"]), "AAPL").unwrap();
        assert_eq!(p.series.bars.len(), 1);
        let b = p.series.bars[0];
        assert_eq!(b.close, 10.5);
        assert_eq!(b.open, 10.0);
        assert_eq!(b.volume, 100.0);
        assert_eq!(p.dropped_rows, 0);
    }

    #[test]
    fn rows_are_sorted() {
        let p = parse_ohlcv_csv(
            &csv(&[
                "2015-01-05,10,11,9,10.5,10.5,100",
                "2015-01-02,10,11,9,10.0,10.0,100",
            ]),
            "X",
        )
        .unwrap();
        let dates: Vec<_> = p.series.bars.iter().map(|b| b.date.to_string()).collect();
        assert_eq!(dates, ["2015-01-02", "2015-01-05"]);
    }

    #[test]
    fn empty_close_is_dropped() {
        let p = parse_ohlcv_csv(
            &csv(&[
                "2015-01-02,10,11,9,,10.5,100",
                "2015-01-05,10,11,9,10.5,10.5,100",
                "2015-01-06,null,null,null,null,null,null",
            ]),
            "X",
        )
        .unwrap();
        assert_eq!(p.dropped_rows, 2);
        assert_eq!(p.series.bars.len(), 1);
    }

    #[test]
    fn header_must_match() {
        let err = parse_ohlcv_csv("Date,Open,High,Low,Close\n", "X").unwrap_err();
        assert!(matches!(err, MarketDataError::MalformedHeader { .. }));
    }

    #[test]
    fn bad_number_reports_line() {
        let err = parse_ohlcv_csv(
            &csv(&["2015-01-02,10,11,9,10,10,1", "2015-01-05,10,abc,9,10,10,1"]),
            "X",
        )
        .unwrap_err();
        assert!(matches!(err, MarketDataError::UnparsableRow { line: 3, .. }));
    }

    #[test]
    fn no_valid_rows_is_empty_series() {
        let err = parse_ohlcv_csv(&csv(&["2015-01-02,,,,,,"]), "X").unwrap_err();
        assert_eq!(err, MarketDataError::EmptySeries("X".into()));
    }

    #[test]
    fn duplicate_dates_rejected() {
        let err = parse_ohlcv_csv(
            &csv(&["2015-01-02,10,11,9,10,10,1", "2015-01-02,10,11,9,10,10,1"]),
            "X",
        )
        .unwrap_err();
        assert!(matches!(err, MarketDataError::UnparsableRow { .. }));
    }

    #[test]
    fn inconsistent_range_rejected() {
        let err = parse_ohlcv_csv(&csv(&["2015-01-02,10,9,8,10,10,1"]), "X").unwrap_err();
        assert!(matches!(err, MarketDataError::UnparsableRow { line: 2, .. }));
    }

    #[test]
    fn crlf_and_bom_accepted() {
        let text = format!("\u{feff}{OHLCV_HEADER}\r\n2015-01-02,10,11,9,10,10,1\r\n");
        assert_eq!(parse_ohlcv_csv(&text, "X").unwrap().series.bars.len(), 1);
    }
}
