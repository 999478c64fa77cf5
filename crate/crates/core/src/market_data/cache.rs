//! Single-file panel dump.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic     16 bytes  "XFOLIOPANEL" + 5 NUL
//! T         u32
//! N         u32
//! tickers   N x 16 bytes, UTF-8, NUL padded
//! dates     T x f64   days since 1970-01-01
//! values    T x N x 4 x f64   (open, high, low, close)
//! volumes   T x N x f64
//! ```

use chrono::{Days, NaiveDate};

use super::{AlignedPanel, MarketDataError, Result};

pub const PANEL_MAGIC: [u8; 16] = *b"XFOLIOPANEL\0\0\0\0\0";
const TICKER_SLOT: usize = 16;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

fn corrupt(msg: impl Into<String>) -> MarketDataError {
    MarketDataError::CorruptCache(msg.into())
}

pub fn encode_panel_cache(panel: &AlignedPanel) -> Result<Vec<u8>> {
    let t_len = panel.n_dates();
    let n = panel.n_assets();
    let mut out = Vec::with_capacity(24 + n * TICKER_SLOT + 8 * t_len * (1 + 5 * n));
    out.extend_from_slice(&PANEL_MAGIC);
    out.extend_from_slice(&(t_len as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for ticker in &panel.tickers {
        let bytes = ticker.as_bytes();
        if bytes.is_empty() || bytes.len() > TICKER_SLOT || bytes.contains(&0) {
            return Err(corrupt(format!("ticker `{ticker}` does not fit a 16-byte slot")));
        }
        let mut slot = [0u8; TICKER_SLOT];
        slot[..bytes.len()].copy_from_slice(bytes);
        out.extend_from_slice(&slot);
    }
    for date in &panel.dates {
        let days = date.signed_duration_since(epoch()).num_days() as f64;
        out.extend_from_slice(&days.to_le_bytes());
    }
    for cell in &panel.values {
        for v in cell {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in &panel.volumes {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], idx: usize) -> f64 {
    f64::from_le_bytes(bytes[idx * 8..idx * 8 + 8].try_into().unwrap())
}

pub fn decode_panel_cache(bytes: &[u8]) -> Result<AlignedPanel> {
    if bytes.len() < 24 || bytes[..16] != PANEL_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let t_len = read_u32(bytes, 16) as usize;
    let n = read_u32(bytes, 20) as usize;
    if t_len == 0 || n == 0 {
        return Err(corrupt("empty dimensions"));
    }
    let floats = t_len
        .checked_mul(n)
        .and_then(|tn| tn.checked_mul(5))
        .and_then(|v| v.checked_add(t_len))
        .ok_or_else(|| corrupt("dimension overflow"))?;
    let expected = floats
        .checked_mul(8)
        .and_then(|v| v.checked_add(24 + n * TICKER_SLOT))
        .ok_or_else(|| corrupt("dimension overflow"))?;
    if bytes.len() != expected {
        return Err(corrupt(format!(
            "length {} does not match T={t_len}, N={n} (expected {expected})",
            bytes.len()
        )));
    }

    let mut tickers = Vec::with_capacity(n);
    for i in 0..n {
        let slot = &bytes[24 + i * TICKER_SLOT..24 + (i + 1) * TICKER_SLOT];
        let end = slot.iter().position(|&b| b == 0).unwrap_or(TICKER_SLOT);
        if end == 0 || slot[end..].iter().any(|&b| b != 0) {
            return Err(corrupt(format!("ticker slot {i} malformed")));
        }
        let ticker = std::str::from_utf8(&slot[..end])
            .map_err(|_| corrupt(format!("ticker slot {i} is not UTF-8")))?;
        if tickers.contains(&ticker.to_string()) {
            return Err(corrupt(format!("duplicate ticker `{ticker}`")));
        }
        tickers.push(ticker.to_string());
    }

    let payload = &bytes[24 + n * TICKER_SLOT..];
    let mut dates = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let days = f64_at(payload, t);
        if !days.is_finite() || days.fract() != 0.0 || days.abs() > 1e7 {
            return Err(corrupt(format!("date {t} is not a whole day count")));
        }
        let date = if days >= 0.0 {
            epoch().checked_add_days(Days::new(days as u64))
        } else {
            epoch().checked_sub_days(Days::new((-days) as u64))
        }
        .ok_or_else(|| corrupt(format!("date {t} out of range")))?;
        if dates.last().is_some_and(|prev| *prev >= date) {
            return Err(corrupt("dates not strictly increasing"));
        }
        dates.push(date);
    }

    let mut values = Vec::with_capacity(t_len * n);
    for cell in 0..t_len * n {
        let base = t_len + cell * 4;
        let v = [
            f64_at(payload, base),
            f64_at(payload, base + 1),
            f64_at(payload, base + 2),
            f64_at(payload, base + 3),
        ];
        if v.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(corrupt(format!("non-positive price in cell {cell}")));
        }
        values.push(v);
    }
    let vol_base = t_len + t_len * n * 4;
    let volumes: Vec<f64> = (0..t_len * n).map(|i| f64_at(payload, vol_base + i)).collect();
    if volumes.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(corrupt("invalid volume"));
    }

    Ok(AlignedPanel {
        tickers,
        dates,
        values,
        volumes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AlignedPanel {
        let d0 = NaiveDate::from_ymd_opt(2015, 1, 2).unwrap();
        AlignedPanel {
            tickers: vec!["AAPL".into(), "BABA".into()],
            dates: vec![d0, d0 + Days::new(3)],
            values: vec![[1.0, 2.0, 0.5, 1.5], [3.0, 3.5, 2.5, 3.25], [1.1, 2.0, 0.5, 1.6], [3.0, 4.0, 2.0, 3.0]],
            volumes: vec![10.0, 0.0, 12.5, 7.0],
        }
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let bytes = encode_panel_cache(&p).unwrap();
        assert_eq!(&bytes[..16], b"XFOLIOPANEL\0\0\0\0\0");
        assert_eq!(decode_panel_cache(&bytes).unwrap(), p);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let bytes = encode_panel_cache(&sample()).unwrap();
        assert!(decode_panel_cache(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Y';
        assert!(decode_panel_cache(&bad).is_err());
    }

    #[test]
    fn huge_dimensions_do_not_allocate() {
        let mut bytes = PANEL_MAGIC.to_vec();
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_panel_cache(&bytes).is_err());
    }
}
