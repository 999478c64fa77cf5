#![no_main]

use libfuzzer_sys::fuzz_target;
use xfolio_core::market_data::{parse_ohlcv_csv, write_ohlcv_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_ohlcv_csv(text, "FUZZ") {
        let again = parse_ohlcv_csv(&write_ohlcv_csv(&parsed.series), "FUZZ").unwrap();
        assert_eq!(again.series, parsed.series);
        assert_eq!(again.dropped_rows, 0);
    }
});
