#![no_main]

use libfuzzer_sys::fuzz_target;
use xfolio_core::market_data::{decode_panel_cache, encode_panel_cache};

fuzz_target!(|data: &[u8]| {
    if let Ok(panel) = decode_panel_cache(data) {
        let bytes = encode_panel_cache(&panel).unwrap();
        assert_eq!(decode_panel_cache(&bytes).unwrap().tickers, panel.tickers);
    }
});
