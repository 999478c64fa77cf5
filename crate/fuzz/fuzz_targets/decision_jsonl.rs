#![no_main]

use libfuzzer_sys::fuzz_target;
use xfolio_core::decision_log::{DecisionLog, LogMeta};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let meta = LogMeta {
        feature_names: ["open", "high", "low", "close"]
            .iter()
            .map(|i| format!("A_{i}_L1"))
            .collect(),
        tickers: vec!["A".into()],
    };
    if let Ok(log) = DecisionLog::import_jsonl(text, meta.clone()) {
        let again = DecisionLog::import_jsonl(&log.export_jsonl(), meta).unwrap();
        assert_eq!(again, log);
    }
});
