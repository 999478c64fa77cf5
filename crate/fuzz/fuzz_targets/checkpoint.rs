#![no_main]

use libfuzzer_sys::fuzz_target;
use xfolio_core::policy::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = decode_checkpoint(data) {
        assert_eq!(encode_checkpoint(&net), data);
    }
});
