//! Fuzz the binary dataset-cache decoder: header plausibility checks and
//! exact size accounting must reject arbitrary bytes without panicking.

#![no_main]

use gaitevents::dataset::decode_cache;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_cache(data);
});
