//! Fuzz the recording CSV parser: arbitrary bytes must never panic, only
//! return a parsed recording or an error.

#![no_main]

use gaitevents::signal::{parse_recording_csv, CsvSchema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let schema = CsvSchema::identity(100.0);
    let _ = parse_recording_csv(data, &schema, "fuzz".to_string());
});
