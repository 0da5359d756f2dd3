//! Fuzz the event-list JSON decoder, including the ordering / alternation
//! validation that runs on deserialization.

#![no_main]

use gaitevents::events::EventList;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = EventList::from_json_str(text);
    }
});
