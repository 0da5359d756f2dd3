//! Fuzz the checkpoint decoder. The input is a JSON manifest and a binary
//! parameter blob separated by the first NUL byte, mirroring the on-disk
//! pair of checkpoint.json + checkpoint.bin.

#![no_main]

use gaitevents::neuralnet::checkpoint::{decode_params, Manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some(pos) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let (head, blob) = (&data[..pos], &data[pos + 1..]);
    let Ok(manifest) = serde_json::from_slice::<Manifest>(head) else {
        return;
    };
    let _ = decode_params(&manifest.params, blob);
});
