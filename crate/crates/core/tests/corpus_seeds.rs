//! Regenerates the fuzz corpus seeds under fuzz/corpus/. The seeds are
//! checked in; run this only when a serialized format changes:
//!
//! ```text
//! cargo test -p gaitevents --test corpus_seeds -- --ignored
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use gaitevents::dataset::{encode_cache, SlidingWindowPair, WindowedDataset};
use gaitevents::events::{EventKind, EventList, GaitEvent, Side};
use gaitevents::neuralnet::{checkpoint, Tensor};
use gaitevents::signal::{save_recording_csv, Channel, Group, Recording, Series};
use gaitevents::zoo::{build, ArchitectureId, ZooConfig};

fn corpus_dir(target: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_recording() -> Recording {
    let series = |scale: f64| {
        Series::new(
            (0..24).map(|i| scale * (i as f64 * 0.7).sin()).collect(),
            100.0,
        )
        .unwrap()
    };
    let pelvis: BTreeMap<Channel, Series> = Channel::PELVIS
        .iter()
        .enumerate()
        .map(|(i, &ch)| (ch, series(1.0 + i as f64)))
        .collect();
    let feet: BTreeMap<Channel, Series> = Channel::FEET
        .iter()
        .map(|&ch| (ch, series(10.0)))
        .collect();
    Recording::new("S0".to_string(), Group::Healthy, pelvis, feet).unwrap()
}

/// The checked-in seeds must stay decodable, or the fuzzers start from
/// dead inputs.
#[test]
fn checked_in_seeds_parse() {
    use gaitevents::signal::CsvSchema;

    let read = |target: &str, name: &str| {
        fs::read(corpus_dir(target).join(name)).expect("seed file checked in")
    };

    let csv = read("recording_csv", "seed-recording.csv");
    let schema = CsvSchema::identity(100.0);
    gaitevents::signal::parse_recording_csv(csv.as_slice(), &schema, "seed".to_string()).unwrap();

    let json = read("eventlist_json", "seed-events.json");
    EventList::from_json_str(std::str::from_utf8(&json).unwrap()).unwrap();

    let cache = read("dataset_cache", "seed-cache.bin");
    gaitevents::dataset::decode_cache(&cache).unwrap();

    let ckpt = read("checkpoint_decode", "seed-checkpoint.bin");
    let pos = ckpt.iter().position(|&b| b == 0).unwrap();
    let manifest: checkpoint::Manifest = serde_json::from_slice(&ckpt[..pos]).unwrap();
    checkpoint::decode_params(&manifest.params, &ckpt[pos + 1..]).unwrap();
}

#[test]
#[ignore = "writes files into fuzz/corpus; run explicitly to regenerate"]
fn regenerate_fuzz_corpus() {
    // recording_csv: a small valid recording in the on-disk CSV layout
    let rec = tiny_recording();
    save_recording_csv(&rec, &corpus_dir("recording_csv").join("seed-recording.csv")).unwrap();

    // eventlist_json: a valid alternating event list
    let events = EventList::new(vec![
        GaitEvent { side: Side::R, kind: EventKind::Hs, t: 10 },
        GaitEvent { side: Side::L, kind: EventKind::To, t: 20 },
        GaitEvent { side: Side::L, kind: EventKind::Hs, t: 65 },
        GaitEvent { side: Side::R, kind: EventKind::To, t: 70 },
        GaitEvent { side: Side::R, kind: EventKind::Hs, t: 120 },
    ])
    .unwrap();
    events
        .to_json_file(&corpus_dir("eventlist_json").join("seed-events.json"))
        .unwrap();

    // dataset_cache: a tiny encoded cache
    let w = 4;
    let channels = vec![Channel::Ap, Channel::Ml];
    let mut ds = WindowedDataset::empty(channels.clone(), w);
    for t in w..w + 3 {
        let mut x = Tensor::zeros(&[w, channels.len()]);
        for (i, v) in x.data.iter_mut().enumerate() {
            *v = (t * 10 + i) as f64 * 0.1;
        }
        ds.pairs.push(SlidingWindowPair { x, y: [1.0, -1.0], t });
    }
    ds.source_n = 16;
    fs::write(
        corpus_dir("dataset_cache").join("seed-cache.bin"),
        encode_cache(&ds),
    )
    .unwrap();

    // checkpoint_decode: manifest JSON + NUL + parameter blob
    let cfg = ZooConfig {
        conv_filters: 2,
        conv_kernel: 3,
        pool: 2,
        mlp_units: 3,
        cnn_dense_units: 3,
        rnn_units: 3,
        hybrid_units: 3,
        segments: 2,
    };
    let model = build(ArchitectureId::Mlp, 2, 6, &cfg, 0).unwrap();
    let (table, blob) = checkpoint::encode_params(&model);
    let manifest = checkpoint::Manifest {
        format_version: checkpoint::FORMAT_VERSION,
        architecture: ArchitectureId::Mlp.name().to_string(),
        input_channels: 2,
        window: 6,
        seed: 0,
        hyper: serde_json::Value::Null,
        norm: serde_json::Value::Null,
        history: None,
        params: table,
    };
    let mut bytes = serde_json::to_vec(&manifest).unwrap();
    bytes.push(0);
    bytes.extend_from_slice(&blob);
    fs::write(corpus_dir("checkpoint_decode").join("seed-checkpoint.bin"), bytes).unwrap();
}
