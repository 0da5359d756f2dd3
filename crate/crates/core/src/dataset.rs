//! Sliding-window dataset construction: one-step-ahead (input window,
//! phase-target) pairs, z-score normalization from training statistics,
//! subject-wise splitting, and a binary cache format.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::events::phase_signals;
use crate::neuralnet::Tensor;
use crate::signal::{Channel, Recording};
use crate::Result;

pub const DEFAULT_WINDOW: usize = 80;

/// One training example: `x` holds the window rows t-w .. t-1 in declared
/// channel order, `y` the (right, left) phase at timestep `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindowPair {
    pub x: Tensor,
    pub y: [f64; 2],
    pub t: usize,
}

/// Per-channel normalization statistics, in dataset channel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub channels: Vec<Channel>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub channels: Vec<Channel>,
    pub w: usize,
    pub pairs: Vec<SlidingWindowPair>,
    pub norm: Option<NormStats>,
    /// Total source timesteps across the contributing recordings.
    pub source_n: usize,
}

impl WindowedDataset {
    pub fn empty(channels: Vec<Channel>, w: usize) -> WindowedDataset {
        WindowedDataset {
            channels,
            w,
            pairs: Vec::new(),
            norm: None,
            source_n: 0,
        }
    }

    pub fn inputs(&self) -> Vec<Tensor> {
        self.pairs.iter().map(|p| p.x.clone()).collect()
    }

    /// (input, target) views for the training loop.
    pub fn training_pairs(&self) -> Vec<(Tensor, Tensor)> {
        self.pairs
            .iter()
            .map(|p| (p.x.clone(), Tensor::vector(p.y.to_vec())))
            .collect()
    }
}

/// Windows never cross recording boundaries: each recording of length n
/// contributes exactly n - w pairs, with pair i targeting timestep w + i.
pub fn make_pairs(
    rec: &Recording,
    channels: &[Channel],
    w: usize,
) -> Result<Vec<SlidingWindowPair>> {
    if channels.is_empty() || channels.len() > 6 {
        return Err(Error::config(format!(
            "input channel count must be 1..6, got {}",
            channels.len()
        )));
    }
    let n = rec.len();
    if w > n {
        return Err(Error::data(format!(
            "window exceeds recording: w={w}, n={n}"
        )));
    }
    let truth = rec
        .truth_events
        .as_ref()
        .ok_or_else(|| Error::data("recording has no groundtruth events"))?;
    let phases = phase_signals(truth, n)?;
    let mut pairs = make_windows(rec, channels, w)?;
    for p in &mut pairs {
        p.y = [phases.right[p.t], phases.left[p.t]];
    }
    Ok(pairs)
}

/// Sliding windows without targets (`y` is zeroed), for inference on
/// recordings that carry no groundtruth events.
pub fn make_windows(
    rec: &Recording,
    channels: &[Channel],
    w: usize,
) -> Result<Vec<SlidingWindowPair>> {
    if channels.is_empty() || channels.len() > 6 {
        return Err(Error::config(format!(
            "input channel count must be 1..6, got {}",
            channels.len()
        )));
    }
    let n = rec.len();
    if w > n {
        return Err(Error::data(format!(
            "window exceeds recording: w={w}, n={n}"
        )));
    }
    let c = channels.len();
    let series: Vec<&[f64]> = channels
        .iter()
        .map(|&ch| rec.channel(ch).values.as_slice())
        .collect();
    let mut pairs = Vec::with_capacity(n - w);
    for i in 0..n - w {
        let t = w + i;
        let mut x = Tensor::zeros(&[w, c]);
        for row in 0..w {
            for (col, s) in series.iter().enumerate() {
                x.data[row * c + col] = s[i + row];
            }
        }
        pairs.push(SlidingWindowPair { x, y: [0.0, 0.0], t });
    }
    Ok(pairs)
}

/// Concatenate the pairs of several recordings into one dataset.
pub fn build_dataset(
    recordings: &[Recording],
    channels: &[Channel],
    w: usize,
) -> Result<WindowedDataset> {
    let mut ds = WindowedDataset::empty(channels.to_vec(), w);
    for rec in recordings {
        ds.pairs.extend(make_pairs(rec, channels, w)?);
        ds.source_n += rec.len();
    }
    Ok(ds)
}

/// Per-channel mean and (population) standard deviation over every window
/// entry of the dataset.
pub fn compute_stats(ds: &WindowedDataset) -> Result<NormStats> {
    let c = ds.channels.len();
    let mut sum = vec![0.0; c];
    let mut sumsq = vec![0.0; c];
    let mut count = 0usize;
    for p in &ds.pairs {
        for row in 0..ds.w {
            for col in 0..c {
                let v = p.x.data[row * c + col];
                sum[col] += v;
                sumsq[col] += v * v;
            }
        }
        count += ds.w;
    }
    if count == 0 {
        return Err(Error::data("cannot compute stats on an empty dataset"));
    }
    let n = count as f64;
    let mut mean = vec![0.0; c];
    let mut std = vec![0.0; c];
    for col in 0..c {
        mean[col] = sum[col] / n;
        let var = (sumsq[col] / n - mean[col] * mean[col]).max(0.0);
        std[col] = var.sqrt();
        if std[col] <= 0.0 {
            return Err(Error::data(format!(
                "zero-variance channel {}",
                ds.channels[col]
            )));
        }
    }
    Ok(NormStats {
        channels: ds.channels.clone(),
        mean,
        std,
    })
}

/// Z-score the inputs in place. With `stats = None` the statistics come from
/// the dataset itself (training partition); otherwise the supplied training
/// stats are applied. Targets are untouched. Returns the applied stats.
pub fn normalize(ds: &mut WindowedDataset, stats: Option<&NormStats>) -> Result<NormStats> {
    let stats = match stats {
        Some(s) => {
            if s.channels != ds.channels {
                return Err(Error::config(format!(
                    "normalization stats cover {:?}, dataset has {:?}",
                    s.channels, ds.channels
                )));
            }
            s.clone()
        }
        None => compute_stats(ds)?,
    };
    let c = ds.channels.len();
    for p in &mut ds.pairs {
        for row in 0..ds.w {
            for col in 0..c {
                let v = &mut p.x.data[row * c + col];
                *v = (*v - stats.mean[col]) / stats.std[col];
            }
        }
    }
    ds.norm = Some(stats.clone());
    Ok(stats)
}

/// [w, c] -> [segments, w/segments, c] without reordering any element.
pub fn reshape_hybrid(x: &Tensor, segments: usize) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::shape(format!(
            "reshape_hybrid: expected rank-2 input, got {:?}",
            x.shape
        )));
    }
    let (w, c) = (x.shape[0], x.shape[1]);
    if segments == 0 || w % segments != 0 {
        return Err(Error::shape(format!(
            "window {w} not divisible by {segments} segments"
        )));
    }
    x.clone().reshaped(&[segments, w / segments, c])
}

/// Subject-wise split specification. Both recordings (walking speeds) of a
/// subject always land in the same partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            fractions: (0.7, 0.15, 0.15),
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split fractions {:?} must be positive and sum to 1",
                self.fractions
            )));
        }
        Ok(())
    }
}

/// Deterministic subject-disjoint split into (train, val, test) recording
/// sets. Fractions are honored to the nearest subject; every partition gets
/// at least one subject.
pub fn split(
    recordings: &[Recording],
    spec: &SplitSpec,
) -> Result<(Vec<Recording>, Vec<Recording>, Vec<Recording>)> {
    spec.validate()?;
    let subjects: BTreeSet<&str> = recordings.iter().map(|r| r.subject_id.as_str()).collect();
    if subjects.len() < 3 {
        return Err(Error::data(format!(
            "need at least 3 subjects to split, got {}",
            subjects.len()
        )));
    }
    let mut order: Vec<&str> = subjects.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let n = order.len();
    let mut n_train = (spec.fractions.0 * n as f64).round() as usize;
    let mut n_val = (spec.fractions.1 * n as f64).round() as usize;
    n_train = n_train.max(1);
    n_val = n_val.max(1);
    while n_train + n_val >= n {
        if n_train > 1 {
            n_train -= 1;
        } else {
            n_val -= 1;
        }
    }
    let train_ids: BTreeSet<&str> = order[..n_train].iter().copied().collect();
    let val_ids: BTreeSet<&str> = order[n_train..n_train + n_val].iter().copied().collect();
    let mut parts = (Vec::new(), Vec::new(), Vec::new());
    for rec in recordings {
        if train_ids.contains(rec.subject_id.as_str()) {
            parts.0.push(rec.clone());
        } else if val_ids.contains(rec.subject_id.as_str()) {
            parts.1.push(rec.clone());
        } else {
            parts.2.push(rec.clone());
        }
    }
    Ok(parts)
}

const CACHE_MAGIC: &[u8; 4] = b"GEDS";
const CACHE_VERSION: u32 = 1;

/// Provenance sidecar written next to the binary cache.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheProvenance {
    pub source_files: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub spec: serde_json::Value,
}

/// Binary cache: header {magic, version, w, channel tags, norm, count} then a
/// row-major pair block (t, y, x) of little-endian f64.
pub fn encode_cache(ds: &WindowedDataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.w as u64).to_le_bytes());
    out.extend_from_slice(&(ds.channels.len() as u64).to_le_bytes());
    for ch in &ds.channels {
        let tag = ch.tag().as_bytes();
        out.extend_from_slice(&(tag.len() as u64).to_le_bytes());
        out.extend_from_slice(tag);
    }
    match &ds.norm {
        None => out.push(0),
        Some(s) => {
            out.push(1);
            for v in s.mean.iter().chain(&s.std) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.extend_from_slice(&(ds.source_n as u64).to_le_bytes());
    out.extend_from_slice(&(ds.pairs.len() as u64).to_le_bytes());
    for p in &ds.pairs {
        out.extend_from_slice(&(p.t as u64).to_le_bytes());
        out.extend_from_slice(&p.y[0].to_le_bytes());
        out.extend_from_slice(&p.y[1].to_le_bytes());
        for v in &p.x.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse("dataset cache truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_cache(buf: &[u8]) -> Result<WindowedDataset> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(4)? != CACHE_MAGIC {
        return Err(Error::parse("not a dataset cache (bad magic)"));
    }
    let version = cur.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::parse(format!(
            "unsupported dataset cache version {version}"
        )));
    }
    let w = cur.u64()? as usize;
    let c = cur.u64()? as usize;
    if w == 0 || w > 1 << 20 || c == 0 || c > 6 {
        return Err(Error::parse(format!(
            "implausible cache dimensions w={w}, c={c}"
        )));
    }
    let mut channels = Vec::with_capacity(c);
    for _ in 0..c {
        let len = cur.u64()? as usize;
        if len > 32 {
            return Err(Error::parse("channel tag too long"));
        }
        let tag = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::parse("channel tag is not UTF-8"))?;
        let ch = Channel::from_tag(tag)
            .ok_or_else(|| Error::parse(format!("unknown channel tag {tag:?}")))?;
        channels.push(ch);
    }
    let norm = match cur.take(1)?[0] {
        0 => None,
        1 => {
            let mean: Vec<f64> = (0..c).map(|_| cur.f64()).collect::<Result<_>>()?;
            let std: Vec<f64> = (0..c).map(|_| cur.f64()).collect::<Result<_>>()?;
            if std.iter().any(|&s| !(s > 0.0) || !s.is_finite())
                || mean.iter().any(|m| !m.is_finite())
            {
                return Err(Error::parse("invalid normalization stats in cache"));
            }
            Some(NormStats {
                channels: channels.clone(),
                mean,
                std,
            })
        }
        b => return Err(Error::parse(format!("invalid norm flag {b}"))),
    };
    let source_n = cur.u64()? as usize;
    let count = cur.u64()? as usize;
    let pair_bytes = 8 + 16 + w * c * 8;
    if count.checked_mul(pair_bytes).map_or(true, |total| {
        total != buf.len() - cur.pos
    }) {
        return Err(Error::parse(format!(
            "cache body size mismatch: {count} pairs of {pair_bytes} bytes vs {} remaining",
            buf.len() - cur.pos
        )));
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let t = cur.u64()? as usize;
        let y = [cur.f64()?, cur.f64()?];
        let mut x = Tensor::zeros(&[w, c]);
        for v in x.data.iter_mut() {
            *v = cur.f64()?;
            if !v.is_finite() {
                return Err(Error::parse("non-finite value in cache"));
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::parse("non-finite target in cache"));
        }
        pairs.push(SlidingWindowPair { x, y, t });
    }
    Ok(WindowedDataset {
        channels,
        w,
        pairs,
        norm,
        source_n,
    })
}

pub fn save_cache(path: &Path, ds: &WindowedDataset, provenance: &CacheProvenance) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_cache(ds))?;
    let sidecar = sidecar_path(path);
    fs::write(sidecar, serde_json::to_string_pretty(provenance)?)?;
    Ok(())
}

pub fn load_cache(path: &Path) -> Result<WindowedDataset> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_cache(&buf)
}

pub fn sidecar_path(cache: &Path) -> std::path::PathBuf {
    let mut os = cache.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{EventKind, EventList, GaitEvent, Side};
    use crate::signal::{Group, Series};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn toy_recording(subject: &str, n: usize, scale: f64) -> Recording {
        let mut pelvis = BTreeMap::new();
        for (k, ch) in Channel::PELVIS.into_iter().enumerate() {
            let values = (0..n)
                .map(|i| scale * ((i as f64 * 0.1 + k as f64).sin() + 0.1 * k as f64))
                .collect();
            pelvis.insert(ch, Series::new(values, 100.0).unwrap());
        }
        let mut feet = BTreeMap::new();
        for ch in Channel::FEET {
            feet.insert(
                ch,
                Series::new((0..n).map(|i| (i as f64 * 0.2).cos()).collect(), 100.0).unwrap(),
            );
        }
        let mut rec = Recording::new(subject.to_string(), Group::Healthy, pelvis, feet).unwrap();
        let ev = |side, kind, t| GaitEvent { side, kind, t };
        rec.truth_events = Some(
            EventList::new(vec![
                ev(Side::R, EventKind::Hs, 3),
                ev(Side::R, EventKind::To, n / 2),
                ev(Side::L, EventKind::Hs, n / 2 + 2),
                ev(Side::L, EventKind::To, n - 2),
            ])
            .unwrap(),
        );
        rec
    }

    #[test]
    fn pair_count_identity() {
        let rec = toy_recording("s1", 100, 1.0);
        let pairs = make_pairs(&rec, &Channel::PELVIS, 80).unwrap();
        assert_eq!(pairs.len(), 20);
        assert_eq!(pairs[0].t, 80);
        assert_eq!(pairs[19].t, 99);
        // first pair covers timesteps 0..80 of each channel, in order
        let ap = &rec.channel(Channel::Ap).values;
        for row in 0..80 {
            assert_eq!(pairs[0].x.data[row * 6], ap[row]);
        }
        // target is the phase at t = 80: right in swing, left in stance
        assert_eq!(pairs[0].y, [-1.0, 1.0]);
    }

    #[test]
    fn n_equals_w_gives_zero_pairs() {
        let rec = toy_recording("s1", 80, 1.0);
        assert!(make_pairs(&rec, &Channel::PELVIS, 80).unwrap().is_empty());
    }

    #[test]
    fn window_longer_than_recording_errors() {
        let rec = toy_recording("s1", 50, 1.0);
        let err = make_pairs(&rec, &Channel::PELVIS, 80).unwrap_err();
        assert!(err.to_string().contains("window exceeds recording"));
    }

    #[test]
    fn single_pair_shape() {
        let rec = toy_recording("s1", 81, 1.0);
        let pairs = make_pairs(&rec, &Channel::PELVIS, 80).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].x.shape, vec![80, 6]);
    }

    #[test]
    fn self_normalization_is_zscore() {
        let mut ds = build_dataset(&[toy_recording("s1", 120, 2.5)], &Channel::PELVIS, 40).unwrap();
        normalize(&mut ds, None).unwrap();
        let stats = compute_stats(&ds).unwrap();
        for col in 0..6 {
            assert!(stats.mean[col].abs() < 1e-9, "mean {}", stats.mean[col]);
            assert!((stats.std[col] - 1.0).abs() < 1e-9, "std {}", stats.std[col]);
        }
    }

    #[test]
    fn val_with_train_stats_is_not_centered() {
        let mut train = build_dataset(&[toy_recording("s1", 120, 1.0)], &Channel::PELVIS, 40).unwrap();
        let stats = normalize(&mut train, None).unwrap();
        let mut val = build_dataset(&[toy_recording("s2", 120, 3.0)], &Channel::PELVIS, 40).unwrap();
        normalize(&mut val, Some(&stats)).unwrap();
        let val_stats = compute_stats(&val).unwrap();
        assert!(val_stats.mean.iter().any(|m| m.abs() > 1e-3));
    }

    #[test]
    fn constant_channel_errors() {
        let mut rec = toy_recording("s1", 100, 1.0);
        rec.pelvis.insert(
            Channel::Rot,
            Series::new(vec![0.25; 100], 100.0).unwrap(),
        );
        let mut ds = build_dataset(&[rec], &Channel::PELVIS, 40).unwrap();
        let err = normalize(&mut ds, None).unwrap_err();
        assert!(err.to_string().contains("zero-variance channel ROT"), "{err}");
    }

    #[test]
    fn reshape_hybrid_shapes() {
        let x = Tensor::zeros(&[80, 6]);
        assert_eq!(reshape_hybrid(&x, 2).unwrap().shape, vec![2, 40, 6]);
        assert_eq!(reshape_hybrid(&x, 1).unwrap().shape, vec![1, 80, 6]);
        assert!(reshape_hybrid(&x, 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn reshape_flatten_round_trip(
            seg in 1usize..5,
            per in 1usize..8,
            c in 1usize..7,
            seed in 0u64..1000,
        ) {
            use rand::Rng;
            let w = seg * per;
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor {
                shape: vec![w, c],
                data: (0..w * c).map(|_| r.gen_range(-1.0..1.0)).collect(),
            };
            let y = reshape_hybrid(&x, seg).unwrap();
            prop_assert_eq!(&y.data, &x.data);
            prop_assert_eq!(y.reshaped(&[w, c]).unwrap(), x);
        }
    }

    fn cohort(n_subjects: usize) -> Vec<Recording> {
        let mut out = Vec::new();
        for s in 0..n_subjects {
            // two recordings (speeds) per subject
            out.push(toy_recording(&format!("subj{s:02}"), 100, 1.0));
            out.push(toy_recording(&format!("subj{s:02}"), 110, 1.3));
        }
        out
    }

    #[test]
    fn split_is_subject_disjoint_and_deterministic() {
        let recs = cohort(10);
        let spec = SplitSpec {
            seed: 1,
            ..SplitSpec::default()
        };
        let (tr, va, te) = split(&recs, &spec).unwrap();
        let ids = |v: &[Recording]| -> BTreeSet<String> {
            v.iter().map(|r| r.subject_id.clone()).collect()
        };
        let (ti, vi, ei) = (ids(&tr), ids(&va), ids(&te));
        assert!(ti.is_disjoint(&vi) && ti.is_disjoint(&ei) && vi.is_disjoint(&ei));
        assert_eq!(ti.len(), 7);
        assert_eq!(vi.len() + ei.len(), 3);
        // both speeds travel together
        assert_eq!(tr.len(), 14);
        let (tr2, va2, te2) = split(&recs, &spec).unwrap();
        assert_eq!(ids(&tr2), ti);
        assert_eq!(ids(&va2), vi);
        assert_eq!(ids(&te2), ei);
    }

    #[test]
    fn split_too_few_subjects_errors() {
        let recs = cohort(2);
        let err = split(&recs, &SplitSpec::default()).unwrap_err();
        assert!(err.to_string().contains("at least 3 subjects"));
    }

    #[test]
    fn cache_round_trip() {
        let mut ds = build_dataset(&[toy_recording("s1", 100, 1.0)], &Channel::PELVIS, 40).unwrap();
        normalize(&mut ds, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.geds");
        let prov = CacheProvenance {
            source_files: vec!["s1.csv".into()],
            seed: Some(7),
            spec: serde_json::json!({"w": 40}),
        };
        save_cache(&path, &ds, &prov).unwrap();
        let loaded = load_cache(&path).unwrap();
        assert_eq!(loaded, ds);
        let sidecar: CacheProvenance =
            serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(sidecar.source_files, prov.source_files);
    }

    #[test]
    fn cache_rejects_corruption() {
        let ds = build_dataset(&[toy_recording("s1", 90, 1.0)], &Channel::PELVIS, 40).unwrap();
        let buf = encode_cache(&ds);
        assert!(decode_cache(&buf[..buf.len() - 1]).is_err());
        assert!(decode_cache(b"NOPE").is_err());
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(decode_cache(&bad_magic).is_err());
    }
}
