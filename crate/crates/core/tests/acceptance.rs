//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS] criterion N` line on success (run with `--nocapture` to see
//! them). Thresholds for the end-to-end and ablation runs are frozen in
//! tests/fixtures/acceptance_thresholds.json; they are calibrated against
//! the synthetic generator, not against any published figures.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use gaitevents::dataset::{make_pairs, reshape_hybrid, split, SplitSpec};
use gaitevents::eval::{
    accuracy_many, event_mae_many, match_events, run_ablation, run_pipeline, EvalReport,
    PipelineConfig, ToleranceSpec,
};
use gaitevents::events::{detect_events, phase_signals, DetectorParams, EventList, Side};
use gaitevents::neuralnet::{checkpoint, gradient_check, train, Tensor, TrainConfig};
use gaitevents::postprocess::{to_events, validate_side, PulseRules};
use gaitevents::signal::{BandSpec, Channel, Recording};
use gaitevents::synthgait::{generate, generate_cohort, GaitParams};
use gaitevents::zoo::{build, ArchitectureId, ZooConfig, ALL_ARCHITECTURES};

#[derive(Debug, Deserialize)]
struct Thresholds {
    end_to_end_min_pct_at_1ts: f64,
    end_to_end_min_pct_at_6ts: f64,
    end_to_end_max_runtime_s: f64,
    ablation_max_gap_pct_at_6ts: f64,
}

fn thresholds() -> Thresholds {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/acceptance_thresholds.json"
    );
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn pass(n: u32, what: &str) {
    println!("[PASS] criterion {n}: {what}");
}

fn pct_at(report: &EvalReport, window: usize) -> f64 {
    report
        .accuracy
        .iter()
        .find(|a| a.window_ts == window)
        .unwrap()
        .overall_pct
}

/// Band-passed cohort shared by the end-to-end, metric, and ablation
/// criteria: 12 subjects (8 healthy / 4 patient), 30 s at 100 Hz, seed 1.
fn cohort12() -> &'static Vec<Recording> {
    static COHORT: OnceLock<Vec<Recording>> = OnceLock::new();
    COHORT.get_or_init(|| {
        let base = GaitParams {
            seed: 1,
            ..GaitParams::default()
        };
        let mut recs = generate_cohort(8, 4, &base, 30.0, 100.0).unwrap();
        for rec in &mut recs {
            rec.bandpass_all(&BandSpec::default()).unwrap();
        }
        recs
    })
}

fn e2e_report() -> &'static (EvalReport, f64) {
    static REPORT: OnceLock<(EvalReport, f64)> = OnceLock::new();
    REPORT.get_or_init(|| {
        let spec = SplitSpec {
            fractions: (0.7, 0.15, 0.15),
            seed: 1,
        };
        // 12 subjects -> 8 train / 2 val / 2 test
        let (tr, va, te) = split(cohort12(), &spec).unwrap();
        let mut cfg = PipelineConfig::new(ArchitectureId::CnnGru);
        cfg.zoo.conv_filters = 16;
        cfg.zoo.hybrid_units = 64;
        cfg.train.seed = 1;
        cfg.train.max_epochs = 10;
        let started = Instant::now();
        let report = run_pipeline(&tr, &va, &te, &cfg, "e2e").unwrap();
        (report, started.elapsed().as_secs_f64())
    })
}

// -------------------------------------------------------------------------

/// Criterion 1: every layer kind passes central finite-difference gradient
/// checks, max relative error < 1e-4, over 3 shapes x 3 seeds, in < 1 min.
#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let cfg = ZooConfig {
        conv_filters: 2,
        conv_kernel: 3,
        pool: 2,
        mlp_units: 4,
        cnn_dense_units: 4,
        rnn_units: 3,
        hybrid_units: 3,
        segments: 2,
    };
    // Together these cover Dense, Conv1D, MaxPool1D, LSTM, GRU,
    // Bidirectional, TimeDistributed, and SelfAttention.
    let archs = [
        ArchitectureId::Mlp,
        ArchitectureId::Cnn,
        ArchitectureId::Lstm,
        ArchitectureId::Gru,
        ArchitectureId::BiLstm,
        ArchitectureId::BiGru,
        ArchitectureId::CnnLstm,
        ArchitectureId::StackedGruAtt,
    ];
    for id in archs {
        for (w, c) in [(12usize, 2usize), (16, 3), (20, 1)] {
            for seed in 0..3u64 {
                let mut model = build(id, c, w, &cfg, seed).unwrap();
                let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xacce);
                let input = Tensor {
                    shape: vec![w, c],
                    data: (0..w * c).map(|_| r.gen_range(-1.0..1.0)).collect(),
                };
                let err = gradient_check(&mut model, &input, seed, 6).unwrap();
                assert!(
                    err < 1e-4,
                    "{}: w={w} c={c} seed={seed}: max rel err {err:.3e}",
                    id.name()
                );
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient checks took {elapsed:.1}s");
    pass(1, "gradient checks < 1e-4 for all layer kinds");
}

// -------------------------------------------------------------------------

/// Straight-line restatement of the three-rule pulse validation, written
/// independently of the library implementation.
mod pulse_reference {
    use super::PulseRules;

    pub fn clean(series: &[f64], rules: &PulseRules) -> Option<Vec<f64>> {
        let n = series.len();
        if n < 2 {
            return None;
        }
        // sign per sample; zeros take the sign of the next signed sample
        let sign_at = |i: usize| -> i32 {
            for &v in &series[i..] {
                if v > 0.0 {
                    return 1;
                }
                if v < 0.0 {
                    return -1;
                }
            }
            0
        };
        let signs: Vec<i32> = (0..n).map(sign_at).collect();
        // maximal constant-sign runs as (start, end) half-open
        let mut runs = Vec::new();
        let mut a = 0;
        while a < n {
            let mut b = a + 1;
            while b < n && signs[b] == signs[a] {
                b += 1;
            }
            runs.push((a, b));
            a = b;
        }
        // the three rules, applied literally
        let ok = |k: usize| -> bool {
            let (a, b) = runs[k];
            let s = signs[a];
            if s == 0 {
                return false;
            }
            let seg: Vec<f64> = series[a..b].iter().map(|&v| v * s as f64).collect();
            let rule_max = seg.iter().cloned().fold(f64::MIN, f64::max) > rules.max_threshold;
            let rule_mean = seg.iter().sum::<f64>() / seg.len() as f64 > rules.mean_threshold;
            let interior = k != 0 && k != runs.len() - 1;
            let rule_width = !interior || (b - a) > rules.min_width_ts;
            rule_max && rule_mean && rule_width
        };
        let accepted: Vec<bool> = (0..runs.len()).map(ok).collect();
        let first = accepted.iter().position(|&v| v)?;
        let mut phase = signs[runs[first].0] as f64;
        let mut out = Vec::with_capacity(n);
        for (k, &(a, b)) in runs.iter().enumerate() {
            if accepted[k] {
                phase = signs[a] as f64;
            }
            out.extend(std::iter::repeat(phase).take(b - a));
        }
        Some(out)
    }
}

/// Criterion 2: `validate` matches the brute-force three-rule reference on
/// 1000 random pulse trains.
#[test]
fn criterion_2_postprocessing_oracle() {
    let rules = PulseRules::default();
    for seed in 0..1000u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9));
        let mut series: Vec<f64> = Vec::new();
        let mut sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        while series.len() < 150 {
            let width = r.gen_range(1..15);
            let amp: f64 = r.gen_range(0.05..1.1);
            for _ in 0..width {
                series.push(sign * (amp + r.gen_range(-0.04..0.04)));
            }
            if r.gen_bool(0.15) {
                series.push(0.0);
            }
            sign = -sign;
        }
        let expected = pulse_reference::clean(&series, &rules);
        let got = validate_side(&series, &rules).ok();
        assert_eq!(got, expected, "seed {seed}");
    }
    pass(2, "pulse validation matches the reference on 1000 trains");
}

// -------------------------------------------------------------------------

/// Criterion 3: on a noiseless 10-subject cohort, detect_events ->
/// phase_signals -> to_events reproduces the generator truth within ±1 ts.
#[test]
fn criterion_3_groundtruth_round_trip() {
    let base = GaitParams {
        speed_jitter: 0.0,
        amp_noise: 0.0,
        seed: 3,
        ..GaitParams::default()
    };
    let cohort = generate_cohort(10, 0, &base, 30.0, 100.0).unwrap();
    assert_eq!(cohort.len(), 20);
    let params = DetectorParams::default();
    for rec in &cohort {
        let truth = rec.truth_events.as_ref().unwrap();
        let mut detected = EventList::empty();
        for (ch, side) in [
            (Channel::FootSagL, Side::L),
            (Channel::FootSagR, Side::R),
        ] {
            let det = detect_events(rec.channel(ch), side, &params).unwrap();
            detected = detected.merge(&det.events).unwrap();
        }
        let phases = phase_signals(&detected, rec.len()).unwrap();
        let recovered = to_events(&phases).unwrap();
        let matched = match_events(&recovered, truth, 1);
        assert_eq!(
            matched.len(),
            truth.len(),
            "{}: {} of {} truth events recovered within ±1 ts",
            rec.subject_id,
            matched.len(),
            truth.len()
        );
    }
    pass(3, "groundtruth round-trip exact within ±1 ts on 20 recordings");
}

// -------------------------------------------------------------------------

/// Criterion 4: pair-count identity on 100 random (n, w); hybrid reshape
/// flatten-identity on 100 random tensors; no subject leakage in 50 splits.
#[test]
fn criterion_4_dataset_identities() {
    let mut r = ChaCha8Rng::seed_from_u64(44);

    for _ in 0..100 {
        let duration = r.gen_range(3.0..8.0);
        let params = GaitParams {
            seed: r.gen(),
            ..GaitParams::default()
        };
        let rec = generate(&params, duration, 50.0).unwrap();
        let n = rec.len();
        let w = r.gen_range(1..n);
        let pairs = make_pairs(&rec, &Channel::PELVIS, w).unwrap();
        assert_eq!(pairs.len(), n - w, "n={n} w={w}");
    }

    for _ in 0..100 {
        let segments = r.gen_range(1..5usize);
        let w = segments * r.gen_range(1..8usize);
        let c = r.gen_range(1..7usize);
        let x = Tensor {
            shape: vec![w, c],
            data: (0..w * c).map(|_| r.gen_range(-1.0..1.0)).collect(),
        };
        let reshaped = reshape_hybrid(&x, segments).unwrap();
        assert_eq!(reshaped.shape, vec![segments, w / segments, c]);
        assert_eq!(reshaped.data, x.data, "reshape must be a flatten identity");
    }

    let base = GaitParams::default();
    let cohort = generate_cohort(6, 4, &base, 5.0, 50.0).unwrap();
    for seed in 0..50 {
        let spec = SplitSpec {
            fractions: (0.7, 0.15, 0.15),
            seed,
        };
        let (tr, va, te) = split(&cohort, &spec).unwrap();
        let ids = |recs: &[Recording]| -> std::collections::BTreeSet<String> {
            recs.iter().map(|r| r.subject_id.clone()).collect()
        };
        let (a, b, c) = (ids(&tr), ids(&va), ids(&te));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c), "seed {seed}");
        assert_eq!(a.len() + b.len() + c.len(), 10, "seed {seed}: subjects lost");
    }

    pass(4, "pair counts, reshape identity, and leak-free splits hold");
}

// -------------------------------------------------------------------------

/// Criterion 5: reduced CNN-GRU on the synthetic cohort (8/2/2 subjects,
/// seed 1) beats the frozen accuracy floors within the runtime budget.
#[test]
fn criterion_5_end_to_end() {
    let t = thresholds();
    let (report, elapsed) = e2e_report();
    let at1 = pct_at(report, 1);
    let at6 = pct_at(report, 6);
    assert!(
        at6 >= t.end_to_end_min_pct_at_6ts,
        "±6TS accuracy {at6:.2}% below floor {:.2}%",
        t.end_to_end_min_pct_at_6ts
    );
    assert!(
        at1 >= t.end_to_end_min_pct_at_1ts,
        "±1TS accuracy {at1:.2}% below floor {:.2}%",
        t.end_to_end_min_pct_at_1ts
    );
    assert!(
        *elapsed < t.end_to_end_max_runtime_s,
        "end-to-end run took {elapsed:.0}s"
    );
    pass(
        5,
        &format!("end-to-end ±1TS {at1:.2}%, ±6TS {at6:.2}% in {elapsed:.0}s"),
    );
}

// -------------------------------------------------------------------------

/// Criterion 6: accuracy is nondecreasing in the window on the evaluated
/// run; a perfect prediction scores 100% everywhere with zero MAE.
#[test]
fn criterion_6_metric_properties() {
    let (report, _) = e2e_report();
    for pair in report.accuracy.windows(2) {
        assert!(
            pair[1].overall_pct >= pair[0].overall_pct,
            "accuracy decreased from ±{}TS to ±{}TS",
            pair[0].window_ts,
            pair[1].window_ts
        );
    }

    let pairs: Vec<(EventList, EventList)> = cohort12()
        .iter()
        .map(|r| {
            let t = r.truth_events.clone().unwrap();
            (t.clone(), t)
        })
        .collect();
    let acc = accuracy_many(&pairs, &ToleranceSpec::default()).unwrap();
    for a in &acc {
        assert_eq!(a.overall_pct, 100.0, "±{}TS", a.window_ts);
    }
    let mae = event_mae_many(&pairs, 6, 100.0).unwrap();
    assert_eq!(mae.overall_ts, 0.0);
    assert_eq!(mae.overall_ms, 0.0);
    pass(6, "accuracy monotone in window; perfect prediction scores 100%/0 MAE");
}

// -------------------------------------------------------------------------

/// Criterion 7: identical seeds give bit-identical histories, reports, and
/// checkpoint manifests across two consecutive runs.
#[test]
fn criterion_7_determinism() {
    let base = GaitParams {
        seed: 7,
        ..GaitParams::default()
    };
    let mut cohort = generate_cohort(4, 2, &base, 10.0, 100.0).unwrap();
    for rec in &mut cohort {
        rec.bandpass_all(&BandSpec::default()).unwrap();
    }
    let spec = SplitSpec {
        fractions: (0.7, 0.15, 0.15),
        seed: 7,
    };
    let (tr, va, te) = split(&cohort, &spec).unwrap();
    let mut cfg = PipelineConfig::new(ArchitectureId::Gru);
    cfg.window = 40;
    cfg.zoo.rnn_units = 16;
    cfg.train.seed = 7;
    cfg.train.max_epochs = 3;

    let run = || {
        let report = run_pipeline(&tr, &va, &te, &cfg, "det").unwrap();
        serde_json::to_string(&report).unwrap()
    };
    assert_eq!(run(), run(), "reports differ between identical runs");

    let train_once = || {
        let mut train_ds =
            gaitevents::dataset::build_dataset(&tr, &cfg.channels, cfg.window).unwrap();
        gaitevents::dataset::normalize(&mut train_ds, None).unwrap();
        let mut model = build(
            cfg.architecture,
            cfg.channels.len(),
            cfg.window,
            &cfg.zoo,
            cfg.train.seed,
        )
        .unwrap();
        let history = train(&mut model, &train_ds.training_pairs(), &[], &cfg.train).unwrap();
        let (table, blob) = checkpoint::encode_params(&model);
        let manifest = checkpoint::Manifest {
            format_version: checkpoint::FORMAT_VERSION,
            architecture: cfg.architecture.name().to_string(),
            input_channels: cfg.channels.len(),
            window: cfg.window,
            seed: cfg.train.seed,
            hyper: serde_json::Value::Null,
            norm: serde_json::Value::Null,
            history: Some(history),
            params: table,
        };
        (serde_json::to_string(&manifest).unwrap(), blob)
    };
    let (m1, b1) = train_once();
    let (m2, b2) = train_once();
    assert_eq!(m1, m2, "checkpoint manifests differ");
    assert_eq!(b1, b2, "parameter blobs differ");
    pass(7, "two identical runs are bit-identical");
}

// -------------------------------------------------------------------------

/// Criterion 8: all 16 architectures build, match the golden parameter
/// counts, and finish one training step without NaN on a 100-pair dataset.
#[test]
fn criterion_8_model_zoo_audit() {
    const GOLDEN: [(ArchitectureId, usize); 16] = [
        (ArchitectureId::Mlp, 49_802),
        (ArchitectureId::Cnn, 123_736),
        (ArchitectureId::Lstm, 43_002),
        (ArchitectureId::Gru, 32_302),
        (ArchitectureId::BiLstm, 86_002),
        (ArchitectureId::BiGru, 64_602),
        (ArchitectureId::StackedLstm, 123_402),
        (ArchitectureId::StackedGru, 92_602),
        (ArchitectureId::StackedLstmAtt, 123_502),
        (ArchitectureId::StackedGruAtt, 92_702),
        (ArchitectureId::CnnLstm, 4_210_386),
        (ArchitectureId::CnnGru, 3_158_586),
        (ArchitectureId::CnnBiLstm, 8_418_786),
        (ArchitectureId::CnnBiGru, 6_315_186),
        (ArchitectureId::CnnBiLstmAtt, 8_419_986),
        (ArchitectureId::CnnBiGruAtt, 6_316_386),
    ];
    assert_eq!(GOLDEN.len(), ALL_ARCHITECTURES.len());

    let rec = generate(
        &GaitParams {
            seed: 8,
            ..GaitParams::default()
        },
        3.0,
        100.0,
    )
    .unwrap();
    let pairs: Vec<_> = make_pairs(&rec, &Channel::PELVIS, 80)
        .unwrap()
        .into_iter()
        .take(100)
        .map(|p| {
            (
                p.x,
                Tensor {
                    shape: vec![2],
                    data: p.y.to_vec(),
                },
            )
        })
        .collect();
    assert_eq!(pairs.len(), 100);

    let cfg = ZooConfig::default();
    let train_cfg = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    for (id, expected) in GOLDEN {
        let mut model = build(id, 6, 80, &cfg, 0).unwrap();
        assert_eq!(
            model.param_count(),
            expected,
            "{}: parameter count",
            id.name()
        );
        let history = train(&mut model, &pairs, &[], &train_cfg).unwrap();
        let last = history.epochs.last().unwrap();
        assert!(
            last.train_loss.is_finite() && last.val_loss.is_finite(),
            "{}: non-finite loss after one step",
            id.name()
        );
    }
    pass(8, "all 16 architectures build, match counts, and train one step");
}

// -------------------------------------------------------------------------

/// Criterion 9: the ablation harness completes on the Table-III-shaped
/// subsets, and the all-6 and 4-signal subsets land within the frozen
/// sanity band of each other at ±6TS.
#[test]
fn criterion_9_ablation_harness() {
    use Channel::*;
    let t = thresholds();
    let base = GaitParams {
        seed: 9,
        ..GaitParams::default()
    };
    let mut cohort = generate_cohort(4, 2, &base, 20.0, 100.0).unwrap();
    for rec in &mut cohort {
        rec.bandpass_all(&BandSpec::default()).unwrap();
    }
    let spec = SplitSpec {
        fractions: (0.7, 0.15, 0.15),
        seed: 9,
    };
    let (tr, va, te) = split(&cohort, &spec).unwrap();
    let mut cfg = PipelineConfig::new(ArchitectureId::Gru);
    cfg.zoo.rnn_units = 16;
    cfg.train.seed = 9;
    cfg.train.max_epochs = 8;
    let subsets = vec![
        vec![Ml],
        vec![Ap, Ml],
        vec![Ap, Ml, V, Rot],
        Channel::PELVIS.to_vec(),
    ];
    let rows = run_ablation(&tr, &va, &te, &subsets, &cfg).unwrap();
    assert_eq!(rows.len(), 4);
    let at6 = |label: &str| {
        let row = rows.iter().find(|r| r.label == label).unwrap();
        pct_at(&row.report, 6)
    };
    let full = at6("[AP, ML, V, TIL, OBL, ROT]");
    let four = at6("[AP, ML, V, ROT]");
    assert!(
        (full - four).abs() <= t.ablation_max_gap_pct_at_6ts,
        "±6TS gap between all-6 ({full:.2}%) and 4-signal ({four:.2}%) exceeds band"
    );
    pass(
        9,
        &format!("ablation complete; ±6TS all-6 {full:.2}% vs 4-signal {four:.2}%"),
    );
}
