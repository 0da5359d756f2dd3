//! Tolerance-window accuracy, event-timing MAE, and the end-to-end
//! evaluation runners (ablation over input subsets, cross-group protocols).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{build_dataset, normalize, SplitSpec, WindowedDataset};
use crate::error::Error;
use crate::events::{EventKind, EventList, Side};
use crate::neuralnet::{predict, train, TrainConfig};
use crate::postprocess::{validate, PulseRules, RawOutput};
use crate::signal::{Channel, Group, Recording};
use crate::zoo::{build, ArchitectureId, ZooConfig};
use crate::Result;

/// Tolerance windows in timesteps, ±1..±6 by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub windows_ts: Vec<usize>,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            windows_ts: (1..=6).collect(),
        }
    }
}

impl ToleranceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.windows_ts.is_empty()
            || self.windows_ts.iter().any(|&w| w == 0)
            || self.windows_ts.windows(2).any(|p| p[0] >= p[1])
        {
            return Err(Error::config(
                "tolerance windows must be positive and strictly ascending",
            ));
        }
        Ok(())
    }
}

/// Accuracy figures for one tolerance window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAccuracy {
    pub window_ts: usize,
    pub overall_pct: f64,
    pub hs_pct: f64,
    pub to_pct: f64,
    pub right_pct: f64,
    pub left_pct: f64,
    pub matched: usize,
    /// Predictions left unmatched at this window (not a paper metric).
    pub spurious: usize,
}

/// Timing error of matched events, in timesteps and milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub match_window_ts: usize,
    pub sample_rate_hz: f64,
    pub overall_ts: f64,
    pub overall_ms: f64,
    pub hs_ts: f64,
    pub hs_ms: f64,
    pub to_ts: f64,
    pub to_ms: f64,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// e.g. "HS-HS", "HS-P", "Mixed-Mixed", or a free-form tag.
    pub protocol: String,
    pub truth_events: usize,
    pub predicted_events: usize,
    pub accuracy: Vec<WindowAccuracy>,
    pub mae: Option<MaeReport>,
}

/// Greedy nearest-first one-to-one matching between events of the same
/// (kind, side) within `window_ts`. Returns (pred index, truth index) pairs.
pub fn match_events(
    pred: &EventList,
    truth: &EventList,
    window_ts: usize,
) -> Vec<(usize, usize)> {
    let pred_ev = pred.events();
    let truth_ev = truth.events();
    // candidate pairs ordered by distance, ties broken deterministically
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (pi, p) in pred_ev.iter().enumerate() {
        for (ti, t) in truth_ev.iter().enumerate() {
            if p.kind == t.kind && p.side == t.side {
                let d = p.t.abs_diff(t.t);
                if d <= window_ts {
                    candidates.push((d, ti, pi));
                }
            }
        }
    }
    candidates.sort_unstable();
    let mut used_pred = vec![false; pred_ev.len()];
    let mut used_truth = vec![false; truth_ev.len()];
    let mut matches = Vec::new();
    for (_, ti, pi) in candidates {
        if !used_pred[pi] && !used_truth[ti] {
            used_pred[pi] = true;
            used_truth[ti] = true;
            matches.push((pi, ti));
        }
    }
    matches.sort_unstable();
    matches
}

fn count_subset(events: &EventList, kind: Option<EventKind>, side: Option<Side>) -> usize {
    events
        .events()
        .iter()
        .filter(|e| kind.map_or(true, |k| e.kind == k) && side.map_or(true, |s| e.side == s))
        .count()
}

fn pct(matched: usize, total: usize) -> f64 {
    if total == 0 {
        100.0
    } else {
        matched as f64 / total as f64 * 100.0
    }
}

/// Tolerance-window accuracy over one or more (pred, truth) recording pairs;
/// counts are summed across recordings before percentages are taken.
pub fn accuracy_many(
    pairs: &[(EventList, EventList)],
    spec: &ToleranceSpec,
) -> Result<Vec<WindowAccuracy>> {
    spec.validate()?;
    let total_truth: usize = pairs.iter().map(|(_, t)| t.len()).sum();
    if total_truth == 0 {
        return Err(Error::data("accuracy needs a non-empty truth event list"));
    }
    let total_pred: usize = pairs.iter().map(|(p, _)| p.len()).sum();
    let mut out = Vec::with_capacity(spec.windows_ts.len());
    for &w in &spec.windows_ts {
        let mut matched = 0usize;
        let mut by_kind = [0usize; 2];
        let mut by_side = [0usize; 2];
        for (pred, truth) in pairs {
            for (pi, _) in match_events(pred, truth, w) {
                matched += 1;
                let e = &pred.events()[pi];
                by_kind[(e.kind == EventKind::To) as usize] += 1;
                by_side[(e.side == Side::L) as usize] += 1;
            }
        }
        let totals = |kind: Option<EventKind>, side: Option<Side>| -> usize {
            pairs.iter().map(|(_, t)| count_subset(t, kind, side)).sum()
        };
        out.push(WindowAccuracy {
            window_ts: w,
            overall_pct: pct(matched, total_truth),
            hs_pct: pct(by_kind[0], totals(Some(EventKind::Hs), None)),
            to_pct: pct(by_kind[1], totals(Some(EventKind::To), None)),
            right_pct: pct(by_side[0], totals(None, Some(Side::R))),
            left_pct: pct(by_side[1], totals(None, Some(Side::L))),
            matched,
            spurious: total_pred - matched,
        });
    }
    Ok(out)
}

pub fn accuracy(
    pred: &EventList,
    truth: &EventList,
    spec: &ToleranceSpec,
) -> Result<Vec<WindowAccuracy>> {
    accuracy_many(&[(pred.clone(), truth.clone())], spec)
}

/// MAE of matched event times across recording pairs.
pub fn event_mae_many(
    pairs: &[(EventList, EventList)],
    match_window_ts: usize,
    sample_rate_hz: f64,
) -> Result<MaeReport> {
    let mut errs: Vec<(EventKind, f64)> = Vec::new();
    for (pred, truth) in pairs {
        for (pi, ti) in match_events(pred, truth, match_window_ts) {
            let p = &pred.events()[pi];
            let t = &truth.events()[ti];
            errs.push((p.kind, p.t.abs_diff(t.t) as f64));
        }
    }
    if errs.is_empty() {
        return Err(Error::data("no events matched; cannot compute MAE"));
    }
    let ms = 1000.0 / sample_rate_hz;
    let mean = |filter: Option<EventKind>| -> f64 {
        let vals: Vec<f64> = errs
            .iter()
            .filter(|(k, _)| filter.map_or(true, |f| *k == f))
            .map(|(_, d)| *d)
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let (overall, hs, to) = (mean(None), mean(Some(EventKind::Hs)), mean(Some(EventKind::To)));
    Ok(MaeReport {
        match_window_ts,
        sample_rate_hz,
        overall_ts: overall,
        overall_ms: overall * ms,
        hs_ts: hs,
        hs_ms: hs * ms,
        to_ts: to,
        to_ms: to * ms,
        matched: errs.len(),
    })
}

pub fn event_mae(
    pred: &EventList,
    truth: &EventList,
    match_window_ts: usize,
    sample_rate_hz: f64,
) -> Result<MaeReport> {
    event_mae_many(
        &[(pred.clone(), truth.clone())],
        match_window_ts,
        sample_rate_hz,
    )
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

/// Trim trailing zeros from a 3-decimal rendering (6.239 stays, 5.240
/// becomes 5.24).
fn fmt_trim3(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// One accuracy table row: model name followed by the overall percentage at
/// each tolerance window, two decimals.
pub fn accuracy_row(name: &str, acc: &[WindowAccuracy]) -> String {
    let mut cols = vec![name.to_string()];
    cols.extend(acc.iter().map(|a| fmt2(a.overall_pct)));
    cols.join(",")
}

/// CSV accuracy table across models (one row per model).
pub fn accuracy_table_csv(rows: &[(String, Vec<WindowAccuracy>)]) -> String {
    let mut out = String::from("Model");
    if let Some((_, first)) = rows.first() {
        for a in first {
            out.push_str(&format!(",\u{b1}{}TS", a.window_ts));
        }
    }
    out.push('\n');
    for (name, acc) in rows {
        out.push_str(&accuracy_row(name, acc));
        out.push('\n');
    }
    out
}

/// CSV MAE summary in the per-kind layout (both units).
pub fn mae_csv(mae: &MaeReport) -> String {
    let mut out = String::from("Event,MAE (ts),MAE (ms)\n");
    for (label, ts, ms) in [
        ("HS", mae.hs_ts, mae.hs_ms),
        ("TO", mae.to_ts, mae.to_ms),
        ("All", mae.overall_ts, mae.overall_ms),
    ] {
        out.push_str(&format!("{label},{},{}\n", fmt_trim3(ts), fmt_trim3(ms)));
    }
    out
}

/// One cross-group protocol table row: train group, test group, then overall
/// accuracy per window.
pub fn protocol_row(report: &EvalReport) -> String {
    let (train, test) = report
        .protocol
        .split_once('-')
        .unwrap_or((report.protocol.as_str(), ""));
    let mut cols = vec![train.to_string(), test.to_string()];
    cols.extend(report.accuracy.iter().map(|a| fmt2(a.overall_pct)));
    cols.join(",")
}

/// Everything needed to run train → predict → postprocess → evaluate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub architecture: ArchitectureId,
    pub channels: Vec<Channel>,
    pub window: usize,
    pub zoo: ZooConfig,
    pub train: TrainConfig,
    pub rules: PulseRules,
    pub tolerance: ToleranceSpec,
}

impl PipelineConfig {
    pub fn new(architecture: ArchitectureId) -> PipelineConfig {
        PipelineConfig {
            architecture,
            channels: Channel::PELVIS.to_vec(),
            window: crate::dataset::DEFAULT_WINDOW,
            zoo: ZooConfig::default(),
            train: TrainConfig::default(),
            rules: PulseRules::default(),
            tolerance: ToleranceSpec::default(),
        }
    }
}

/// Raw (right, left) phase predictions for one recording, given a trained
/// model. The first `w` timesteps have no prediction; they repeat the first
/// predicted phase value so the series spans the whole recording.
pub fn predict_recording_raw(
    model: &mut crate::neuralnet::Sequential,
    rec: &Recording,
    cfg: &PipelineConfig,
    stats: &crate::dataset::NormStats,
) -> Result<RawOutput> {
    let mut ds = WindowedDataset {
        channels: cfg.channels.clone(),
        w: cfg.window,
        pairs: crate::dataset::make_windows(rec, &cfg.channels, cfg.window)?,
        norm: None,
        source_n: rec.len(),
    };
    if ds.pairs.is_empty() {
        return Err(Error::data("recording too short for the model window"));
    }
    normalize(&mut ds, Some(stats))?;
    let outputs = predict(model, &ds.inputs())?;
    let n = rec.len();
    let mut right = vec![outputs[0][0]; n];
    let mut left = vec![outputs[0][1]; n];
    for (p, out) in ds.pairs.iter().zip(&outputs) {
        right[p.t] = out[0];
        left[p.t] = out[1];
    }
    Ok(RawOutput { right, left })
}

/// Post-processed event predictions for one test recording.
pub fn predict_recording_events(
    model: &mut crate::neuralnet::Sequential,
    rec: &Recording,
    cfg: &PipelineConfig,
    stats: &crate::dataset::NormStats,
) -> Result<EventList> {
    let raw = predict_recording_raw(model, rec, cfg, stats)?;
    let phases = validate(&raw, &cfg.rules)?;
    crate::postprocess::to_events(&phases)
}

/// Train on `train_recs` (validating on `val_recs`), then evaluate event
/// detection on `test_recs`. Recordings must be filtered and carry
/// groundtruth events.
pub fn run_pipeline(
    train_recs: &[Recording],
    val_recs: &[Recording],
    test_recs: &[Recording],
    cfg: &PipelineConfig,
    protocol: &str,
) -> Result<EvalReport> {
    if test_recs.is_empty() {
        return Err(Error::data("no test recordings"));
    }
    let mut train_ds = build_dataset(train_recs, &cfg.channels, cfg.window)?;
    let stats = normalize(&mut train_ds, None)?;
    let mut val_ds = build_dataset(val_recs, &cfg.channels, cfg.window)?;
    if !val_ds.pairs.is_empty() {
        normalize(&mut val_ds, Some(&stats))?;
    }
    let mut model = build(
        cfg.architecture,
        cfg.channels.len(),
        cfg.window,
        &cfg.zoo,
        cfg.train.seed,
    )?;
    train(
        &mut model,
        &train_ds.training_pairs(),
        &val_ds.training_pairs(),
        &cfg.train,
    )?;
    evaluate_model(&mut model, test_recs, cfg, &stats, protocol)
}

/// Evaluate an already-trained model on test recordings.
pub fn evaluate_model(
    model: &mut crate::neuralnet::Sequential,
    test_recs: &[Recording],
    cfg: &PipelineConfig,
    stats: &crate::dataset::NormStats,
    protocol: &str,
) -> Result<EvalReport> {
    let mut pairs: Vec<(EventList, EventList)> = Vec::new();
    for rec in test_recs {
        let truth = rec
            .truth_events
            .clone()
            .ok_or_else(|| Error::data("test recording has no groundtruth events"))?;
        let pred = predict_recording_events(model, rec, cfg, stats)?;
        pairs.push((pred, truth));
    }
    let acc = accuracy_many(&pairs, &cfg.tolerance)?;
    let max_window = *cfg.tolerance.windows_ts.last().unwrap();
    let mae = event_mae_many(&pairs, max_window, test_recs[0].sample_rate_hz()).ok();
    Ok(EvalReport {
        protocol: protocol.to_string(),
        truth_events: pairs.iter().map(|(_, t)| t.len()).sum(),
        predicted_events: pairs.iter().map(|(p, _)| p.len()).sum(),
        accuracy: acc,
        mae,
    })
}

/// One ablation row: the channel subset and its evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: Vec<Channel>,
    pub label: String,
    pub report: EvalReport,
}

pub fn subset_label(subset: &[Channel]) -> String {
    let tags: Vec<&str> = subset.iter().map(|c| c.tag()).collect();
    format!("[{}]", tags.join(", "))
}

/// Full pipeline run per channel subset, fixed seed, rows in input order.
pub fn run_ablation(
    train_recs: &[Recording],
    val_recs: &[Recording],
    test_recs: &[Recording],
    subsets: &[Vec<Channel>],
    base: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(subsets.len());
    for subset in subsets {
        if subset.is_empty() {
            return Err(Error::config("ablation subset is empty"));
        }
        let unique: BTreeSet<_> = subset.iter().collect();
        if unique.len() != subset.len() {
            return Err(Error::config(format!(
                "duplicate channels in ablation subset {}",
                subset_label(subset)
            )));
        }
        if subset.iter().any(|c| !Channel::PELVIS.contains(c)) {
            return Err(Error::config(format!(
                "ablation subset {} contains a non-pelvis channel",
                subset_label(subset)
            )));
        }
        let mut cfg = base.clone();
        cfg.channels = subset.clone();
        let label = subset_label(subset);
        let report = run_pipeline(train_recs, val_recs, test_recs, &cfg, &label)?;
        rows.push(AblationRow {
            subset: subset.clone(),
            label,
            report,
        });
    }
    Ok(rows)
}

/// Which subjects a protocol leg draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupSel {
    Healthy,
    Patient,
    Mixed,
}

impl GroupSel {
    pub fn tag(&self) -> &'static str {
        match self {
            GroupSel::Healthy => "HS",
            GroupSel::Patient => "P",
            GroupSel::Mixed => "Mixed",
        }
    }

    fn admits(&self, g: Group) -> bool {
        match self {
            GroupSel::Healthy => g == Group::Healthy,
            GroupSel::Patient => g == Group::Patient,
            GroupSel::Mixed => true,
        }
    }
}

impl std::str::FromStr for GroupSel {
    type Err = Error;

    fn from_str(s: &str) -> Result<GroupSel> {
        match s.to_ascii_lowercase().as_str() {
            "hs" | "healthy" => Ok(GroupSel::Healthy),
            "p" | "patient" => Ok(GroupSel::Patient),
            "mixed" | "both" => Ok(GroupSel::Mixed),
            _ => Err(Error::config(format!(
                "unknown group {s:?}; expected healthy, patient, or mixed"
            ))),
        }
    }
}

/// Cross-group protocol: train on `train_group` subjects, test on
/// `test_group` subjects, always subject-disjoint. When the two groups
/// overlap (same group, or mixed), the cohort is split subject-wise; when
/// they are disjoint the training group is split into train/val only and the
/// whole test group is evaluated.
pub fn run_protocol(
    cohort: &[Recording],
    train_group: GroupSel,
    test_group: GroupSel,
    split_spec: &SplitSpec,
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    let tag = format!("{}-{}", train_group.tag(), test_group.tag());
    let train_pool: Vec<Recording> = cohort
        .iter()
        .filter(|r| train_group.admits(r.group))
        .cloned()
        .collect();
    let test_pool: Vec<Recording> = cohort
        .iter()
        .filter(|r| test_group.admits(r.group))
        .cloned()
        .collect();
    if train_pool.is_empty() || test_pool.is_empty() {
        return Err(Error::data(format!(
            "protocol {tag}: no recordings for one of the groups"
        )));
    }
    let train_subjects: BTreeSet<&str> =
        train_pool.iter().map(|r| r.subject_id.as_str()).collect();
    let test_subjects: BTreeSet<&str> = test_pool.iter().map(|r| r.subject_id.as_str()).collect();
    if train_subjects.is_disjoint(&test_subjects) {
        // e.g. HS -> P: carve a validation set out of the training group only
        let spec = SplitSpec {
            fractions: (0.85, 0.149, 0.001),
            seed: split_spec.seed,
        };
        let (tr, va, rest) = crate::dataset::split(&train_pool, &spec)?;
        let mut tr = tr;
        tr.extend(rest);
        run_pipeline(&tr, &va, &test_pool, cfg, &tag)
    } else {
        let (tr, va, te) = crate::dataset::split(&train_pool, split_spec)?;
        // evaluate only test-partition subjects that the test group admits
        let te: Vec<Recording> = te
            .into_iter()
            .filter(|r| test_group.admits(r.group))
            .collect();
        if te.is_empty() {
            return Err(Error::data(format!(
                "protocol {tag}: test partition has no admissible subjects"
            )));
        }
        run_pipeline(&tr, &va, &te, cfg, &tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::GaitEvent;

    fn ev(side: Side, kind: EventKind, t: usize) -> GaitEvent {
        GaitEvent { side, kind, t }
    }

    fn simple_truth() -> EventList {
        EventList::new(vec![
            ev(Side::R, EventKind::Hs, 50),
            ev(Side::R, EventKind::To, 110),
            ev(Side::R, EventKind::Hs, 160),
            ev(Side::R, EventKind::To, 220),
            ev(Side::L, EventKind::Hs, 105),
            ev(Side::L, EventKind::To, 165),
        ])
        .unwrap()
    }

    #[test]
    fn match_window_edge_cases() {
        let truth = EventList::new(vec![ev(Side::R, EventKind::Hs, 50)]).unwrap();
        let pred = EventList::new(vec![ev(Side::R, EventKind::Hs, 52)]).unwrap();
        assert_eq!(match_events(&pred, &truth, 2).len(), 1);
        assert_eq!(match_events(&pred, &truth, 1).len(), 0);
    }

    #[test]
    fn matching_is_one_to_one() {
        let truth = EventList::new(vec![ev(Side::R, EventKind::Hs, 50)]).unwrap();
        let pred = EventList::new(vec![
            ev(Side::R, EventKind::Hs, 49),
            ev(Side::R, EventKind::To, 51),
        ])
        .unwrap();
        // the TO prediction can never match an HS truth event
        assert_eq!(match_events(&pred, &truth, 1).len(), 1);
        let pred2 = EventList::new(vec![
            ev(Side::R, EventKind::Hs, 49),
            ev(Side::R, EventKind::To, 50),
            ev(Side::R, EventKind::Hs, 51),
        ])
        .unwrap();
        assert_eq!(match_events(&pred2, &truth, 1).len(), 1);
    }

    #[test]
    fn match_count_symmetric() {
        let a = simple_truth();
        let b = EventList::new(vec![
            ev(Side::R, EventKind::Hs, 52),
            ev(Side::R, EventKind::To, 109),
            ev(Side::L, EventKind::Hs, 101),
        ])
        .unwrap();
        for w in 1..8 {
            assert_eq!(
                match_events(&a, &b, w).len(),
                match_events(&b, &a, w).len(),
                "window {w}"
            );
        }
    }

    #[test]
    fn identity_scores_100_everywhere() {
        let truth = simple_truth();
        let acc = accuracy(&truth, &truth, &ToleranceSpec::default()).unwrap();
        for a in &acc {
            assert_eq!(a.overall_pct, 100.0);
            assert_eq!(a.hs_pct, 100.0);
            assert_eq!(a.to_pct, 100.0);
            assert_eq!(a.spurious, 0);
        }
    }

    #[test]
    fn shifted_predictions_score_zero() {
        let truth = simple_truth();
        let shifted = EventList::new(
            truth
                .events()
                .iter()
                .map(|e| ev(e.side, e.kind, e.t + 10))
                .collect(),
        )
        .unwrap();
        let acc = accuracy(&shifted, &truth, &ToleranceSpec::default()).unwrap();
        assert!(acc.iter().all(|a| a.overall_pct == 0.0));
    }

    #[test]
    fn accuracy_nondecreasing_in_window() {
        let truth = simple_truth();
        let pred = EventList::new(vec![
            ev(Side::R, EventKind::Hs, 53),
            ev(Side::R, EventKind::To, 112),
            ev(Side::R, EventKind::Hs, 166),
            ev(Side::L, EventKind::Hs, 104),
            ev(Side::L, EventKind::To, 170),
        ])
        .unwrap();
        let acc = accuracy(&pred, &truth, &ToleranceSpec::default()).unwrap();
        for w in acc.windows(2) {
            assert!(w[1].overall_pct >= w[0].overall_pct);
            assert!(w[1].hs_pct >= w[0].hs_pct);
            assert!(w[1].to_pct >= w[0].to_pct);
        }
    }

    #[test]
    fn huge_window_accuracy_is_coverage_ratio() {
        let truth = simple_truth(); // 4 R events, 2 L events
        let pred = EventList::new(vec![
            ev(Side::R, EventKind::Hs, 58),
            ev(Side::R, EventKind::To, 119),
        ])
        .unwrap();
        let spec = ToleranceSpec {
            windows_ts: vec![100_000],
        };
        let acc = accuracy(&pred, &truth, &spec).unwrap();
        assert!((acc[0].overall_pct - 2.0 / 6.0 * 100.0).abs() < 1e-12);
    }

    #[test]
    fn empty_truth_errors() {
        let pred = simple_truth();
        let empty = EventList::empty();
        assert!(accuracy(&pred, &empty, &ToleranceSpec::default()).is_err());
    }

    #[test]
    fn mae_arithmetic() {
        let truth = EventList::new(vec![
            ev(Side::R, EventKind::Hs, 50),
            ev(Side::R, EventKind::To, 110),
            ev(Side::R, EventKind::Hs, 160),
        ])
        .unwrap();
        let pred = EventList::new(vec![
            ev(Side::R, EventKind::Hs, 51),
            ev(Side::R, EventKind::To, 109),
            ev(Side::R, EventKind::Hs, 162),
        ])
        .unwrap();
        let mae = event_mae(&pred, &truth, 6, 100.0).unwrap();
        assert!((mae.overall_ts - 4.0 / 3.0).abs() < 1e-12);
        assert!((mae.overall_ms - 13.333333333333334).abs() < 1e-9);
        assert_eq!(mae.matched, 3);

        let exact = event_mae(&truth, &truth, 6, 100.0).unwrap();
        assert_eq!(exact.overall_ts, 0.0);
    }

    #[test]
    fn mae_requires_matches() {
        let truth = EventList::new(vec![ev(Side::R, EventKind::Hs, 50)]).unwrap();
        let pred = EventList::new(vec![ev(Side::R, EventKind::Hs, 500)]).unwrap();
        assert!(event_mae(&pred, &truth, 6, 100.0).is_err());
    }

    #[test]
    fn table_row_formatting() {
        // Table II layout fixture (values from the published CNN-BiGRU-Att row)
        let acc: Vec<WindowAccuracy> = [93.89, 98.26, 99.18, 99.48, 99.62, 99.73]
            .iter()
            .enumerate()
            .map(|(i, &p)| WindowAccuracy {
                window_ts: i + 1,
                overall_pct: p,
                hs_pct: p,
                to_pct: p,
                right_pct: p,
                left_pct: p,
                matched: 0,
                spurious: 0,
            })
            .collect();
        assert_eq!(
            accuracy_row("CNN-BiGRU-Att", &acc),
            "CNN-BiGRU-Att,93.89,98.26,99.18,99.48,99.62,99.73"
        );
        let csv = accuracy_table_csv(&[("CNN-BiGRU-Att".to_string(), acc)]);
        assert!(csv.starts_with("Model,\u{b1}1TS,\u{b1}2TS"));
    }

    #[test]
    fn mae_csv_formatting() {
        // layout fixture for the published per-kind MAE values
        let mae = MaeReport {
            match_window_ts: 6,
            sample_rate_hz: 1000.0,
            overall_ts: 5.77,
            overall_ms: 5.77,
            hs_ts: 6.239,
            hs_ms: 6.239,
            to_ts: 5.24,
            to_ms: 5.24,
            matched: 100,
        };
        let csv = mae_csv(&mae);
        assert!(csv.contains("HS,6.239,6.239"));
        assert!(csv.contains("TO,5.24,5.24"));
        assert!(csv.contains("All,5.77,5.77"));
    }

    #[test]
    fn protocol_row_formatting() {
        // Table IV layout fixture (published HS->P row starts 63.10)
        let report = EvalReport {
            protocol: "HS-P".into(),
            truth_events: 0,
            predicted_events: 0,
            accuracy: vec![WindowAccuracy {
                window_ts: 1,
                overall_pct: 63.10,
                hs_pct: 0.0,
                to_pct: 0.0,
                right_pct: 0.0,
                left_pct: 0.0,
                matched: 0,
                spurious: 0,
            }],
            mae: None,
        };
        assert_eq!(protocol_row(&report), "HS,P,63.10");
    }

    #[test]
    fn ablation_rejects_bad_subsets() {
        let base = PipelineConfig::new(ArchitectureId::Mlp);
        let err = run_ablation(&[], &[], &[], &[vec![]], &base).unwrap_err();
        assert!(err.to_string().contains("empty"));
        let err = run_ablation(
            &[],
            &[],
            &[],
            &[vec![Channel::Ap, Channel::Ap]],
            &base,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let err = run_ablation(
            &[],
            &[],
            &[],
            &[vec![Channel::FootSagL]],
            &base,
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-pelvis"));
    }

    #[test]
    fn subset_labels_match_table_layout() {
        assert_eq!(subset_label(&[Channel::Ml]), "[ML]");
        assert_eq!(
            subset_label(&[Channel::Ap, Channel::Ml, Channel::V, Channel::Rot]),
            "[AP, ML, V, ROT]"
        );
    }
}
