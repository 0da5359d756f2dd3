//! Groundtruth gait-event extraction and stance/swing phase encoding.
//!
//! Toe-off events sit at inverted high-amplitude peaks of the foot sagittal
//! angular velocity; heel-strike events sit at the zero-crossing immediately
//! before an inverted low-amplitude peak. The two peak magnitude levels are
//! separated with a two-means split per recording so thresholds adapt to
//! subject amplitude variation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::signal::Series;
use crate::Result;

/// Heel-strike or toe-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "HS")]
    Hs,
    #[serde(rename = "TO")]
    To,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Hs => f.write_str("HS"),
            EventKind::To => f.write_str("TO"),
        }
    }
}

/// Left or right foot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::L => f.write_str("L"),
            Side::R => f.write_str("R"),
        }
    }
}

/// One gait event at an integer timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GaitEvent {
    pub side: Side,
    pub kind: EventKind,
    pub t: usize,
}

/// Events sorted by (t, side, kind); per side the kinds strictly alternate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GaitEvent>", into = "Vec<GaitEvent>")]
pub struct EventList {
    events: Vec<GaitEvent>,
}

impl TryFrom<Vec<GaitEvent>> for EventList {
    type Error = Error;
    fn try_from(events: Vec<GaitEvent>) -> Result<Self> {
        EventList::new(events)
    }
}

impl From<EventList> for Vec<GaitEvent> {
    fn from(list: EventList) -> Vec<GaitEvent> {
        list.events
    }
}

impl EventList {
    /// Validates sorting, uniqueness, and per-side alternation.
    pub fn new(mut events: Vec<GaitEvent>) -> Result<EventList> {
        events.sort_by_key(|e| (e.t, e.side, e.kind));
        for w in events.windows(2) {
            if w[0].side == w[1].side && w[0].kind == w[1].kind && w[0].t == w[1].t {
                return Err(Error::Extraction(format!(
                    "duplicate event {} {} at t={}",
                    w[0].side, w[0].kind, w[0].t
                )));
            }
        }
        for side in [Side::L, Side::R] {
            let mut last: Option<&GaitEvent> = None;
            for e in events.iter().filter(|e| e.side == side) {
                if let Some(prev) = last {
                    if prev.kind == e.kind {
                        return Err(Error::Extraction(format!(
                            "alternation violated on side {side}: {} at t={} follows {} at t={}",
                            e.kind, e.t, prev.kind, prev.t
                        )));
                    }
                }
                last = Some(e);
            }
        }
        Ok(EventList { events })
    }

    pub fn empty() -> EventList {
        EventList { events: Vec::new() }
    }

    pub fn events(&self) -> &[GaitEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn side(&self, side: Side) -> Vec<GaitEvent> {
        self.events.iter().filter(|e| e.side == side).copied().collect()
    }

    /// Merge two lists (e.g. the two feet) into one.
    pub fn merge(&self, other: &EventList) -> Result<EventList> {
        let mut all = self.events.clone();
        all.extend_from_slice(&other.events);
        EventList::new(all)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.events)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<EventList> {
        let text = std::fs::read_to_string(path)?;
        EventList::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<EventList> {
        let events: Vec<GaitEvent> = serde_json::from_str(text)?;
        EventList::new(events)
    }
}

/// Stance(+1) / swing(-1) phase signals for the right and left foot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePair {
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

impl PhasePair {
    pub fn len(&self) -> usize {
        self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.right.is_empty()
    }
}

/// Thresholds for groundtruth event detection, relative to the signal's
/// standard deviation so detection is scale invariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Candidate floor for toe-off peaks, as a fraction of the signal std.
    pub to_peak_frac: f64,
    /// Candidate floor for any inverted peak, as a fraction of the signal std.
    pub hs_peak_frac: f64,
    /// Minimum spacing between distinct peaks, in timesteps.
    pub min_event_gap_ts: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            to_peak_frac: 1.5,
            hs_peak_frac: 0.5,
            min_event_gap_ts: 25,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.to_peak_frac <= 0.0 || self.hs_peak_frac <= 0.0 || self.min_event_gap_ts == 0 {
            return Err(Error::config("detector params must be positive"));
        }
        Ok(())
    }
}

/// Detection result: the events plus warnings for skipped or ambiguous spots.
#[derive(Debug, Clone)]
pub struct Detection {
    pub events: EventList,
    pub warnings: Vec<String>,
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Local minima below zero with magnitude at least `floor`.
fn inverted_peaks(values: &[f64], floor: f64) -> Vec<usize> {
    let mut peaks = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        if values[i] < 0.0
            && -values[i] >= floor
            && values[i] < values[i - 1]
            && values[i] <= values[i + 1]
        {
            peaks.push(i);
        }
    }
    peaks
}

/// Keep the deepest peak among any group closer than `gap`.
fn suppress_close_peaks(values: &[f64], peaks: &[usize], gap: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &p in peaks {
        match kept.last() {
            Some(&last) if p - last < gap => {
                if values[p] < values[last] {
                    *kept.last_mut().unwrap() = p;
                }
            }
            _ => kept.push(p),
        }
    }
    kept
}

/// Two-means split of peak magnitudes. Returns (high_indices, low_indices)
/// into `peaks`. If the split degenerates the peaks land on one side chosen
/// by the centroid against `to_floor`.
fn split_by_magnitude(
    values: &[f64],
    peaks: &[usize],
    to_floor: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mags: Vec<f64> = peaks.iter().map(|&p| -values[p]).collect();
    if mags.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = mags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo) < 1e-12 {
        // single magnitude level
        return if hi >= to_floor {
            (peaks.to_vec(), Vec::new())
        } else {
            (Vec::new(), peaks.to_vec())
        };
    }
    for _ in 0..50 {
        let mid = (lo + hi) / 2.0;
        let (mut slo, mut nlo, mut shi, mut nhi) = (0.0, 0usize, 0.0, 0usize);
        for &m in &mags {
            if m < mid {
                slo += m;
                nlo += 1;
            } else {
                shi += m;
                nhi += 1;
            }
        }
        if nlo == 0 || nhi == 0 {
            break;
        }
        let (new_lo, new_hi) = (slo / nlo as f64, shi / nhi as f64);
        if (new_lo - lo).abs() < 1e-12 && (new_hi - hi).abs() < 1e-12 {
            break;
        }
        lo = new_lo;
        hi = new_hi;
    }
    let mid = (lo + hi) / 2.0;
    let mut high = Vec::new();
    let mut low = Vec::new();
    for (&p, &m) in peaks.iter().zip(&mags) {
        if m >= mid {
            high.push(p);
        } else {
            low.push(p);
        }
    }
    (high, low)
}

/// Index of the last sign change at or before `end`, searching back to
/// `start`. Exact zeros take the sign of the following sample.
fn last_sign_change_before(values: &[f64], start: usize, end: usize) -> Option<usize> {
    let sign_at = |i: usize| -> f64 {
        let mut j = i;
        while j < values.len() && values[j] == 0.0 {
            j += 1;
        }
        if j < values.len() {
            values[j].signum()
        } else {
            0.0
        }
    };
    let mut i = end;
    while i > start {
        let s_prev = sign_at(i - 1);
        let s_cur = sign_at(i);
        if s_prev != 0.0 && s_cur != 0.0 && s_prev != s_cur {
            return Some(i);
        }
        i -= 1;
    }
    None
}

/// Detect HS/TO events for one foot from its sagittal angular velocity.
///
/// Toe-offs are the high-magnitude inverted peaks; between consecutive
/// toe-offs the deepest low-magnitude inverted peak marks the heel strike,
/// placed at the last zero-crossing before that peak.
pub fn detect_events(foot_sagittal: &Series, side: Side, params: &DetectorParams) -> Result<Detection> {
    params.validate()?;
    let v = &foot_sagittal.values;
    let sigma = std_dev(v);
    let mut warnings = Vec::new();

    if sigma < 1e-12 {
        warnings.push("no peaks found: signal is constant".to_string());
        return Ok(Detection {
            events: EventList::empty(),
            warnings,
        });
    }

    let candidates = inverted_peaks(v, params.hs_peak_frac * sigma);
    let candidates = suppress_close_peaks(v, &candidates, params.min_event_gap_ts);
    if candidates.is_empty() {
        warnings.push("no peaks found".to_string());
        return Ok(Detection {
            events: EventList::empty(),
            warnings,
        });
    }

    let (to_peaks, low_peaks) = split_by_magnitude(v, &candidates, params.to_peak_frac * sigma);
    if to_peaks.is_empty() {
        warnings.push("no toe-off peaks found".to_string());
        return Ok(Detection {
            events: EventList::empty(),
            warnings,
        });
    }

    let mut events: Vec<GaitEvent> = Vec::new();
    // One HS per inter-TO segment: search (prev_to, to) for the deepest low
    // peak, then take the last zero-crossing before it.
    let mut segments: Vec<(usize, usize)> = Vec::new();
    segments.push((0, to_peaks[0]));
    for w in to_peaks.windows(2) {
        segments.push((w[0], w[1]));
    }
    segments.push((*to_peaks.last().unwrap(), v.len()));

    for (lo, hi) in segments {
        let best = low_peaks
            .iter()
            .filter(|&&p| p > lo && p < hi)
            .min_by(|&&a, &&b| v[a].partial_cmp(&v[b]).unwrap());
        if let Some(&peak) = best {
            match last_sign_change_before(v, lo, peak) {
                Some(t) => events.push(GaitEvent {
                    side,
                    kind: EventKind::Hs,
                    t,
                }),
                None => warnings.push(format!(
                    "no zero-crossing before low peak at t={peak}; heel strike skipped"
                )),
            }
        }
    }
    for &p in &to_peaks {
        events.push(GaitEvent {
            side,
            kind: EventKind::To,
            t: p,
        });
    }

    // Enforce alternation: drop later duplicates of a kind, keeping the
    // stronger toe-off / earlier heel strike.
    events.sort_by_key(|e| (e.t, e.kind));
    let mut kept: Vec<GaitEvent> = Vec::new();
    for e in events {
        match kept.last() {
            Some(prev) if prev.kind == e.kind => {
                if e.kind == EventKind::To && v[e.t] < v[prev.t] {
                    warnings.push(format!("dropped weaker duplicate TO at t={}", prev.t));
                    *kept.last_mut().unwrap() = e;
                } else {
                    warnings.push(format!("dropped duplicate {} at t={}", e.kind, e.t));
                }
            }
            _ => kept.push(e),
        }
    }

    let events = EventList::new(kept)?;
    Ok(Detection { events, warnings })
}

/// Phase signal for one side's events: +1 from HS to TO, -1 from TO to HS.
/// Before the first event the phase implied by that event's kind is
/// extrapolated backwards.
pub fn phase_signal_side(events: &[GaitEvent], length: usize) -> Result<Vec<f64>> {
    if events.is_empty() {
        return Err(Error::data("cannot encode phase: empty event list"));
    }
    if let Some(e) = events.iter().find(|e| e.t >= length) {
        return Err(Error::data(format!(
            "event at t={} beyond signal length {length}",
            e.t
        )));
    }
    // HS starts stance (+1), so before an HS the foot is in swing (-1).
    let mut phase = match events[0].kind {
        EventKind::Hs => -1.0,
        EventKind::To => 1.0,
    };
    let mut out = vec![0.0; length];
    let mut idx = 0;
    for (t, slot) in out.iter_mut().enumerate() {
        while idx < events.len() && events[idx].t == t {
            phase = match events[idx].kind {
                EventKind::Hs => 1.0,
                EventKind::To => -1.0,
            };
            idx += 1;
        }
        *slot = phase;
    }
    Ok(out)
}

/// Encode both sides of an event list as stance/swing phase signals.
pub fn phase_signals(events: &EventList, length: usize) -> Result<PhasePair> {
    let right = phase_signal_side(&events.side(Side::R), length)?;
    let left = phase_signal_side(&events.side(Side::L), length)?;
    Ok(PhasePair { right, left })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(side: Side, kind: EventKind, t: usize) -> GaitEvent {
        GaitEvent { side, kind, t }
    }

    #[test]
    fn phase_encoding_basic() {
        let events = vec![ev(Side::R, EventKind::Hs, 10), ev(Side::R, EventKind::To, 70)];
        let out = phase_signal_side(&events, 100).unwrap();
        assert!(out[..10].iter().all(|&v| v == -1.0));
        assert!(out[10..70].iter().all(|&v| v == 1.0));
        assert!(out[70..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn phase_single_event_at_zero() {
        let events = vec![ev(Side::R, EventKind::Hs, 0)];
        let out = phase_signal_side(&events, 5).unwrap();
        assert_eq!(out, vec![1.0; 5]);
    }

    #[test]
    fn phase_empty_errors() {
        assert!(phase_signal_side(&[], 10).is_err());
    }

    #[test]
    fn event_list_rejects_broken_alternation() {
        let err = EventList::new(vec![
            ev(Side::R, EventKind::Hs, 10),
            ev(Side::R, EventKind::Hs, 50),
        ])
        .unwrap_err()
        .to_string();
        assert!(err.contains("t=50"), "{err}");
    }

    #[test]
    fn event_list_allows_per_side_interleave() {
        EventList::new(vec![
            ev(Side::R, EventKind::Hs, 10),
            ev(Side::L, EventKind::To, 20),
            ev(Side::L, EventKind::Hs, 60),
            ev(Side::R, EventKind::To, 70),
        ])
        .unwrap();
    }

    #[test]
    fn constant_signal_gives_empty_with_warning() {
        let s = Series::new(vec![0.0; 500], 100.0).unwrap();
        let d = detect_events(&s, Side::R, &DetectorParams::default()).unwrap();
        assert!(d.events.is_empty());
        assert!(!d.warnings.is_empty());
    }

    /// One synthetic cycle of foot gyro morphology: small dip after HS,
    /// deep dip at TO, positive swing hump ending at the next HS.
    fn toy_foot_cycle(out: &mut Vec<f64>, hs: usize, to: usize, next_hs: usize) {
        let delta = 6usize;
        while out.len() < next_hs {
            out.push(0.0);
        }
        for t in hs..(hs + 2 * delta).min(next_hs) {
            let x = (t - hs) as f64 / (2.0 * delta as f64);
            out[t] = -0.4 * (std::f64::consts::PI * x).sin();
        }
        let w_to = 8usize;
        for t in to.saturating_sub(w_to)..(to + w_to).min(next_hs) {
            let x = (t + w_to - to) as f64 / (2 * w_to) as f64;
            out[t] = -1.5 * (std::f64::consts::PI * x).sin();
        }
        let sw_start = to + w_to;
        for t in sw_start..next_hs {
            let x = (t - sw_start) as f64 / (next_hs - sw_start) as f64;
            out[t] = 1.0 * (std::f64::consts::PI * x).sin();
        }
    }

    fn toy_signal(cycles: usize) -> (Series, Vec<(usize, usize)>) {
        let period = 110;
        let mut v = Vec::new();
        let mut truth = Vec::new();
        // lead-in swing so the first heel strike has a preceding crossing
        for t in 0..20 {
            let x = t as f64 / 20.0;
            v.push(0.8 * (std::f64::consts::PI * x).sin());
        }
        for c in 0..cycles {
            let hs = 20 + c * period;
            let to = hs + 66;
            truth.push((hs, to));
            toy_foot_cycle(&mut v, hs, to, hs + period);
        }
        v.extend(std::iter::repeat(0.0).take(20));
        (Series::new(v, 100.0).unwrap(), truth)
    }

    #[test]
    fn detects_toy_cycles_exactly() {
        let (s, truth) = toy_signal(6);
        let d = detect_events(&s, Side::R, &DetectorParams::default()).unwrap();
        let hs: Vec<usize> = d
            .events
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Hs)
            .map(|e| e.t)
            .collect();
        let to: Vec<usize> = d
            .events
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::To)
            .map(|e| e.t)
            .collect();
        assert_eq!(to.len(), 6, "{:?}", d.warnings);
        for (i, (hs_t, to_t)) in truth.iter().enumerate() {
            assert!(to[i].abs_diff(*to_t) <= 1, "TO {i}: {} vs {}", to[i], to_t);
            assert!(hs[i].abs_diff(*hs_t) <= 1, "HS {i}: {} vs {}", hs[i], hs_t);
        }
    }

    #[test]
    fn detection_scale_invariant() {
        let (s, _) = toy_signal(6);
        let scaled = Series::new(s.values.iter().map(|v| v * 3.0).collect(), 100.0).unwrap();
        let d1 = detect_events(&s, Side::R, &DetectorParams::default()).unwrap();
        let d2 = detect_events(&scaled, Side::R, &DetectorParams::default()).unwrap();
        assert_eq!(d1.events, d2.events);
    }

    #[test]
    fn stance_precedes_swing_per_stride() {
        let (s, _) = toy_signal(6);
        let d = detect_events(&s, Side::R, &DetectorParams::default()).unwrap();
        let evs = d.events.side(Side::R);
        for w in evs.windows(2) {
            if w[0].kind == EventKind::Hs {
                assert_eq!(w[1].kind, EventKind::To);
                assert!(w[1].t > w[0].t);
            }
        }
    }

    #[test]
    fn json_roundtrip_deterministic_order() {
        let list = EventList::new(vec![
            ev(Side::L, EventKind::To, 20),
            ev(Side::R, EventKind::Hs, 10),
        ])
        .unwrap();
        let json = serde_json::to_string(&list.events().to_vec()).unwrap();
        let back = EventList::from_json_str(&json).unwrap();
        assert_eq!(list, back);
        assert_eq!(back.events()[0].t, 10);
    }
}
