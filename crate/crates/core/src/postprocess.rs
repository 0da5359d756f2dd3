//! Pulse-based cleanup of raw model outputs: zero-crossing extraction,
//! three-rule pulse validation, and conversion of the cleaned ±1 phase
//! signals into predicted gait events.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::events::{EventKind, EventList, GaitEvent, PhasePair, Side};
use crate::Result;

/// The three pulse-validation rules. Note the published defaults make the
/// mean rule (0.6) stricter than the max rule (0.5); both are checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRules {
    pub max_threshold: f64,
    pub mean_threshold: f64,
    pub min_width_ts: usize,
}

impl Default for PulseRules {
    fn default() -> Self {
        PulseRules {
            max_threshold: 0.5,
            mean_threshold: 0.6,
            min_width_ts: 3,
        }
    }
}

impl PulseRules {
    pub fn validate(&self) -> Result<()> {
        if self.max_threshold <= 0.0 || self.mean_threshold <= 0.0 {
            return Err(Error::config("pulse thresholds must be positive"));
        }
        Ok(())
    }
}

/// Continuous (right, left) model outputs for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOutput {
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

impl RawOutput {
    pub fn check_finite(&self) -> Result<()> {
        if self.right.iter().chain(&self.left).any(|v| !v.is_finite()) {
            return Err(Error::data("raw output contains non-finite values"));
        }
        Ok(())
    }
}

/// Per-sample sign with exact zeros attached to the following sample's sign.
/// A trailing all-zero run keeps sign 0.
fn forward_signs(series: &[f64]) -> Vec<i8> {
    let mut signs = vec![0i8; series.len()];
    let mut cur = 0i8;
    for (i, &v) in series.iter().enumerate().rev() {
        if v > 0.0 {
            cur = 1;
        } else if v < 0.0 {
            cur = -1;
        }
        signs[i] = cur;
    }
    signs
}

/// Indices i where the (forward-attached) sign differs from sample i-1.
pub fn extract_transitions(series: &[f64]) -> Vec<usize> {
    let signs = forward_signs(series);
    (1..series.len())
        .filter(|&i| signs[i] != signs[i - 1] && signs[i] != 0 && signs[i - 1] != 0)
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Pulse {
    start: usize,
    end: usize, // exclusive
    sign: i8,
}

fn pulses(series: &[f64]) -> Vec<Pulse> {
    let signs = forward_signs(series);
    let mut out: Vec<Pulse> = Vec::new();
    for (i, &s) in signs.iter().enumerate() {
        match out.last_mut() {
            Some(p) if p.sign == s => p.end = i + 1,
            _ => out.push(Pulse {
                start: i,
                end: i + 1,
                sign: s,
            }),
        }
    }
    out
}

fn pulse_is_valid(series: &[f64], p: &Pulse, rules: &PulseRules, boundary: bool) -> bool {
    if p.sign == 0 {
        return false;
    }
    let seg = &series[p.start..p.end];
    let width = p.end - p.start;
    if !boundary && width <= rules.min_width_ts {
        return false;
    }
    let mean = seg.iter().sum::<f64>() / width as f64;
    if p.sign > 0 {
        let max = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max > rules.max_threshold && mean > rules.mean_threshold
    } else {
        let min = seg.iter().cloned().fold(f64::INFINITY, f64::min);
        min < -rules.max_threshold && mean < -rules.mean_threshold
    }
}

/// Clean one output series to a ±1 phase signal: every inter-crossing pulse
/// must pass all three rules, rejected pulses are absorbed into the
/// preceding phase (leading rejects take the first valid phase). Pulses
/// truncated by the series edges are exempt from the width rule.
pub fn validate_side(series: &[f64], rules: &PulseRules) -> Result<Vec<f64>> {
    rules.validate()?;
    if series.len() < 2 {
        return Err(Error::data("output too short to post-process"));
    }
    let ps = pulses(series);
    let valid: Vec<bool> = ps
        .iter()
        .enumerate()
        .map(|(i, p)| pulse_is_valid(series, p, rules, i == 0 || i == ps.len() - 1))
        .collect();
    if !valid.iter().any(|&v| v) {
        return Err(Error::Extraction("no gait detected".into()));
    }
    let first_valid_sign = ps[valid.iter().position(|&v| v).unwrap()].sign as f64;
    let mut out = vec![0.0; series.len()];
    let mut phase = first_valid_sign;
    for (p, &ok) in ps.iter().zip(&valid) {
        if ok {
            phase = p.sign as f64;
        }
        out[p.start..p.end].iter_mut().for_each(|v| *v = phase);
    }
    Ok(out)
}

/// Clean both sides of a raw output into a valid ±1 phase pair.
pub fn validate(raw: &RawOutput, rules: &PulseRules) -> Result<PhasePair> {
    raw.check_finite()?;
    Ok(PhasePair {
        right: validate_side(&raw.right, rules)?,
        left: validate_side(&raw.left, rules)?,
    })
}

fn side_events(series: &[f64], side: Side) -> Vec<GaitEvent> {
    extract_transitions(series)
        .into_iter()
        .map(|t| GaitEvent {
            side,
            kind: if series[t] > 0.0 {
                EventKind::Hs
            } else {
                EventKind::To
            },
            t,
        })
        .collect()
}

/// -1→+1 transitions become HS, +1→-1 transitions become TO, per side.
pub fn to_events(phases: &PhasePair) -> Result<EventList> {
    let mut events = side_events(&phases.right, Side::R);
    events.extend(side_events(&phases.left, Side::L));
    EventList::new(events)
}
