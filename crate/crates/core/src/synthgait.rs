//! Parametric synthetic gait generator: pelvis channels as stride-phase-
//! locked harmonic mixtures and foot sagittal angular velocity with the
//! event-aligned lobe structure the detector expects, all with exactly known
//! HS/TO times.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::events::{EventKind, EventList, GaitEvent, Side};
use crate::signal::{Channel, Group, Recording, Series};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    /// Mean stride (full gait cycle) duration in seconds.
    pub stride_s: f64,
    /// Fraction of the stride each foot spends on the ground.
    pub stance_fraction: f64,
    /// Double-limb-support fraction: contralateral TO follows HS this far
    /// into the stride.
    pub dls_fraction: f64,
    /// Std of per-stride duration noise, in seconds.
    pub speed_jitter: f64,
    /// Std of additive white noise on every channel.
    pub amp_noise: f64,
    pub group: Group,
    pub seed: u64,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams {
            stride_s: 1.1,
            stance_fraction: 0.6,
            dls_fraction: 0.1,
            speed_jitter: 0.02,
            amp_noise: 0.02,
            group: Group::Healthy,
            seed: 0,
        }
    }
}

impl GaitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dls_fraction > 0.0
            && self.dls_fraction < self.stance_fraction
            && self.stance_fraction < 1.0)
        {
            return Err(Error::config(format!(
                "need 0 < dls_fraction ({}) < stance_fraction ({}) < 1",
                self.dls_fraction, self.stance_fraction
            )));
        }
        if self.stride_s <= 0.0 || self.speed_jitter < 0.0 || self.amp_noise < 0.0 {
            return Err(Error::config(
                "stride must be positive, jitter and noise non-negative",
            ));
        }
        Ok(())
    }
}

/// Per-channel harmonic recipe: (harmonic of the stride frequency,
/// amplitude, phase offset). ML and ROT are dominated by the first harmonic
/// (one period per full stride, hence left/right asymmetric); AP and V by
/// the second (one per step).
const PELVIS_HARMONICS: [(Channel, &[(f64, f64, f64)]); 6] = [
    (Channel::Ap, &[(2.0, 1.0, 0.3), (4.0, 0.25, 1.1)]),
    (Channel::Ml, &[(1.0, 1.0, 0.0), (3.0, 0.2, 0.7)]),
    (Channel::V, &[(2.0, 0.9, -0.4), (4.0, 0.3, 0.9), (6.0, 0.1, 0.2)]),
    (Channel::Til, &[(2.0, 0.8, 0.5), (1.0, 0.15, 1.9)]),
    (Channel::Obl, &[(1.0, 0.6, 2.2), (2.0, 0.35, -0.8)]),
    (Channel::Rot, &[(1.0, 1.0, 1.3), (2.0, 0.25, 0.4)]),
];

/// Extra multiplicative variance on TIL/OBL for the patient group
/// (tooling choice, not a published value).
const PATIENT_TILT_OBL_STD: f64 = 0.5;
const PATIENT_JITTER_FACTOR: f64 = 2.0;

struct StrideSchedule {
    /// Right-HS sample times (fractional) marking cycle starts.
    starts: Vec<f64>,
    /// Cycle durations in samples.
    lengths: Vec<f64>,
}

impl StrideSchedule {
    /// Stride phase in radians at sample t, piecewise linear per cycle and
    /// extrapolated at both ends.
    fn phase(&self, t: f64) -> f64 {
        let k = match self
            .starts
            .iter()
            .rposition(|&s| s <= t)
        {
            Some(k) => k.min(self.lengths.len() - 1),
            None => 0,
        };
        2.0 * PI * (k as f64 + (t - self.starts[k]) / self.lengths[k])
    }
}

fn round_ts(t: f64) -> usize {
    t.round() as usize
}

/// Write one foot cycle into `out`: a shallow inverted lobe at HS, a deep
/// inverted lobe at TO, and a positive swing lobe recovering to zero at the
/// next HS.
fn foot_cycle(out: &mut [f64], hs: usize, to: usize, next_hs: usize, period: usize) {
    let n = out.len();
    let delta = (6 * period / 110).max(3);
    let w_to = (8 * period / 110).max(4);
    for t in hs..(hs + 2 * delta).min(next_hs).min(n) {
        let x = (t - hs) as f64 / (2.0 * delta as f64);
        out[t] = -0.4 * (PI * x).sin();
    }
    for t in to.saturating_sub(w_to)..(to + w_to).min(next_hs).min(n) {
        let x = (t + w_to - to) as f64 / (2 * w_to) as f64;
        out[t] = -1.5 * (PI * x).sin();
    }
    let sw_start = to + w_to;
    for t in sw_start..next_hs.min(n) {
        let x = (t - sw_start) as f64 / (next_hs - sw_start) as f64;
        out[t] = 1.0 * (PI * x).sin();
    }
}

/// Render one side's foot signal from its (HS, TO) pairs.
fn foot_signal(n: usize, pairs: &[(usize, usize)], period: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if pairs.is_empty() {
        return out;
    }
    // lead-in swing so the first HS has a preceding zero-crossing
    let lead = (period / 4).max(8);
    let first_hs = pairs[0].0;
    let start = first_hs.saturating_sub(lead);
    for t in start..first_hs {
        let x = (t - start) as f64 / (first_hs - start) as f64;
        out[t] = 0.8 * (PI * x).sin();
    }
    for (i, &(hs, to)) in pairs.iter().enumerate() {
        let next_hs = if i + 1 < pairs.len() {
            pairs[i + 1].0
        } else {
            // truncated final swing
            (to + period).min(n)
        };
        foot_cycle(&mut out, hs, to, next_hs, period);
    }
    out
}

/// Generate one synthetic recording with exact groundtruth events.
pub fn generate(
    params: &GaitParams,
    duration_s: f64,
    sample_rate_hz: f64,
) -> Result<Recording> {
    params.validate()?;
    if sample_rate_hz <= 0.0 {
        return Err(Error::config("sample rate must be positive"));
    }
    if duration_s < 2.0 * params.stride_s {
        return Err(Error::data(format!(
            "duration {duration_s} s too short: need at least two strides of {} s",
            params.stride_s
        )));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let jitter_std = params.speed_jitter
        * if params.group == Group::Patient {
            PATIENT_JITTER_FACTOR
        } else {
            1.0
        };
    let jitter = Normal::new(0.0, jitter_std.max(f64::MIN_POSITIVE)).unwrap();
    let period = (params.stride_s * sample_rate_hz).round() as usize;

    // stride schedule: cycle k starts at the k-th right heel strike
    let lead = (period / 4).max(8) as f64;
    let mut starts = vec![lead];
    let mut lengths = Vec::new();
    loop {
        let mut s = params.stride_s;
        if jitter_std > 0.0 {
            s += jitter.sample(&mut rng);
        }
        let s = (s.max(0.4 * params.stride_s)) * sample_rate_hz;
        let t_next = starts.last().unwrap() + s;
        if t_next + 2.0 > n as f64 {
            break;
        }
        lengths.push(s);
        starts.push(t_next);
    }
    if lengths.len() < 2 {
        return Err(Error::data(
            "duration too short: fewer than two full strides fit",
        ));
    }
    starts.pop(); // starts[k] pairs with lengths[k]
    let schedule = StrideSchedule {
        starts: starts.clone(),
        lengths: lengths.clone(),
    };

    // exact events per cycle
    let mut right_pairs = Vec::new();
    let mut left_pairs = Vec::new();
    let mut events = Vec::new();
    for (k, (&t0, &s)) in starts.iter().zip(&lengths).enumerate() {
        let hs_r = round_ts(t0);
        let to_l = round_ts(t0 + params.dls_fraction * s);
        let hs_l = round_ts(t0 + 0.5 * s);
        let to_r = round_ts(t0 + params.stance_fraction * s);
        right_pairs.push((hs_r, to_r));
        events.push(GaitEvent {
            side: Side::R,
            kind: EventKind::Hs,
            t: hs_r,
        });
        events.push(GaitEvent {
            side: Side::R,
            kind: EventKind::To,
            t: to_r,
        });
        events.push(GaitEvent {
            side: Side::L,
            kind: EventKind::Hs,
            t: hs_l,
        });
        if k > 0 {
            // the left TO at dls into cycle k closes the left stance that
            // began in cycle k-1
            events.push(GaitEvent {
                side: Side::L,
                kind: EventKind::To,
                t: to_l,
            });
            left_pairs.last_mut().map(|p: &mut (usize, usize)| p.1 = to_l);
        }
        left_pairs.push((hs_l, 0));
    }
    // close the final left stance inside the recording if possible
    {
        let last = left_pairs.last_mut().unwrap();
        let s = *lengths.last().unwrap();
        let to_l = round_ts(*starts.last().unwrap() + s + params.dls_fraction * s);
        if to_l + 2 < n {
            last.1 = to_l;
            events.push(GaitEvent {
                side: Side::L,
                kind: EventKind::To,
                t: to_l,
            });
        } else {
            // drop the unclosed pair from the foot-signal writer; its HS is
            // still a groundtruth event (stance runs past the end)
            last.1 = n.saturating_sub(1);
        }
    }

    let mut feet = BTreeMap::new();
    let noise = |rng: &mut ChaCha8Rng, v: Vec<f64>| -> Vec<f64> {
        if params.amp_noise > 0.0 {
            let dist = Normal::new(0.0, params.amp_noise).unwrap();
            v.into_iter().map(|x| x + dist.sample(rng)).collect()
        } else {
            v
        }
    };
    let right = foot_signal(n, &right_pairs, period);
    let left = foot_signal(n, &left_pairs, period);
    feet.insert(
        Channel::FootSagR,
        Series::new(noise(&mut rng, right), sample_rate_hz)?,
    );
    feet.insert(
        Channel::FootSagL,
        Series::new(noise(&mut rng, left), sample_rate_hz)?,
    );

    // per-cycle TIL/OBL modulation for the patient group
    let patient_mod: Vec<f64> = if params.group == Group::Patient {
        let dist = Normal::new(1.0, PATIENT_TILT_OBL_STD).unwrap();
        (0..lengths.len())
            .map(|_| dist.sample(&mut rng).max(0.1))
            .collect()
    } else {
        vec![1.0; lengths.len()]
    };
    let cycle_at = |t: f64| -> usize {
        match starts.iter().rposition(|&s| s <= t) {
            Some(k) => k.min(lengths.len() - 1),
            None => 0,
        }
    };

    let mut pelvis = BTreeMap::new();
    for (ch, harmonics) in PELVIS_HARMONICS {
        let modulated = matches!(ch, Channel::Til | Channel::Obl);
        let mut v = Vec::with_capacity(n);
        for t in 0..n {
            let phi = schedule.phase(t as f64);
            let mut x: f64 = harmonics
                .iter()
                .map(|&(h, a, p)| a * (h * phi + p).sin())
                .sum();
            if modulated {
                x *= patient_mod[cycle_at(t as f64)];
            }
            v.push(x);
        }
        pelvis.insert(ch, Series::new(noise(&mut rng, v), sample_rate_hz)?);
    }

    let mut rec = Recording::new(
        format!("synth-{}", params.seed),
        params.group,
        pelvis,
        feet,
    )?;
    rec.truth_events = Some(EventList::new(events)?);
    Ok(rec)
}

/// Generate a cohort: per-subject parameter variation around `base`, two
/// recordings per subject (preferred and fast speed), deterministic under
/// the base seed.
pub fn generate_cohort(
    n_healthy: usize,
    n_patient: usize,
    base: &GaitParams,
    duration_s: f64,
    sample_rate_hz: f64,
) -> Result<Vec<Recording>> {
    base.validate()?;
    let mut out = Vec::with_capacity(2 * (n_healthy + n_patient));
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed ^ COHORT_SALT);
    for i in 0..n_healthy + n_patient {
        let group = if i < n_healthy {
            Group::Healthy
        } else {
            Group::Patient
        };
        let subject_id = match group {
            Group::Healthy => format!("H{i:03}"),
            Group::Patient => format!("P{:03}", i - n_healthy),
        };
        let stride = base.stride_s * rng.gen_range(0.9..1.1);
        let subject_seed: u64 = rng.gen();
        for (speed_tag, factor) in [("preferred", 1.0), ("fast", 0.85)] {
            let params = GaitParams {
                stride_s: stride * factor,
                group,
                seed: subject_seed ^ (speed_tag.len() as u64),
                ..*base
            };
            let mut rec = generate(&params, duration_s, sample_rate_hz)?;
            rec.subject_id = subject_id.clone();
            out.push(rec);
        }
    }
    Ok(out)
}

/// Salt separating the cohort-level RNG stream from per-recording streams.
const COHORT_SALT: u64 = 0x5eed_0000_c0b0_0001;
