//! Core time-series types, CSV ingestion, and zero-phase band-pass filtering.
//!
//! Raw IMU channels are filtered with a Butterworth cascade (4th-order
//! high-pass at the low edge, 4th-order low-pass at the high edge) applied
//! forward then backward so that event timing is not shifted by group delay.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::events::EventList;
use crate::Result;

/// Sensor channel tag. The six pelvis channels are the model inputs; the two
/// foot sagittal gyro channels drive groundtruth extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Antero-posterior pelvis acceleration (m/s²).
    #[serde(rename = "AP")]
    Ap,
    /// Medio-lateral pelvis acceleration (m/s²).
    #[serde(rename = "ML")]
    Ml,
    /// Vertical pelvis acceleration (m/s²).
    #[serde(rename = "V")]
    V,
    /// Pelvic tilt angular velocity (deg/s).
    #[serde(rename = "TIL")]
    Til,
    /// Pelvic obliquity angular velocity (deg/s).
    #[serde(rename = "OBL")]
    Obl,
    /// Pelvic rotation angular velocity (deg/s).
    #[serde(rename = "ROT")]
    Rot,
    /// Left foot sagittal-plane angular velocity (deg/s).
    #[serde(rename = "FOOT_SAG_L")]
    FootSagL,
    /// Right foot sagittal-plane angular velocity (deg/s).
    #[serde(rename = "FOOT_SAG_R")]
    FootSagR,
}

impl Channel {
    /// The six pelvis channels in canonical order.
    pub const PELVIS: [Channel; 6] = [
        Channel::Ap,
        Channel::Ml,
        Channel::V,
        Channel::Til,
        Channel::Obl,
        Channel::Rot,
    ];

    /// The two foot channels in (left, right) order.
    pub const FEET: [Channel; 2] = [Channel::FootSagL, Channel::FootSagR];

    pub fn tag(&self) -> &'static str {
        match self {
            Channel::Ap => "AP",
            Channel::Ml => "ML",
            Channel::V => "V",
            Channel::Til => "TIL",
            Channel::Obl => "OBL",
            Channel::Rot => "ROT",
            Channel::FootSagL => "FOOT_SAG_L",
            Channel::FootSagR => "FOOT_SAG_R",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Channel> {
        match tag {
            "AP" => Some(Channel::Ap),
            "ML" => Some(Channel::Ml),
            "V" => Some(Channel::V),
            "TIL" => Some(Channel::Til),
            "OBL" => Some(Channel::Obl),
            "ROT" => Some(Channel::Rot),
            "FOOT_SAG_L" => Some(Channel::FootSagL),
            "FOOT_SAG_R" => Some(Channel::FootSagR),
        _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Healthy vs patient cohort label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Healthy,
    Patient,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Healthy => f.write_str("healthy"),
            Group::Patient => f.write_str("patient"),
        }
    }
}

/// A uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub values: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl Series {
    pub fn new(values: Vec<f64>, sample_rate_hz: f64) -> Result<Series> {
        if sample_rate_hz <= 0.0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if values.is_empty() {
            return Err(Error::data("series must have length >= 1"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite value at index {i}")));
        }
        Ok(Series {
            values,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One subject trial: six pelvis channels plus two foot channels, all the
/// same length and sample rate, with optional groundtruth events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recording {
    pub subject_id: String,
    pub group: Group,
    pub pelvis: BTreeMap<Channel, Series>,
    pub feet: BTreeMap<Channel, Series>,
    pub truth_events: Option<EventList>,
}

impl Recording {
    pub fn new(
        subject_id: String,
        group: Group,
        pelvis: BTreeMap<Channel, Series>,
        feet: BTreeMap<Channel, Series>,
    ) -> Result<Recording> {
        for ch in Channel::PELVIS {
            if !pelvis.contains_key(&ch) {
                return Err(Error::data(format!("missing pelvis channel {ch}")));
            }
        }
        for ch in Channel::FEET {
            if !feet.contains_key(&ch) {
                return Err(Error::data(format!("missing foot channel {ch}")));
            }
        }
        let mut iter = pelvis.values().chain(feet.values());
        let first = iter.next().expect("checked non-empty");
        for s in iter {
            if s.len() != first.len() {
                return Err(Error::data("channel series lengths differ"));
            }
            if s.sample_rate_hz != first.sample_rate_hz {
                return Err(Error::data("channel sample rates differ"));
            }
        }
        Ok(Recording {
            subject_id,
            group,
            pelvis,
            feet,
            truth_events: None,
        })
    }

    /// Number of timesteps in every channel.
    pub fn len(&self) -> usize {
        self.pelvis[&Channel::Ap].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.pelvis[&Channel::Ap].sample_rate_hz
    }

    pub fn channel(&self, ch: Channel) -> &Series {
        self.pelvis.get(&ch).or_else(|| self.feet.get(&ch)).expect("channel present")
    }

    /// Band-pass all eight channels in place.
    pub fn bandpass_all(&mut self, band: &BandSpec) -> Result<()> {
        for s in self.pelvis.values_mut().chain(self.feet.values_mut()) {
            *s = bandpass(s, band)?;
        }
        Ok(())
    }
}

/// Pass band for the IMU pre-filter, 0.5-6 Hz by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Default for BandSpec {
    fn default() -> Self {
        BandSpec {
            low_hz: 0.5,
            high_hz: 6.0,
        }
    }
}

impl BandSpec {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < sample_rate_hz / 2.0)
        {
            return Err(Error::config(format!(
                "band {}-{} Hz invalid for sample rate {} Hz",
                self.low_hz, self.high_hz, sample_rate_hz
            )));
        }
        Ok(())
    }
}

/// Column mapping for CSV ingestion, loaded from a JSON config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Channel tag -> CSV column name, all eight channels required.
    pub columns: BTreeMap<Channel, String>,
    pub sample_rate_hz: f64,
    #[serde(default = "default_group")]
    pub group: Group,
}

fn default_group() -> Group {
    Group::Healthy
}

impl CsvSchema {
    /// Identity schema: each channel maps to its own tag at the given rate.
    pub fn identity(sample_rate_hz: f64) -> CsvSchema {
        let columns = Channel::PELVIS
            .iter()
            .chain(Channel::FEET.iter())
            .map(|&ch| (ch, ch.tag().to_string()))
            .collect();
        CsvSchema {
            columns,
            sample_rate_hz,
            group: Group::Healthy,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<CsvSchema> {
        let text = std::fs::read_to_string(path)?;
        let schema: CsvSchema = serde_json::from_str(&text)?;
        Ok(schema)
    }
}

/// Load a recording from CSV. The header row names the columns; an optional
/// `time` column is ignored. `truth_events` is left absent.
pub fn load_recording(path: &Path, schema: &CsvSchema) -> Result<Recording> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::parse(format!("cannot open {}: {e}", path.display())))?;
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    let rec = parse_recording_csv(file, schema, subject_id)?;
    Ok(rec)
}

/// Parse the recording CSV format from any reader. Exposed separately so the
/// parser can be driven directly (e.g. by fuzzing).
pub fn parse_recording_csv<R: std::io::Read>(
    reader: R,
    schema: &CsvSchema,
    subject_id: String,
) -> Result<Recording> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(format!("bad header: {e}")))?
        .clone();
    let ncols = headers.len();

    let all_channels: Vec<Channel> = Channel::PELVIS
        .iter()
        .chain(Channel::FEET.iter())
        .copied()
        .collect();
    let mut col_index: BTreeMap<Channel, usize> = BTreeMap::new();
    for &ch in &all_channels {
        let name = schema
            .columns
            .get(&ch)
            .ok_or_else(|| Error::parse(format!("schema missing channel {ch}")))?;
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(format!("missing column {name} for channel {ch}")))?;
        col_index.insert(ch, idx);
    }

    let mut data: BTreeMap<Channel, Vec<f64>> =
        all_channels.iter().map(|&ch| (ch, Vec::new())).collect();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::parse(format!("row {}: {e}", row_idx + 1)))?;
        if record.len() != ncols {
            return Err(Error::parse(format!(
                "row {}: expected {} columns, got {}",
                row_idx + 1,
                ncols,
                record.len()
            )));
        }
        for (&ch, &idx) in &col_index {
            let cell = &record[idx];
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(format!("row {}: non-numeric cell '{cell}' for {ch}", row_idx + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(format!(
                    "row {}: non-finite value for {ch}",
                    row_idx + 1
                )));
            }
            data.get_mut(&ch).unwrap().push(v);
        }
    }
    if data[&Channel::Ap].is_empty() {
        return Err(Error::parse("empty recording"));
    }

    let mut pelvis = BTreeMap::new();
    let mut feet = BTreeMap::new();
    for (ch, values) in data {
        let series = Series::new(values, schema.sample_rate_hz)?;
        if Channel::FEET.contains(&ch) {
            feet.insert(ch, series);
        } else {
            pelvis.insert(ch, series);
        }
    }
    Recording::new(subject_id, schema.group, pelvis, feet)
}

/// Write a recording in the same CSV layout `load_recording` reads.
pub fn save_recording_csv(rec: &Recording, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let all: Vec<Channel> = Channel::PELVIS
        .iter()
        .chain(Channel::FEET.iter())
        .copied()
        .collect();
    wtr.write_record(all.iter().map(|ch| ch.tag()))?;
    for i in 0..rec.len() {
        let row: Vec<String> = all
            .iter()
            .map(|&ch| format!("{:.17e}", rec.channel(ch).values[i]))
            .collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// A single second-order recursive filter section, coefficients normalized
/// so that a0 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Magnitude response at frequency `f_hz` for a single (one-way) pass.
    pub fn magnitude(&self, f_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / sample_rate_hz;
        let (c1, s1) = ((-w).cos(), (-w).sin());
        let (c2, s2) = ((-2.0 * w).cos(), (-2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = self.b[1] * s1 + self.b[2] * s2;
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = self.a[0] * s1 + self.a[1] * s2;
        (num_re * num_re + num_im * num_im).sqrt() / (den_re * den_re + den_im * den_im).sqrt()
    }

    /// Transposed direct-form II pass with the given initial state.
    fn apply(&self, x: &[f64], state: [f64; 2]) -> Vec<f64> {
        let [mut z1, mut z2] = state;
        let mut y = Vec::with_capacity(x.len());
        for &xi in x {
            let yi = self.b[0] * xi + z1;
            z1 = self.b[1] * xi - self.a[0] * yi + z2;
            z2 = self.b[2] * xi - self.a[1] * yi;
            y.push(yi);
        }
        y
    }
}

// Q factors of the two conjugate pole pairs of a 4th-order Butterworth.
const BUTTER4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_6];

fn butter_lowpass(f_hz: f64, sample_rate_hz: f64) -> [Biquad; 2] {
    let w0 = 2.0 * std::f64::consts::PI * f_hz / sample_rate_hz;
    let (sw, cw) = (w0.sin(), w0.cos());
    BUTTER4_Q.map(|q| {
        let alpha = sw / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b: [(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
        }
    })
}

fn butter_highpass(f_hz: f64, sample_rate_hz: f64) -> [Biquad; 2] {
    let w0 = 2.0 * std::f64::consts::PI * f_hz / sample_rate_hz;
    let (sw, cw) = (w0.sin(), w0.cos());
    BUTTER4_Q.map(|q| {
        let alpha = sw / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b: [
                (1.0 + cw) / 2.0 / a0,
                -(1.0 + cw) / a0,
                (1.0 + cw) / 2.0 / a0,
            ],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
        }
    })
}

/// Filter order per band edge (4th-order high-pass plus 4th-order low-pass).
pub const FILTER_ORDER: usize = 8;

/// Design the band-pass cascade for the given band and sample rate.
pub fn design_bandpass(band: &BandSpec, sample_rate_hz: f64) -> Result<Vec<Biquad>> {
    band.validate(sample_rate_hz)?;
    let hp = butter_highpass(band.low_hz, sample_rate_hz);
    let lp = butter_lowpass(band.high_hz, sample_rate_hz);
    Ok(hp.into_iter().chain(lp).collect())
}

/// One-way magnitude response of the designed cascade at `f_hz`. The
/// zero-phase (forward-backward) gain is the square of this value.
pub fn bandpass_magnitude(band: &BandSpec, sample_rate_hz: f64, f_hz: f64) -> Result<f64> {
    let sections = design_bandpass(band, sample_rate_hz)?;
    Ok(sections
        .iter()
        .map(|s| s.magnitude(f_hz, sample_rate_hz))
        .product())
}

/// Zero-phase band-pass: forward-backward application of the Butterworth
/// cascade with reflected edge padding. Output length and rate match the
/// input; passband gain is ~1 and the filter introduces no phase shift.
pub fn bandpass(series: &Series, band: &BandSpec) -> Result<Series> {
    let sections = design_bandpass(band, series.sample_rate_hz)?;
    let n = series.len();
    if n < 3 * FILTER_ORDER + 1 {
        return Err(Error::data(format!(
            "series length {n} too short for filter (need > {})",
            3 * FILTER_ORDER
        )));
    }
    let out = filtfilt_gust(&sections, &series.values);
    Series::new(out, series.sample_rate_hz)
}

/// Zero-phase filtering with edge-transient minimization: one pair of
/// initial-state vectors (forward-pass start, backward-pass start) is chosen
/// by least squares so that filtering forward-then-backward agrees with
/// backward-then-forward, and the two orderings are averaged. The input mean
/// is removed first; a band-pass has zero DC gain, so this only cancels the
/// constant the initial-state fit would otherwise have to absorb. The whole
/// operation is exactly linear in the input and commutes with time reversal.
fn filtfilt_gust(sections: &[Biquad], input: &[f64]) -> Vec<f64> {
    let n = input.len();
    let nstate = 2 * sections.len();

    let mean = input.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = input.iter().map(|v| v - mean).collect();

    // One cascade pass with a full initial state (two per section).
    let run = |input: &[f64], state: &[f64]| -> Vec<f64> {
        let mut y = input.to_vec();
        for (i, s) in sections.iter().enumerate() {
            y = s.apply(&y, [state[2 * i], state[2 * i + 1]]);
        }
        y
    };
    let run0 = |input: &[f64]| -> Vec<f64> { run(input, &vec![0.0; nstate]) };
    let rev = |v: &[f64]| -> Vec<f64> { v.iter().rev().copied().collect() };

    // Homogeneous response basis: cascade output for zero input with one
    // unit of initial state at a time ("observability" columns).
    let zeros = vec![0.0; n];
    let obs: Vec<Vec<f64>> = (0..nstate)
        .map(|i| {
            let mut state = vec![0.0; nstate];
            state[i] = 1.0;
            run(&zeros, &state)
        })
        .collect();
    // Propagated initial state, reversed, filtered again.
    let s_cols: Vec<Vec<f64>> = obs.iter().map(|m| run0(&rev(m))).collect();
    let sr: Vec<Vec<f64>> = s_cols.iter().map(|c| rev(c)).collect();
    let or: Vec<Vec<f64>> = obs.iter().map(|c| rev(c)).collect();

    let y_f = run0(&x);
    let y_fb = rev(&run0(&rev(&y_f)));
    let y_b = rev(&run0(&rev(&x)));
    let y_bf = run0(&y_b);

    // With shared initial states (x0 forward, x1 backward):
    //   y_fb(x0,x1) = y_fb + Sr*x0 + Or*x1
    //   y_bf(x0,x1) = y_bf + O*x0  + S*x1
    // Solve min || (Sr-O)*x0 + (Or-S)*x1 - (y_bf - y_fb) ||.
    let ncols = 2 * nstate;
    let cols: Vec<Vec<f64>> = sr
        .iter()
        .zip(&obs)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
        .chain(
            or.iter()
                .zip(&s_cols)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()),
        )
        .collect();
    let d: Vec<f64> = y_bf.iter().zip(&y_fb).map(|(b, f)| b - f).collect();

    // Normal equations with a small ridge for near-dependent responses.
    let mut g = vec![vec![0.0; ncols]; ncols];
    let mut rhs = vec![0.0; ncols];
    for j in 0..ncols {
        for k in j..ncols {
            let dot: f64 = cols[j].iter().zip(cols[k].iter()).map(|(a, b)| a * b).sum();
            g[j][k] = dot;
            g[k][j] = dot;
        }
        rhs[j] = cols[j].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
    }
    let ridge = 1e-12 * g.iter().enumerate().map(|(j, r)| r[j]).fold(0.0f64, f64::max);
    for (j, row) in g.iter_mut().enumerate() {
        row[j] += ridge;
    }
    let ic = solve_sym(&mut g, &mut rhs);

    // Average both orderings at the fitted initial states.
    let mut y: Vec<f64> = y_fb.iter().zip(&y_bf).map(|(a, b)| 0.5 * (a + b)).collect();
    for i in 0..nstate {
        let (x0, x1) = (0.5 * ic[i], 0.5 * ic[nstate + i]);
        for j in 0..n {
            y[j] += x0 * (sr[i][j] + obs[i][j]) + x1 * (or[i][j] + s_cols[i][j]);
        }
    }
    y
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve_sym(g: &mut [Vec<f64>], rhs: &mut [f64]) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| g[a][col].abs().partial_cmp(&g[b][col].abs()).unwrap())
            .unwrap();
        g.swap(col, piv);
        rhs.swap(col, piv);
        let pivot = g[col][col];
        if pivot.abs() < 1e-300 {
            continue;
        }
        for row in (col + 1)..n {
            let f = g[row][col] / pivot;
            if f != 0.0 {
                for k in col..n {
                    g[row][k] -= f * g[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = rhs[col];
        for k in (col + 1)..n {
            s -= g[col][k] * x[k];
        }
        x[col] = if g[col][col].abs() < 1e-300 {
            0.0
        } else {
            s / g[col][col]
        };
    }
    x
}
