//! Builders for the 16 named architectures, all sharing the same windowed
//! input contract ([w, channels]) and a two-output linear regression head
//! (right, left phase).

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::neuralnet::{
    Bidirectional, Conv1d, Dense, Flatten, Gru, Layer, LinearActivation, Lstm, MaxPool1d,
    PerChannelDense, Relu, SegmentReshape, SelfAttention, Sequential, Tensor, TimeDistributed,
};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchitectureId {
    Mlp,
    Cnn,
    Lstm,
    Gru,
    BiLstm,
    BiGru,
    StackedLstm,
    StackedGru,
    StackedLstmAtt,
    StackedGruAtt,
    CnnLstm,
    CnnGru,
    CnnBiLstm,
    CnnBiGru,
    CnnBiLstmAtt,
    CnnBiGruAtt,
}

pub const ALL_ARCHITECTURES: [ArchitectureId; 16] = [
    ArchitectureId::Mlp,
    ArchitectureId::Cnn,
    ArchitectureId::Lstm,
    ArchitectureId::Gru,
    ArchitectureId::BiLstm,
    ArchitectureId::BiGru,
    ArchitectureId::StackedLstm,
    ArchitectureId::StackedGru,
    ArchitectureId::StackedLstmAtt,
    ArchitectureId::StackedGruAtt,
    ArchitectureId::CnnLstm,
    ArchitectureId::CnnGru,
    ArchitectureId::CnnBiLstm,
    ArchitectureId::CnnBiGru,
    ArchitectureId::CnnBiLstmAtt,
    ArchitectureId::CnnBiGruAtt,
];

impl ArchitectureId {
    pub fn name(&self) -> &'static str {
        match self {
            ArchitectureId::Mlp => "MLP",
            ArchitectureId::Cnn => "CNN",
            ArchitectureId::Lstm => "LSTM",
            ArchitectureId::Gru => "GRU",
            ArchitectureId::BiLstm => "BiLSTM",
            ArchitectureId::BiGru => "BiGRU",
            ArchitectureId::StackedLstm => "stacked-LSTM",
            ArchitectureId::StackedGru => "stacked-GRU",
            ArchitectureId::StackedLstmAtt => "stacked-LSTM-Att",
            ArchitectureId::StackedGruAtt => "stacked-GRU-Att",
            ArchitectureId::CnnLstm => "CNN-LSTM",
            ArchitectureId::CnnGru => "CNN-GRU",
            ArchitectureId::CnnBiLstm => "CNN-BiLSTM",
            ArchitectureId::CnnBiGru => "CNN-BiGRU",
            ArchitectureId::CnnBiLstmAtt => "CNN-BiLSTM-Att",
            ArchitectureId::CnnBiGruAtt => "CNN-BiGRU-Att",
        }
    }

    pub fn is_hybrid(&self) -> bool {
        matches!(
            self,
            ArchitectureId::CnnLstm
                | ArchitectureId::CnnGru
                | ArchitectureId::CnnBiLstm
                | ArchitectureId::CnnBiGru
                | ArchitectureId::CnnBiLstmAtt
                | ArchitectureId::CnnBiGruAtt
        )
    }

    pub fn has_attention(&self) -> bool {
        matches!(
            self,
            ArchitectureId::StackedLstmAtt
                | ArchitectureId::StackedGruAtt
                | ArchitectureId::CnnBiLstmAtt
                | ArchitectureId::CnnBiGruAtt
        )
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchitectureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<ArchitectureId> {
        ALL_ARCHITECTURES
            .iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| {
                let valid: Vec<&str> = ALL_ARCHITECTURES.iter().map(|a| a.name()).collect();
                Error::config(format!(
                    "unknown architecture {s:?}; valid ids: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Layer-size knobs shared by every builder. The defaults reproduce the
/// published architectures; tests shrink them to keep training cheap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZooConfig {
    /// Conv1D filter count in CNN and hybrid branches.
    pub conv_filters: usize,
    /// Conv1D kernel length.
    pub conv_kernel: usize,
    /// MaxPool1D pool size.
    pub pool: usize,
    /// Per-channel hidden width in the MLP.
    pub mlp_units: usize,
    /// Hidden dense width after the CNN flatten.
    pub cnn_dense_units: usize,
    /// Hidden units in vanilla / stacked / bidirectional RNNs.
    pub rnn_units: usize,
    /// Hidden units in the hybrid (CNN-RNN) models.
    pub hybrid_units: usize,
    /// Number of time segments fed to the time-distributed CNN.
    pub segments: usize,
}

impl Default for ZooConfig {
    fn default() -> Self {
        ZooConfig {
            conv_filters: 64,
            conv_kernel: 5,
            pool: 2,
            mlp_units: 100,
            cnn_dense_units: 50,
            rnn_units: 100,
            hybrid_units: 600,
            segments: 2,
        }
    }
}

fn head(rng: &mut ChaCha8Rng, in_dim: usize, layers: &mut Vec<Box<dyn Layer>>) {
    layers.push(Box::new(Dense::new(rng, "head", in_dim, 2)));
    layers.push(Box::new(LinearActivation));
}

fn bidir_lstm(rng: &mut ChaCha8Rng, in_dim: usize, units: usize, seq: bool) -> Bidirectional {
    let fwd = Box::new(Lstm::new(rng, "bilstm.fwd", in_dim, units, seq));
    let bwd = Box::new(Lstm::new(rng, "bilstm.bwd", in_dim, units, seq));
    Bidirectional::new("bilstm", fwd, bwd, units, seq)
}

fn bidir_gru(rng: &mut ChaCha8Rng, in_dim: usize, units: usize, seq: bool) -> Bidirectional {
    let fwd = Box::new(Gru::new(rng, "bigru.fwd", in_dim, units, seq));
    let bwd = Box::new(Gru::new(rng, "bigru.bwd", in_dim, units, seq));
    Bidirectional::new("bigru", fwd, bwd, units, seq)
}

/// Time-distributed convolutional front end of the hybrid models; returns the
/// layers plus the per-segment feature length.
fn conv_front(
    rng: &mut ChaCha8Rng,
    cfg: &ZooConfig,
    channels: usize,
    w: usize,
) -> Result<(Vec<Box<dyn Layer>>, usize)> {
    if w % cfg.segments != 0 {
        return Err(Error::config(format!(
            "window {w} not divisible by {} segments",
            cfg.segments
        )));
    }
    let seg_len = w / cfg.segments;
    if seg_len < cfg.conv_kernel {
        return Err(Error::config(format!(
            "segment length {seg_len} shorter than conv kernel {}",
            cfg.conv_kernel
        )));
    }
    let feat = (seg_len - cfg.conv_kernel + 1) / cfg.pool * cfg.conv_filters;
    let inner: Vec<Box<dyn Layer>> = vec![
        Box::new(Conv1d::new(
            rng,
            "td.conv",
            channels,
            cfg.conv_filters,
            cfg.conv_kernel,
        )),
        Box::new(Relu::new()),
        Box::new(MaxPool1d::new(cfg.pool)),
        Box::new(Flatten::new()),
    ];
    let layers: Vec<Box<dyn Layer>> = vec![
        Box::new(SegmentReshape {
            segments: cfg.segments,
        }),
        Box::new(TimeDistributed::new("td", inner)),
    ];
    Ok((layers, feat))
}

/// Build one of the 16 architectures for a [w, channels] input window.
pub fn build(
    id: ArchitectureId,
    channels: usize,
    w: usize,
    cfg: &ZooConfig,
    seed: u64,
) -> Result<Sequential> {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mut layers: Vec<Box<dyn Layer>> = Vec::new();
    match id {
        ArchitectureId::Mlp => {
            layers.push(Box::new(PerChannelDense::new(
                rng,
                "branches",
                w,
                channels,
                cfg.mlp_units,
            )));
            layers.push(Box::new(Relu::new()));
            head(rng, channels * cfg.mlp_units, &mut layers);
        }
        ArchitectureId::Cnn => {
            if w < cfg.conv_kernel {
                return Err(Error::config(format!(
                    "window {w} shorter than conv kernel {}",
                    cfg.conv_kernel
                )));
            }
            let feat = (w - cfg.conv_kernel + 1) / cfg.pool * cfg.conv_filters;
            layers.push(Box::new(Conv1d::new(
                rng,
                "conv",
                channels,
                cfg.conv_filters,
                cfg.conv_kernel,
            )));
            layers.push(Box::new(Relu::new()));
            layers.push(Box::new(MaxPool1d::new(cfg.pool)));
            layers.push(Box::new(Flatten::new()));
            layers.push(Box::new(Dense::new(rng, "dense", feat, cfg.cnn_dense_units)));
            layers.push(Box::new(Relu::new()));
            head(rng, cfg.cnn_dense_units, &mut layers);
        }
        ArchitectureId::Lstm => {
            layers.push(Box::new(Lstm::new(rng, "lstm", channels, cfg.rnn_units, false)));
            head(rng, cfg.rnn_units, &mut layers);
        }
        ArchitectureId::Gru => {
            layers.push(Box::new(Gru::new(rng, "gru", channels, cfg.rnn_units, false)));
            head(rng, cfg.rnn_units, &mut layers);
        }
        ArchitectureId::BiLstm => {
            layers.push(Box::new(bidir_lstm(rng, channels, cfg.rnn_units, false)));
            head(rng, 2 * cfg.rnn_units, &mut layers);
        }
        ArchitectureId::BiGru => {
            layers.push(Box::new(bidir_gru(rng, channels, cfg.rnn_units, false)));
            head(rng, 2 * cfg.rnn_units, &mut layers);
        }
        ArchitectureId::StackedLstm | ArchitectureId::StackedLstmAtt => {
            let att = id.has_attention();
            layers.push(Box::new(Lstm::new(rng, "lstm1", channels, cfg.rnn_units, true)));
            layers.push(Box::new(Lstm::new(
                rng,
                "lstm2",
                cfg.rnn_units,
                cfg.rnn_units,
                att,
            )));
            if att {
                layers.push(Box::new(SelfAttention::new(rng, "attention", cfg.rnn_units)));
            }
            head(rng, cfg.rnn_units, &mut layers);
        }
        ArchitectureId::StackedGru | ArchitectureId::StackedGruAtt => {
            let att = id.has_attention();
            layers.push(Box::new(Gru::new(rng, "gru1", channels, cfg.rnn_units, true)));
            layers.push(Box::new(Gru::new(
                rng,
                "gru2",
                cfg.rnn_units,
                cfg.rnn_units,
                att,
            )));
            if att {
                layers.push(Box::new(SelfAttention::new(rng, "attention", cfg.rnn_units)));
            }
            head(rng, cfg.rnn_units, &mut layers);
        }
        ArchitectureId::CnnLstm => {
            let (mut front, feat) = conv_front(rng, cfg, channels, w)?;
            layers.append(&mut front);
            layers.push(Box::new(Lstm::new(rng, "lstm", feat, cfg.hybrid_units, false)));
            head(rng, cfg.hybrid_units, &mut layers);
        }
        ArchitectureId::CnnGru => {
            let (mut front, feat) = conv_front(rng, cfg, channels, w)?;
            layers.append(&mut front);
            layers.push(Box::new(Gru::new(rng, "gru", feat, cfg.hybrid_units, false)));
            head(rng, cfg.hybrid_units, &mut layers);
        }
        ArchitectureId::CnnBiLstm => {
            let (mut front, feat) = conv_front(rng, cfg, channels, w)?;
            layers.append(&mut front);
            layers.push(Box::new(bidir_lstm(rng, feat, cfg.hybrid_units, false)));
            head(rng, 2 * cfg.hybrid_units, &mut layers);
        }
        ArchitectureId::CnnBiGru => {
            let (mut front, feat) = conv_front(rng, cfg, channels, w)?;
            layers.append(&mut front);
            layers.push(Box::new(bidir_gru(rng, feat, cfg.hybrid_units, false)));
            head(rng, 2 * cfg.hybrid_units, &mut layers);
        }
        ArchitectureId::CnnBiLstmAtt => {
            let (mut front, feat) = conv_front(rng, cfg, channels, w)?;
            layers.append(&mut front);
            layers.push(Box::new(bidir_lstm(rng, feat, cfg.hybrid_units, true)));
            layers.push(Box::new(SelfAttention::new(
                rng,
                "attention",
                2 * cfg.hybrid_units,
            )));
            head(rng, 2 * cfg.hybrid_units, &mut layers);
        }
        ArchitectureId::CnnBiGruAtt => {
            let (mut front, feat) = conv_front(rng, cfg, channels, w)?;
            layers.append(&mut front);
            layers.push(Box::new(bidir_gru(rng, feat, cfg.hybrid_units, true)));
            layers.push(Box::new(SelfAttention::new(
                rng,
                "attention",
                2 * cfg.hybrid_units,
            )));
            head(rng, 2 * cfg.hybrid_units, &mut layers);
        }
    }
    Ok(Sequential::new(id.name(), layers))
}

/// Mean attention weight per timestep position over a set of inputs.
pub fn attention_profile(model: &mut Sequential, inputs: &[Tensor]) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::data("attention profile needs at least one input"));
    }
    let mut acc: Option<Vec<f64>> = None;
    for x in inputs {
        model.predict_one(x)?;
        let w = model.attention_weights().ok_or_else(|| {
            Error::config(format!("model {} has no attention layer", model.name))
        })?;
        match &mut acc {
            None => acc = Some(w),
            Some(a) => {
                if a.len() != w.len() {
                    return Err(Error::shape(
                        "attention length varies across inputs".to_string(),
                    ));
                }
                for (s, v) in a.iter_mut().zip(&w) {
                    *s += v;
                }
            }
        }
    }
    let mut profile = acc.unwrap();
    let n = inputs.len() as f64;
    profile.iter_mut().for_each(|v| *v /= n);
    Ok(profile)
}
