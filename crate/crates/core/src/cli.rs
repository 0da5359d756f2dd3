//! Command-line front end: one subcommand per pipeline stage, JSON run
//! configs, and reproducible run manifests (config + seed + versions +
//! input hashes) written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    build_dataset, normalize, save_cache, split, CacheProvenance, NormStats, SplitSpec,
    DEFAULT_WINDOW,
};
use crate::error::Error;
use crate::eval::{
    accuracy_many, accuracy_table_csv, event_mae_many, mae_csv, predict_recording_raw,
    protocol_row, run_ablation, run_protocol, subset_label, EvalReport, GroupSel,
    PipelineConfig, ToleranceSpec,
};
use crate::events::{detect_events, DetectorParams, EventList, Side};
use crate::neuralnet::{checkpoint, train, Sequential, TrainConfig};
use crate::postprocess::{to_events, validate, PulseRules, RawOutput};
use crate::signal::{load_recording, save_recording_csv, BandSpec, Channel, CsvSchema, Group, Recording};
use crate::synthgait::{generate_cohort, GaitParams};
use crate::zoo::{build, ArchitectureId, ZooConfig, ALL_ARCHITECTURES};
use crate::Result;

/// Full run configuration: everything a training / evaluation run needs.
/// Serialized verbatim into the run manifest so any run can be replayed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ArchitectureId,
    pub channels: Vec<Channel>,
    pub window: usize,
    pub band: BandSpec,
    pub zoo: ZooConfig,
    pub train: TrainConfig,
    pub rules: PulseRules,
    pub tolerance: ToleranceSpec,
    pub split: SplitSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ArchitectureId::CnnBiGruAtt,
            channels: Channel::PELVIS.to_vec(),
            window: DEFAULT_WINDOW,
            band: BandSpec::default(),
            zoo: ZooConfig::default(),
            train: TrainConfig::default(),
            rules: PulseRules::default(),
            tolerance: ToleranceSpec::default(),
            split: SplitSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::config("channel subset is empty"));
        }
        if self.window == 0 {
            return Err(Error::config("window must be positive"));
        }
        self.train.validate()?;
        self.rules.validate()?;
        self.tolerance.validate()?;
        self.split.validate()?;
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            architecture: self.model,
            channels: self.channels.clone(),
            window: self.window,
            zoo: self.zoo.clone(),
            train: self.train.clone(),
            rules: self.rules,
            tolerance: self.tolerance.clone(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "gaitevents",
    version,
    about = "Gait event detection from a single waist-worn IMU"
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic cohort of recordings with groundtruth events
    Generate(GenerateArgs),
    /// Extract HS/TO groundtruth events from a recording's foot gyro
    ExtractEvents(ExtractEventsArgs),
    /// Window, normalize, and cache train/val/test datasets from a cohort
    BuildDataset(BuildDatasetArgs),
    /// List the model zoo with parameter counts
    ListModels,
    /// Train a model on a cohort and save a checkpoint
    Train(TrainArgs),
    /// Run a trained model over a recording, emitting raw phase outputs
    Predict(PredictArgs),
    /// Clean raw phase outputs with the pulse rules and emit events
    Postprocess(PostprocessArgs),
    /// Score predicted events against groundtruth over tolerance windows
    Evaluate(EvaluateArgs),
    /// Run the channel-subset ablation table
    Ablate(AblateArgs),
    /// Run a cross-group train/test protocol
    Protocol(ProtocolArgs),
    /// Plot accuracy-vs-window curves from evaluation reports
    Plot(PlotArgs),
}

/// Flags shared by every subcommand that consumes a RunConfig. Flags
/// override fields of `--config`; `--seed` overrides both the training and
/// the split seed.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON file holding a full RunConfig
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model id, e.g. CNN-BiGRU-Att (see list-models)
    #[arg(long)]
    model: Option<ArchitectureId>,
    /// Comma-separated pelvis channels, e.g. AP,ML,V,ROT
    #[arg(long)]
    channels: Option<String>,
    /// Sliding-window length in timesteps
    #[arg(long)]
    window: Option<usize>,
    /// Seed for weight init, shuffling, and the subject split
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum training epochs
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    patience: Option<usize>,
    /// Band-pass low edge in Hz
    #[arg(long)]
    band_low: Option<f64>,
    /// Band-pass high edge in Hz
    #[arg(long)]
    band_high: Option<f64>,
    #[arg(long)]
    conv_filters: Option<usize>,
    #[arg(long)]
    rnn_units: Option<usize>,
    #[arg(long)]
    hybrid_units: Option<usize>,
    /// Pulse rule: minimum |max| of a valid pulse
    #[arg(long)]
    pulse_max: Option<f64>,
    /// Pulse rule: minimum |mean| of a valid pulse
    #[arg(long)]
    pulse_mean: Option<f64>,
    /// Pulse rule: minimum width in timesteps
    #[arg(long)]
    pulse_width: Option<usize>,
    /// Tolerance windows, e.g. 1..6 or 1,2,4
    #[arg(long)]
    windows: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| Error::config(format!("bad config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(s) = &self.channels {
            cfg.channels = parse_channels(s)?;
        }
        if let Some(w) = self.window {
            cfg.window = w;
        }
        if let Some(e) = self.epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.train.lr = lr;
        }
        if let Some(p) = self.patience {
            cfg.train.patience = p;
        }
        if let Some(f) = self.band_low {
            cfg.band.low_hz = f;
        }
        if let Some(f) = self.band_high {
            cfg.band.high_hz = f;
        }
        if let Some(n) = self.conv_filters {
            cfg.zoo.conv_filters = n;
        }
        if let Some(n) = self.rnn_units {
            cfg.zoo.rnn_units = n;
        }
        if let Some(n) = self.hybrid_units {
            cfg.zoo.hybrid_units = n;
        }
        if let Some(v) = self.pulse_max {
            cfg.rules.max_threshold = v;
        }
        if let Some(v) = self.pulse_mean {
            cfg.rules.mean_threshold = v;
        }
        if let Some(v) = self.pulse_width {
            cfg.rules.min_width_ts = v;
        }
        if let Some(spec) = &self.windows {
            cfg.tolerance = parse_windows(spec)?;
        }
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            cfg.split.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse args, run, and return the process exit code: 0 success, 1 usage
/// error, 2 data/runtime error.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::ExtractEvents(a) => cmd_extract_events(a),
        Cmd::BuildDataset(a) => cmd_build_dataset(a),
        Cmd::ListModels => cmd_list_models(),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Predict(a) => cmd_predict(a),
        Cmd::Postprocess(a) => cmd_postprocess(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Ablate(a) => cmd_ablate(a),
        Cmd::Protocol(a) => cmd_protocol(a),
        Cmd::Plot(a) => cmd_plot(a),
    }
}

fn parse_channels(s: &str) -> Result<Vec<Channel>> {
    s.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            Channel::from_tag(&t.to_ascii_uppercase())
                .ok_or_else(|| Error::config(format!("unknown channel tag {t:?}")))
        })
        .collect()
}

fn parse_windows(spec: &str) -> Result<ToleranceSpec> {
    let bad = || Error::config(format!("bad windows spec {spec:?}; expected e.g. 1..6 or 1,2,4"));
    let windows_ts: Vec<usize> = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        spec.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    let tol = ToleranceSpec { windows_ts };
    tol.validate()?;
    Ok(tol)
}

// ---------------------------------------------------------------------------
// Run manifests

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    version: &'static str,
    seed: u64,
    config: &'a C,
    inputs: Vec<InputHash>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn write_manifest<C: Serialize>(
    dest: &Path,
    command: &str,
    seed: u64,
    config: &C,
    inputs: &[PathBuf],
) -> Result<()> {
    let mut hashed = Vec::with_capacity(inputs.len());
    for p in inputs {
        hashed.push(InputHash {
            path: p.display().to_string(),
            sha256: sha256_file(p)?,
        });
    }
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        inputs: hashed,
    };
    write_json(dest, &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Manifest path for a single-file output: `<file>.manifest.json`.
fn file_manifest_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", out.display()))
}

// ---------------------------------------------------------------------------
// Cohort directories

pub const COHORT_INDEX: &str = "cohort.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortEntry {
    pub file: String,
    pub events: String,
    pub subject_id: String,
    pub group: Group,
    pub speed: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortIndex {
    pub sample_rate_hz: f64,
    pub recordings: Vec<CohortEntry>,
}

/// Load every recording listed in a cohort directory's index, attaching
/// groundtruth events. Also returns the file paths read, for manifests.
pub fn load_cohort(dir: &Path) -> Result<(Vec<Recording>, Vec<PathBuf>)> {
    let index_path = dir.join(COHORT_INDEX);
    let text = fs::read_to_string(&index_path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", index_path.display())))?;
    let index: CohortIndex = serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("bad cohort index {}: {e}", index_path.display())))?;
    let schema = CsvSchema::identity(index.sample_rate_hz);
    let mut recordings = Vec::with_capacity(index.recordings.len());
    let mut inputs = vec![index_path];
    for entry in &index.recordings {
        let csv_path = dir.join(&entry.file);
        let events_path = dir.join(&entry.events);
        let mut rec = load_recording(&csv_path, &schema)?;
        rec.subject_id = entry.subject_id.clone();
        rec.group = entry.group;
        rec.truth_events = Some(EventList::from_json_file(&events_path)?);
        inputs.push(csv_path);
        inputs.push(events_path);
        recordings.push(rec);
    }
    Ok((recordings, inputs))
}

fn bandpass_cohort(recordings: &mut [Recording], band: &BandSpec) -> Result<()> {
    for rec in recordings.iter_mut() {
        rec.bandpass_all(band)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output directory for the cohort
    #[arg(long)]
    out: PathBuf,
    /// Number of healthy subjects
    #[arg(long, default_value_t = 5)]
    healthy: usize,
    /// Number of patient subjects
    #[arg(long, default_value_t = 5)]
    patient: usize,
    /// Recording duration in seconds
    #[arg(long, default_value_t = 30.0)]
    duration_s: f64,
    /// Sample rate in Hz
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean stride duration in seconds
    #[arg(long, default_value_t = 1.1)]
    stride_s: f64,
    /// Std of per-stride duration noise in seconds
    #[arg(long, default_value_t = 0.02)]
    speed_jitter: f64,
    /// Std of additive white noise on every channel
    #[arg(long, default_value_t = 0.02)]
    amp_noise: f64,
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let base = GaitParams {
        stride_s: a.stride_s,
        speed_jitter: a.speed_jitter,
        amp_noise: a.amp_noise,
        seed: a.seed,
        ..GaitParams::default()
    };
    #[derive(Serialize)]
    struct GenerateConfig<'p> {
        healthy: usize,
        patient: usize,
        duration_s: f64,
        sample_rate_hz: f64,
        params: &'p GaitParams,
    }
    let recordings = generate_cohort(a.healthy, a.patient, &base, a.duration_s, a.rate)?;
    ensure_dir(&a.out)?;
    let mut entries = Vec::with_capacity(recordings.len());
    let mut speed_counts: std::collections::BTreeMap<String, usize> = Default::default();
    for rec in &recordings {
        // generate_cohort emits two recordings per subject: preferred, fast
        let n = speed_counts.entry(rec.subject_id.clone()).or_insert(0);
        let speed = if *n == 0 { "preferred" } else { "fast" };
        *n += 1;
        let stem = format!("{}_{}", rec.subject_id, speed);
        let file = format!("{stem}.csv");
        let events = format!("{stem}.events.json");
        save_recording_csv(rec, &a.out.join(&file))?;
        rec.truth_events
            .as_ref()
            .expect("generator always attaches truth events")
            .to_json_file(&a.out.join(&events))?;
        entries.push(CohortEntry {
            file,
            events,
            subject_id: rec.subject_id.clone(),
            group: rec.group,
            speed: speed.to_string(),
        });
    }
    let index = CohortIndex {
        sample_rate_hz: a.rate,
        recordings: entries,
    };
    write_json(&a.out.join(COHORT_INDEX), &index)?;
    let config = GenerateConfig {
        healthy: a.healthy,
        patient: a.patient,
        duration_s: a.duration_s,
        sample_rate_hz: a.rate,
        params: &base,
    };
    write_manifest(&a.out.join("manifest.json"), "generate", a.seed, &config, &[])?;
    println!(
        "wrote {} recordings ({} subjects) to {}",
        index.recordings.len(),
        a.healthy + a.patient,
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// extract-events

#[derive(Args, Debug)]
struct ExtractEventsArgs {
    /// Recording CSV (identity column layout unless --schema is given)
    #[arg(long)]
    input: PathBuf,
    /// Output events JSON
    #[arg(long)]
    out: PathBuf,
    /// CSV column-mapping JSON
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Sample rate in Hz when no schema file is given
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    /// Band-pass low edge in Hz
    #[arg(long, default_value_t = 0.5)]
    band_low: f64,
    /// Band-pass high edge in Hz
    #[arg(long, default_value_t = 6.0)]
    band_high: f64,
}

fn cmd_extract_events(a: ExtractEventsArgs) -> Result<()> {
    let schema = match &a.schema {
        Some(p) => CsvSchema::from_json_file(p)?,
        None => CsvSchema::identity(a.rate),
    };
    let band = BandSpec {
        low_hz: a.band_low,
        high_hz: a.band_high,
    };
    let mut rec = load_recording(&a.input, &schema)?;
    rec.bandpass_all(&band)?;
    let params = DetectorParams::default();
    let mut merged = EventList::empty();
    for (ch, side) in [(Channel::FootSagL, Side::L), (Channel::FootSagR, Side::R)] {
        let det = detect_events(rec.channel(ch), side, &params)?;
        for w in &det.warnings {
            eprintln!("warning ({side:?}): {w}");
        }
        merged = merged.merge(&det.events)?;
    }
    merged.to_json_file(&a.out)?;
    #[derive(Serialize)]
    struct ExtractConfig {
        band: BandSpec,
        detector: DetectorParams,
        sample_rate_hz: f64,
    }
    let config = ExtractConfig {
        band,
        detector: params,
        sample_rate_hz: schema.sample_rate_hz,
    };
    let mut inputs = vec![a.input.clone()];
    if let Some(p) = &a.schema {
        inputs.push(p.clone());
    }
    write_manifest(&file_manifest_path(&a.out), "extract-events", 0, &config, &inputs)?;
    println!("wrote {} events to {}", merged.len(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// build-dataset

#[derive(Args, Debug)]
struct BuildDatasetArgs {
    /// Cohort directory (from `generate`)
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the dataset caches
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

fn cmd_build_dataset(a: BuildDatasetArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let (mut recordings, inputs) = load_cohort(&a.data)?;
    bandpass_cohort(&mut recordings, &cfg.band)?;
    let (train_recs, val_recs, test_recs) = split(&recordings, &cfg.split)?;
    ensure_dir(&a.out)?;
    let source_files: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    let mut stats: Option<NormStats> = None;
    for (name, recs) in [
        ("train", &train_recs),
        ("val", &val_recs),
        ("test", &test_recs),
    ] {
        let mut ds = build_dataset(recs, &cfg.channels, cfg.window)?;
        let computed = normalize(&mut ds, stats.as_ref())?;
        if stats.is_none() {
            stats = Some(computed);
        }
        let provenance = CacheProvenance {
            source_files: source_files.clone(),
            seed: Some(cfg.split.seed),
            spec: serde_json::to_value(&cfg)?,
        };
        save_cache(&a.out.join(format!("{name}.ds")), &ds, &provenance)?;
        println!("{name}: {} pairs", ds.pairs.len());
    }
    write_json(&a.out.join("norm.json"), &stats)?;
    write_manifest(
        &a.out.join("manifest.json"),
        "build-dataset",
        cfg.split.seed,
        &cfg,
        &inputs,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// list-models

fn cmd_list_models() -> Result<()> {
    let cfg = ZooConfig::default();
    println!("Model,Parameters");
    for id in ALL_ARCHITECTURES {
        let model = build(id, Channel::PELVIS.len(), DEFAULT_WINDOW, &cfg, 0)?;
        println!("{},{}", id.name(), model.param_count());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args, Debug)]
struct TrainArgs {
    /// Cohort directory (from `generate`)
    #[arg(long)]
    data: PathBuf,
    /// Output run directory (checkpoint + history + manifest)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Serialize)]
struct SplitSummary {
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

fn subject_ids(recs: &[Recording]) -> Vec<String> {
    let set: std::collections::BTreeSet<String> =
        recs.iter().map(|r| r.subject_id.clone()).collect();
    set.into_iter().collect()
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let (mut recordings, inputs) = load_cohort(&a.data)?;
    bandpass_cohort(&mut recordings, &cfg.band)?;
    let (train_recs, val_recs, test_recs) = split(&recordings, &cfg.split)?;
    let mut train_ds = build_dataset(&train_recs, &cfg.channels, cfg.window)?;
    let stats = normalize(&mut train_ds, None)?;
    let mut val_ds = build_dataset(&val_recs, &cfg.channels, cfg.window)?;
    if !val_ds.pairs.is_empty() {
        normalize(&mut val_ds, Some(&stats))?;
    }
    let mut model = build(
        cfg.model,
        cfg.channels.len(),
        cfg.window,
        &cfg.zoo,
        cfg.train.seed,
    )?;
    println!(
        "training {} ({} params) on {} pairs, validating on {}",
        cfg.model.name(),
        model.param_count(),
        train_ds.pairs.len(),
        val_ds.pairs.len()
    );
    let history = train(
        &mut model,
        &train_ds.training_pairs(),
        &val_ds.training_pairs(),
        &cfg.train,
    )?;
    ensure_dir(&a.out)?;
    let manifest = checkpoint::Manifest {
        format_version: checkpoint::FORMAT_VERSION,
        architecture: cfg.model.name().to_string(),
        input_channels: cfg.channels.len(),
        window: cfg.window,
        seed: cfg.train.seed,
        hyper: serde_json::to_value(&cfg)?,
        norm: serde_json::to_value(&stats)?,
        history: Some(history.clone()),
        params: Vec::new(),
    };
    checkpoint::save(&a.out, &model, manifest)?;
    write_json(&a.out.join("history.json"), &history)?;
    write_json(
        &a.out.join("split.json"),
        &SplitSummary {
            train: subject_ids(&train_recs),
            val: subject_ids(&val_recs),
            test: subject_ids(&test_recs),
        },
    )?;
    write_manifest(&a.out.join("manifest.json"), "train", cfg.train.seed, &cfg, &inputs)?;
    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "done: {} epochs (best {}), train loss {:.6}, val loss {:.6}",
        history.epochs.len(),
        history.best_epoch,
        last.train_loss,
        last.val_loss
    );
    Ok(())
}

/// Rebuild a trained model (and its RunConfig + normalization stats) from a
/// run directory written by `train`.
pub fn load_trained(run_dir: &Path) -> Result<(Sequential, RunConfig, NormStats)> {
    let (manifest, values) = checkpoint::load(run_dir)?;
    let cfg: RunConfig = serde_json::from_value(manifest.hyper.clone())
        .map_err(|e| Error::parse(format!("bad hyper block in checkpoint manifest: {e}")))?;
    let stats: NormStats = serde_json::from_value(manifest.norm.clone())
        .map_err(|e| Error::parse(format!("bad norm block in checkpoint manifest: {e}")))?;
    let mut model = build(
        cfg.model,
        cfg.channels.len(),
        cfg.window,
        &cfg.zoo,
        manifest.seed,
    )?;
    checkpoint::apply(&mut model, &manifest, &values)?;
    Ok((model, cfg, stats))
}

// ---------------------------------------------------------------------------
// predict

#[derive(Args, Debug)]
struct PredictArgs {
    /// Run directory written by `train`
    #[arg(long)]
    run: PathBuf,
    /// Recording CSV to predict on
    #[arg(long)]
    input: PathBuf,
    /// Output raw phase-output JSON
    #[arg(long)]
    out: PathBuf,
    /// CSV column-mapping JSON
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Sample rate in Hz when no schema file is given
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let (mut model, cfg, stats) = load_trained(&a.run)?;
    let schema = match &a.schema {
        Some(p) => CsvSchema::from_json_file(p)?,
        None => CsvSchema::identity(a.rate),
    };
    let mut rec = load_recording(&a.input, &schema)?;
    rec.bandpass_all(&cfg.band)?;
    let raw = predict_recording_raw(&mut model, &rec, &cfg.pipeline(), &stats)?;
    write_json(&a.out, &raw)?;
    let mut inputs = vec![
        a.input.clone(),
        a.run.join(checkpoint::MANIFEST_FILE),
        a.run.join(checkpoint::BLOB_FILE),
    ];
    if let Some(p) = &a.schema {
        inputs.push(p.clone());
    }
    write_manifest(&file_manifest_path(&a.out), "predict", cfg.train.seed, &cfg, &inputs)?;
    println!("wrote raw outputs ({} timesteps) to {}", rec.len(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// postprocess

#[derive(Args, Debug)]
struct PostprocessArgs {
    /// Raw phase-output JSON (from `predict`)
    #[arg(long)]
    raw: PathBuf,
    /// Output events JSON
    #[arg(long)]
    out: PathBuf,
    /// Pulse rule: minimum |max| of a valid pulse
    #[arg(long, default_value_t = PulseRules::default().max_threshold)]
    pulse_max: f64,
    /// Pulse rule: minimum |mean| of a valid pulse
    #[arg(long, default_value_t = PulseRules::default().mean_threshold)]
    pulse_mean: f64,
    /// Pulse rule: minimum width in timesteps
    #[arg(long, default_value_t = PulseRules::default().min_width_ts)]
    pulse_width: usize,
}

fn cmd_postprocess(a: PostprocessArgs) -> Result<()> {
    let rules = PulseRules {
        max_threshold: a.pulse_max,
        mean_threshold: a.pulse_mean,
        min_width_ts: a.pulse_width,
    };
    rules.validate()?;
    let text = fs::read_to_string(&a.raw)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", a.raw.display())))?;
    let raw: RawOutput = serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("bad raw output {}: {e}", a.raw.display())))?;
    let phases = validate(&raw, &rules)?;
    let events = to_events(&phases)?;
    events.to_json_file(&a.out)?;
    write_manifest(
        &file_manifest_path(&a.out),
        "postprocess",
        0,
        &rules,
        &[a.raw.clone()],
    )?;
    println!("wrote {} events to {}", events.len(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Predicted events: a JSON file or a directory of `*.events.json`
    #[arg(long)]
    pred: PathBuf,
    /// Groundtruth events: a JSON file or a directory (paired by file name)
    #[arg(long)]
    truth: PathBuf,
    /// Tolerance windows, e.g. 1..6 or 1,2,4
    #[arg(long, default_value = "1..6")]
    windows: String,
    /// Sample rate in Hz, for MAE in milliseconds
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    /// Optional output report JSON; the CSV summary always goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn event_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().ends_with(".events.json"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::data(format!(
                "no *.events.json files in {}",
                path.display()
            )));
        }
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let tolerance = parse_windows(&a.windows)?;
    let pred_files = event_files(&a.pred)?;
    let truth_files = event_files(&a.truth)?;
    let pairs: Vec<(PathBuf, PathBuf)> = if a.pred.is_dir() || a.truth.is_dir() {
        // pair by file name
        let by_name = |files: &[PathBuf]| -> std::collections::BTreeMap<String, PathBuf> {
            files
                .iter()
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), p.clone()))
                .collect()
        };
        let preds = by_name(&pred_files);
        let truths = by_name(&truth_files);
        let joined: Vec<_> = preds
            .iter()
            .filter_map(|(name, p)| truths.get(name).map(|t| (p.clone(), t.clone())))
            .collect();
        if joined.is_empty() {
            return Err(Error::data("no prediction/truth files share a name"));
        }
        joined
    } else {
        vec![(a.pred.clone(), a.truth.clone())]
    };
    let mut event_pairs = Vec::with_capacity(pairs.len());
    let mut inputs = Vec::new();
    for (p, t) in &pairs {
        event_pairs.push((EventList::from_json_file(p)?, EventList::from_json_file(t)?));
        inputs.push(p.clone());
        inputs.push(t.clone());
    }
    let accuracy = accuracy_many(&event_pairs, &tolerance)?;
    let max_window = *tolerance.windows_ts.last().expect("validated non-empty");
    let mae = event_mae_many(&event_pairs, max_window, a.rate).ok();
    let report = EvalReport {
        protocol: "eval".to_string(),
        truth_events: event_pairs.iter().map(|(_, t)| t.len()).sum(),
        predicted_events: event_pairs.iter().map(|(p, _)| p.len()).sum(),
        accuracy,
        mae,
    };
    print!(
        "{}",
        accuracy_table_csv(&[("pred".to_string(), report.accuracy.clone())])
    );
    if let Some(mae) = &report.mae {
        print!("{}", mae_csv(mae));
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        #[derive(Serialize)]
        struct EvaluateConfig {
            tolerance: ToleranceSpec,
            sample_rate_hz: f64,
        }
        let config = EvaluateConfig {
            tolerance,
            sample_rate_hz: a.rate,
        };
        write_manifest(&file_manifest_path(out), "evaluate", 0, &config, &inputs)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate

#[derive(Args, Debug)]
struct AblateArgs {
    /// Cohort directory (from `generate`)
    #[arg(long)]
    data: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// JSON file: array of channel-tag arrays, e.g. [["ML"],["AP","ML"]]
    #[arg(long)]
    subsets: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn default_subsets() -> Vec<Vec<Channel>> {
    use Channel::*;
    vec![
        vec![Ml],
        vec![Ap, Ml],
        vec![Ap, Ml, V, Rot],
        Channel::PELVIS.to_vec(),
    ]
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let subsets = match &a.subsets {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
            let tags: Vec<Vec<String>> = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("bad subsets file {}: {e}", path.display())))?;
            tags.iter()
                .map(|row| parse_channels(&row.join(",")))
                .collect::<Result<Vec<_>>>()?
        }
        None => default_subsets(),
    };
    let (mut recordings, mut inputs) = load_cohort(&a.data)?;
    bandpass_cohort(&mut recordings, &cfg.band)?;
    let (train_recs, val_recs, test_recs) = split(&recordings, &cfg.split)?;
    let rows = run_ablation(&train_recs, &val_recs, &test_recs, &subsets, &cfg.pipeline())?;
    ensure_dir(&a.out)?;
    let mut csv = String::from("No of input signals,Input signals");
    for w in &cfg.tolerance.windows_ts {
        csv.push_str(&format!(",\u{b1}{w}TS"));
    }
    csv.push('\n');
    for row in &rows {
        csv.push_str(&format!("{},\"{}\"", row.subset.len(), subset_label(&row.subset)));
        for acc in &row.report.accuracy {
            csv.push_str(&format!(",{:.2}", acc.overall_pct));
        }
        csv.push('\n');
    }
    fs::write(a.out.join("ablation.csv"), &csv)?;
    write_json(&a.out.join("ablation.json"), &rows)?;
    if let Some(path) = &a.subsets {
        inputs.push(path.clone());
    }
    write_manifest(&a.out.join("manifest.json"), "ablate", cfg.train.seed, &cfg, &inputs)?;
    print!("{csv}");
    Ok(())
}

// ---------------------------------------------------------------------------
// protocol

#[derive(Args, Debug)]
struct ProtocolArgs {
    /// Cohort directory (from `generate`)
    #[arg(long)]
    data: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Training group: healthy, patient, or mixed
    #[arg(long)]
    train_group: GroupSel,
    /// Test group: healthy, patient, or mixed
    #[arg(long)]
    test_group: GroupSel,
    #[command(flatten)]
    config: ConfigArgs,
}

fn cmd_protocol(a: ProtocolArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let (mut recordings, inputs) = load_cohort(&a.data)?;
    bandpass_cohort(&mut recordings, &cfg.band)?;
    let report = run_protocol(
        &recordings,
        a.train_group,
        a.test_group,
        &cfg.split,
        &cfg.pipeline(),
    )?;
    ensure_dir(&a.out)?;
    let mut csv = String::from("Train,Test");
    for w in &cfg.tolerance.windows_ts {
        csv.push_str(&format!(",\u{b1}{w}TS"));
    }
    csv.push('\n');
    csv.push_str(&protocol_row(&report));
    csv.push('\n');
    fs::write(a.out.join("protocol.csv"), &csv)?;
    write_json(&a.out.join("report.json"), &report)?;
    write_manifest(&a.out.join("manifest.json"), "protocol", cfg.train.seed, &cfg, &inputs)?;
    print!("{csv}");
    Ok(())
}

// ---------------------------------------------------------------------------
// plot

#[derive(Args, Debug)]
struct PlotArgs {
    /// Evaluation report JSON files (one curve each)
    #[arg(long, required = true, num_args = 1..)]
    report: Vec<PathBuf>,
    /// Output directory (plot.csv + plot.svg)
    #[arg(long)]
    out: PathBuf,
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let mut series: Vec<(String, Vec<crate::eval::WindowAccuracy>)> = Vec::new();
    for path in &a.report {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        let report: EvalReport = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("bad report {}: {e}", path.display())))?;
        let name = if report.protocol.is_empty() || report.protocol == "eval" {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "report".to_string())
        } else {
            report.protocol.clone()
        };
        series.push((name, report.accuracy));
    }
    ensure_dir(&a.out)?;
    let csv = accuracy_table_csv(&series);
    fs::write(a.out.join("plot.csv"), &csv)?;
    fs::write(a.out.join("plot.svg"), render_accuracy_svg(&series))?;
    write_manifest(&a.out.join("manifest.json"), "plot", 0, &(), &a.report)?;
    println!("wrote plot.csv and plot.svg to {}", a.out.display());
    Ok(())
}

const SVG_PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Accuracy-vs-tolerance-window line plot as a standalone SVG document.
fn render_accuracy_svg(series: &[(String, Vec<crate::eval::WindowAccuracy>)]) -> String {
    let (width, height) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 20.0, 50.0);
    let (pw, ph) = (width - left - right, height - top - bottom);
    let mut xs: Vec<usize> = Vec::new();
    let mut y_min: f64 = 100.0;
    for (_, acc) in series {
        for a in acc {
            if !xs.contains(&a.window_ts) {
                xs.push(a.window_ts);
            }
            y_min = y_min.min(a.overall_pct);
        }
    }
    xs.sort_unstable();
    let y_min = (y_min - 5.0).max(0.0).floor();
    let y_max = 100.0;
    let x_lo = *xs.first().unwrap_or(&1) as f64;
    let x_hi = *xs.last().unwrap_or(&6) as f64;
    let x_span = (x_hi - x_lo).max(1.0);
    let px = |w: f64| left + (w - x_lo) / x_span * pw;
    let py = |v: f64| top + (y_max - v) / (y_max - y_min).max(1e-9) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + ph,
        left + pw,
        top + ph
    ));
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + ph
    ));
    for &w in &xs {
        let x = px(w as f64);
        svg.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{0}\" x2=\"{x}\" y2=\"{1}\" stroke=\"black\"/>\n  \
             <text x=\"{x}\" y=\"{2}\" text-anchor=\"middle\">\u{b1}{w}</text>\n",
            top + ph,
            top + ph + 5.0,
            top + ph + 20.0
        ));
    }
    let n_ticks = 5;
    for i in 0..=n_ticks {
        let v = y_min + (y_max - y_min) * i as f64 / n_ticks as f64;
        let y = py(v);
        svg.push_str(&format!(
            "  <line x1=\"{0}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\n  \
             <text x=\"{1}\" y=\"{2}\" text-anchor=\"end\">{v:.0}</text>\n",
            left - 5.0,
            left - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">Tolerance window (TS)</text>\n",
        left + pw / 2.0,
        height - 10.0
    ));
    svg.push_str(&format!(
        "  <text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {0})\">\
         Accuracy (%)</text>\n",
        top + ph / 2.0
    ));
    for (i, (name, acc)) in series.iter().enumerate() {
        let color = SVG_PALETTE[i % SVG_PALETTE.len()];
        let points: Vec<String> = acc
            .iter()
            .map(|a| format!("{:.2},{:.2}", px(a.window_ts as f64), py(a.overall_pct)))
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            points.join(" ")
        ));
        for a in acc {
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                px(a.window_ts as f64),
                py(a.overall_pct)
            ));
        }
        let ly = top + 15.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "  <line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n  <text x=\"{2}\" y=\"{3}\">{name}</text>\n",
            left + pw - 140.0,
            left + pw - 115.0,
            left + pw - 110.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_spec_range_and_list() {
        assert_eq!(parse_windows("1..6").unwrap().windows_ts, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(parse_windows("1,3,5").unwrap().windows_ts, vec![1, 3, 5]);
        assert!(parse_windows("6..1").is_err());
        assert!(parse_windows("abc").is_err());
    }

    #[test]
    fn channel_list_parses_case_insensitively() {
        assert_eq!(
            parse_channels("ap, ml,ROT").unwrap(),
            vec![Channel::Ap, Channel::Ml, Channel::Rot]
        );
        assert!(parse_channels("ap,xx").is_err());
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(dispatch(["gaitevents", "frobnicate"]), 1);
        assert_eq!(dispatch(["gaitevents", "train", "--bogus-flag"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(dispatch(["gaitevents", "--help"]), 0);
    }

    #[test]
    fn run_config_default_is_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let acc = |p: f64| crate::eval::WindowAccuracy {
            window_ts: 1,
            overall_pct: p,
            hs_pct: p,
            to_pct: p,
            right_pct: p,
            left_pct: p,
            matched: 0,
            spurious: 0,
        };
        let series = vec![
            ("a".to_string(), vec![acc(90.0)]),
            ("b".to_string(), vec![acc(95.0)]),
        ];
        let svg = render_accuracy_svg(&series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("</svg>"));
    }
}
