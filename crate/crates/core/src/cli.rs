//! The `rantwin` command line: dataset generation, training, evaluation,
//! t-SNE export and the closed-loop demo, each leaving a JSON run manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anomaly::{
    generate_dataset, load_dataset, save_dataset, split_dataset, standardize, AnomalyClass, DatasetConfig,
    FeatureStats, LabeledSample, Split, N_FEATURES,
};
use crate::error::{Error, Result};
use crate::eval::{confusion, silhouette, tsne, ConfusionMatrix, TsneConfig};
use crate::mlp::{accuracy_on, train, Example, MlpModel, TrainConfig, TrainReport};
use crate::ric::{
    closed_loop_run, default_demo_schedule, parse_schedule, write_messages_jsonl, LoopOptions, RemediationPolicy,
    ScheduledFault,
};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 11 }
    }
}

/// Everything a pipeline run can be configured with. Every section is
/// optional in the TOML file; missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub tsne: TsneConfig,
    pub policy: RemediationPolicy,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::from_toml_str(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.dataset.validate()?;
        self.train.validate()?;
        self.policy.validate()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::config("split.train_fraction", "must lie strictly between 0 and 1"));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings_ms: BTreeMap<String, f64>,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunManifest {
    fn new(command: &str, config: PipelineConfig) -> Self {
        Self {
            command: command.to_string(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
            exit_code: 0,
            error: None,
        }
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(FileRecord { path: path.to_path_buf(), sha256: None });
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(FileRecord { path: path.to_path_buf(), sha256: None });
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    /// Fill in digests for every listed file that exists.
    fn seal(&mut self) {
        for rec in self.inputs.iter_mut().chain(self.outputs.iter_mut()) {
            rec.sha256 = file_digest(&rec.path).ok();
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Parser)]
#[command(name = "rantwin", version, about = "RAN digital twin with KPI anomaly detection")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (defaults next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Print the fully expanded default configuration and exit.
    #[arg(long)]
    pub print_default_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the RAN with fault injection and write a labeled dataset.
    GenDataset(GenDatasetArgs),
    /// Split, standardize and train the classifier.
    Train(TrainArgs),
    /// Confusion matrix and per-class metrics on the test split.
    Eval(EvalArgs),
    /// Embed the model's test-split probability vectors in 2-D.
    Tsne(TsneArgs),
    /// Run the simulator with the detection xApp in the loop.
    ClosedLoop(ClosedLoopArgs),
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long, default_value = "dataset.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Seed for fault scheduling and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for the simulator itself.
    #[arg(long)]
    pub sim_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "dataset.csv")]
    pub dataset: PathBuf,
    #[arg(long, default_value = "model.txt")]
    pub model_out: PathBuf,
    #[arg(long, default_value = "stats.csv")]
    pub stats_out: PathBuf,
    #[arg(long, default_value = "train_report.csv")]
    pub report_out: PathBuf,
    /// Seed for weight initialization and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value = "model.txt")]
    pub model: PathBuf,
    #[arg(long, default_value = "stats.csv")]
    pub stats: PathBuf,
    #[arg(long, default_value = "dataset.csv")]
    pub dataset: PathBuf,
    #[arg(long, default_value = "eval")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TsneArgs {
    #[arg(long, default_value = "model.txt")]
    pub model: PathBuf,
    #[arg(long, default_value = "stats.csv")]
    pub stats: PathBuf,
    #[arg(long, default_value = "dataset.csv")]
    pub dataset: PathBuf,
    #[arg(long, default_value = "tsne.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ClosedLoopArgs {
    #[arg(long, default_value = "model.txt")]
    pub model: PathBuf,
    #[arg(long, default_value = "stats.csv")]
    pub stats: PathBuf,
    /// JSON fault schedule; the built-in three-fault demo when omitted.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(long, default_value = "closed_loop")]
    pub out_dir: PathBuf,
    /// Seed for the simulator.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also log every indication to messages.jsonl.
    #[arg(long)]
    pub log_indications: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenDataset(_) => "gen-dataset",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Tsne(_) => "tsne",
            Command::ClosedLoop(_) => "closed-loop",
        }
    }

    fn default_manifest(&self) -> PathBuf {
        let anchor = match self {
            Command::GenDataset(a) => parent_dir(&a.out),
            Command::Train(a) => parent_dir(&a.model_out),
            Command::Eval(a) => a.out_dir.clone(),
            Command::Tsne(a) => parent_dir(&a.out),
            Command::ClosedLoop(a) => a.out_dir.clone(),
        };
        anchor.join(format!("{}.manifest.json", self.name()))
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    if cli.print_default_config {
        print!("{}", PipelineConfig::default().to_toml_string());
        return 0;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return 2;
    };
    let manifest_path = cli.manifest.clone().unwrap_or_else(|| command.default_manifest());
    let (config, config_err) = match PipelineConfig::load(cli.config.as_deref()) {
        Ok(c) => (c, None),
        Err(e) => (PipelineConfig::default(), Some(e)),
    };
    let mut manifest = RunManifest::new(command.name(), config);
    if let Some(p) = &cli.config {
        manifest.input(p);
    }
    let result = match config_err {
        Some(e) => Err(e),
        None => run_command(&command, &mut manifest),
    };
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    manifest.exit_code = code;
    manifest.error = result.err().map(|e| e.to_string());
    manifest.seal();
    if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        let _ = std::fs::create_dir_all(dir);
    }
    if let Err(e) = manifest.write(&manifest_path) {
        eprintln!("error: {e}");
        return if code == 0 { e.exit_code() } else { code };
    }
    code
}

fn run_command(command: &Command, m: &mut RunManifest) -> Result<()> {
    match command {
        Command::GenDataset(a) => cmd_gen_dataset(a, m),
        Command::Train(a) => cmd_train(a, m),
        Command::Eval(a) => cmd_eval(a, m),
        Command::Tsne(a) => cmd_tsne(a, m),
        Command::ClosedLoop(a) => cmd_closed_loop(a, m),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::config(what, format!("{} does not exist", path.display())))
    }
}

pub fn cmd_gen_dataset(a: &GenDatasetArgs, m: &mut RunManifest) -> Result<()> {
    if let Some(n) = a.n_samples {
        m.config.dataset.n_samples = n;
    }
    if let Some(s) = a.seed {
        m.config.dataset.seed = s;
    }
    if let Some(s) = a.sim_seed {
        m.config.sim.seed = s;
    }
    m.seeds.insert("dataset".into(), m.config.dataset.seed);
    m.seeds.insert("sim".into(), m.config.sim.seed);
    m.config.validate()?;
    let (sim, ds) = (m.config.sim.clone(), m.config.dataset.clone());
    let generated = m.time("generate", || generate_dataset(&sim, &ds))?;
    m.output(&a.out);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_dataset(&a.out, &generated.samples)?;
    println!(
        "wrote {} samples ({} ticks simulated, {} faults) to {}",
        generated.samples.len(),
        generated.ticks_simulated,
        generated.faults.len(),
        a.out.display()
    );
    Ok(())
}

/// Standardized examples ready for the network.
pub fn to_examples(samples: &[LabeledSample], stats: &FeatureStats) -> Vec<Example> {
    samples.iter().map(|s| (standardize(&s.features, stats).0, s.label.code() as usize)).collect()
}

#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub split: Split,
    pub stats: FeatureStats,
    pub model: MlpModel,
    pub report: TrainReport,
    pub test_accuracy: f64,
}

/// Split, fit standardization on the training part and train.
pub fn train_pipeline(samples: &[LabeledSample], config: &PipelineConfig) -> Result<TrainedPipeline> {
    let split = split_dataset(samples, config.split.train_fraction, config.split.seed)?;
    for w in &split.warnings {
        log::warn!("{w}");
    }
    let train_features: Vec<_> = split.train.iter().map(|s| s.features).collect();
    let (stats, warnings) = FeatureStats::fit(&train_features)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let train_set = to_examples(&split.train, &stats);
    let test_set = to_examples(&split.test, &stats);
    let init = MlpModel::init(&config.train.hidden_dims, config.train.seed)?;
    let (model, report) = train(init, &train_set, &test_set, &config.train)?;
    let test_accuracy = accuracy_on(&model, &test_set)?;
    Ok(TrainedPipeline { split, stats, model, report, test_accuracy })
}

pub fn cmd_train(a: &TrainArgs, m: &mut RunManifest) -> Result<()> {
    if let Some(s) = a.seed {
        m.config.train.seed = s;
    }
    if let Some(s) = a.split_seed {
        m.config.split.seed = s;
    }
    m.seeds.insert("train".into(), m.config.train.seed);
    m.seeds.insert("split".into(), m.config.split.seed);
    m.config.validate()?;
    m.input(&a.dataset);
    let samples = load_dataset(&a.dataset)?;
    let cfg = m.config.clone();
    let trained = m.time("train", || train_pipeline(&samples, &cfg))?;
    for p in [&a.model_out, &a.stats_out, &a.report_out] {
        m.output(p);
    }
    write_with(&a.model_out, |w| w.write_all(trained.model.to_text().as_bytes()))?;
    let mut stats_w = create(&a.stats_out)?;
    trained.stats.write_csv(&mut stats_w)?;
    stats_w.flush().map_err(|e| Error::io(&a.stats_out, e))?;
    write_with(&a.report_out, |w| trained.report.write_csv(w))?;
    println!(
        "train {} / test {}; model digest {}",
        trained.split.train.len(),
        trained.split.test.len(),
        trained.report.model_digest
    );
    println!("test accuracy: {:.4}", trained.test_accuracy);
    Ok(())
}

fn load_model_and_stats(model: &Path, stats: &Path, m: &mut RunManifest) -> Result<(MlpModel, FeatureStats)> {
    require_file(model, "model")?;
    require_file(stats, "stats")?;
    m.input(model);
    m.input(stats);
    let model = MlpModel::load(model)?;
    let dims = model.dims();
    if dims.first() != Some(&N_FEATURES) || dims.last() != Some(&crate::anomaly::N_CLASSES) {
        return Err(Error::config(
            "model",
            format!("dimension mismatch: model is {dims:?}, expected input {N_FEATURES} and output 4"),
        ));
    }
    Ok((model, FeatureStats::load(stats)?))
}

fn predict_all(model: &MlpModel, stats: &FeatureStats, samples: &[LabeledSample]) -> Result<Vec<AnomalyClass>> {
    samples.iter().map(|s| model.predict(standardize(&s.features, stats).as_slice())).collect()
}

#[derive(Debug, Clone, Serialize)]
struct ClassMetrics {
    class: AnomalyClass,
    support: u64,
    precision: Option<f64>,
    recall: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct Metrics {
    n_test: usize,
    accuracy: f64,
    train_accuracy: f64,
    per_class: Vec<ClassMetrics>,
    warnings: Vec<String>,
}

fn metrics_of(cm: &ConfusionMatrix, n_test: usize, train_accuracy: f64, warnings: Vec<String>) -> Metrics {
    Metrics {
        n_test,
        accuracy: cm.accuracy(),
        train_accuracy,
        per_class: AnomalyClass::ALL
            .iter()
            .map(|&c| ClassMetrics {
                class: c,
                support: cm.counts[c.code() as usize].iter().sum(),
                precision: cm.precision(c.code() as usize),
                recall: cm.recall(c.code() as usize),
            })
            .collect(),
        warnings,
    }
}

pub fn cmd_eval(a: &EvalArgs, m: &mut RunManifest) -> Result<()> {
    if let Some(s) = a.split_seed {
        m.config.split.seed = s;
    }
    m.seeds.insert("split".into(), m.config.split.seed);
    m.config.validate()?;
    let (model, stats) = load_model_and_stats(&a.model, &a.stats, m)?;
    m.input(&a.dataset);
    let samples = load_dataset(&a.dataset)?;
    let split = split_dataset(&samples, m.config.split.train_fraction, m.config.split.seed)?;
    let labels: Vec<_> = split.test.iter().map(|s| s.label).collect();
    let preds = predict_all(&model, &stats, &split.test)?;
    let cm = confusion(&preds, &labels)?;
    let train_labels: Vec<_> = split.train.iter().map(|s| s.label).collect();
    let train_cm = confusion(&predict_all(&model, &stats, &split.train)?, &train_labels)?;
    let mut warnings = split.warnings.clone();
    if train_cm.accuracy() < cm.accuracy() {
        warnings.push(format!(
            "training accuracy {:.4} is below test accuracy {:.4}",
            train_cm.accuracy(),
            cm.accuracy()
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let metrics = metrics_of(&cm, split.test.len(), train_cm.accuracy(), warnings);
    let confusion_path = a.out_dir.join("confusion.csv");
    let metrics_path = a.out_dir.join("metrics.json");
    m.output(&confusion_path);
    m.output(&metrics_path);
    write_with(&confusion_path, |w| cm.write_csv(w))?;
    write_with(&metrics_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &metrics)?;
        w.write_all(b"\n")
    })?;
    println!("test accuracy: {:.4}", metrics.accuracy);
    for c in &metrics.per_class {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        println!("  {:<10} precision {} recall {}", c.class.name(), fmt(c.precision), fmt(c.recall));
    }
    Ok(())
}

/// The model's class-probability vector for every sample.
pub fn probability_vectors(model: &MlpModel, stats: &FeatureStats, samples: &[LabeledSample]) -> Result<Vec<Vec<f64>>> {
    samples.iter().map(|s| Ok(model.forward(standardize(&s.features, stats).as_slice())?.probs.to_vec())).collect()
}

pub fn cmd_tsne(a: &TsneArgs, m: &mut RunManifest) -> Result<()> {
    if let Some(p) = a.perplexity {
        m.config.tsne.perplexity = p;
    }
    if let Some(s) = a.seed {
        m.config.tsne.seed = s;
    }
    if let Some(s) = a.split_seed {
        m.config.split.seed = s;
    }
    m.seeds.insert("tsne".into(), m.config.tsne.seed);
    m.seeds.insert("split".into(), m.config.split.seed);
    m.config.validate()?;
    let (model, stats) = load_model_and_stats(&a.model, &a.stats, m)?;
    m.input(&a.dataset);
    let samples = load_dataset(&a.dataset)?;
    let split = split_dataset(&samples, m.config.split.train_fraction, m.config.split.seed)?;
    let probs = probability_vectors(&model, &stats, &split.test)?;
    m.config.tsne.validate(probs.len())?;
    let tcfg = m.config.tsne.clone();
    let emb = m.time("tsne", || tsne(&probs, &tcfg))?;
    let labels: Vec<u8> = split.test.iter().map(|s| s.label.code()).collect();
    let score = silhouette(&emb.points, &labels)?;
    m.output(&a.out);
    write_with(&a.out, |w| {
        writeln!(w, "ue_id,tick,label,x,y")?;
        for (s, p) in split.test.iter().zip(&emb.points) {
            writeln!(w, "{},{},{},{:?},{:?}", s.ue_id, s.tick, s.label.code(), p[0], p[1])?;
        }
        Ok(())
    })?;
    println!("kl divergence: {:.4} -> {:.4}", emb.initial_kl, emb.final_kl);
    println!("silhouette: {score:.4}");
    Ok(())
}

pub fn load_schedule(path: Option<&Path>) -> Result<Vec<ScheduledFault>> {
    match path {
        None => Ok(default_demo_schedule()),
        Some(p) => parse_schedule(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
    }
}

pub fn cmd_closed_loop(a: &ClosedLoopArgs, m: &mut RunManifest) -> Result<()> {
    if let Some(s) = a.seed {
        m.config.sim.seed = s;
    }
    m.seeds.insert("sim".into(), m.config.sim.seed);
    m.config.validate()?;
    let (model, stats) = load_model_and_stats(&a.model, &a.stats, m)?;
    if let Some(p) = &a.schedule {
        m.input(p);
    }
    let schedule = load_schedule(a.schedule.as_deref())?;
    let options = LoopOptions { record_trajectory: false, log_indications: a.log_indications };
    let cfg = m.config.clone();
    let outcome = m
        .time("closed_loop", || closed_loop_run(&cfg.sim, Arc::new(model), stats, &schedule, &cfg.policy, &options))
        .map_err(|e| match e {
            Error::Io { .. } | Error::Config { .. } => e,
            other => Error::Pipeline(other.to_string()),
        })?;
    let episode = a.out_dir.join("episode.jsonl");
    let summary = a.out_dir.join("summary.csv");
    let messages = a.out_dir.join("messages.jsonl");
    for p in [&episode, &summary, &messages] {
        m.output(p);
    }
    write_with(&episode, |w| outcome.log.write_jsonl(w))?;
    write_with(&summary, |w| outcome.log.write_summary_csv(w))?;
    write_messages_jsonl(&messages, &outcome.messages)?;

    let mut elapsed = outcome.twin_elapsed_ms.clone();
    elapsed.sort_by(f64::total_cmp);
    if let Some(median) = elapsed.get(elapsed.len() / 2) {
        println!("twin tick median {median:.3} ms over {} ticks", elapsed.len());
    }
    println!("{} faults, {} control actions", outcome.log.faults.len(), outcome.log.total_actions());
    for f in &outcome.log.faults {
        let fmt = |v: Option<u64>| v.map_or("none".to_string(), |x| x.to_string());
        println!(
            "  fault {} ue {} {}: onset {}, detection latency {}, restoration latency {}",
            f.fault_id,
            f.ue_id,
            f.class.name(),
            f.onset_tick,
            fmt(f.detection_latency_ticks()),
            fmt(f.restoration_latency_ticks())
        );
    }
    Ok(())
}
