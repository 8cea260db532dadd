//! Command-line front end.
//!
//! Every command resolves a [`RunConfig`] from an optional `key=value` file plus flag
//! overrides, writes its CSV artifacts under `out`, and finishes with `manifest.txt`:
//! the resolved config (loadable again with `--config`), plus content hashes of the
//! inputs and artifacts.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

pub use config::{parse_pairs, read_pairs, RunConfig, SYNTHETIC_DATASET};

use crate::error::{Error, Result};
use crate::graph::{
    compute_default_window, load_events, LoadedEvents, NodeFeatures, SplitBoundaries, TemporalGraph,
};
use crate::model::{
    GraphMixer, GraphMixerConfig, LinkEncoderKind, NeighborMode, TimeEncoderKind, TimeMode, Variant,
};
use crate::tensor::checkpoint;
use crate::tensor::DenseMatrix;
use crate::train::instrument::{landscape_directions, loss_landscape, parameter_trajectory};
use crate::train::synth::{synth_seq_experiment, synth_time_experiment, SeqEncoder, SeqTask};
use crate::train::{self, csv, synthetic, Dataset, EvalPlan, MetricsReport, Split};

#[derive(Debug, Parser)]
#[command(name = "tgmixer", version, about = "MLP-Mixer temporal link prediction")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Event CSV, or `synthetic` for the built-in generator.
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long = "time-mode", global = true)]
    pub time_mode: Option<TimeMode>,
    #[arg(long = "neighbor-mode", global = true)]
    pub neighbor_mode: Option<NeighborMode>,
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    #[arg(long, global = true)]
    pub encoder: Option<LinkEncoderKind>,
    #[arg(long, global = true)]
    pub undirected: Option<bool>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Load an event CSV and print its summary.
    Ingest {
        path: PathBuf,
        /// The file has no header row.
        #[arg(long)]
        no_header: bool,
    },
    /// Train and write per-epoch metrics plus the best checkpoint.
    Train,
    /// Score a saved checkpoint on the validation and test splits.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train every variant along one axis and tabulate test metrics.
    Ablate { axis: String },
    /// Timestamp-ordering probe with fixed and trainable encodings.
    SynthTime,
    /// Sequence identity / length probes for the mixer and attention encoders.
    SynthSeq,
    /// Loss surface around the trained parameters along two random directions.
    Landscape,
    /// Parameter trajectories of the timestamp-ordering probe.
    Trajectory,
}

impl Overrides {
    /// Config-file pairs followed by flag pairs.
    pub fn pairs(&self) -> Result<Vec<(String, String)>> {
        let mut pairs = match &self.config {
            Some(p) => read_pairs(p)?,
            None => Vec::new(),
        };
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        if let Some(v) = self.seed {
            push("seed", v.to_string());
        }
        if let Some(v) = self.epochs {
            push("epochs", v.to_string());
        }
        if let Some(v) = &self.dataset {
            push("dataset", v.clone());
        }
        if let Some(v) = &self.out {
            push("out", v.display().to_string());
        }
        if let Some(v) = self.k {
            push("k", v.to_string());
        }
        if let Some(v) = self.time_mode {
            push("time_mode", v.to_string());
        }
        if let Some(v) = self.neighbor_mode {
            push("neighbor_mode", v.to_string());
        }
        if let Some(v) = self.variant {
            push("variant", v.to_string());
        }
        if let Some(v) = self.encoder {
            push("encoder", v.to_string());
        }
        if let Some(v) = self.undirected {
            push("undirected", v.to_string());
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            push(k.trim(), v.trim().to_string());
        }
        Ok(pairs)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::from_pairs(&self.pairs()?)
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    /// Human-readable lines for standard output.
    pub lines: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<RunSummary> {
    let config = cli.overrides.resolve()?;
    match &cli.command {
        Command::Ingest { path, no_header } => cmd_ingest(path, !no_header),
        Command::Train => cmd_train(&config),
        Command::Evaluate { checkpoint } => {
            let mut c = config;
            if let Some(p) = checkpoint {
                c.checkpoint = Some(p.clone());
            }
            cmd_evaluate(&c)
        }
        Command::Ablate { axis } => cmd_ablate(&config, axis),
        Command::SynthTime => cmd_synth_time(&config),
        Command::SynthSeq => cmd_synth_seq(&config),
        Command::Landscape => cmd_landscape(&config),
        Command::Trajectory => cmd_trajectory(&config),
    }
}

/// Prints counts, split boundaries and the default window of an event CSV.
pub fn cmd_ingest(path: &Path, has_header: bool) -> Result<RunSummary> {
    let loaded = load_events(path, has_header)?;
    let n = loaded.events.len();
    let split = SplitBoundaries::from_len(n);
    let window = compute_default_window(&loaded.events, split.train_end);
    Ok(RunSummary {
        lines: vec![
            format!(
                "{} nodes, {} events, d_link={}",
                loaded.num_nodes, n, loaded.d_link
            ),
            format!(
                "sources {}, destinations {}",
                loaded.num_sources,
                loaded.num_nodes - loaded.num_sources
            ),
            format!("split boundaries ({}, {})", split.train_end, split.val_end),
            format!("default window {window}"),
        ],
        artifacts: Vec::new(),
    })
}

fn load_raw(config: &RunConfig) -> Result<(LoadedEvents, Vec<u8>)> {
    match config.dataset.as_deref() {
        None => Err(Error::Config("no dataset given (use --dataset)".into())),
        Some(SYNTHETIC_DATASET) => {
            let loaded = synthetic::generate(&config.synthetic)?;
            let fingerprint = config
                .to_pairs()
                .into_iter()
                .filter(|(k, _)| k.starts_with("synthetic."))
                .map(|(k, v)| format!("{k}={v}\n"))
                .collect::<String>();
            Ok((loaded, fingerprint.into_bytes()))
        }
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            Ok((load_events(path, config.has_header)?, bytes))
        }
    }
}

fn load_node_features(config: &RunConfig, num_nodes: usize) -> Result<(NodeFeatures, Option<Vec<u8>>)> {
    let Some(path) = &config.node_features else {
        return Ok((NodeFeatures::OneHot { num_nodes }, None));
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedRow {
                line: i + 1,
                reason: e.to_string(),
            })?;
        rows.push(row);
    }
    if rows.len() != num_nodes || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::shape(
            "node features",
            format!("{} rows for {num_nodes} nodes, or ragged rows", rows.len()),
        ));
    }
    Ok((NodeFeatures::dense(DenseMatrix::from_rows(&rows))?, Some(bytes)))
}

/// Dataset, resolved model config, and content hashes of the inputs.
pub struct Prepared {
    pub data: Dataset,
    pub model: GraphMixerConfig,
    pub inputs: Vec<(String, String)>,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let (loaded, bytes) = load_raw(config)?;
    let num_nodes = loaded.num_nodes;
    let graph = TemporalGraph::from_loaded(loaded, config.model.undirected)?;
    let (features, feature_bytes) = load_node_features(config, num_nodes)?;
    let data = Dataset::new(graph, features)?;
    let mut model = config.model.clone();
    model.window = config.window.unwrap_or_else(|| data.default_window());
    let mut inputs = vec![(config.dataset.clone().unwrap_or_default(), content_hash(&bytes))];
    if let (Some(p), Some(b)) = (&config.node_features, feature_bytes) {
        inputs.push((p.display().to_string(), content_hash(&b)));
    }
    Ok(Prepared { data, model, inputs })
}

/// `sha256` of a git-style blob header plus the content.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(7 + 64);
    out.push_str("sha256:");
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes a CSV after checking that every numeric cell is finite.
    fn csv(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        if let Some(bad) = text
            .lines()
            .skip(1)
            .flat_map(|l| l.split(','))
            .find(|cell| cell.parse::<f64>().is_ok_and(|v| !v.is_finite()))
        {
            return Err(Error::InvalidParameter(format!(
                "refusing to write {name}: non-finite value {bad}"
            )));
        }
        let p = self.path(name);
        csv::write(&p, text)?;
        self.artifacts.push(p.clone());
        Ok(p)
    }

    fn track(&mut self, p: PathBuf) {
        self.artifacts.push(p);
    }

    /// Writes `manifest.txt` and returns the summary.
    fn finish(
        mut self,
        command: &str,
        config: &RunConfig,
        inputs: &[(String, String)],
        lines: Vec<String>,
    ) -> Result<RunSummary> {
        let mut m = String::from("# tgmixer run manifest\n");
        let _ = writeln!(m, "# command {command}");
        for (name, hash) in inputs {
            let _ = writeln!(m, "# input {name} {hash}");
        }
        for a in &self.artifacts {
            let bytes = std::fs::read(a).map_err(|e| Error::io(a, e))?;
            let name = a
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let _ = writeln!(m, "# artifact {name} {}", content_hash(&bytes));
        }
        for (k, v) in config.to_pairs() {
            let _ = writeln!(m, "{k}={v}");
        }
        let p = self.path("manifest.txt");
        csv::write(&p, &m)?;
        self.artifacts.push(p);
        Ok(RunSummary {
            lines,
            artifacts: self.artifacts,
        })
    }
}

fn report_line(m: &MetricsReport) -> String {
    format!(
        "{}: AP {:.4}  AUC {:.4}  Recall@{} {:.4}  MRR {:.4}  loss {:.4}",
        m.split, m.average_precision, m.auc, m.recall_k, m.recall_at_k, m.mrr, m.loss
    )
}

pub fn cmd_train(config: &RunConfig) -> Result<RunSummary> {
    let prep = prepare(config)?;
    let outcome = train::train(&prep.model, &prep.data, &config.train)?;
    let mut out = Output::new(&config.out)?;
    out.csv("metrics.csv", &csv::epoch_metrics(&outcome.history))?;
    out.csv(
        "test.csv",
        &csv::reports(std::slice::from_ref(&outcome.test_report)),
    )?;
    let ck = out.path("checkpoint.txt");
    let extra = [
        ("seed".to_string(), config.seed.to_string()),
        ("best_epoch".to_string(), outcome.best_epoch.to_string()),
    ];
    outcome.best_model.save_checkpoint(&ck, &extra)?;
    out.track(ck);
    out.track(out.path("checkpoint.bin"));
    let mut lines: Vec<String> = outcome
        .history
        .iter()
        .map(|r| {
            format!(
                "epoch {}: loss {:.4}  train AP {:.4}  val AP {:.4}  test AP {:.4}  gap {:.4}",
                r.epoch,
                r.train_loss,
                r.train.average_precision,
                r.val.average_precision,
                r.test.average_precision,
                r.generalization_gap()
            )
        })
        .collect();
    lines.push(format!("best epoch {}", outcome.best_epoch));
    lines.push(report_line(&outcome.test_report));
    out.finish("train", config, &prep.inputs, lines)
}

/// Rebuilds the model described by `config`, then loads the checkpoint into it; any
/// tensor name or shape difference is an error.
pub fn load_model(config: &RunConfig, prep: &Prepared) -> Result<GraphMixer> {
    let path = config
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("no checkpoint given (use --checkpoint)".into()))?;
    let ck = checkpoint::load(path)?;
    let mut model = GraphMixer::new(
        prep.model.clone(),
        prep.data.graph.d_link(),
        &prep.data.features,
        0,
    )?;
    for (k, v) in model.manifest_header() {
        if let Some(saved) = ck.header_value(&k) {
            if saved != v && k != "window" && k != "sample_seed" {
                return Err(Error::Checkpoint(format!(
                    "config mismatch for {k}: checkpoint has {saved}, run config has {v}"
                )));
            }
        }
    }
    model.load_values(&ck)?;
    if let Some(w) = ck.header_value("window").and_then(|w| w.parse::<f64>().ok()) {
        if config.window.is_none() {
            model.config.window = w;
        }
    }
    Ok(model)
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<RunSummary> {
    let prep = prepare(config)?;
    let model = load_model(config, &prep)?;
    let mut reports = Vec::new();
    for split in [Split::Val, Split::Test] {
        let plan = EvalPlan::new(&prep.data, split, &config.train)?;
        reports.push(train::evaluate(&model, &prep.data, &plan, &config.train)?);
    }
    let mut out = Output::new(&config.out)?;
    out.csv("evaluate.csv", &csv::reports(&reports))?;
    let lines = reports.iter().map(report_line).collect();
    out.finish("evaluate", config, &prep.inputs, lines)
}

/// Ablation axes and their variants.
pub const ABLATION_AXES: &[&str] = &[
    "time_mode",
    "neighbor_mode",
    "graph",
    "encoder",
    "variant",
    "time_encoder",
];

/// `(variant name, config overrides)` per variant.
type AblationVariants = Vec<(String, Vec<(String, String)>)>;

fn ablation_variants(axis: &str) -> Result<AblationVariants> {
    let one = |key: &str, names: Vec<String>| {
        names
            .into_iter()
            .map(|n| (n.clone(), vec![(key.to_string(), n)]))
            .collect::<Vec<_>>()
    };
    let names = |all: Vec<&str>| all.into_iter().map(String::from).collect::<Vec<_>>();
    Ok(match axis {
        "time_mode" => one(
            "time_mode",
            names(vec![
                "relative_raw",
                "relative_encoded",
                "absolute_raw",
                "absolute_encoded",
            ]),
        ),
        "neighbor_mode" => one(
            "neighbor_mode",
            NeighborMode::ALL.iter().map(|m| m.to_string()).collect(),
        ),
        "graph" => vec![
            ("directed".into(), vec![("undirected".into(), "false".into())]),
            ("undirected".into(), vec![("undirected".into(), "true".into())]),
        ],
        "encoder" => one(
            "encoder",
            LinkEncoderKind::ALL.iter().map(|m| m.to_string()).collect(),
        ),
        "variant" => one("variant", Variant::ALL.iter().map(|m| m.to_string()).collect()),
        "time_encoder" => one(
            "time_encoder",
            TimeEncoderKind::ALL.iter().map(|m| m.to_string()).collect(),
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown ablation axis {other:?}; expected one of: {}",
                ABLATION_AXES.join(", ")
            )))
        }
    })
}

/// Test metrics of the best-validation checkpoint for every variant along `axis`.
pub fn run_ablation(config: &RunConfig, axis: &str) -> Result<Vec<(String, MetricsReport)>> {
    let variants = ablation_variants(axis)?;
    let mut rows = Vec::with_capacity(variants.len());
    for (name, overrides) in variants {
        let mut pairs = config.to_pairs();
        pairs.extend(overrides);
        let c = RunConfig::from_pairs(&pairs)?;
        let prep = prepare(&c)?;
        let outcome = train::train(&prep.model, &prep.data, &c.train)?;
        rows.push((name, outcome.test_report));
    }
    Ok(rows)
}

pub fn cmd_ablate(config: &RunConfig, axis: &str) -> Result<RunSummary> {
    let rows = run_ablation(config, axis)?;
    let inputs = prepare_inputs(config)?;
    let mut out = Output::new(&config.out)?;
    out.csv(&format!("ablation_{axis}.csv"), &csv::ablation(axis, &rows))?;
    let lines = rows
        .iter()
        .map(|(n, m)| format!("{n}: test AP {:.4}  AUC {:.4}", m.average_precision, m.auc))
        .collect();
    out.finish(&format!("ablate {axis}"), config, &inputs, lines)
}

fn prepare_inputs(config: &RunConfig) -> Result<Vec<(String, String)>> {
    let (_, bytes) = load_raw(config)?;
    Ok(vec![(
        config.dataset.clone().unwrap_or_default(),
        content_hash(&bytes),
    )])
}

pub fn cmd_synth_time(config: &RunConfig) -> Result<RunSummary> {
    let results = [TimeEncoderKind::Fixed, TimeEncoderKind::Trainable]
        .into_iter()
        .map(|m| synth_time_experiment(m, &config.synth_time))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Output::new(&config.out)?;
    out.csv("synth_time.csv", &csv::synth_time(&results))?;
    let lines = results
        .iter()
        .map(|r| {
            format!(
                "{}: best held-out accuracy {:.4}, peak encoder grad norm {:.4e}, peak classifier grad norm {:.4e}",
                r.mode,
                r.best_accuracy(),
                r.peak_encoder_grad_norm(),
                r.peak_classifier_grad_norm()
            )
        })
        .collect();
    out.finish("synth-time", config, &[], lines)
}

pub fn cmd_synth_seq(config: &RunConfig) -> Result<RunSummary> {
    let mut results = Vec::new();
    for &task in SeqTask::ALL {
        for &enc in SeqEncoder::ALL {
            results.push(synth_seq_experiment(enc, task, &config.synth_seq)?);
        }
    }
    let mut out = Output::new(&config.out)?;
    out.csv("synth_seq.csv", &csv::synth_seq(&results))?;
    let lines = results
        .iter()
        .map(|r| {
            format!(
                "{} / {}: best train accuracy {:.4}, held-out accuracy {:.4}",
                r.encoder,
                r.task,
                r.best_train_accuracy(),
                r.heldout_accuracy
            )
        })
        .collect();
    out.finish("synth-seq", config, &[], lines)
}

/// Trains (or loads, when `checkpoint` is set) and scans the training loss surface.
pub fn cmd_landscape(config: &RunConfig) -> Result<RunSummary> {
    let prep = prepare(config)?;
    let model = if config.checkpoint.is_some() {
        load_model(config, &prep)?
    } else {
        train::train(&prep.model, &prep.data, &config.train)?.best_model
    };
    let plan = EvalPlan::new(&prep.data, Split::Train, &config.train)?;
    let (d1, d2) = landscape_directions(&model, config.seed);
    let grid = loss_landscape(
        &model,
        (&d1, &d2),
        config.landscape_n,
        config.landscape_span,
        |m| train::plan_loss(m, &prep.data, &plan, config.train.parallelism),
    )?;
    let mut out = Output::new(&config.out)?;
    out.csv("landscape.csv", &csv::landscape(&grid))?;
    let (lo, hi) = grid
        .losses
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let mut lines = vec![format!(
        "{0}×{0} grid, loss range [{lo:.4}, {hi:.4}]",
        grid.coords.len()
    )];
    if let Some(c) = grid.center() {
        lines.push(format!("center loss {c}"));
    }
    out.finish("landscape", config, &prep.inputs, lines)
}

pub fn cmd_trajectory(config: &RunConfig) -> Result<RunSummary> {
    let mut out = Output::new(&config.out)?;
    let mut lines = Vec::new();
    for mode in [TimeEncoderKind::Fixed, TimeEncoderKind::Trainable] {
        let res = synth_time_experiment(mode, &config.synth_time)?;
        let last = res.snapshots.last().cloned().unwrap_or_default();
        let records = parameter_trajectory(&res.snapshots, &last)?;
        out.csv(&format!("trajectory_{mode}.csv"), &csv::trajectory(&records))?;
        let max_theta = records.iter().map(|r| r.theta).fold(0.0, f64::max);
        lines.push(format!(
            "{mode}: {} snapshots, max angle {max_theta:.4} rad",
            records.len()
        ));
    }
    out.finish("trajectory", config, &[], lines)
}
