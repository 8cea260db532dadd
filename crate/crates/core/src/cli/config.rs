//! `key=value` run configuration.
//!
//! One pair per line; `#` starts a comment. Later pairs override earlier ones, so a file
//! followed by command-line overrides resolves left to right.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::GraphMixerConfig;
use crate::par::Parallelism;
use crate::tensor::AdamConfig;
use crate::train::synth::{SynthSeqConfig, SynthTimeConfig};
use crate::train::synthetic::SyntheticConfig;
use crate::train::{NegativeSampling, TrainConfig};

/// Name of the built-in generator in the `dataset` key.
pub const SYNTHETIC_DATASET: &str = "synthetic";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// CSV path, or [`SYNTHETIC_DATASET`].
    pub dataset: Option<String>,
    pub has_header: bool,
    /// Optional dense node-feature CSV (one row per node, no header).
    pub node_features: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    /// Node-encoder window; `None` derives it from the training split.
    pub window: Option<f64>,
    pub model: GraphMixerConfig,
    pub train: TrainConfig,
    pub synthetic: SyntheticConfig,
    pub checkpoint: Option<PathBuf>,
    pub landscape_n: usize,
    pub landscape_span: f64,
    pub synth_time: SynthTimeConfig,
    pub synth_seq: SynthSeqConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            has_header: true,
            node_features: None,
            seed: 0,
            out: PathBuf::from("runs/latest"),
            window: None,
            model: GraphMixerConfig::default(),
            train: TrainConfig::default(),
            synthetic: SyntheticConfig::default(),
            checkpoint: None,
            landscape_n: 25,
            landscape_span: 1.0,
            synth_time: SynthTimeConfig::default(),
            synth_seq: SynthSeqConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

/// `auto` / `all` / empty means `None`.
fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "auto" | "all" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn opt_text<T: ToString>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), T::to_string)
}

/// Splits config text into `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text)
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        let s = &mut self.synthetic;
        match key {
            "dataset" => self.dataset = Some(value.trim().to_string()).filter(|d| !d.is_empty()),
            "header" => self.has_header = parse_bool(key, value)?,
            "node_features" => self.node_features = parse_opt(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "epochs" => t.epochs = parse(key, value)?,
            "window" => self.window = parse_opt(key, value)?,
            "k" => m.k = parse(key, value)?,
            "d_time" => m.d_time = parse(key, value)?,
            "d_hidden" => m.d_hidden = parse(key, value)?,
            "alpha" => m.alpha = parse(key, value)?,
            "beta" => m.beta = parse(key, value)?,
            "time_mode" => m.time_mode = value.parse()?,
            "neighbor_mode" => m.neighbor_mode = value.parse()?,
            "undirected" => m.undirected = parse_bool(key, value)?,
            "variant" => m.variant = value.parse()?,
            "encoder" => m.link_encoder = value.parse()?,
            "time_encoder" => m.time_encoder = value.parse()?,
            "token_hidden" => m.token_hidden = parse_opt(key, value)?,
            "channel_hidden" => m.channel_hidden = parse_opt(key, value)?,
            "sample_seed" => m.sample_seed = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr" => t.adam.lr = parse(key, value)?,
            "weight_decay" => t.adam.weight_decay = parse(key, value)?,
            "recall_k" => t.recall_k = parse(key, value)?,
            "rank_negatives" => t.rank_negatives = parse(key, value)?,
            "rank_eval_max" => t.rank_eval_max = parse_opt(key, value)?,
            "train_eval_max" => t.train_eval_max = parse_opt(key, value)?,
            "negative_sampling" => {
                t.negative_sampling = match value.trim() {
                    "destinations" => NegativeSampling::Destinations,
                    "all_nodes" => NegativeSampling::AllNodes,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown negative_sampling {other:?}; expected destinations or all_nodes"
                        )))
                    }
                }
            }
            "parallel" => {
                t.parallelism = if parse_bool(key, value)? {
                    Parallelism::Auto
                } else {
                    Parallelism::Sequential
                }
            }
            "checkpoint" => self.checkpoint = parse_opt(key, value)?,
            "landscape.n" => self.landscape_n = parse(key, value)?,
            "landscape.span" => self.landscape_span = parse(key, value)?,
            "synthetic.users" => s.num_users = parse(key, value)?,
            "synthetic.items" => s.num_items = parse(key, value)?,
            "synthetic.events" => s.num_events = parse(key, value)?,
            "synthetic.noise" => s.noise_fraction = parse(key, value)?,
            "synthetic.d_link" => s.d_link = parse(key, value)?,
            "synthetic.span" => s.span = parse(key, value)?,
            "synthetic.period_spread" => s.period_spread = parse(key, value)?,
            "synthetic.jitter" => s.jitter = parse(key, value)?,
            "synthetic.zipf" => s.noise_zipf = parse(key, value)?,
            "synthetic.seed" => s.seed = parse(key, value)?,
            "synth_time.steps" => self.synth_time.steps = parse(key, value)?,
            "synth_time.lr" => self.synth_time.lr = parse(key, value)?,
            "synth_seq.steps" => self.synth_seq.steps = parse(key, value)?,
            "synth_seq.lr" => self.synth_seq.lr = parse(key, value)?,
            "synth_seq.heldout" => self.synth_seq.heldout_pairs = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in pairs {
            c.apply(k, v)?;
        }
        c.sync_seeds();
        Ok(c)
    }

    /// Propagates the root seed to subsystems that have no explicit seed key.
    fn sync_seeds(&mut self) {
        self.train.seed = self.seed;
        self.synth_time.seed = self.seed;
        self.synth_seq.seed = self.seed;
    }

    /// Every setting as `key=value`, in a fixed order; feeding these back through
    /// [`from_pairs`](Self::from_pairs) reproduces the config.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let s = &self.synthetic;
        let mut v: Vec<(String, String)> = vec![
            ("dataset".into(), opt_text(&self.dataset, "")),
            ("header".into(), self.has_header.to_string()),
            (
                "node_features".into(),
                opt_text(
                    &self.node_features.as_ref().map(|p| p.display().to_string()),
                    "none",
                ),
            ),
            ("seed".into(), self.seed.to_string()),
            ("out".into(), self.out.display().to_string()),
            ("epochs".into(), t.epochs.to_string()),
            (
                "window".into(),
                opt_text(&self.window.map(|w| format!("{w:?}")), "auto"),
            ),
        ];
        v.extend(self.model.to_pairs().into_iter().filter(|(k, _)| k != "window"));
        let AdamConfig { lr, weight_decay, .. } = t.adam;
        v.extend([
            ("batch_size".into(), t.batch_size.to_string()),
            ("lr".into(), format!("{lr:?}")),
            ("weight_decay".into(), format!("{weight_decay:?}")),
            ("recall_k".into(), t.recall_k.to_string()),
            ("rank_negatives".into(), t.rank_negatives.to_string()),
            ("rank_eval_max".into(), opt_text(&t.rank_eval_max, "all")),
            ("train_eval_max".into(), opt_text(&t.train_eval_max, "all")),
            (
                "negative_sampling".into(),
                match t.negative_sampling {
                    NegativeSampling::Destinations => "destinations",
                    NegativeSampling::AllNodes => "all_nodes",
                }
                .into(),
            ),
            (
                "parallel".into(),
                (t.parallelism == Parallelism::Auto).to_string(),
            ),
            (
                "checkpoint".into(),
                opt_text(&self.checkpoint.as_ref().map(|p| p.display().to_string()), "none"),
            ),
            ("landscape.n".into(), self.landscape_n.to_string()),
            ("landscape.span".into(), format!("{:?}", self.landscape_span)),
            ("synthetic.users".into(), s.num_users.to_string()),
            ("synthetic.items".into(), s.num_items.to_string()),
            ("synthetic.events".into(), s.num_events.to_string()),
            ("synthetic.noise".into(), format!("{:?}", s.noise_fraction)),
            ("synthetic.d_link".into(), s.d_link.to_string()),
            ("synthetic.span".into(), format!("{:?}", s.span)),
            ("synthetic.period_spread".into(), format!("{:?}", s.period_spread)),
            ("synthetic.jitter".into(), format!("{:?}", s.jitter)),
            ("synthetic.zipf".into(), format!("{:?}", s.noise_zipf)),
            ("synthetic.seed".into(), s.seed.to_string()),
            ("synth_time.steps".into(), self.synth_time.steps.to_string()),
            ("synth_time.lr".into(), format!("{:?}", self.synth_time.lr)),
            ("synth_seq.steps".into(), self.synth_seq.steps.to_string()),
            ("synth_seq.lr".into(), format!("{:?}", self.synth_seq.lr)),
            (
                "synth_seq.heldout".into(),
                self.synth_seq.heldout_pairs.to_string(),
            ),
        ]);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NeighborMode, TimeMode};

    #[test]
    fn comments_and_overrides() {
        let pairs = parse_pairs("# run\nk = 30\ntime_mode=relative_raw # inline\n\nk=12\n").unwrap();
        let c = RunConfig::from_pairs(&pairs).unwrap();
        assert_eq!(c.model.k, 12);
        assert_eq!(c.model.time_mode, TimeMode::RelativeRaw);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(parse_pairs("novalue\n").is_err());
        let bad = vec![("colour".to_string(), "blue".to_string())];
        assert!(RunConfig::from_pairs(&bad).is_err());
        let bad = vec![("neighbor_mode".to_string(), "nearest".to_string())];
        assert!(RunConfig::from_pairs(&bad).is_err());
    }

    #[test]
    fn pairs_roundtrip() {
        let mut c = RunConfig {
            dataset: Some("synthetic".into()),
            window: Some(12.5),
            ..RunConfig::default()
        };
        c.model.neighbor_mode = NeighborMode::Uniform2Hop;
        c.model.token_hidden = Some(3);
        c.train.rank_eval_max = None;
        c.seed = 42;
        c.sync_seeds();
        let back = RunConfig::from_pairs(&c.to_pairs()).unwrap();
        assert_eq!(back, c);
    }
}
