//! Small controlled experiments on the time encoding and on the link-encoder backbones.
//!
//! `synth_time_experiment` learns whether `t1 > t2` from `[z(t1) ‖ z(t2)]` with a single
//! linear layer, with the encoding either frozen or trainable. `synth_seq_experiment`
//! encodes pairs of timestamp sequences with a mixer or an attention encoder and
//! classifies the pair with a linear layer on `[u − v ‖ (u − v)²]`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{AttentionParams, AttentionScope, Linear, MixerParams, Pooling, TimeEncoderKind};
use crate::rng::{self, offset};
use crate::tensor::{adam_step, AdamConfig, AdamState, DenseMatrix, GradBuffer, ParamRegistry, ParamTensor};
use crate::time_encoding::{make_omega, FixedTimeEncoding, TimeContext, TrainableTimeEncoding};

use super::loss::{bce_loss, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTimeConfig {
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub steps: usize,
    pub batch: usize,
    pub heldout: usize,
    /// Timestamps are uniform on `[0, t_max]`.
    pub t_max: f64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SynthTimeConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            alpha: 10.0,
            beta: 10.0,
            steps: 300,
            batch: 64,
            heldout: 1024,
            t_max: 1e6,
            lr: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthTimeStep {
    pub step: usize,
    pub loss: f64,
    /// Held-out accuracy after this step's update.
    pub accuracy: f64,
    /// Zero when the encoding is frozen.
    pub encoder_grad_norm: f64,
    pub classifier_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTimeResult {
    pub mode: TimeEncoderKind,
    pub steps: Vec<SynthTimeStep>,
    /// Flattened trainable parameters before training and after every step.
    pub snapshots: Vec<Vec<f64>>,
}

impl SynthTimeResult {
    pub fn best_accuracy(&self) -> f64 {
        self.steps.iter().map(|s| s.accuracy).fold(0.0, f64::max)
    }

    pub fn peak_encoder_grad_norm(&self) -> f64 {
        self.steps.iter().map(|s| s.encoder_grad_norm).fold(0.0, f64::max)
    }

    pub fn peak_classifier_grad_norm(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.classifier_grad_norm)
            .fold(0.0, f64::max)
    }
}

/// `(t1, t2)` with `t1 ≠ t2`.
fn draw_time_pair(r: &mut rng::Rng, t_max: f64) -> (f64, f64) {
    loop {
        let a = r.random_range(0.0..=t_max);
        let b = r.random_range(0.0..=t_max);
        if a != b {
            return (a, b);
        }
    }
}

struct TimeProbe {
    fixed: FixedTimeEncoding,
    trainable: Option<TrainableTimeEncoding>,
    fc: Linear,
}

impl TimeProbe {
    fn encode(&self, t: f64) -> Vec<f64> {
        match &self.trainable {
            Some(enc) => enc.forward(t).0,
            None => self.fixed.encode(t),
        }
    }

    fn inputs(&self, pairs: &[(f64, f64)]) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = pairs
            .iter()
            .map(|&(a, b)| [self.encode(a), self.encode(b)].concat())
            .collect();
        DenseMatrix::from_rows(&rows)
    }

    fn accuracy(&self, pairs: &[(f64, f64)]) -> Result<f64> {
        let logits = self.fc.forward(&self.inputs(pairs))?;
        let correct = pairs
            .iter()
            .zip(logits.as_slice())
            .filter(|((a, b), z)| (**z > 0.0) == (a > b))
            .count();
        Ok(correct as f64 / pairs.len() as f64)
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v: Vec<&mut ParamTensor> = Vec::new();
        if let Some(t) = &mut self.trainable {
            v.extend([&mut t.w, &mut t.b]);
        }
        v.extend(self.fc.params_mut());
        v
    }

    fn flatten(&mut self) -> Vec<f64> {
        self.params_mut()
            .into_iter()
            .flat_map(|p| p.value.as_slice().to_vec())
            .collect()
    }
}

fn norm_of(grads: &GradBuffer, params: &[&ParamTensor]) -> f64 {
    params
        .iter()
        .map(|p| grads.slot(p).norm().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Learns the ordering of two timestamps from their encodings.
pub fn synth_time_experiment(mode: TimeEncoderKind, config: &SynthTimeConfig) -> Result<SynthTimeResult> {
    if config.steps == 0 || config.batch == 0 || config.heldout == 0 {
        return Err(Error::InvalidParameter(
            "steps, batch and heldout must be ≥ 1".into(),
        ));
    }
    let fixed = make_omega(config.dim, config.alpha, config.beta)?;
    let mut reg = ParamRegistry::new();
    let mut init = rng::seeded(rng::derive(config.seed, offset::INIT));
    let trainable =
        (mode == TimeEncoderKind::Trainable).then(|| TrainableTimeEncoding::from_fixed(&fixed, &mut reg));
    let fc = Linear::new("probe", 2 * config.dim, 1, &mut reg, &mut init);
    let mut probe = TimeProbe { fixed, trainable, fc };

    let mut data = rng::seeded(rng::derive(config.seed, offset::SYNTHETIC));
    let heldout: Vec<(f64, f64)> = (0..config.heldout)
        .map(|_| draw_time_pair(&mut data, config.t_max))
        .collect();
    let mut adam = {
        let params = probe.params_mut();
        AdamState::new(AdamConfig::with_lr(config.lr), params.iter().map(|p| &**p))
    };
    let mut snapshots = vec![probe.flatten()];
    let mut steps = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let pairs: Vec<(f64, f64)> = (0..config.batch)
            .map(|_| draw_time_pair(&mut data, config.t_max))
            .collect();
        let labels: Vec<f64> = pairs.iter().map(|(a, b)| f64::from(u8::from(a > b))).collect();
        let x = probe.inputs(&pairs);
        let logits = probe.fc.forward(&x)?;
        let (loss, g) = bce_loss(logits.as_slice(), &labels);

        let mut all: Vec<&ParamTensor> = Vec::new();
        if let Some(t) = &probe.trainable {
            all.extend([&t.w, &t.b]);
        }
        all.extend(probe.fc.params());
        let mut grads = GradBuffer::for_params(all.iter().copied());
        let gx = probe
            .fc
            .backward(&x, &DenseMatrix::from_vec(g.len(), 1, g)?, &mut grads)?;
        if let Some(enc) = &probe.trainable {
            let d = config.dim;
            for (i, &(a, b)) in pairs.iter().enumerate() {
                let row = gx.row(i);
                enc.backward(Some(&TimeContext { t: a }), &row[..d], &mut grads)?;
                enc.backward(Some(&TimeContext { t: b }), &row[d..], &mut grads)?;
            }
        }
        let encoder_grad_norm = match &probe.trainable {
            Some(t) => norm_of(&grads, &[&t.w, &t.b]),
            None => 0.0,
        };
        let classifier_grad_norm = norm_of(&grads, &probe.fc.params());
        for p in probe.params_mut() {
            let slot = grads.get(p.slot).clone();
            p.grad.add_assign(&slot);
        }
        adam_step(&mut probe.params_mut(), &mut adam);
        steps.push(SynthTimeStep {
            step,
            loss,
            accuracy: probe.accuracy(&heldout)?,
            encoder_grad_norm,
            classifier_grad_norm,
        });
        snapshots.push(probe.flatten());
    }
    Ok(SynthTimeResult {
        mode,
        steps,
        snapshots,
    })
}

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} {other:?}", stringify!($name)
                    ))),
                }
            }
        }
    };
}

named_enum!(SeqEncoder {
    Mixer => "mixer",
    AttnMean => "attn_mean",
    AttnSum => "attn_sum",
});

named_enum!(SeqTask {
    Identity => "identity",
    Length => "length",
});

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSeqConfig {
    /// Maximum sequence length (token rows).
    pub k: usize,
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Token timestamps are uniform on `[0, t_max]`.
    pub t_max: f64,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    pub batch: usize,
    pub steps: usize,
    pub eval_every: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SynthSeqConfig {
    fn default() -> Self {
        Self {
            k: 8,
            dim: 16,
            alpha: 4.0,
            beta: 4.0,
            t_max: 100.0,
            train_pairs: 512,
            heldout_pairs: 10_000,
            batch: 64,
            steps: 500,
            eval_every: 10,
            lr: 3e-3,
            seed: 0,
        }
    }
}

/// One labelled pair of timestamp sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub label: bool,
}

/// Pair `i` of a task. Identity pairs alternate equal / different lengths; length pairs
/// alternate `a` longer / `b` longer.
pub fn make_seq_pair(task: SeqTask, i: usize, k: usize, t_max: f64, r: &mut rng::Rng) -> SeqPair {
    let label = i.is_multiple_of(2);
    match task {
        SeqTask::Identity => {
            let t = r.random_range(0.0..=t_max);
            let m1 = r.random_range(1..=k);
            let m2 = if label || k == 1 {
                m1
            } else {
                let m = r.random_range(1..k);
                if m >= m1 {
                    m + 1
                } else {
                    m
                }
            };
            SeqPair {
                a: vec![t; m1],
                b: vec![t; m2],
                label: m1 == m2,
            }
        }
        SeqTask::Length => {
            let (short, long) = loop {
                let x = r.random_range(1..=k);
                let y = r.random_range(1..=k);
                if x != y {
                    break (x.min(y), x.max(y));
                }
            };
            let mut seq = |m: usize| (0..m).map(|_| r.random_range(0.0..=t_max)).collect::<Vec<_>>();
            let (a, b) = if label {
                (seq(long), seq(short))
            } else {
                (seq(short), seq(long))
            };
            SeqPair { a, b, label }
        }
    }
}

#[allow(clippy::large_enum_variant)]
enum Backbone {
    Mixer(MixerParams),
    Attention(AttentionParams),
}

enum Cache {
    Mixer(crate::model::MixerCache),
    Attention(Option<crate::model::AttentionCache>),
}

/// Sequence encoder plus pair classifier.
pub struct SeqModel {
    k: usize,
    time: FixedTimeEncoding,
    backbone: Backbone,
    fc: Linear,
}

impl SeqModel {
    pub fn new(encoder: SeqEncoder, config: &SynthSeqConfig, rng: &mut rng::Rng) -> Result<Self> {
        let time = make_omega(config.dim, config.alpha, config.beta)?;
        let mut reg = ParamRegistry::new();
        let c = config.dim;
        let backbone = match encoder {
            SeqEncoder::Mixer => Backbone::Mixer(MixerParams::new(
                config.k,
                c,
                (config.k / 2).max(1),
                4 * c,
                &mut reg,
                rng,
            )),
            SeqEncoder::AttnMean | SeqEncoder::AttnSum => {
                let pooling = if encoder == SeqEncoder::AttnMean {
                    Pooling::Mean
                } else {
                    Pooling::Sum
                };
                Backbone::Attention(AttentionParams::new(
                    c,
                    c,
                    AttentionScope::Full,
                    pooling,
                    &mut reg,
                    rng,
                ))
            }
        };
        let fc = Linear::new("pair", 2 * c, 1, &mut reg, rng);
        Ok(Self {
            k: config.k,
            time,
            backbone,
            fc,
        })
    }

    /// Zero-padded `k × dim` token matrix of a sequence.
    pub fn tokens(&self, seq: &[f64]) -> Result<DenseMatrix> {
        if seq.is_empty() || seq.len() > self.k {
            return Err(Error::InvalidParameter(format!(
                "sequence length {} outside 1..={}",
                seq.len(),
                self.k
            )));
        }
        let mut m = DenseMatrix::zeros(self.k, self.time.dim());
        for (j, &t) in seq.iter().enumerate() {
            self.time.encode_into(t, m.row_mut(j));
        }
        Ok(m)
    }

    fn encode_cached(&self, seq: &[f64]) -> Result<(Vec<f64>, Cache)> {
        let tokens = self.tokens(seq)?;
        Ok(match &self.backbone {
            Backbone::Mixer(m) => {
                let (out, c) = m.forward(&tokens)?;
                (out, Cache::Mixer(c))
            }
            Backbone::Attention(a) => {
                let (out, c) = a.forward(&tokens, seq.len())?;
                (out, Cache::Attention(c))
            }
        })
    }

    pub fn encode(&self, seq: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode_cached(seq)?.0)
    }

    fn pair_features(u: &[f64], v: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
        [diff, sq].concat()
    }

    pub fn logit(&self, pair: &SeqPair) -> Result<f64> {
        let u = self.encode(&pair.a)?;
        let v = self.encode(&pair.b)?;
        Ok(self.fc.forward_vec(&Self::pair_features(&u, &v))?[0])
    }

    pub fn accuracy(&self, pairs: &[SeqPair]) -> Result<f64> {
        let mut correct = 0;
        for p in pairs {
            if (self.logit(p)? > 0.0) == p.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / pairs.len().max(1) as f64)
    }

    fn params(&self) -> Vec<&ParamTensor> {
        let mut v = match &self.backbone {
            Backbone::Mixer(m) => m.params(),
            Backbone::Attention(a) => a.params(),
        };
        v.extend(self.fc.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v = match &mut self.backbone {
            Backbone::Mixer(m) => m.params_mut(),
            Backbone::Attention(a) => a.params_mut(),
        };
        v.extend(self.fc.params_mut());
        v
    }

    fn backward_encoder(&self, cache: &Cache, g: &[f64], grads: &mut GradBuffer) -> Result<()> {
        match (&self.backbone, cache) {
            (Backbone::Mixer(m), Cache::Mixer(c)) => {
                m.backward(c, g, grads)?;
            }
            (Backbone::Attention(a), Cache::Attention(c)) => {
                a.backward(c.as_ref(), g, grads)?;
            }
            _ => unreachable!("cache kind follows backbone kind"),
        }
        Ok(())
    }

    /// Loss of one pair; gradients scaled by `scale` go into `grads`.
    fn pair_backward(&self, pair: &SeqPair, scale: f64, grads: &mut GradBuffer) -> Result<f64> {
        let (u, cu) = self.encode_cached(&pair.a)?;
        let (v, cv) = self.encode_cached(&pair.b)?;
        let phi = Self::pair_features(&u, &v);
        let z = self.fc.forward_vec(&phi)?[0];
        let y = f64::from(u8::from(pair.label));
        let (loss, _) = super::loss::bce_with_logits(z, y);
        let gz = (sigmoid(z) - y) * scale;
        let g_phi = self.fc.backward(
            &DenseMatrix::row_vector(phi.clone()),
            &DenseMatrix::row_vector(vec![gz]),
            grads,
        )?;
        let d = u.len();
        let g_phi = g_phi.as_slice();
        let g_u: Vec<f64> = (0..d).map(|i| g_phi[i] + 2.0 * phi[i] * g_phi[d + i]).collect();
        let g_v: Vec<f64> = g_u.iter().map(|g| -g).collect();
        self.backward_encoder(&cu, &g_u, grads)?;
        self.backward_encoder(&cv, &g_v, grads)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSeqResult {
    pub encoder: SeqEncoder,
    pub task: SeqTask,
    /// `(step, accuracy on the training pairs)`; step 0 is before training.
    pub train_accuracy: Vec<(usize, f64)>,
    pub heldout_accuracy: f64,
}

impl SynthSeqResult {
    pub fn best_train_accuracy(&self) -> f64 {
        self.train_accuracy.iter().map(|&(_, a)| a).fold(0.0, f64::max)
    }
}

/// Trains a sequence encoder and pair classifier on one task.
pub fn synth_seq_experiment(
    encoder: SeqEncoder,
    task: SeqTask,
    config: &SynthSeqConfig,
) -> Result<SynthSeqResult> {
    if config.k == 0 || config.steps == 0 || config.batch == 0 || config.train_pairs == 0 {
        return Err(Error::InvalidParameter(
            "k, steps, batch and train_pairs must be ≥ 1".into(),
        ));
    }
    let mut init = rng::seeded(rng::derive(config.seed, offset::INIT));
    let mut model = SeqModel::new(encoder, config, &mut init)?;
    let mut data = rng::seeded(rng::derive(config.seed, offset::SYNTHETIC));
    let train: Vec<SeqPair> = (0..config.train_pairs)
        .map(|i| make_seq_pair(task, i, config.k, config.t_max, &mut data))
        .collect();
    let heldout: Vec<SeqPair> = (0..config.heldout_pairs)
        .map(|i| make_seq_pair(task, i, config.k, config.t_max, &mut data))
        .collect();
    let mut batches = rng::seeded(rng::derive(config.seed, offset::BATCHES));
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), model.params());
    let every = config.eval_every.max(1);
    let mut curve = vec![(0, model.accuracy(&train)?)];
    let batch = config.batch.min(train.len());
    for step in 1..=config.steps {
        let mut grads = GradBuffer::for_params(model.params());
        let scale = 1.0 / batch as f64;
        for i in index::sample(&mut batches, train.len(), batch) {
            model.pair_backward(&train[i], scale, &mut grads)?;
        }
        for p in model.params_mut() {
            let g = grads.get(p.slot).clone();
            p.grad.add_assign(&g);
        }
        adam_step(&mut model.params_mut(), &mut adam);
        if step % every == 0 || step == config.steps {
            curve.push((step, model.accuracy(&train)?));
        }
    }
    Ok(SynthSeqResult {
        encoder,
        task,
        heldout_accuracy: model.accuracy(&heldout)?,
        train_accuracy: curve,
    })
}
