//! Training loop, evaluation and instrumentation.

pub mod batch;
pub mod csv;
pub mod instrument;
pub mod loss;
pub mod metrics;
pub mod synth;
pub mod synthetic;

use std::ops::Range;

use crate::error::{Error, Result};
use crate::graph::{chronological_split, NodeFeatures, SplitBoundaries, TemporalGraph};
use crate::model::{GraphMixer, GraphMixerConfig, NodeEncoding};
use crate::par::{self, Parallelism, GRAD_CHUNKS};
use crate::rng::{self, offset};
use crate::tensor::{adam_step, AdamConfig, AdamState, GradBuffer};

pub use batch::{make_batches, Batch, NegativeSampling, PairSample};
pub use loss::{bce_loss, bce_with_logits, sigmoid};
pub use metrics::{auc, average_precision, mrr, rank_of, recall_at_k, MetricsReport};

/// A temporal graph, its node features and its chronological split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: TemporalGraph,
    pub features: NodeFeatures,
    pub split: SplitBoundaries,
}

impl Dataset {
    pub fn new(graph: TemporalGraph, features: NodeFeatures) -> Result<Self> {
        if features.num_nodes() != graph.num_nodes() {
            return Err(Error::shape(
                "dataset",
                format!(
                    "{} feature rows for {} nodes",
                    features.num_nodes(),
                    graph.num_nodes()
                ),
            ));
        }
        let split = chronological_split(graph.num_events())?;
        Ok(Self {
            graph,
            features,
            split,
        })
    }

    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.split.train(),
            Split::Val => self.split.val(),
            Split::Test => self.split.test(self.graph.num_events()),
        }
    }

    pub fn default_window(&self) -> f64 {
        crate::graph::compute_default_window(self.graph.events(), self.split.train_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// Optimisation and evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub recall_k: usize,
    pub rank_negatives: usize,
    /// Cap on ranked queries per split, evenly strided; `None` ranks every event.
    pub rank_eval_max: Option<usize>,
    /// Cap on training events scored for the per-epoch train metrics.
    pub train_eval_max: Option<usize>,
    pub negative_sampling: NegativeSampling,
    pub parallelism: Parallelism,
    /// Keep a flattened parameter snapshot after every epoch.
    pub keep_snapshots: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 600,
            adam: AdamConfig::default(),
            seed: 0,
            recall_k: 5,
            rank_negatives: 100,
            rank_eval_max: Some(2000),
            train_eval_max: None,
            negative_sampling: NegativeSampling::Destinations,
            parallelism: Parallelism::Auto,
            keep_snapshots: false,
        }
    }
}

/// Fixed evaluation samples for one split, drawn once so every epoch sees the same ones.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPlan {
    pub split: Split,
    pub positives: Vec<PairSample>,
    pub negatives: Vec<PairSample>,
    /// Each ranked positive and its candidate negative destinations.
    pub rank_queries: Vec<(PairSample, Vec<usize>)>,
}

fn strided(range: Range<usize>, cap: Option<usize>) -> Vec<usize> {
    let n = range.len();
    match cap {
        Some(c) if c < n => (0..c).map(|i| range.start + i * n / c).collect(),
        _ => range.collect(),
    }
}

impl EvalPlan {
    pub fn new(data: &Dataset, split: Split, config: &TrainConfig) -> Result<Self> {
        let range = data.range(split);
        if range.is_empty() {
            return Err(Error::EmptyRange(format!("{} split", split.as_str())));
        }
        let neg_range = config.negative_sampling.range(&data.graph);
        let events = data.graph.events();
        let cap = if split == Split::Train {
            config.train_eval_max
        } else {
            None
        };
        let mut rng = rng::seeded(rng::derive(
            config.seed,
            offset::EVAL_NEGATIVES + 16 * split.index(),
        ));
        let sample = |i: usize| PairSample {
            src: events[i].src,
            dst: events[i].dst,
            t0: events[i].timestamp,
        };
        let positives: Vec<PairSample> = strided(range.clone(), cap).into_iter().map(sample).collect();
        let negatives = positives
            .iter()
            .map(|p| PairSample {
                dst: batch::sample_negative(&mut rng, &neg_range, p.dst),
                ..*p
            })
            .collect();

        let mut rank_rng = rng::seeded(rng::derive(config.seed, offset::RANK_EVAL + 16 * split.index()));
        let rank_queries = strided(range, config.rank_eval_max)
            .into_iter()
            .map(|i| {
                let p = sample(i);
                let negs = (0..config.rank_negatives)
                    .map(|_| batch::sample_negative(&mut rank_rng, &neg_range, p.dst))
                    .collect();
                (p, negs)
            })
            .collect();
        Ok(Self {
            split,
            positives,
            negatives,
            rank_queries,
        })
    }
}

/// Positive and negative logits for every sample of `plan`.
pub fn score_plan(
    model: &GraphMixer,
    data: &Dataset,
    plan: &EvalPlan,
    mode: Parallelism,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pairs = par::map_indexed(plan.positives.len(), mode, |i| -> Result<(f64, f64)> {
        let p = plan.positives[i];
        let n = plan.negatives[i];
        let hs = model.encode_node(&data.graph, &data.features, p.src, p.t0)?;
        let hd = model.encode_node(&data.graph, &data.features, p.dst, p.t0)?;
        let hn = model.encode_node(&data.graph, &data.features, n.dst, n.t0)?;
        Ok((model.classify(&hs.h, &hd.h)?.0, model.classify(&hs.h, &hn.h)?.0))
    });
    let mut pos = Vec::with_capacity(pairs.len());
    let mut neg = Vec::with_capacity(pairs.len());
    for r in pairs {
        let (p, n) = r?;
        pos.push(p);
        neg.push(n);
    }
    Ok((pos, neg))
}

/// Mean BCE over the plan's positives and negatives.
pub fn plan_loss(model: &GraphMixer, data: &Dataset, plan: &EvalPlan, mode: Parallelism) -> Result<f64> {
    let (pos, neg) = score_plan(model, data, plan, mode)?;
    Ok(mean_loss(&pos, &neg))
}

fn mean_loss(pos: &[f64], neg: &[f64]) -> f64 {
    let total: f64 = pos.iter().map(|&z| bce_with_logits(z, 1.0).0).sum::<f64>()
        + neg.iter().map(|&z| bce_with_logits(z, 0.0).0).sum::<f64>();
    total / (pos.len() + neg.len()).max(1) as f64
}

/// Rank of each query's positive among its negatives.
pub fn rank_queries(
    model: &GraphMixer,
    data: &Dataset,
    queries: &[(PairSample, Vec<usize>)],
    mode: Parallelism,
) -> Result<Vec<usize>> {
    par::map_indexed(queries.len(), mode, |i| -> Result<usize> {
        let (p, negs) = &queries[i];
        let hs = model.encode_node(&data.graph, &data.features, p.src, p.t0)?;
        let score = |dst: usize| -> Result<f64> {
            let hd = model.encode_node(&data.graph, &data.features, dst, p.t0)?;
            Ok(model.classify(&hs.h, &hd.h)?.0)
        };
        let pos = score(p.dst)?;
        let neg = negs.iter().map(|&d| score(d)).collect::<Result<Vec<_>>>()?;
        Ok(rank_of(pos, &neg))
    })
    .into_iter()
    .collect()
}

pub fn evaluate(
    model: &GraphMixer,
    data: &Dataset,
    plan: &EvalPlan,
    config: &TrainConfig,
) -> Result<MetricsReport> {
    let (pos, neg) = score_plan(model, data, plan, config.parallelism)?;
    let scores: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let labels: Vec<bool> = (0..scores.len()).map(|i| i < pos.len()).collect();
    let ranks = rank_queries(model, data, &plan.rank_queries, config.parallelism)?;
    Ok(MetricsReport {
        split: plan.split.as_str().to_string(),
        average_precision: average_precision(&scores, &labels),
        auc: auc(&scores, &labels),
        recall_k: config.recall_k,
        recall_at_k: recall_at_k(&ranks, config.recall_k),
        mrr: mrr(&ranks),
        loss: mean_loss(&pos, &neg),
    })
}

/// Summed loss and parameter gradients of the batch-mean BCE.
///
/// Positives are processed in [`GRAD_CHUNKS`] contiguous chunks whose gradient buffers are
/// added in chunk order, so the result does not depend on the thread count.
pub fn batch_gradients(
    model: &GraphMixer,
    data: &Dataset,
    batch: &Batch,
    mode: Parallelism,
) -> Result<(f64, GradBuffer)> {
    let n = batch.positives.len();
    let scale = 1.0 / (2 * n).max(1) as f64;
    let template = model.params.grad_buffer();
    let chunks = par::fold_chunks(
        n,
        GRAD_CHUNKS,
        mode,
        || (template.clone(), 0.0, None::<Error>),
        |(grads, loss, err), i| {
            if err.is_some() {
                return;
            }
            match pair_step(model, data, batch, i, scale, grads) {
                Ok(l) => *loss += l,
                Err(e) => *err = Some(e),
            }
        },
    );
    let mut total = template;
    let mut loss = 0.0;
    for (g, l, e) in chunks {
        if let Some(e) = e {
            return Err(e);
        }
        total.add_assign(&g);
        loss += l;
    }
    Ok((loss * scale, total))
}

/// Forward and backward for positive `i` and its mirrored negative; returns the summed
/// (unscaled) loss of the two.
fn pair_step(
    model: &GraphMixer,
    data: &Dataset,
    batch: &Batch,
    i: usize,
    scale: f64,
    grads: &mut GradBuffer,
) -> Result<f64> {
    let p = batch.positives[i];
    let n = batch.negatives[i];
    let enc = |node: usize, t0: f64| -> Result<NodeEncoding> {
        model.encode_node(&data.graph, &data.features, node, t0)
    };
    let hs = enc(p.src, p.t0)?;
    let hd = enc(p.dst, p.t0)?;
    let hn = enc(n.dst, n.t0)?;
    let (zp, cp) = model.classify(&hs.h, &hd.h)?;
    let (zn, cn) = model.classify(&hs.h, &hn.h)?;
    let (lp, gp) = bce_with_logits(zp, 1.0);
    let (ln, gn) = bce_with_logits(zn, 0.0);

    let (mut g_src, g_dst) = model.params.classifier.backward(&cp, gp * scale, grads)?;
    let (g_src2, g_neg) = model.params.classifier.backward(&cn, gn * scale, grads)?;
    g_src.iter_mut().zip(&g_src2).for_each(|(a, b)| *a += b);
    model.backward_node(&hs, &g_src, grads)?;
    model.backward_node(&hd, &g_dst, grads)?;
    model.backward_node(&hn, &g_neg, grads)?;
    Ok(lp + ln)
}

/// One Adam step on a batch; returns the batch loss.
pub fn train_step(
    model: &mut GraphMixer,
    adam: &mut AdamState,
    data: &Dataset,
    batch: &Batch,
    mode: Parallelism,
) -> Result<f64> {
    let (loss, grads) = batch_gradients(model, data, batch, mode)?;
    if !loss.is_finite() || !grads.norm().is_finite() {
        return Ok(f64::NAN);
    }
    model.params.absorb(&grads);
    adam_step(&mut model.params.tensors_mut(), adam);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train: MetricsReport,
    pub val: MetricsReport,
    pub test: MetricsReport,
}

impl EpochRecord {
    /// `|train AP − val AP|`.
    pub fn generalization_gap(&self) -> f64 {
        (self.train.average_precision - self.val.average_precision).abs()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) with the best validation AP.
    pub best_epoch: usize,
    pub best_model: GraphMixer,
    /// Test metrics of `best_model`.
    pub test_report: MetricsReport,
    /// Flattened parameters before training and after each epoch, when requested.
    pub snapshots: Vec<Vec<f64>>,
}

/// Builds a model from `model_config` and trains it for `config.epochs` epochs.
pub fn train(model_config: &GraphMixerConfig, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let model = GraphMixer::new(
        model_config.clone(),
        data.graph.d_link(),
        &data.features,
        rng::derive(config.seed, offset::INIT),
    )?;
    train_model(model, data, config)
}

/// Trains an existing model.
pub fn train_model(mut model: GraphMixer, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if config.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be ≥ 1".into()));
    }
    let plans = [Split::Train, Split::Val, Split::Test].map(|s| EvalPlan::new(data, s, config));
    let [train_plan, val_plan, test_plan] = plans;
    let (train_plan, val_plan, test_plan) = (train_plan?, val_plan?, test_plan?);

    let mut adam = AdamState::new(config.adam, model.params.tensors());
    let mut batch_rng = rng::seeded(rng::derive(config.seed, offset::BATCHES));
    let neg_range = config.negative_sampling.range(&data.graph);
    let mut history = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();
    if config.keep_snapshots {
        snapshots.push(model.params.flatten());
    }
    let mut best: Option<(usize, f64, GraphMixer, MetricsReport)> = None;

    for epoch in 1..=config.epochs {
        let batches = make_batches(
            data.graph.events(),
            data.range(Split::Train),
            config.batch_size,
            neg_range.clone(),
            &mut batch_rng,
        )?;
        let mut loss_sum = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let loss = train_step(&mut model, &mut adam, data, batch, config.parallelism)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            loss_sum += loss;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            train: evaluate(&model, data, &train_plan, config)?,
            val: evaluate(&model, data, &val_plan, config)?,
            test: evaluate(&model, data, &test_plan, config)?,
        };
        let val_ap = record.val.average_precision;
        if best.as_ref().is_none_or(|(_, ap, _, _)| val_ap > *ap) {
            best = Some((epoch, val_ap, model.clone(), record.test.clone()));
        }
        history.push(record);
        if config.keep_snapshots {
            snapshots.push(model.params.flatten());
        }
    }
    let (best_epoch, _, best_model, test_report) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_model,
        test_report,
        snapshots,
    })
}
