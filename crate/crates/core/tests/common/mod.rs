#![allow(dead_code)]

use rand::Rng as _;
use tgmixer::graph::{build_index, sort_events, EventRecord, TemporalGraph};
use tgmixer::model::GraphMixer;
use tgmixer::rng;
use tgmixer::tensor::{DenseMatrix, GradBuffer};
use tgmixer::train::{bce_with_logits, Batch, Dataset};

pub fn event(src: usize, dst: usize, timestamp: f64, link_features: Vec<f64>) -> EventRecord {
    EventRecord {
        event_id: 0,
        src,
        dst,
        timestamp,
        link_features,
    }
}

/// Sorts, renumbers and indexes `events`.
pub fn graph_from(mut events: Vec<EventRecord>, num_nodes: usize, undirected: bool) -> TemporalGraph {
    sort_events(&mut events);
    build_index(events, num_nodes, undirected).expect("valid fixture")
}

// Nodes v1..v5 map to ids 0..4.
pub const T1: f64 = 1.0;
pub const T3: f64 = 2.0;
pub const T6: f64 = 2.5;
pub const T4: f64 = 3.0;
pub const T2: f64 = 4.0;
pub const T5: f64 = 5.0;

/// The five-node example graph: v2 meets v1 at t1 and t5 and v4 at t3 and t4; v5 meets v3
/// at t2 and v4 at t6.
pub fn five_node_graph(d_link: usize) -> TemporalGraph {
    let f = |x: f64| vec![x; d_link];
    graph_from(
        vec![
            event(0, 1, T1, f(0.1)),
            event(1, 3, T3, f(0.2)),
            event(4, 3, T6, f(0.3)),
            event(1, 3, T4, f(0.4)),
            event(2, 4, T2, f(0.5)),
            event(0, 1, T5, f(0.6)),
        ],
        5,
        true,
    )
}

/// Random multigraph with integer timestamps in `0..t_range` (so ties are common) and
/// link features drawn from `[-1, 1)`.
pub fn random_graph(
    seed: u64,
    num_nodes: usize,
    num_events: usize,
    t_range: u32,
    d_link: usize,
    undirected: bool,
) -> TemporalGraph {
    let mut r = rng::seeded(seed);
    let events = (0..num_events)
        .map(|_| {
            let src = r.random_range(0..num_nodes);
            let dst = r.random_range(0..num_nodes);
            let t = r.random_range(0..t_range) as f64;
            let feats = (0..d_link).map(|_| r.random_range(-1.0..1.0)).collect();
            event(src, dst, t, feats)
        })
        .collect();
    graph_from(events, num_nodes, undirected)
}

/// Events of `node` strictly before `t0` by full scan, most recent first (later event id
/// first among equal timestamps).
pub fn scan_before(graph: &TemporalGraph, node: usize, t0: f64) -> Vec<usize> {
    let mut ids: Vec<usize> = graph
        .events()
        .iter()
        .filter(|e| e.timestamp < t0)
        .filter(|e| e.src == node || (graph.is_undirected() && e.dst == node))
        .map(|e| e.event_id)
        .collect();
    ids.reverse();
    ids
}

/// Batch-mean BCE computed pair by pair through `forward_pair`.
pub fn batch_loss(model: &GraphMixer, data: &Dataset, batch: &Batch) -> f64 {
    let mut total = 0.0;
    for (p, label) in batch.labeled() {
        let z = model
            .forward_pair(&data.graph, &data.features, p.src, p.dst, p.t0)
            .expect("forward");
        total += bce_with_logits(z, if label { 1.0 } else { 0.0 }).0;
    }
    total / batch.len() as f64
}

/// Gradient buffer contents in parameter slot order.
pub fn in_slot_order(model: &GraphMixer, grads: &GradBuffer) -> Vec<DenseMatrix> {
    model
        .params
        .tensors()
        .into_iter()
        .map(|p| grads.slot(p).clone())
        .collect()
}

/// Overwrites every parameter with seeded values: LayerNorm gains near 1, everything else
/// in `[-0.5, 0.5)`.
pub fn randomize(model: &mut GraphMixer, seed: u64) {
    use tgmixer::tensor::HasParams;
    let mut r = rng::seeded(seed);
    for (name, value) in model.param_values_mut() {
        let gain = name.ends_with("gamma");
        for v in value.as_mut_slice() {
            *v = if gain {
                r.random_range(0.5..1.5)
            } else {
                r.random_range(-0.5..0.5)
            };
        }
    }
}
