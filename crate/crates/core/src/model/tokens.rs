//! Link token matrices: one row per recent event, zero-padded to `K` rows.

use crate::graph::{Neighbor, TemporalGraph};
use crate::rng;
use crate::tensor::DenseMatrix;
use crate::time_encoding::{FixedTimeEncoding, TrainableTimeEncoding};

use super::config::{GraphMixerConfig, NeighborMode, TimeEncoderKind, TimeMode};

/// `K × C` token matrix with `C = d_time + d_link`.
///
/// Row `j < real_count` is `[time(t0, t_j) ‖ link features of event j]`, most recent
/// first; the remaining rows are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTokenMatrix {
    pub tokens: DenseMatrix,
    pub real_count: usize,
    pub neighbors: Vec<Neighbor>,
    /// Scalar fed to the time encoder for each real row.
    pub time_inputs: Vec<f64>,
}

/// Neighbor list for the configured selection mode.
pub fn select_neighbors(
    graph: &TemporalGraph,
    node: usize,
    t0: f64,
    config: &GraphMixerConfig,
) -> Vec<Neighbor> {
    let k = config.k;
    match config.neighbor_mode {
        NeighborMode::Recent1Hop => graph.recent_neighbors(node, t0, k),
        NeighborMode::Recent2Hop => graph.two_hop_recent(node, t0, k),
        NeighborMode::Uniform1Hop => {
            let mut r = rng::keyed(config.sample_seed, node as u64, t0.to_bits());
            graph.uniform_neighbors(node, t0, k, &mut r)
        }
        NeighborMode::Uniform2Hop => {
            let mut r = rng::keyed(config.sample_seed, node as u64, t0.to_bits());
            graph.two_hop_uniform(node, t0, k, &mut r)
        }
    }
}

pub fn build_link_token_matrix(
    graph: &TemporalGraph,
    node: usize,
    t0: f64,
    config: &GraphMixerConfig,
    fixed: &FixedTimeEncoding,
    trainable: Option<&TrainableTimeEncoding>,
) -> LinkTokenMatrix {
    let neighbors = select_neighbors(graph, node, t0, config);
    let d_time = config.d_time;
    let channels = d_time + graph.d_link();
    let mut tokens = DenseMatrix::zeros(config.k, channels);
    let mut time_inputs = Vec::with_capacity(neighbors.len());
    let use_trainable = config.time_encoder == TimeEncoderKind::Trainable;
    for (j, nb) in neighbors.iter().enumerate() {
        let t_in = if config.time_mode.is_relative() {
            t0 - nb.timestamp
        } else {
            nb.timestamp
        };
        time_inputs.push(t_in);
        let row = tokens.row_mut(j);
        let (time_cols, link_cols) = row.split_at_mut(d_time);
        match config.time_mode {
            TimeMode::RelativeEncoded | TimeMode::AbsoluteEncoded => match trainable {
                Some(enc) if use_trainable => enc.forward_into(t_in, time_cols),
                _ => fixed.encode_into(t_in, time_cols),
            },
            TimeMode::RelativeRaw | TimeMode::AbsoluteRaw => time_cols[0] = t_in,
        }
        link_cols.copy_from_slice(graph.link_features(nb.event_id));
    }
    LinkTokenMatrix {
        tokens,
        real_count: neighbors.len(),
        neighbors,
        time_inputs,
    }
}
