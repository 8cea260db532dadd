//! Node encoder: root features plus the mean of windowed neighbor features, projected to
//! `d_hidden`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{NodeFeatures, TemporalGraph};
use crate::rng::Rng;
use crate::tensor::{DenseMatrix, GradBuffer, ParamRegistry, ParamTensor};

use super::layers::{uniform_init, Linear};

/// `s_i(t0)` before projection.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeSignal {
    Dense(Vec<f64>),
    /// `(node id, weight)` pairs, sorted by id, for one-hot features.
    Sparse(Vec<(usize, f64)>),
}

/// `x_i + mean{x_j : events of i in [t0 - window, t0)}`, one term per event.
pub fn node_encode(
    graph: &TemporalGraph,
    node: usize,
    t0: f64,
    window: f64,
    features: &NodeFeatures,
) -> NodeSignal {
    let partners = graph.windowed_neighbors(node, t0, window);
    let inv = if partners.is_empty() {
        0.0
    } else {
        1.0 / partners.len() as f64
    };
    match features {
        NodeFeatures::Dense(x) => {
            let mut s = x.row(node).to_vec();
            if !partners.is_empty() {
                let mut mean = vec![0.0; x.cols()];
                for &p in &partners {
                    for (m, v) in mean.iter_mut().zip(x.row(p)) {
                        *m += v;
                    }
                }
                for (si, m) in s.iter_mut().zip(&mean) {
                    *si += m * inv;
                }
            }
            NodeSignal::Dense(s)
        }
        NodeFeatures::OneHot { .. } => {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &p in &partners {
                *counts.entry(p).or_default() += 1;
            }
            let mut weights: BTreeMap<usize, f64> =
                counts.into_iter().map(|(p, c)| (p, c as f64 * inv)).collect();
            *weights.entry(node).or_default() += 1.0;
            NodeSignal::Sparse(weights.into_iter().collect())
        }
    }
}

/// Projection of a [`NodeSignal`] to `d_hidden`.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeProjection {
    Dense(Linear),
    /// One learned row per node; equal to a dense one-hot input times a matrix.
    OneHot {
        table: ParamTensor,
        bias: ParamTensor,
    },
}

impl NodeProjection {
    pub fn new(
        features: &NodeFeatures,
        d_hidden: usize,
        registry: &mut ParamRegistry,
        rng: &mut Rng,
    ) -> Self {
        match features {
            NodeFeatures::Dense(x) => {
                NodeProjection::Dense(Linear::new("node_proj", x.cols(), d_hidden, registry, rng))
            }
            NodeFeatures::OneHot { num_nodes } => {
                let table = registry.register(
                    "node_proj.table",
                    uniform_init(*num_nodes, d_hidden, *num_nodes, rng),
                );
                let bias = registry.register("node_proj.bias", DenseMatrix::zeros(1, d_hidden));
                NodeProjection::OneHot { table, bias }
            }
        }
    }

    pub fn forward(&self, signal: &NodeSignal) -> Result<Vec<f64>> {
        match (self, signal) {
            (NodeProjection::Dense(lin), NodeSignal::Dense(s)) => lin.forward_vec(s),
            (NodeProjection::OneHot { table, bias }, NodeSignal::Sparse(entries)) => {
                let mut out = vec![0.0; table.value.cols()];
                for &(id, w) in entries {
                    for (o, t) in out.iter_mut().zip(table.value.row(id)) {
                        *o += w * t;
                    }
                }
                for (o, b) in out.iter_mut().zip(bias.value.as_slice()) {
                    *o += b;
                }
                Ok(out)
            }
            _ => Err(Error::shape(
                "node projection",
                "signal kind does not match projection kind",
            )),
        }
    }

    pub fn backward(&self, signal: &NodeSignal, grad: &[f64], grads: &mut GradBuffer) -> Result<()> {
        match (self, signal) {
            (NodeProjection::Dense(lin), NodeSignal::Dense(s)) => {
                lin.backward(
                    &DenseMatrix::row_vector(s.clone()),
                    &DenseMatrix::row_vector(grad.to_vec()),
                    grads,
                )?;
                Ok(())
            }
            (NodeProjection::OneHot { table, bias }, NodeSignal::Sparse(entries)) => {
                let gt = grads.slot_mut(table);
                for &(id, w) in entries {
                    for (g, u) in gt.row_mut(id).iter_mut().zip(grad) {
                        *g += w * u;
                    }
                }
                for (g, u) in grads.slot_mut(bias).as_mut_slice().iter_mut().zip(grad) {
                    *g += u;
                }
                Ok(())
            }
            _ => Err(Error::shape(
                "node projection",
                "signal kind does not match projection kind",
            )),
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        match self {
            NodeProjection::Dense(l) => l.params().to_vec(),
            NodeProjection::OneHot { table, bias } => vec![table, bias],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            NodeProjection::Dense(l) => {
                let [w, b] = l.params_mut();
                vec![w, b]
            }
            NodeProjection::OneHot { table, bias } => vec![table, bias],
        }
    }
}
