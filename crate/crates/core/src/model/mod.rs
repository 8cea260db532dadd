//! The link-prediction model.
//!
//! A node's representation at query time `t0` is `h = [s ‖ t]`: `s` projects the node
//! signal (own features plus windowed neighbor mean), `t` projects the link encoder's
//! summary of its `K` most recent events. A two-layer MLP scores `[h_src ‖ h_dst]`.
//! Either half can be dropped with [`Variant`].

pub mod attention;
pub mod classifier;
pub mod config;
pub mod layers;
pub mod mixer;
pub mod node_encoder;
pub mod tokens;

use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{NodeFeatures, TemporalGraph};
use crate::rng;
use crate::tensor::checkpoint::{self, Checkpoint};
use crate::tensor::{DenseMatrix, GradBuffer, HasParams, ParamRegistry, ParamTensor};
use crate::time_encoding::{make_omega, FixedTimeEncoding, TimeContext, TrainableTimeEncoding};

pub use attention::{AttentionCache, AttentionParams};
pub use classifier::{Classifier, ClassifierCache};
pub use config::{
    AttentionScope, GraphMixerConfig, LinkEncoderKind, NeighborMode, Pooling, TimeEncoderKind, TimeMode,
    Variant,
};
pub use layers::{LayerNorm, Linear};
pub use mixer::{MixerCache, MixerParams};
pub use node_encoder::{node_encode, NodeProjection, NodeSignal};
pub use tokens::{build_link_token_matrix, select_neighbors, LinkTokenMatrix};

// one per model, so the size gap between variants does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum LinkBackbone {
    Mixer(MixerParams),
    Attention(AttentionParams),
}

#[derive(Debug, Clone)]
enum BackboneCache {
    Mixer(MixerCache),
    Attention(Option<AttentionCache>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkEncoderParams {
    pub backbone: LinkBackbone,
    /// `C → d_hidden`
    pub proj: Linear,
}

/// Every learnable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub time: Option<TrainableTimeEncoding>,
    pub link: Option<LinkEncoderParams>,
    pub node: Option<NodeProjection>,
    pub classifier: Classifier,
}

impl ModelParams {
    /// All tensors in slot order.
    pub fn tensors(&self) -> Vec<&ParamTensor> {
        let mut v = Vec::new();
        if let Some(t) = &self.time {
            v.extend([&t.w, &t.b]);
        }
        if let Some(l) = &self.link {
            match &l.backbone {
                LinkBackbone::Mixer(m) => v.extend(m.params()),
                LinkBackbone::Attention(a) => v.extend(a.params()),
            }
            v.extend(l.proj.params());
        }
        if let Some(n) = &self.node {
            v.extend(n.params());
        }
        v.extend(self.classifier.params());
        debug_assert!(v.iter().enumerate().all(|(i, p)| p.slot == i));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v: Vec<&mut ParamTensor> = Vec::new();
        if let Some(t) = &mut self.time {
            v.extend([&mut t.w, &mut t.b]);
        }
        if let Some(l) = &mut self.link {
            match &mut l.backbone {
                LinkBackbone::Mixer(m) => v.extend(m.params_mut()),
                LinkBackbone::Attention(a) => v.extend(a.params_mut()),
            }
            v.extend(l.proj.params_mut());
        }
        if let Some(n) = &mut self.node {
            v.extend(n.params_mut());
        }
        v.extend(self.classifier.params_mut());
        v
    }

    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer::for_params(self.tensors())
    }

    /// Adds `grads` into each tensor's own `grad`.
    pub fn absorb(&mut self, grads: &GradBuffer) {
        for p in self.tensors_mut() {
            let g = grads.get(p.slot);
            p.grad.add_assign(g);
        }
    }

    pub fn zero_grads(&mut self) {
        self.tensors_mut().into_iter().for_each(ParamTensor::zero_grad);
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|p| p.value.len()).sum()
    }

    /// All values concatenated in slot order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for p in self.tensors() {
            out.extend_from_slice(p.value.as_slice());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::shape(
                "assign_flat",
                format!("{} values for {} scalars", flat.len(), self.num_scalars()),
            ));
        }
        let mut off = 0;
        for p in self.tensors_mut() {
            let n = p.value.len();
            p.value.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

/// Saved state for one node's representation at one query time.
#[derive(Debug, Clone)]
pub struct NodeEncoding {
    pub h: Vec<f64>,
    link: Option<LinkState>,
    node: Option<NodeSignal>,
}

#[derive(Debug, Clone)]
struct LinkState {
    tokens: LinkTokenMatrix,
    cache: BackboneCache,
    pooled: Vec<f64>,
}

impl NodeEncoding {
    pub fn tokens(&self) -> Option<&LinkTokenMatrix> {
        self.link.as_ref().map(|l| &l.tokens)
    }

    pub fn signal(&self) -> Option<&NodeSignal> {
        self.node.as_ref()
    }

    /// Link-encoder output before projection.
    pub fn link_summary(&self) -> Option<&[f64]> {
        self.link.as_ref().map(|l| l.pooled.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMixer {
    pub config: GraphMixerConfig,
    pub params: ModelParams,
    fixed_time: FixedTimeEncoding,
    d_link: usize,
    node_dim: usize,
    one_hot: bool,
}

impl GraphMixer {
    /// Fresh model with seeded uniform initialisation.
    pub fn new(config: GraphMixerConfig, d_link: usize, features: &NodeFeatures, seed: u64) -> Result<Self> {
        config.validate()?;
        let fixed_time = make_omega(config.d_time, config.alpha.max(1.0 + 1e-12), config.beta)?;
        let channels = config.channels(d_link);
        if channels < 2 {
            return Err(Error::Config(format!(
                "token width d_time + d_link = {channels} must be ≥ 2"
            )));
        }
        let mut rng = rng::seeded(seed);
        let mut reg = ParamRegistry::new();

        let time = (config.time_encoder == TimeEncoderKind::Trainable)
            .then(|| TrainableTimeEncoding::from_fixed(&fixed_time, &mut reg));
        let link = config.variant.uses_link().then(|| {
            let backbone = match config.link_encoder.attention() {
                None => LinkBackbone::Mixer(MixerParams::new(
                    config.k,
                    channels,
                    config.token_hidden_dim(),
                    config.channel_hidden_dim(d_link),
                    &mut reg,
                    &mut rng,
                )),
                Some((scope, pooling)) => LinkBackbone::Attention(AttentionParams::new(
                    channels, channels, scope, pooling, &mut reg, &mut rng,
                )),
            };
            let proj = Linear::new("link_proj", channels, config.d_hidden, &mut reg, &mut rng);
            LinkEncoderParams { backbone, proj }
        });
        let node = config
            .variant
            .uses_node()
            .then(|| NodeProjection::new(features, config.d_hidden, &mut reg, &mut rng));
        let classifier = Classifier::new(config.node_repr_dim(), config.d_hidden, &mut reg, &mut rng);

        Ok(Self {
            params: ModelParams {
                time,
                link,
                node,
                classifier,
            },
            fixed_time,
            d_link,
            node_dim: features.dim(),
            one_hot: features.is_one_hot(),
            config,
        })
    }

    pub fn fixed_time(&self) -> &FixedTimeEncoding {
        &self.fixed_time
    }

    pub fn d_link(&self) -> usize {
        self.d_link
    }

    pub fn channels(&self) -> usize {
        self.config.channels(self.d_link)
    }

    pub fn link_tokens(&self, graph: &TemporalGraph, node: usize, t0: f64) -> LinkTokenMatrix {
        build_link_token_matrix(
            graph,
            node,
            t0,
            &self.config,
            &self.fixed_time,
            self.params.time.as_ref(),
        )
    }

    /// `h_node(t0)` plus everything needed to backpropagate through it.
    pub fn encode_node(
        &self,
        graph: &TemporalGraph,
        features: &NodeFeatures,
        node: usize,
        t0: f64,
    ) -> Result<NodeEncoding> {
        if graph.d_link() != self.d_link {
            return Err(Error::shape(
                "encode_node",
                format!("graph has d_link {}, model {}", graph.d_link(), self.d_link),
            ));
        }
        if node >= graph.num_nodes() {
            return Err(Error::NodeOutOfRange {
                node,
                num_nodes: graph.num_nodes(),
            });
        }
        let mut h = Vec::with_capacity(self.config.node_repr_dim());
        let node_state = match &self.params.node {
            Some(proj) => {
                if features.dim() != self.node_dim || features.is_one_hot() != self.one_hot {
                    return Err(Error::shape(
                        "encode_node",
                        "node features differ from the ones the model was built for",
                    ));
                }
                let signal = node_encode(graph, node, t0, self.config.window, features);
                h.extend(proj.forward(&signal)?);
                Some(signal)
            }
            None => None,
        };
        let link_state = match &self.params.link {
            Some(link) => {
                let tokens = self.link_tokens(graph, node, t0);
                let (pooled, cache) = match &link.backbone {
                    LinkBackbone::Mixer(m) => {
                        let (out, c) = m.forward(&tokens.tokens)?;
                        (out, BackboneCache::Mixer(c))
                    }
                    LinkBackbone::Attention(a) => {
                        let (out, c) = a.forward(&tokens.tokens, tokens.real_count)?;
                        (out, BackboneCache::Attention(c))
                    }
                };
                h.extend(link.proj.forward_vec(&pooled)?);
                Some(LinkState {
                    tokens,
                    cache,
                    pooled,
                })
            }
            None => None,
        };
        Ok(NodeEncoding {
            h,
            link: link_state,
            node: node_state,
        })
    }

    /// Backpropagates `grad_h` through one [`NodeEncoding`].
    pub fn backward_node(&self, enc: &NodeEncoding, grad_h: &[f64], grads: &mut GradBuffer) -> Result<()> {
        if grad_h.len() != enc.h.len() {
            return Err(Error::shape(
                "backward_node",
                format!("gradient width {} for h of width {}", grad_h.len(), enc.h.len()),
            ));
        }
        let split = if self.params.node.is_some() {
            self.config.d_hidden
        } else {
            0
        };
        let (g_node, g_link) = grad_h.split_at(split);
        if let (Some(proj), Some(signal)) = (&self.params.node, &enc.node) {
            proj.backward(signal, g_node, grads)?;
        }
        if let (Some(link), Some(state)) = (&self.params.link, &enc.link) {
            let g_pooled = link
                .proj
                .backward(
                    &DenseMatrix::row_vector(state.pooled.clone()),
                    &DenseMatrix::row_vector(g_link.to_vec()),
                    grads,
                )?
                .into_vec();
            let g_tokens = match (&link.backbone, &state.cache) {
                (LinkBackbone::Mixer(m), BackboneCache::Mixer(c)) => Some(m.backward(c, &g_pooled, grads)?),
                (LinkBackbone::Attention(a), BackboneCache::Attention(c)) => {
                    a.backward(c.as_ref(), &g_pooled, grads)?
                }
                _ => unreachable!("cache kind follows backbone kind"),
            };
            if let (Some(time), Some(g_tokens)) = (&self.params.time, g_tokens) {
                if self.config.time_mode.is_encoded() {
                    let d = self.config.d_time;
                    for (j, &t) in state.tokens.time_inputs.iter().enumerate() {
                        time.backward(Some(&TimeContext { t }), &g_tokens.row(j)[..d], grads)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn classify(&self, h_i: &[f64], h_j: &[f64]) -> Result<(f64, ClassifierCache)> {
        self.params.classifier.forward(h_i, h_j)
    }

    /// Logit for "`src` and `dst` interact at `t0`".
    pub fn forward_pair(
        &self,
        graph: &TemporalGraph,
        features: &NodeFeatures,
        src: usize,
        dst: usize,
        t0: f64,
    ) -> Result<f64> {
        let hs = self.encode_node(graph, features, src, t0)?;
        let hd = self.encode_node(graph, features, dst, t0)?;
        Ok(self.classify(&hs.h, &hd.h)?.0)
    }

    /// Header entries recorded in checkpoints.
    pub fn manifest_header(&self) -> Vec<(String, String)> {
        let mut h = self.config.to_pairs();
        h.push(("d_link".into(), self.d_link.to_string()));
        h.push(("node_dim".into(), self.node_dim.to_string()));
        h.push((
            "node_features".into(),
            if self.one_hot { "one_hot" } else { "dense" }.into(),
        ));
        h
    }

    pub fn save_checkpoint(
        &self,
        manifest: impl AsRef<Path>,
        extra_header: &[(String, String)],
    ) -> Result<()> {
        let mut header = self.manifest_header();
        header.extend_from_slice(extra_header);
        let tensors: Vec<(&str, &DenseMatrix)> = self
            .params
            .tensors()
            .into_iter()
            .map(|p| (p.name.as_str(), &p.value))
            .collect();
        checkpoint::save(manifest, &header, &tensors)
    }

    /// Copies checkpoint values into this model after checking names and shapes.
    pub fn load_values(&mut self, ck: &Checkpoint) -> Result<()> {
        let tensors = self.params.tensors();
        if tensors.len() != ck.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                ck.tensors.len(),
                tensors.len()
            )));
        }
        for (p, (entry, m)) in tensors.iter().zip(&ck.tensors) {
            if p.name != entry.name || p.value.shape() != m.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor mismatch: model {} {:?}, checkpoint {} {:?}",
                    p.name,
                    p.value.shape(),
                    entry.name,
                    m.shape()
                )));
            }
        }
        for (p, (_, m)) in self.params.tensors_mut().into_iter().zip(&ck.tensors) {
            p.value = m.clone();
        }
        Ok(())
    }
}

impl HasParams for GraphMixer {
    fn param_values_mut(&mut self) -> Vec<(&str, &mut DenseMatrix)> {
        self.params
            .tensors_mut()
            .into_iter()
            .map(|p| (p.name.as_str(), &mut p.value))
            .collect()
    }
}
