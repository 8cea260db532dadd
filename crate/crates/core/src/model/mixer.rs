//! One-layer MLP-Mixer over a `K × C` token matrix.
//!
//! ```text
//! H_token   = H_in + W_tok2 · GELU(W_tok1 · LN(H_in) + b_tok1) + b_tok2
//! H_channel = H_token + GELU(LN(H_token) · W_ch1 + b_ch1) · W_ch2 + b_ch2
//! out       = mean over all K rows of H_channel
//! ```
//!
//! Token biases are column vectors broadcast across channels. Zero-pad rows are not
//! masked anywhere.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::ops::{self, LayerNormCache};
use crate::tensor::{DenseMatrix, GradBuffer, ParamRegistry, ParamTensor};

use super::layers::{uniform_init, LayerNorm, Linear};

#[derive(Debug, Clone, PartialEq)]
pub struct MixerParams {
    pub token_norm: LayerNorm,
    /// `r_tok × K`
    pub token_fc1_w: ParamTensor,
    /// `r_tok × 1`
    pub token_fc1_b: ParamTensor,
    /// `K × r_tok`
    pub token_fc2_w: ParamTensor,
    /// `K × 1`
    pub token_fc2_b: ParamTensor,
    pub channel_norm: LayerNorm,
    pub channel_fc1: Linear,
    pub channel_fc2: Linear,
}

/// Activations saved by [`MixerParams::forward`].
#[derive(Debug, Clone)]
pub struct MixerCache {
    ln1: LayerNormCache,
    ln1_out: DenseMatrix,
    token_pre: DenseMatrix,
    token_act: DenseMatrix,
    ln2: LayerNormCache,
    ln2_out: DenseMatrix,
    channel_pre: DenseMatrix,
    channel_act: DenseMatrix,
}

impl MixerParams {
    pub fn new(
        k: usize,
        channels: usize,
        token_hidden: usize,
        channel_hidden: usize,
        registry: &mut ParamRegistry,
        rng: &mut Rng,
    ) -> Self {
        let token_norm = LayerNorm::new("mixer.token_norm", channels, registry);
        let token_fc1_w = registry.register("mixer.token_fc1.weight", uniform_init(token_hidden, k, k, rng));
        let token_fc1_b = registry.register("mixer.token_fc1.bias", DenseMatrix::zeros(token_hidden, 1));
        let token_fc2_w = registry.register(
            "mixer.token_fc2.weight",
            uniform_init(k, token_hidden, token_hidden, rng),
        );
        let token_fc2_b = registry.register("mixer.token_fc2.bias", DenseMatrix::zeros(k, 1));
        let channel_norm = LayerNorm::new("mixer.channel_norm", channels, registry);
        let channel_fc1 = Linear::new("mixer.channel_fc1", channels, channel_hidden, registry, rng);
        let channel_fc2 = Linear::new("mixer.channel_fc2", channel_hidden, channels, registry, rng);
        Self {
            token_norm,
            token_fc1_w,
            token_fc1_b,
            token_fc2_w,
            token_fc2_b,
            channel_norm,
            channel_fc1,
            channel_fc2,
        }
    }

    pub fn tokens(&self) -> usize {
        self.token_fc2_w.value.rows()
    }

    pub fn channels(&self) -> usize {
        self.channel_fc1.in_dim()
    }

    pub fn forward(&self, input: &DenseMatrix) -> Result<(Vec<f64>, MixerCache)> {
        if input.shape() != (self.tokens(), self.channels()) {
            return Err(Error::shape(
                "mixer forward",
                format!(
                    "tokens {:?}, expected {:?}",
                    input.shape(),
                    (self.tokens(), self.channels())
                ),
            ));
        }
        // token mixing
        let (ln1_out, ln1) = self.token_norm.forward(input)?;
        let mut token_pre = ops::matmul(&self.token_fc1_w.value, &ln1_out)?;
        add_column_bias(&mut token_pre, self.token_fc1_b.value.as_slice());
        let token_act = ops::gelu_forward(&token_pre);
        let mut h_token = ops::matmul(&self.token_fc2_w.value, &token_act)?;
        add_column_bias(&mut h_token, self.token_fc2_b.value.as_slice());
        h_token.add_assign(input);

        // channel mixing
        let (ln2_out, ln2) = self.channel_norm.forward(&h_token)?;
        let channel_pre = self.channel_fc1.forward(&ln2_out)?;
        let channel_act = ops::gelu_forward(&channel_pre);
        let mut h_channel = self.channel_fc2.forward(&channel_act)?;
        h_channel.add_assign(&h_token);

        let out = ops::mean_rows_forward(&h_channel);
        Ok((
            out,
            MixerCache {
                ln1,
                ln1_out,
                token_pre,
                token_act,
                ln2,
                ln2_out,
                channel_pre,
                channel_act,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the token matrix.
    pub fn backward(
        &self,
        cache: &MixerCache,
        grad_out: &[f64],
        grads: &mut GradBuffer,
    ) -> Result<DenseMatrix> {
        let g_channel = ops::mean_rows_backward(self.tokens(), grad_out);

        let g_act = self.channel_fc2.backward(&cache.channel_act, &g_channel, grads)?;
        let g_pre = ops::gelu_backward(&cache.channel_pre, &g_act);
        let g_ln2 = self.channel_fc1.backward(&cache.ln2_out, &g_pre, grads)?;
        let mut g_token = self.channel_norm.backward(&cache.ln2, &g_ln2, grads);
        g_token.add_assign(&g_channel);

        let (g_w2, g_tact) = ops::matmul_backward(&self.token_fc2_w.value, &cache.token_act, &g_token)?;
        grads.slot_mut(&self.token_fc2_w).add_assign(&g_w2);
        accumulate_row_sums(grads.slot_mut(&self.token_fc2_b), &g_token);
        let g_tpre = ops::gelu_backward(&cache.token_pre, &g_tact);
        let (g_w1, g_ln1) = ops::matmul_backward(&self.token_fc1_w.value, &cache.ln1_out, &g_tpre)?;
        grads.slot_mut(&self.token_fc1_w).add_assign(&g_w1);
        accumulate_row_sums(grads.slot_mut(&self.token_fc1_b), &g_tpre);
        let mut g_input = self.token_norm.backward(&cache.ln1, &g_ln1, grads);
        g_input.add_assign(&g_token);
        Ok(g_input)
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut v = Vec::with_capacity(12);
        v.extend(self.token_norm.params());
        v.extend([
            &self.token_fc1_w,
            &self.token_fc1_b,
            &self.token_fc2_w,
            &self.token_fc2_b,
        ]);
        v.extend(self.channel_norm.params());
        v.extend(self.channel_fc1.params());
        v.extend(self.channel_fc2.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v = Vec::with_capacity(12);
        v.extend(self.token_norm.params_mut());
        v.extend([
            &mut self.token_fc1_w,
            &mut self.token_fc1_b,
            &mut self.token_fc2_w,
            &mut self.token_fc2_b,
        ]);
        v.extend(self.channel_norm.params_mut());
        v.extend(self.channel_fc1.params_mut());
        v.extend(self.channel_fc2.params_mut());
        v
    }
}

fn add_column_bias(m: &mut DenseMatrix, bias: &[f64]) {
    for (r, b) in bias.iter().enumerate() {
        m.row_mut(r).iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_row_sums(dst: &mut DenseMatrix, g: &DenseMatrix) {
    for r in 0..g.rows() {
        dst.as_mut_slice()[r] += g.row(r).iter().sum::<f64>();
    }
}
