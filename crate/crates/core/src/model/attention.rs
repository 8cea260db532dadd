//! Single-head self-attention encoders used in place of the mixer for ablations.
//!
//! Only the real (non-pad) token rows are attended over. `Full` scope runs scaled
//! dot-product attention among the real tokens and pools the per-token outputs; `OneHop`
//! scope scores every token against one learned root query and returns the weighted sum
//! of values, on which the pooling flag has no effect.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::ops;
use crate::tensor::{DenseMatrix, GradBuffer, ParamRegistry, ParamTensor};

use super::config::{AttentionScope, Pooling};
use super::layers::uniform_init;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub scope: AttentionScope,
    pub pooling: Pooling,
    pub wq: ParamTensor,
    pub wk: ParamTensor,
    pub wv: ParamTensor,
    /// `1 × d_k`, used by `OneHop` only.
    pub root_query: ParamTensor,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: DenseMatrix,
    q: DenseMatrix,
    k: DenseMatrix,
    v: DenseMatrix,
    attn: DenseMatrix,
}

impl AttentionParams {
    pub fn new(
        channels: usize,
        d_k: usize,
        scope: AttentionScope,
        pooling: Pooling,
        registry: &mut ParamRegistry,
        rng: &mut Rng,
    ) -> Self {
        let wq = registry.register("attn.wq", uniform_init(channels, d_k, channels, rng));
        let wk = registry.register("attn.wk", uniform_init(channels, d_k, channels, rng));
        let wv = registry.register("attn.wv", uniform_init(channels, d_k, channels, rng));
        let root_query = registry.register("attn.root_query", uniform_init(1, d_k, d_k, rng));
        Self {
            scope,
            pooling,
            wq,
            wk,
            wv,
            root_query,
        }
    }

    pub fn channels(&self) -> usize {
        self.wq.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.wv.value.cols()
    }

    fn scale(&self) -> f64 {
        1.0 / (self.wk.value.cols() as f64).sqrt()
    }

    /// Encodes the first `real_count` rows of `tokens`. No real rows gives the zero vector.
    pub fn forward(
        &self,
        tokens: &DenseMatrix,
        real_count: usize,
    ) -> Result<(Vec<f64>, Option<AttentionCache>)> {
        if tokens.cols() != self.channels() || real_count > tokens.rows() {
            return Err(Error::shape(
                "attention forward",
                format!(
                    "tokens {:?} with {real_count} real rows, channels {}",
                    tokens.shape(),
                    self.channels()
                ),
            ));
        }
        if real_count == 0 {
            return Ok((vec![0.0; self.out_dim()], None));
        }
        let x = DenseMatrix::from_vec(
            real_count,
            tokens.cols(),
            tokens.as_slice()[..real_count * tokens.cols()].to_vec(),
        )?;
        let k = ops::matmul(&x, &self.wk.value)?;
        let v = ops::matmul(&x, &self.wv.value)?;
        let s = self.scale();
        let (q, attn, out) = match self.scope {
            AttentionScope::Full => {
                let q = ops::matmul(&x, &self.wq.value)?;
                let mut scores = ops::matmul_nt(&q, &k)?;
                scores.scale(s);
                let attn = ops::softmax_rows(&scores);
                let o = ops::matmul(&attn, &v)?;
                let mut pooled = vec![0.0; o.cols()];
                for r in 0..o.rows() {
                    for (p, x) in pooled.iter_mut().zip(o.row(r)) {
                        *p += x;
                    }
                }
                if self.pooling == Pooling::Mean {
                    let n = o.rows() as f64;
                    pooled.iter_mut().for_each(|p| *p /= n);
                }
                (q, attn, pooled)
            }
            AttentionScope::OneHop => {
                let q = self.root_query.value.clone();
                let mut scores = ops::matmul_nt(&q, &k)?;
                scores.scale(s);
                let attn = ops::softmax_rows(&scores);
                let o = ops::matmul(&attn, &v)?;
                (q, attn, o.into_vec())
            }
        };
        Ok((out, Some(AttentionCache { x, q, k, v, attn })))
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the real token rows
    /// (`real_count × C`), or `None` when there were none.
    pub fn backward(
        &self,
        cache: Option<&AttentionCache>,
        grad_out: &[f64],
        grads: &mut GradBuffer,
    ) -> Result<Option<DenseMatrix>> {
        let Some(c) = cache else {
            return Ok(None);
        };
        let s = self.scale();
        let g_o = match self.scope {
            AttentionScope::Full => {
                let n = c.attn.rows();
                let w = if self.pooling == Pooling::Mean {
                    1.0 / n as f64
                } else {
                    1.0
                };
                let mut g = DenseMatrix::zeros(n, grad_out.len());
                for r in 0..n {
                    for (dst, src) in g.row_mut(r).iter_mut().zip(grad_out) {
                        *dst = src * w;
                    }
                }
                g
            }
            AttentionScope::OneHop => DenseMatrix::row_vector(grad_out.to_vec()),
        };
        let (g_attn, g_v) = ops::matmul_backward(&c.attn, &c.v, &g_o)?;
        let mut g_scores = ops::softmax_rows_backward(&c.attn, &g_attn);
        g_scores.scale(s);
        // scores = q · kᵀ
        let g_q = ops::matmul(&g_scores, &c.k)?;
        let g_k = ops::matmul_tn(&g_scores, &c.q)?;

        grads.slot_mut(&self.wk).add_assign(&ops::matmul_tn(&c.x, &g_k)?);
        grads.slot_mut(&self.wv).add_assign(&ops::matmul_tn(&c.x, &g_v)?);
        let mut g_x = ops::matmul_nt(&g_k, &self.wk.value)?;
        g_x.add_assign(&ops::matmul_nt(&g_v, &self.wv.value)?);
        match self.scope {
            AttentionScope::Full => {
                grads.slot_mut(&self.wq).add_assign(&ops::matmul_tn(&c.x, &g_q)?);
                g_x.add_assign(&ops::matmul_nt(&g_q, &self.wq.value)?);
            }
            AttentionScope::OneHop => {
                grads.slot_mut(&self.root_query).add_assign(&g_q);
            }
        }
        Ok(Some(g_x))
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.wq, &self.wk, &self.wv, &self.root_query]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.wq, &mut self.wk, &mut self.wv, &mut self.root_query]
    }
}
