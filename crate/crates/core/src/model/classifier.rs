//! Two-layer MLP on `[h_i ‖ h_j]` producing one logit.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::ops;
use crate::tensor::{DenseMatrix, GradBuffer, ParamRegistry, ParamTensor};

use super::layers::Linear;

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache {
    input: DenseMatrix,
    pre: DenseMatrix,
    act: DenseMatrix,
}

impl Classifier {
    pub fn new(repr_dim: usize, hidden: usize, registry: &mut ParamRegistry, rng: &mut Rng) -> Self {
        Self {
            fc1: Linear::new("classifier.fc1", 2 * repr_dim, hidden, registry, rng),
            fc2: Linear::new("classifier.fc2", hidden, 1, registry, rng),
        }
    }

    pub fn repr_dim(&self) -> usize {
        self.fc1.in_dim() / 2
    }

    pub fn forward(&self, h_i: &[f64], h_j: &[f64]) -> Result<(f64, ClassifierCache)> {
        if h_i.len() != self.repr_dim() || h_j.len() != self.repr_dim() {
            return Err(Error::shape(
                "classifier",
                format!(
                    "inputs of width {} and {}, expected {}",
                    h_i.len(),
                    h_j.len(),
                    self.repr_dim()
                ),
            ));
        }
        let input = DenseMatrix::row_vector([h_i, h_j].concat());
        let pre = self.fc1.forward(&input)?;
        let act = ops::gelu_forward(&pre);
        let logit = self.fc2.forward(&act)?.as_slice()[0];
        Ok((logit, ClassifierCache { input, pre, act }))
    }

    /// Returns `(∂/∂h_i, ∂/∂h_j)` and accumulates parameter gradients.
    pub fn backward(
        &self,
        cache: &ClassifierCache,
        grad_logit: f64,
        grads: &mut GradBuffer,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = DenseMatrix::row_vector(vec![grad_logit]);
        let g_act = self.fc2.backward(&cache.act, &g, grads)?;
        let g_pre = ops::gelu_backward(&cache.pre, &g_act);
        let g_in = self.fc1.backward(&cache.input, &g_pre, grads)?.into_vec();
        let d = self.repr_dim();
        Ok((g_in[..d].to_vec(), g_in[d..].to_vec()))
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut v = self.fc1.params().to_vec();
        v.extend(self.fc2.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v: Vec<&mut ParamTensor> = self.fc1.params_mut().into_iter().collect();
        v.extend(self.fc2.params_mut());
        v
    }
}
