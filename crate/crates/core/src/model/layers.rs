use rand::Rng as _;

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::ops::{self, LayerNormCache};
use crate::tensor::{DenseMatrix, GradBuffer, ParamRegistry, ParamTensor};

/// Uniform `[-1/√fan_in, 1/√fan_in]` initialisation.
pub fn uniform_init(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> DenseMatrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("sized")
}

/// `y = x · W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

impl Linear {
    pub fn new(
        name: &str,
        fan_in: usize,
        fan_out: usize,
        registry: &mut ParamRegistry,
        rng: &mut Rng,
    ) -> Self {
        let weight = registry.register(
            format!("{name}.weight"),
            uniform_init(fan_in, fan_out, fan_in, rng),
        );
        let bias = registry.register(format!("{name}.bias"), DenseMatrix::zeros(1, fan_out));
        Self { weight, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut y = ops::matmul(x, &self.weight.value)?;
        let b = self.bias.value.as_slice();
        for r in 0..y.rows() {
            for (v, bb) in y.row_mut(r).iter_mut().zip(b) {
                *v += bb;
            }
        }
        Ok(y)
    }

    /// Single-row convenience.
    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&DenseMatrix::row_vector(x.to_vec()))?.into_vec())
    }

    /// Accumulates weight/bias gradients and returns the gradient w.r.t. `x`.
    pub fn backward(
        &self,
        x: &DenseMatrix,
        grad_y: &DenseMatrix,
        grads: &mut GradBuffer,
    ) -> Result<DenseMatrix> {
        let (gx, gw) = ops::matmul_backward(x, &self.weight.value, grad_y)?;
        grads.slot_mut(&self.weight).add_assign(&gw);
        let gb = grads.slot_mut(&self.bias).as_mut_slice();
        for r in 0..grad_y.rows() {
            for (g, v) in gb.iter_mut().zip(grad_y.row(r)) {
                *g += v;
            }
        }
        Ok(gx)
    }

    pub fn params(&self) -> [&ParamTensor; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Learnable layer-norm affine (`gamma` starts at 1, `beta` at 0).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: ParamTensor,
    pub beta: ParamTensor,
}

impl LayerNorm {
    pub fn new(name: &str, channels: usize, registry: &mut ParamRegistry) -> Self {
        let mut ones = DenseMatrix::zeros(1, channels);
        ones.fill(1.0);
        Self {
            gamma: registry.register(format!("{name}.gamma"), ones),
            beta: registry.register(format!("{name}.beta"), DenseMatrix::zeros(1, channels)),
        }
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<(DenseMatrix, LayerNormCache)> {
        ops::layer_norm_forward(x, self.gamma.value.as_slice(), self.beta.value.as_slice())
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache,
        grad_y: &DenseMatrix,
        grads: &mut GradBuffer,
    ) -> DenseMatrix {
        let (gx, gg, gb) = ops::layer_norm_backward(cache, self.gamma.value.as_slice(), grad_y);
        for (a, b) in grads.slot_mut(&self.gamma).as_mut_slice().iter_mut().zip(&gg) {
            *a += b;
        }
        for (a, b) in grads.slot_mut(&self.beta).as_mut_slice().iter_mut().zip(&gb) {
            *a += b;
        }
        gx
    }

    pub fn params(&self) -> [&ParamTensor; 2] {
        [&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor; 2] {
        [&mut self.gamma, &mut self.beta]
    }
}
