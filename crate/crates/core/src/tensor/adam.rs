use super::{DenseMatrix, ParamTensor};

/// Adam hyperparameters. Weight decay is classic L2 folded into the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// First/second moment buffers, one pair per parameter tensor in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a ParamTensor>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| {
                let (r, c) = p.shape();
                (DenseMatrix::zeros(r, c), DenseMatrix::zeros(r, c))
            })
            .unzip();
        Self {
            config,
            step: 0,
            m,
            v,
        }
    }
}

/// One bias-corrected Adam update over `params`, then zeroes their gradients.
pub fn adam_step(params: &mut [&mut ParamTensor], state: &mut AdamState) {
    assert_eq!(params.len(), state.m.len(), "adam state/param count mismatch");
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let m = state.m[i].as_mut_slice();
        let v = state.v[i].as_mut_slice();
        let value = p.value.as_mut_slice();
        let grad = p.grad.as_mut_slice();
        for j in 0..value.len() {
            let g = grad[j] + weight_decay * value[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            grad[j] = 0.0;
        }
    }
}
