//! Forward and backward kernels.
//!
//! Each backward takes whatever the forward saved plus the upstream gradient and returns
//! gradients for every input. Nothing here keeps a tape.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::DenseMatrix;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `C = A · B`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut c = DenseMatrix::zeros(n, m);
    let (ad, bd) = (a.as_slice(), b.as_slice());
    let cd = c.as_mut_slice();
    for i in 0..n {
        let crow = &mut cd[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (c, b) in crow.iter_mut().zip(brow) {
                *c += aip * b;
            }
        }
    }
    c.debug_check_finite("matmul");
    Ok(c)
}

/// `Aᵀ · B` without materialising the transpose.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape(
            "matmul_tn",
            format!("{:?}ᵀ x {:?}", a.shape(), b.shape()),
        ));
    }
    let (k, n, m) = (a.rows(), a.cols(), b.cols());
    let mut c = DenseMatrix::zeros(n, m);
    let (ad, bd) = (a.as_slice(), b.as_slice());
    let cd = c.as_mut_slice();
    for p in 0..k {
        let brow = &bd[p * m..(p + 1) * m];
        for i in 0..n {
            let api = ad[p * n + i];
            if api == 0.0 {
                continue;
            }
            let crow = &mut cd[i * m..(i + 1) * m];
            for (c, b) in crow.iter_mut().zip(brow) {
                *c += api * b;
            }
        }
    }
    Ok(c)
}

/// `A · Bᵀ` without materialising the transpose.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::shape(
            "matmul_nt",
            format!("{:?} x {:?}ᵀ", a.shape(), b.shape()),
        ));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.rows());
    let mut c = DenseMatrix::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..m {
            let brow = b.row(j);
            c.as_mut_slice()[i * m + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    debug_assert_eq!(k, b.cols());
    Ok(c)
}

/// Gradients of `C = A · B`: `(gC · Bᵀ, Aᵀ · gC)`.
pub fn matmul_backward(
    a: &DenseMatrix,
    b: &DenseMatrix,
    grad_c: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if grad_c.shape() != (a.rows(), b.cols()) {
        return Err(Error::shape(
            "matmul_backward",
            format!("grad {:?} for {:?} x {:?}", grad_c.shape(), a.shape(), b.shape()),
        ));
    }
    Ok((matmul_nt(grad_c, b)?, matmul_tn(a, grad_c)?))
}

/// Exact GELU, `x · Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// `Φ(x) + x · φ(x)`.
#[inline]
pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

pub fn gelu_forward(x: &DenseMatrix) -> DenseMatrix {
    let data = x.as_slice().iter().map(|&v| gelu(v)).collect();
    DenseMatrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

/// Gradient w.r.t. the GELU input `x` given upstream `grad_y`.
pub fn gelu_backward(x: &DenseMatrix, grad_y: &DenseMatrix) -> DenseMatrix {
    assert_eq!(x.shape(), grad_y.shape(), "gelu_backward shape mismatch");
    let data = x
        .as_slice()
        .iter()
        .zip(grad_y.as_slice())
        .map(|(&v, &g)| g * gelu_derivative(v))
        .collect();
    DenseMatrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

/// What layer-norm backward needs.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: DenseMatrix,
    pub inv_std: Vec<f64>,
}

/// Per-row normalisation over columns followed by `gamma ⊙ x̂ + beta`.
pub fn layer_norm_forward(
    x: &DenseMatrix,
    gamma: &[f64],
    beta: &[f64],
) -> Result<(DenseMatrix, LayerNormCache)> {
    let c = x.cols();
    if c < 2 || gamma.len() != c || beta.len() != c {
        return Err(Error::shape(
            "layer_norm_forward",
            format!(
                "input {:?}, gamma {}, beta {} (need ≥ 2 matching channels)",
                x.shape(),
                gamma.len(),
                beta.len()
            ),
        ));
    }
    let mut normalized = DenseMatrix::zeros(x.rows(), c);
    let mut y = DenseMatrix::zeros(x.rows(), c);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(inv);
        let nrow = normalized.row_mut(r);
        for (n, v) in nrow.iter_mut().zip(row) {
            *n = (v - mean) * inv;
        }
        let nrow = normalized.row(r).to_vec();
        for (j, out) in y.row_mut(r).iter_mut().enumerate() {
            *out = gamma[j] * nrow[j] + beta[j];
        }
    }
    Ok((y, LayerNormCache { normalized, inv_std }))
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    grad_y: &DenseMatrix,
) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
    let (rows, c) = grad_y.shape();
    assert_eq!(cache.normalized.shape(), (rows, c), "layer_norm_backward shape");
    let mut gx = DenseMatrix::zeros(rows, c);
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    let mut gxhat = vec![0.0; c];
    for r in 0..rows {
        let gy = grad_y.row(r);
        let xhat = cache.normalized.row(r);
        for j in 0..c {
            ggamma[j] += gy[j] * xhat[j];
            gbeta[j] += gy[j];
            gxhat[j] = gy[j] * gamma[j];
        }
        let mean_g = gxhat.iter().sum::<f64>() / c as f64;
        let mean_gx = gxhat.iter().zip(xhat).map(|(g, x)| g * x).sum::<f64>() / c as f64;
        let inv = cache.inv_std[r];
        for (j, out) in gx.row_mut(r).iter_mut().enumerate() {
            *out = inv * (gxhat[j] - mean_g - xhat[j] * mean_gx);
        }
    }
    (gx, ggamma, gbeta)
}

/// Column means over all rows.
pub fn mean_rows_forward(x: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (o, v) in out.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    let n = x.rows().max(1) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Spreads `grad / rows` to every row.
pub fn mean_rows_backward(rows: usize, grad: &[f64]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(rows, grad.len());
    let n = rows.max(1) as f64;
    for r in 0..rows {
        for (o, g) in out.row_mut(r).iter_mut().zip(grad) {
            *o = g / n;
        }
    }
    out
}

/// Row softmax with max subtraction.
pub fn softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut y = x.clone();
    for r in 0..y.rows() {
        let row = y.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    y
}

/// Gradient w.r.t. the softmax input given its output `y`.
pub fn softmax_rows_backward(y: &DenseMatrix, grad_y: &DenseMatrix) -> DenseMatrix {
    assert_eq!(y.shape(), grad_y.shape(), "softmax_rows_backward shape");
    let mut gx = DenseMatrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), grad_y.row(r));
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for (j, out) in gx.row_mut(r).iter_mut().enumerate() {
            *out = yr[j] * (gr[j] - dot);
        }
    }
    gx
}
