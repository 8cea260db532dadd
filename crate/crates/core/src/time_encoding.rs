//! Time encodings.
//!
//! The fixed encoding maps `t` to `cos(t·ω)` with `ω_i = α^(-(i-1)/β)`, a geometric
//! ladder from `1` down to `α^(-(d-1)/β)`. It has no parameters. The trainable encoding
//! `cos(t·w + b)` exists for comparison; its `w`-gradient carries a factor of `t`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, GradBuffer, ParamRegistry, ParamTensor};

pub const DEFAULT_DIM: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedTimeEncoding {
    d: usize,
    alpha: f64,
    beta: f64,
    omega: Vec<f64>,
}

impl Default for FixedTimeEncoding {
    /// `d = 100`, `α = β = √d = 10`.
    fn default() -> Self {
        Self::with_dim(DEFAULT_DIM)
    }
}

impl FixedTimeEncoding {
    /// `d`-dimensional encoding with `α = β = √d`.
    pub fn with_dim(d: usize) -> Self {
        let s = (d.max(1) as f64).sqrt().max(1.0 + 1e-9);
        make_omega(d.max(1), s, s).expect("√d is a valid alpha/beta for d ≥ 2")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// `cos(t·ω)`.
    pub fn encode(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.encode_into(t, &mut out);
        out
    }

    pub fn encode_into(&self, t: f64, out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.omega) {
            *o = (t * w).cos();
        }
    }

    /// Number of trainable parameters: always zero.
    pub fn num_parameters(&self) -> usize {
        0
    }

    pub fn write_omega_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::from("index,omega\n");
        for (i, w) in self.omega.iter().enumerate() {
            let _ = writeln!(s, "{},{w:e}", i + 1);
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Builds `ω_i = α^(-(i-1)/β)` for `i = 1..=d`.
pub fn make_omega(d: usize, alpha: f64, beta: f64) -> Result<FixedTimeEncoding> {
    if d == 0 {
        return Err(Error::InvalidParameter(
            "time encoding dimension must be ≥ 1".into(),
        ));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be > 1, got {alpha}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
    }
    let omega = (0..d).map(|i| alpha.powf(-(i as f64) / beta)).collect();
    Ok(FixedTimeEncoding {
        d,
        alpha,
        beta,
        omega,
    })
}

/// What the trainable backward needs from its forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeContext {
    pub t: f64,
}

/// `z(t) = cos(t·w + b)` with learnable `w` and `b` (each `1 × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableTimeEncoding {
    pub w: ParamTensor,
    pub b: ParamTensor,
}

impl TrainableTimeEncoding {
    /// Starts at the fixed encoding: `w = ω`, `b = 0`.
    pub fn from_fixed(fixed: &FixedTimeEncoding, registry: &mut ParamRegistry) -> Self {
        let w = registry.register("time.w", DenseMatrix::row_vector(fixed.omega.clone()));
        let b = registry.register("time.b", DenseMatrix::zeros(1, fixed.d));
        Self { w, b }
    }

    pub fn from_values(w: Vec<f64>, b: Vec<f64>, registry: &mut ParamRegistry) -> Result<Self> {
        if w.len() != b.len() || w.is_empty() {
            return Err(Error::shape(
                "TrainableTimeEncoding::from_values",
                format!("w has {} entries, b has {}", w.len(), b.len()),
            ));
        }
        let w = registry.register("time.w", DenseMatrix::row_vector(w));
        let b = registry.register("time.b", DenseMatrix::row_vector(b));
        Ok(Self { w, b })
    }

    pub fn dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, t: f64) -> (Vec<f64>, TimeContext) {
        let mut out = vec![0.0; self.dim()];
        self.forward_into(t, &mut out);
        (out, TimeContext { t })
    }

    pub fn forward_into(&self, t: f64, out: &mut [f64]) {
        let (w, b) = (self.w.value.as_slice(), self.b.value.as_slice());
        for i in 0..out.len() {
            out[i] = (t * w[i] + b[i]).cos();
        }
    }

    /// Accumulates `∂L/∂w_i = -t·sin(t·w_i + b_i)·g_i` and `∂L/∂b_i = -sin(t·w_i + b_i)·g_i`
    /// into `grads`.
    pub fn backward(
        &self,
        ctx: Option<&TimeContext>,
        upstream: &[f64],
        grads: &mut GradBuffer,
    ) -> Result<()> {
        let (gw, gb) = self.local_grads(ctx, upstream)?;
        add_into(grads.slot_mut(&self.w).as_mut_slice(), &gw);
        add_into(grads.slot_mut(&self.b).as_mut_slice(), &gb);
        Ok(())
    }

    /// Same as [`backward`](Self::backward) but into the tensors' own `grad` fields.
    pub fn backward_accumulate(&mut self, ctx: Option<&TimeContext>, upstream: &[f64]) -> Result<()> {
        let (gw, gb) = self.local_grads(ctx, upstream)?;
        add_into(self.w.grad.as_mut_slice(), &gw);
        add_into(self.b.grad.as_mut_slice(), &gb);
        Ok(())
    }

    fn local_grads(&self, ctx: Option<&TimeContext>, upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let ctx = ctx.ok_or(Error::MissingContext)?;
        if upstream.len() != self.dim() {
            return Err(Error::shape(
                "TrainableTimeEncoding::backward",
                format!("upstream has {} entries for d = {}", upstream.len(), self.dim()),
            ));
        }
        let t = ctx.t;
        let (w, b) = (self.w.value.as_slice(), self.b.value.as_slice());
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; w.len()];
        for i in 0..w.len() {
            let s = (t * w[i] + b[i]).sin();
            gw[i] = -t * s * upstream[i];
            gb[i] = -s * upstream[i];
        }
        Ok((gw, gb))
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `‖∂L/∂w‖₂` for the probe loss `L = Σ_j Σ_i z_i(t_j)`.
pub fn grad_norm_probe(enc: &TrainableTimeEncoding, ts: &[f64]) -> f64 {
    let (w, b) = (enc.w.value.as_slice(), enc.b.value.as_slice());
    let mut g = vec![0.0; w.len()];
    for &t in ts {
        for i in 0..w.len() {
            g[i] -= t * (t * w[i] + b[i]).sin();
        }
    }
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}
