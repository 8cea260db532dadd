//! Parameter-trajectory and loss-landscape probes.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::GraphMixer;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub t: usize,
    /// `‖δ_t‖ / ‖δ_0‖`
    pub r: f64,
    /// Angle between `δ_t` and `δ_0`, in `[0, π]`.
    pub theta: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Distance ratio and angle of each snapshot's offset `δ_t = w_t − w*` relative to `δ_0`.
///
/// A zero offset (at `t` or at the reference `t = 0`) is reported as `r = 0, θ = 0`.
pub fn parameter_trajectory(snapshots: &[Vec<f64>], final_params: &[f64]) -> Result<Vec<TrajectoryRecord>> {
    let deltas = snapshots
        .iter()
        .map(|w| {
            if w.len() != final_params.len() {
                return Err(Error::shape(
                    "parameter_trajectory",
                    format!("snapshot of {} values, final of {}", w.len(), final_params.len()),
                ));
            }
            Ok(w.iter()
                .zip(final_params)
                .map(|(a, b)| a - b)
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let Some(d0) = deltas.first() else {
        return Ok(Vec::new());
    };
    let n0 = dot(d0, d0).sqrt();
    Ok(deltas
        .iter()
        .enumerate()
        .map(|(t, d)| {
            let nt = dot(d, d).sqrt();
            if nt == 0.0 || n0 == 0.0 {
                return TrajectoryRecord {
                    t,
                    r: 0.0,
                    theta: 0.0,
                };
            }
            // 2·atan2(‖u − v‖, ‖u + v‖) stays accurate near 0 and π, unlike acos
            let (mut diff, mut sum) = (0.0, 0.0);
            for (a, b) in d.iter().zip(d0) {
                let (u, v) = (a / nt, b / n0);
                diff += (u - v) * (u - v);
                sum += (u + v) * (u + v);
            }
            TrajectoryRecord {
                t,
                r: nt / n0,
                theta: 2.0 * diff.sqrt().atan2(sum.sqrt()),
            }
        })
        .collect())
}

/// Gaussian direction with each parameter tensor rescaled to that tensor's norm.
pub fn filter_normalized_direction(model: &GraphMixer, rng: &mut rng::Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.params.num_scalars());
    for p in model.params.tensors() {
        let mut d: Vec<f64> = (0..p.value.len()).map(|_| StandardNormal.sample(rng)).collect();
        let dn = dot(&d, &d).sqrt();
        let wn = p.value.norm();
        let s = if dn > 0.0 { wn / dn } else { 0.0 };
        d.iter_mut().for_each(|v| *v *= s);
        out.extend(d);
    }
    out
}

/// Two frozen directions drawn from `seed`.
pub fn landscape_directions(model: &GraphMixer, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::seeded(rng::derive(seed, rng::offset::LANDSCAPE));
    let d1 = filter_normalized_direction(model, &mut r);
    let d2 = filter_normalized_direction(model, &mut r);
    (d1, d2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub coords: Vec<f64>,
    /// `losses[i][j]` at `(x, y) = (coords[i], coords[j])`.
    pub losses: Vec<Vec<f64>>,
}

impl LandscapeGrid {
    pub fn center(&self) -> Option<f64> {
        let n = self.coords.len();
        (n % 2 == 1).then(|| self.losses[n / 2][n / 2])
    }
}

/// `n` evenly spaced coefficients over `[−span, span]`; the middle one is exactly zero
/// for odd `n`.
pub fn grid_coords(n: usize, span: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| {
            let twice = 2 * i as i64 - (n as i64 - 1);
            if twice == 0 {
                0.0
            } else {
                span * twice as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Loss at `w* + x·d1 + y·d2` over an `n × n` grid. `loss` is evaluated on a perturbed
/// copy of `model`.
pub fn loss_landscape<F>(
    model: &GraphMixer,
    directions: (&[f64], &[f64]),
    n: usize,
    span: f64,
    mut loss: F,
) -> Result<LandscapeGrid>
where
    F: FnMut(&GraphMixer) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::InvalidParameter("landscape grid needs n ≥ 1".into()));
    }
    let base = model.params.flatten();
    let (d1, d2) = directions;
    if d1.len() != base.len() || d2.len() != base.len() {
        return Err(Error::shape(
            "loss_landscape",
            "direction length differs from parameter count",
        ));
    }
    let coords = grid_coords(n, span);
    let mut probe = model.clone();
    let mut losses = Vec::with_capacity(n);
    for &x in &coords {
        let mut row = Vec::with_capacity(n);
        for &y in &coords {
            let w: Vec<f64> = base
                .iter()
                .zip(d1.iter().zip(d2))
                .map(|(b, (a, c))| b + (x * a + y * c))
                .collect();
            probe.params.assign_flat(&w)?;
            row.push(loss(&probe)?);
        }
        losses.push(row);
    }
    Ok(LandscapeGrid { coords, losses })
}
