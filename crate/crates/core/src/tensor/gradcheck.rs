use rand::seq::index;

use super::DenseMatrix;
use crate::rng::Rng;

/// Anything whose parameter values can be perturbed in place.
pub trait HasParams {
    /// Parameter names and values in slot order.
    fn param_values_mut(&mut self) -> Vec<(&str, &mut DenseMatrix)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Worst relative error per tensor, in slot order.
    pub per_tensor: Vec<(String, f64)>,
    pub coords_checked: usize,
    pub max_abs_err: f64,
}

/// Gradient magnitude below which a central difference with step `h` cannot resolve
/// relative error `tol`: the rounding noise of `(L(θ+h) − L(θ−h)) / 2h` is about
/// `ε·|L|/h`, taken here with a safety factor of 16.
pub fn fd_noise_floor(loss: f64, h: f64, tol: f64) -> f64 {
    16.0 * f64::EPSILON * loss.abs().max(1.0) / h / tol
}

/// Central-difference check of `analytic` against `loss` around the current values.
///
/// At most `max_coords` coordinates per tensor are probed, chosen with `rng`. Relative
/// error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check<M, F>(
    model: &mut M,
    analytic: &[DenseMatrix],
    h: f64,
    max_coords: usize,
    rng: &mut Rng,
    loss: F,
) -> GradCheckReport
where
    M: HasParams,
    F: FnMut(&M) -> f64,
{
    finite_difference_check_floored(model, analytic, h, max_coords, 1e-8, rng, loss)
}

/// [`finite_difference_check`] with the relative-error denominator floored at `floor`
/// (see [`fd_noise_floor`]).
pub fn finite_difference_check_floored<M, F>(
    model: &mut M,
    analytic: &[DenseMatrix],
    h: f64,
    max_coords: usize,
    floor: f64,
    rng: &mut Rng,
    mut loss: F,
) -> GradCheckReport
where
    M: HasParams,
    F: FnMut(&M) -> f64,
{
    let shapes: Vec<(String, usize)> = model
        .param_values_mut()
        .into_iter()
        .map(|(n, v)| (n.to_string(), v.len()))
        .collect();
    assert_eq!(shapes.len(), analytic.len(), "analytic gradient count mismatch");

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        per_tensor: Vec::with_capacity(shapes.len()),
        coords_checked: 0,
        max_abs_err: 0.0,
    };
    for (ti, (name, len)) in shapes.iter().enumerate() {
        assert_eq!(analytic[ti].len(), *len, "gradient shape mismatch for {name}");
        let coords: Vec<usize> = if *len <= max_coords {
            (0..*len).collect()
        } else {
            index::sample(rng, *len, max_coords).into_vec()
        };
        let mut worst: f64 = 0.0;
        for c in coords {
            let orig = model.param_values_mut()[ti].1.as_slice()[c];
            model.param_values_mut()[ti].1.as_mut_slice()[c] = orig + h;
            let plus = loss(model);
            model.param_values_mut()[ti].1.as_mut_slice()[c] = orig - h;
            let minus = loss(model);
            model.param_values_mut()[ti].1.as_mut_slice()[c] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti].as_slice()[c];
            let denom = a.abs().max(numeric.abs()).max(floor);
            let err = (a - numeric).abs() / denom;
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            worst = worst.max(err);
            report.coords_checked += 1;
        }
        report.max_rel_err = report.max_rel_err.max(worst);
        report.per_tensor.push((name.clone(), worst));
    }
    report
}
