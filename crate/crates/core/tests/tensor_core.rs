use proptest::prelude::*;
use rand::Rng as _;
use tgmixer::rng::{self, Rng};
use tgmixer::tensor::checkpoint;
use tgmixer::tensor::ops::*;
use tgmixer::tensor::{
    adam_step, fd_noise_floor, finite_difference_check, AdamConfig, AdamState, DenseMatrix, HasParams,
    ParamTensor,
};

fn random(rows: usize, cols: usize, r: &mut Rng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| r.random_range(-2.0..2.0)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

fn dot(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Central-difference gradient of `f` at `x`.
fn numeric_grad(x: &DenseMatrix, h: f64, f: impl Fn(&DenseMatrix) -> f64) -> DenseMatrix {
    let mut g = DenseMatrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        g.as_mut_slice()[i] = (plus - minus) / (2.0 * h);
    }
    g
}

fn max_rel_err(a: &DenseMatrix, n: &DenseMatrix) -> f64 {
    max_rel_err_floored(a, n, 1e-8)
}

/// Relative error whose denominator never drops below `floor`, for gradients that can be
/// smaller than the rounding noise of the difference quotient.
fn max_rel_err_floored(a: &DenseMatrix, n: &DenseMatrix, floor: f64) -> f64 {
    a.as_slice()
        .iter()
        .zip(n.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[test]
fn matmul_examples_and_gradients() {
    let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    let b = DenseMatrix::from_rows(&[vec![5.0], vec![6.0]]);
    assert_eq!(
        matmul(&a, &b).unwrap(),
        DenseMatrix::from_rows(&[vec![17.0], vec![39.0]])
    );

    let mut r = rng::seeded(1);
    let x = random(3, 4, &mut r);
    assert_eq!(matmul(&DenseMatrix::identity(3), &x).unwrap(), x);

    let a = random(3, 4, &mut r);
    let b = random(4, 2, &mut r);
    let w = random(3, 2, &mut r);
    let (ga, gb) = matmul_backward(&a, &b, &w).unwrap();
    let na = numeric_grad(&a, 1e-6, |a| dot(&matmul(a, &b).unwrap(), &w));
    let nb = numeric_grad(&b, 1e-6, |b| dot(&matmul(&a, b).unwrap(), &w));
    assert!(max_rel_err(&ga, &na) <= 1e-7);
    assert!(max_rel_err(&gb, &nb) <= 1e-7);
    assert!(matmul(&a, &a).is_err());
}

#[test]
fn gelu_values_and_gradient() {
    assert_eq!(gelu(0.0), 0.0);
    assert!((gelu(1.0) - 0.841_344_746).abs() < 1e-4);
    let mut r = rng::seeded(2);
    let x = random(4, 5, &mut r);
    let w = random(4, 5, &mut r);
    let g = gelu_backward(&x, &w);
    let n = numeric_grad(&x, 1e-6, |x| dot(&gelu_forward(x), &w));
    assert!(max_rel_err(&g, &n) <= 1e-5);
}

#[test]
fn layer_norm_example_and_gradient() {
    let x = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]]);
    let (y, _) = layer_norm_forward(&x, &[1.0; 3], &[0.0; 3]).unwrap();
    let want = [-1.224_74, 0.0, 1.224_74];
    for (a, b) in y.row(0).iter().zip(want) {
        assert!((a - b).abs() < 1e-4);
    }
    assert!(y.row(1).iter().all(|v| v.abs() < 1e-12));

    let mut r = rng::seeded(3);
    let x = random(3, 5, &mut r);
    let gamma: Vec<f64> = (0..5).map(|_| r.random_range(0.5..1.5)).collect();
    let beta: Vec<f64> = (0..5).map(|_| r.random_range(-0.5..0.5)).collect();
    let w = random(3, 5, &mut r);
    let (_, cache) = layer_norm_forward(&x, &gamma, &beta).unwrap();
    let (gx, ggamma, gbeta) = layer_norm_backward(&cache, &gamma, &w);
    let loss = |x: &DenseMatrix, g: &[f64], b: &[f64]| dot(&layer_norm_forward(x, g, b).unwrap().0, &w);
    let nx = numeric_grad(&x, 1e-6, |x| loss(x, &gamma, &beta));
    let as_row = |v: &[f64]| DenseMatrix::row_vector(v.to_vec());
    let ng = numeric_grad(&as_row(&gamma), 1e-6, |g| loss(&x, g.as_slice(), &beta));
    let nb = numeric_grad(&as_row(&beta), 1e-6, |b| loss(&x, &gamma, b.as_slice()));
    assert!(max_rel_err(&gx, &nx) <= 1e-5);
    assert!(max_rel_err(&as_row(&ggamma), &ng) <= 1e-5);
    assert!(max_rel_err(&as_row(&gbeta), &nb) <= 1e-5);
}

#[test]
fn mean_rows_dilution_and_gradient() {
    let a = vec![2.0, -4.0, 6.0];
    let x = DenseMatrix::from_rows(&[a.clone(), vec![0.0; 3]]);
    assert_eq!(mean_rows_forward(&x), vec![1.0, -2.0, 3.0]);
    assert_eq!(
        mean_rows_forward(&DenseMatrix::from_rows(std::slice::from_ref(&a))),
        a
    );
    let g = mean_rows_backward(4, &[4.0, 8.0]);
    assert!(g.as_slice().chunks(2).all(|row| row == [1.0, 2.0]));
}

#[test]
fn softmax_examples_and_gradient() {
    let y = softmax_rows(&DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1000.0, 0.0]]));
    assert_eq!(y.row(0), [0.5, 0.5]);
    assert!((y.get(1, 0) - 1.0).abs() < 1e-15 && y.get(1, 1) < 1e-300);
    assert!(y.is_finite());

    let mut r = rng::seeded(4);
    let x = random(3, 4, &mut r);
    let w = random(3, 4, &mut r);
    let g = softmax_rows_backward(&softmax_rows(&x), &w);
    let n = numeric_grad(&x, 1e-6, |x| dot(&softmax_rows(x), &w));
    assert!(max_rel_err(&g, &n) <= 1e-6);
}

fn scalar_param(v: f64) -> ParamTensor {
    ParamTensor::new("x", 0, DenseMatrix::row_vector(vec![v]))
}

#[test]
fn adam_zero_grad_keeps_params() {
    let mut p = scalar_param(1.5);
    let mut s = AdamState::new(
        AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::with_lr(0.1)
        },
        [&p],
    );
    for _ in 0..5 {
        adam_step(&mut [&mut p], &mut s);
    }
    assert_eq!(p.value.as_slice(), [1.5]);
    assert_eq!(s.step, 5);
}

#[test]
fn adam_first_step_closed_form() {
    let mut p = scalar_param(0.0);
    let config = AdamConfig {
        weight_decay: 0.0,
        ..AdamConfig::with_lr(0.1)
    };
    let mut s = AdamState::new(config, [&p]);
    p.grad.as_mut_slice()[0] = 1.0;
    adam_step(&mut [&mut p], &mut s);
    // m̂ = v̂ = 1 after bias correction
    let want = -0.1 / (1.0 + config.eps);
    assert!((p.value.as_slice()[0] - want).abs() < 1e-15);
    assert_eq!(p.grad.as_slice(), [0.0], "grads are zeroed");
}

#[test]
fn adam_minimizes_quadratic() {
    let mut p = scalar_param(0.0);
    let mut s = AdamState::new(
        AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::with_lr(0.01)
        },
        [&p],
    );
    let mut steps = 0;
    while (p.value.as_slice()[0] - 3.0).abs() >= 1e-3 {
        let x = p.value.as_slice()[0];
        p.grad.as_mut_slice()[0] = 2.0 * (x - 3.0);
        adam_step(&mut [&mut p], &mut s);
        steps += 1;
        assert!(steps <= 2000, "did not converge, x = {x}");
    }
}

#[test]
fn adam_is_bit_deterministic() {
    let run = || {
        let mut r = rng::seeded(9);
        let mut p = ParamTensor::new("w", 0, random(3, 3, &mut r));
        let mut s = AdamState::new(AdamConfig::with_lr(0.05), [&p]);
        for _ in 0..20 {
            p.grad = random(3, 3, &mut r);
            adam_step(&mut [&mut p], &mut s);
        }
        p.value
    };
    let (a, b) = (run(), run());
    assert!(a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

struct Quadratic {
    w: DenseMatrix,
}

impl HasParams for Quadratic {
    fn param_values_mut(&mut self) -> Vec<(&str, &mut DenseMatrix)> {
        vec![("w", &mut self.w)]
    }
}

/// `L = Σ c_i w_i²` with gradient `2 c_i w_i`.
fn quadratic_setup() -> (Quadratic, Vec<f64>, DenseMatrix) {
    let mut r = rng::seeded(5);
    let w = random(4, 6, &mut r);
    let c: Vec<f64> = (0..24).map(|_| r.random_range(0.5..3.0)).collect();
    let grad = DenseMatrix::from_vec(
        4,
        6,
        w.as_slice().iter().zip(&c).map(|(w, c)| 2.0 * c * w).collect(),
    )
    .unwrap();
    (Quadratic { w }, c, grad)
}

#[test]
fn gradcheck_quadratic_and_negative_control() {
    let (mut q, c, grad) = quadratic_setup();
    let loss = |q: &Quadratic| -> f64 { q.w.as_slice().iter().zip(&c).map(|(w, c)| c * w * w).sum() };
    let mut r = rng::seeded(0);
    let ok = finite_difference_check(&mut q, std::slice::from_ref(&grad), 1e-6, 200, &mut r, loss);
    assert!(ok.max_rel_err <= 1e-8, "{ok:?}");
    assert_eq!(ok.coords_checked, 24);

    let mut bad = grad.clone();
    bad.as_mut_slice()[7] *= 1.1;
    let report = finite_difference_check(&mut q, &[bad], 1e-6, 200, &mut r, loss);
    assert!(report.max_rel_err > 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layer_norm_rows_are_standardized(seed in any::<u64>(), rows in 1usize..5, cols in 2usize..12) {
        let mut r = rng::seeded(seed);
        let mut x = random(rows, cols, &mut r);
        x.scale(10.0);
        let (y, _) = layer_norm_forward(&x, &vec![1.0; cols], &vec![0.0; cols]).unwrap();
        for i in 0..rows {
            let row = y.row(i);
            let mu = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
            // the variance bound needs input variance far above eps
            let xr = x.row(i);
            let xm = xr.iter().sum::<f64>() / cols as f64;
            let xvar = xr.iter().map(|v| (v - xm) * (v - xm)).sum::<f64>() / cols as f64;
            prop_assert!(mu.abs() <= 1e-10);
            if xvar > 10.0 {
                prop_assert!((var - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut r = rng::seeded(seed);
        let x = random(3, 6, &mut r);
        let y = softmax_rows(&x);
        let mut shifted = x.clone();
        shifted.as_mut_slice().iter_mut().for_each(|v| *v += shift);
        let ys = softmax_rows(&shifted);
        for i in 0..3 {
            prop_assert!((y.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        for (a, b) in y.as_slice().iter().zip(ys.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn backward_passes_match_differences(seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let x = random(3, 5, &mut r);
        let w = random(3, 5, &mut r);
        let floor = |l: f64| fd_noise_floor(l, 1e-6, 1e-5);
        let g = gelu_backward(&x, &w);
        let f = |x: &DenseMatrix| dot(&gelu_forward(x), &w);
        let n = numeric_grad(&x, 1e-6, f);
        prop_assert!(max_rel_err_floored(&g, &n, floor(f(&x))) <= 1e-5);
        let (_, cache) = layer_norm_forward(&x, &[1.0; 5], &[0.0; 5]).unwrap();
        let (gx, _, _) = layer_norm_backward(&cache, &[1.0; 5], &w);
        let f = |x: &DenseMatrix| dot(&layer_norm_forward(x, &[1.0; 5], &[0.0; 5]).unwrap().0, &w);
        let n = numeric_grad(&x, 1e-6, f);
        prop_assert!(max_rel_err_floored(&gx, &n, floor(f(&x))) <= 1e-5);
        let gs = softmax_rows_backward(&softmax_rows(&x), &w);
        let f = |x: &DenseMatrix| dot(&softmax_rows(x), &w);
        let n = numeric_grad(&x, 1e-6, f);
        prop_assert!(max_rel_err_floored(&gs, &n, floor(f(&x))) <= 1e-5);
    }

    #[test]
    fn checkpoint_roundtrip(seed in any::<u64>(), r1 in 1usize..4, c1 in 1usize..5, r2 in 1usize..4) {
        let mut r = rng::seeded(seed);
        let a = random(r1, c1, &mut r);
        let mut b = random(r2, 3, &mut r);
        b.as_mut_slice()[0] = f64::MIN_POSITIVE / 3.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.txt");
        let header = vec![("seed".to_string(), seed.to_string())];
        checkpoint::save(&path, &header, &[("a", &a), ("b", &b)]).unwrap();
        let ck = checkpoint::load(&path).unwrap();
        let seed_text = seed.to_string();
        prop_assert_eq!(ck.header_value("seed"), Some(seed_text.as_str()));
        prop_assert_eq!(ck.tensor("a"), Some(&a));
        prop_assert_eq!(ck.tensor("b"), Some(&b));
        prop_assert_eq!(ck.tensors[1].0.offset, 8 * r1 * c1);
    }
}
