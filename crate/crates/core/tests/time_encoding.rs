use proptest::prelude::*;
use rand::Rng as _;
use std::f64::consts::{FRAC_PI_2, PI};
use tgmixer::rng;
use tgmixer::tensor::{fd_noise_floor, GradBuffer, ParamRegistry};
use tgmixer::time_encoding::{grad_norm_probe, make_omega, FixedTimeEncoding, TrainableTimeEncoding};

fn trainable(w: Vec<f64>, b: Vec<f64>) -> TrainableTimeEncoding {
    TrainableTimeEncoding::from_values(w, b, &mut ParamRegistry::new()).unwrap()
}

#[test]
#[allow(clippy::approx_constant)] // the printed example values
fn omega_examples() {
    assert_eq!(make_omega(1, 3.0, 0.5).unwrap().omega(), [1.0]);
    let o = make_omega(4, 2.0, 2.0).unwrap();
    for (a, b) in o.omega().iter().zip([1.0, 0.707_11, 0.5, 0.353_55]) {
        assert!((a - b).abs() <= 1e-5);
    }
    let d = FixedTimeEncoding::default();
    assert_eq!((d.dim(), d.alpha(), d.beta()), (100, 10.0, 10.0));
    let last = d.omega()[99];
    assert!((last / 10f64.powf(-9.9) - 1.0).abs() < 1e-12);
    assert!((last - 1.259e-10).abs() < 1e-13);
    assert!(make_omega(4, 1.0, 2.0).is_err());
    assert!(make_omega(4, 2.0, 0.0).is_err());
    assert!(make_omega(0, 2.0, 2.0).is_err());
}

#[test]
fn omega_strictly_decreasing_and_frozen() {
    let d = FixedTimeEncoding::default();
    assert_eq!(d.omega()[0], 1.0);
    assert!(d.omega().windows(2).all(|w| w[0] > w[1] && w[1] > 0.0));
    assert_eq!(d.num_parameters(), 0);
}

#[test]
fn encode_zero_and_evenness() {
    let d = FixedTimeEncoding::default();
    assert!(d.encode(0.0).iter().all(|&v| v == 1.0));
    assert_eq!(d.encode(123.25), d.encode(-123.25));
    let o = make_omega(4, 2.0, 2.0).unwrap();
    let want: Vec<f64> = o.omega().iter().map(|w| (PI * w).cos()).collect();
    assert_eq!(o.encode(PI), want);
}

#[test]
fn trainable_starts_at_fixed() {
    let fixed = make_omega(6, 3.0, 2.0).unwrap();
    let enc = TrainableTimeEncoding::from_fixed(&fixed, &mut ParamRegistry::new());
    for t in [0.0, 0.5, 17.0, 1e4] {
        assert_eq!(enc.forward(t).0, fixed.encode(t));
    }
}

#[test]
fn gradient_at_zero_time_vanishes() {
    let enc = trainable(vec![0.3, 1.2], vec![0.4, -0.7]);
    let mut grads = GradBuffer::for_params([&enc.w, &enc.b]);
    let (_, ctx) = enc.forward(0.0);
    enc.backward(Some(&ctx), &[1.0, 1.0], &mut grads).unwrap();
    assert_eq!(grads.slot(&enc.w).as_slice(), [0.0, 0.0]);
    assert!(grads.slot(&enc.b).as_slice().iter().all(|&g| g != 0.0));
    assert!(enc.backward(None, &[1.0, 1.0], &mut grads).is_err());
}

#[test]
fn gradient_scales_with_time() {
    let w = vec![0.0, 0.0, 0.0];
    let b = vec![0.3, 1.1, -0.8];
    let enc = trainable(w, b.clone());
    // with w = 0 the sine factor is the same at every t, so the w-gradient is exactly ∝ t
    let grad_w = |t: f64| {
        let mut g = GradBuffer::for_params([&enc.w, &enc.b]);
        let (_, ctx) = enc.forward(t);
        enc.backward(Some(&ctx), &[1.0; 3], &mut g).unwrap();
        g.slot(&enc.w).as_slice().to_vec()
    };
    let (g1, g1000) = (grad_w(1.0), grad_w(1000.0));
    for i in 0..3 {
        assert_eq!(g1[i], -b[i].sin());
        assert_eq!(g1000[i], -1000.0 * b[i].sin());
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm(&g1000) / norm(&g1) - 1000.0).abs() < 1e-9);
}

#[test]
fn probe_examples() {
    let enc = trainable(vec![0.0], vec![FRAC_PI_2]);
    assert_eq!(grad_norm_probe(&enc, &[1.0]), 1.0);
    let enc = trainable(vec![0.2, 0.05, 0.9], vec![0.1, -0.3, 0.0]);
    assert_eq!(grad_norm_probe(&enc, &[0.0, 0.0]), 0.0);
    let ts = [0.5, 2.0, 7.5];
    for c in [1.0, 3.0, 40.0] {
        let scaled: Vec<f64> = ts.iter().map(|t| c * t).collect();
        let (w, b) = (enc.w.value.as_slice(), enc.b.value.as_slice());
        let want = (0..3)
            .map(|i| {
                let g: f64 = scaled.iter().map(|t| -t * (t * w[i] + b[i]).sin()).sum();
                g * g
            })
            .sum::<f64>()
            .sqrt();
        assert!((grad_norm_probe(&enc, &scaled) - want).abs() <= 1e-12 * want.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn encoding_is_bounded(t in -1e12f64..1e12) {
        let d = FixedTimeEncoding::default();
        prop_assert!(d.encode(t).iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn encoding_is_lipschitz(t in 0.0f64..1e6, dt in -1.0f64..1.0) {
        let d = FixedTimeEncoding::default();
        let (a, b) = (d.encode(t), d.encode(t + dt));
        let dist = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let omega_norm = d.omega().iter().map(|w| w * w).sum::<f64>().sqrt();
        // slack covers rounding of t·ω at large t
        prop_assert!(dist <= omega_norm * dt.abs() * (1.0 + 1e-9) + 1e-8);
    }
}

#[test]
fn trainable_matches_differences() {
    for seed in 0..50 {
        let mut r = rng::seeded(seed);
        let d = 5;
        let w: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| r.random_range(-PI..PI)).collect();
        let up: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let t = r.random_range(-3.0..3.0);
        let enc = trainable(w.clone(), b.clone());
        let mut g = GradBuffer::for_params([&enc.w, &enc.b]);
        let (_, ctx) = enc.forward(t);
        enc.backward(Some(&ctx), &up, &mut g).unwrap();
        let loss = |w: &[f64], b: &[f64]| -> f64 { (0..d).map(|i| up[i] * (t * w[i] + b[i]).cos()).sum() };
        let h = 1e-6;
        let floor = fd_noise_floor(loss(&w, &b), h, 1e-6);
        for i in 0..d {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let nw = (loss(&wp, &b) - loss(&wm, &b)) / (2.0 * h);
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += h;
            bm[i] -= h;
            let nb = (loss(&w, &bp) - loss(&w, &bm)) / (2.0 * h);
            for (a, n) in [
                (g.slot(&enc.w).as_slice()[i], nw),
                (g.slot(&enc.b).as_slice()[i], nb),
            ] {
                assert!(
                    (a - n).abs() / a.abs().max(n.abs()).max(floor) <= 1e-6,
                    "seed {seed}: {a} vs {n}"
                );
            }
        }
    }
}
