mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng as _;
use tgmixer::graph::{NodeFeatures, TemporalGraph};
use tgmixer::model::{GraphMixer, GraphMixerConfig};
use tgmixer::par::Parallelism;
use tgmixer::rng;
use tgmixer::tensor::AdamConfig;
use tgmixer::train::instrument::{landscape_directions, loss_landscape, parameter_trajectory};
use tgmixer::train::metrics::auc_fraction;
use tgmixer::train::synthetic::{generate, SyntheticConfig};
use tgmixer::train::{
    auc, average_precision, batch_gradients, bce_loss, bce_with_logits, make_batches, mrr, plan_loss,
    rank_of, recall_at_k, train, Dataset, EvalPlan, Split, TrainConfig,
};

// ---- metric oracles -------------------------------------------------------------------

fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut hits, mut sum) = (0usize, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// `(2·U, 2·P·N)` with ties counted one half.
fn auc_oracle(scores: &[f64], labels: &[bool]) -> (u64, u64) {
    let (mut u2, mut pairs) = (0u64, 0u64);
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        for j in (0..scores.len()).filter(|&j| !labels[j]) {
            pairs += 1;
            u2 += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    (u2, 2 * pairs)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn check_all(scores: &[f64], labels: &[bool]) {
    let ap = average_precision(scores, labels);
    assert!(
        (ap - ap_oracle(scores, labels)).abs() <= 1e-12,
        "{scores:?} {labels:?}"
    );
    let (u2, p2) = auc_oracle(scores, labels);
    let (a, b) = auc_fraction(scores, labels);
    if p2 == 0 {
        assert_eq!(auc(scores, labels), 0.5);
    } else {
        assert_eq!(
            a as u128 * p2 as u128,
            u2 as u128 * b as u128,
            "{scores:?} {labels:?}"
        );
    }
    // every positive ranked against all negatives
    let negs: Vec<f64> = (0..scores.len())
        .filter(|&i| !labels[i])
        .map(|i| scores[i])
        .collect();
    let ranks: Vec<usize> = (0..scores.len())
        .filter(|&i| labels[i])
        .map(|i| rank_of(scores[i], &negs))
        .collect();
    for (&rk, i) in ranks.iter().zip((0..scores.len()).filter(|&i| labels[i])) {
        assert_eq!(rk, 1 + negs.iter().filter(|&&s| s >= scores[i]).count());
    }
    if !ranks.is_empty() {
        for k in 1..=6 {
            let want = ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64;
            assert!((recall_at_k(&ranks, k) - want).abs() <= 1e-12);
        }
        let want = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64;
        assert!((mrr(&ranks) - want).abs() <= 1e-12);
    }
}

#[test]
fn metrics_match_oracles_exhaustively() {
    for n in 1..=6 {
        for perm in permutations(n) {
            let scores: Vec<f64> = perm.iter().map(|&p| p as f64 * 0.25 - 0.3).collect();
            for mask in 0u32..(1 << n) {
                let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                check_all(&scores, &labels);
            }
        }
    }
    // tied scores: AUC counts them one half
    for n in 1..=5 {
        for code in 0..3usize.pow(n as u32) {
            let scores: Vec<f64> = (0..n).map(|i| (code / 3usize.pow(i as u32) % 3) as f64).collect();
            for mask in 0u32..(1 << n) {
                let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let (u2, p2) = auc_oracle(&scores, &labels);
                let (a, b) = auc_fraction(&scores, &labels);
                if p2 > 0 {
                    assert_eq!(a as u128 * p2 as u128, u2 as u128 * b as u128);
                }
            }
        }
    }
}

#[test]
fn metric_examples() {
    let s = [0.9, 0.8, 0.7, 0.6];
    let l = [true, false, true, false];
    assert!((average_precision(&s, &l) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    assert_eq!(auc(&s, &l), 0.75);
    assert_eq!(average_precision(&s, &[true, true, false, false]), 1.0);
    assert_eq!(auc(&s, &[true, true, false, false]), 1.0);
    assert_eq!(auc(&[0.3; 4], &l), 0.5);

    let top = vec![1usize; 10];
    assert_eq!((recall_at_k(&top, 5), mrr(&top)), (1.0, 1.0));
    let sixth = vec![6usize; 10];
    assert_eq!(recall_at_k(&sixth, 5), 0.0);
    assert!((mrr(&sixth) - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!(rank_of(0.5, &[0.5, 0.1]), 2, "ties count against the positive");
}

#[test]
fn random_scorer_mrr() {
    let mut r = rng::seeded(17);
    let ranks: Vec<usize> = (0..10_000)
        .map(|_| {
            let pos: f64 = r.random();
            let negs: Vec<f64> = (0..100).map(|_| r.random()).collect();
            rank_of(pos, &negs)
        })
        .collect();
    let want = (1..=101).map(|k| 1.0 / k as f64).sum::<f64>() / 101.0;
    assert!((want - 0.0514).abs() < 1e-4);
    assert!((mrr(&ranks) - want).abs() <= 0.01, "{}", mrr(&ranks));
}

#[test]
fn bce_examples() {
    assert!((bce_with_logits(0.0, 1.0).0 - std::f64::consts::LN_2).abs() < 1e-15);
    let (l, g) = bce_with_logits(100.0, 1.0);
    assert!((0.0..1e-40).contains(&l) && g.abs() < 1e-40);
    assert!(bce_with_logits(-800.0, 1.0).0.is_finite());
    let z = [0.3, -1.2, 2.5];
    let y = [1.0, 0.0, 1.0];
    let (_, grads) = bce_loss(&z, &y);
    for i in 0..3 {
        let h = 1e-6;
        let mut zp = z;
        let mut zm = z;
        zp[i] += h;
        zm[i] -= h;
        let n = (bce_loss(&zp, &y).0 - bce_loss(&zm, &y).0) / (2.0 * h);
        assert!((grads[i] - n).abs() <= 1e-8);
    }
}

// ---- batches --------------------------------------------------------------------------

fn bipartite(n_events: usize, seed: u64) -> TemporalGraph {
    let loaded = generate(&SyntheticConfig {
        num_users: 30,
        num_items: 20,
        num_events: n_events,
        d_link: 2,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    TemporalGraph::from_loaded(loaded, true).unwrap()
}

#[test]
fn batches_of_600() {
    let g = bipartite(1200, 0);
    let mut r = rng::seeded(0);
    let batches = make_batches(g.events(), 0..1200, 600, g.destination_range(), &mut r).unwrap();
    assert_eq!(batches.len(), 2);
    assert!(batches
        .iter()
        .all(|b| b.positives.len() == 600 && b.negatives.len() == 600));
    assert!(make_batches(g.events(), 5..5, 600, g.destination_range(), &mut r).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batches_respect_contract(seed in any::<u64>(), start in 0usize..100, len in 1usize..300, bs in 1usize..128) {
        let g = bipartite(400, 1);
        let range = start..start + len;
        let dst_range = g.destination_range();
        let run = |s| make_batches(g.events(), range.clone(), bs, dst_range.clone(), &mut rng::seeded(s)).unwrap();
        let batches = run(seed);
        prop_assert_eq!(&batches, &run(seed));
        let mut next = range.start;
        for b in &batches {
            prop_assert_eq!(b.positives.len(), b.negatives.len());
            prop_assert!(b.positives.len() <= bs);
            for (p, n) in b.positives.iter().zip(&b.negatives) {
                let e = g.event(next);
                next += 1;
                prop_assert_eq!((p.src, p.dst, p.t0), (e.src, e.dst, e.timestamp));
                prop_assert_eq!((n.src, n.t0), (p.src, p.t0));
                prop_assert!(dst_range.contains(&n.dst));
                prop_assert_ne!(n.dst, p.dst);
            }
        }
        prop_assert_eq!(next, range.end);
    }
}

// ---- training -------------------------------------------------------------------------

fn tiny_data() -> Dataset {
    let g = bipartite(800, 2);
    let n = g.num_nodes();
    Dataset::new(g, NodeFeatures::OneHot { num_nodes: n }).unwrap()
}

fn tiny_model_config(data: &Dataset) -> GraphMixerConfig {
    GraphMixerConfig {
        k: 5,
        d_hidden: 8,
        window: data.default_window(),
        ..GraphMixerConfig::default().with_time_dim(8)
    }
}

fn tiny_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 100,
        adam: AdamConfig::with_lr(1e-3),
        seed,
        rank_negatives: 20,
        rank_eval_max: Some(40),
        keep_snapshots: true,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let data = tiny_data();
    let cfg = TrainConfig {
        adam: AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        },
        ..tiny_train_config(0)
    };
    let out = train(&tiny_model_config(&data), &data, &cfg).unwrap();
    let first = &out.snapshots[0];
    assert!(out.snapshots.iter().all(|s| s == first));
    let aps: Vec<f64> = out.history.iter().map(|h| h.train.average_precision).collect();
    assert!(aps.iter().all(|&a| a == aps[0]), "{aps:?}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = tiny_data();
    let mc = tiny_model_config(&data);
    let a = train(&mc, &data, &tiny_train_config(5)).unwrap();
    let b = train(&mc, &data, &tiny_train_config(5)).unwrap();
    let c = train(&mc, &data, &tiny_train_config(6)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.snapshots, b.snapshots);
    assert_ne!(a.history, c.history);
    let sequential = TrainConfig {
        parallelism: Parallelism::Sequential,
        ..tiny_train_config(5)
    };
    let s = train(&mc, &data, &sequential).unwrap();
    assert_eq!(a.history, s.history);
    assert_eq!(a.snapshots, s.snapshots);
    // the selected model is the one with the best validation AP
    let best = a
        .history
        .iter()
        .max_by(|x, y| x.val.average_precision.total_cmp(&y.val.average_precision))
        .unwrap();
    assert_eq!(a.test_report, best.test);
    for h in &a.history {
        assert_eq!(
            h.generalization_gap(),
            (h.train.average_precision - h.val.average_precision).abs()
        );
        for m in [&h.train, &h.val, &h.test] {
            for v in [m.average_precision, m.auc, m.recall_at_k, m.mrr] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(m.loss >= 0.0);
        }
    }
}

#[test]
fn parallel_and_sequential_gradients_agree() {
    let data = tiny_data();
    let mut model = GraphMixer::new(tiny_model_config(&data), 2, &data.features, 1).unwrap();
    randomize(&mut model, 1);
    let mut r = rng::seeded(3);
    let batch = make_batches(
        data.graph.events(),
        data.range(Split::Train),
        200,
        data.graph.destination_range(),
        &mut r,
    )
    .unwrap()
    .remove(1);
    let (la, ga) = batch_gradients(&model, &data, &batch, Parallelism::Auto).unwrap();
    let (lb, gb) = batch_gradients(&model, &data, &batch, Parallelism::Sequential).unwrap();
    assert_eq!(la.to_bits(), lb.to_bits());
    assert_eq!(ga, gb);
    assert!((la - batch_loss(&model, &data, &batch)).abs() <= 1e-12);
}

#[test]
fn evaluation_plans_stay_inside_their_split() {
    let data = tiny_data();
    let cfg = tiny_train_config(0);
    for split in [Split::Train, Split::Val, Split::Test] {
        let plan = EvalPlan::new(&data, split, &cfg).unwrap();
        let range = data.range(split);
        let (lo, hi) = (
            data.graph.event(range.start).timestamp,
            data.graph.event(range.end - 1).timestamp,
        );
        for p in plan.positives.iter().chain(&plan.negatives) {
            assert!(p.t0 >= lo && p.t0 <= hi);
        }
        assert_eq!(plan.positives.len(), range.len());
        assert!(plan.rank_queries.iter().all(|(_, negs)| negs.len() == 20));
    }
}

// ---- trajectory -----------------------------------------------------------------------

#[test]
fn trajectory_degenerate_and_collinear() {
    let w_star = vec![1.0, -2.0, 0.5];
    let recs = parameter_trajectory(&[w_star.clone(), vec![2.0, 0.0, 0.0]], &w_star).unwrap();
    assert_eq!((recs[0].r, recs[0].theta), (0.0, 0.0));

    let u = [0.3, -0.4, 1.2];
    let cs = [2.0, 1.5, 0.5, 0.25];
    let snaps: Vec<Vec<f64>> = cs
        .iter()
        .map(|c| w_star.iter().zip(&u).map(|(w, u)| w + c * u).collect())
        .collect();
    let recs = parameter_trajectory(&snaps, &w_star).unwrap();
    assert_eq!((recs[0].r, recs[0].theta), (1.0, 0.0));
    for (rec, c) in recs.iter().zip(cs) {
        assert!((rec.r - c / cs[0]).abs() <= 1e-12);
        assert!(rec.theta.abs() <= 1e-7, "{rec:?}");
    }
}

/// Double-double helpers for the high-precision oracle.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn dd_add(x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(x.0, y.0);
    let e = e + x.1 + y.1;
    let (hi, lo) = two_sum(s, e);
    (hi, lo)
}

fn dd_mul(x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
    let p = x.0 * y.0;
    let e = x.0.mul_add(y.0, -p) + (x.0 * y.1 + x.1 * y.0);
    two_sum(p, e)
}

fn dd_dot(a: &[(f64, f64)], b: &[(f64, f64)]) -> (f64, f64) {
    a.iter()
        .zip(b)
        .fold((0.0, 0.0), |acc, (x, y)| dd_add(acc, dd_mul(*x, *y)))
}

fn dd_sqrt(x: (f64, f64)) -> f64 {
    if x.0 + x.1 <= 0.0 {
        return 0.0;
    }
    let s = x.0.sqrt();
    // one Newton step in double-double
    let sq = dd_mul((s, 0.0), (s, 0.0));
    let r = dd_add(x, (-sq.0, -sq.1));
    s + (r.0 + r.1) / (2.0 * s)
}

#[test]
fn trajectory_matches_high_precision_oracle() {
    let mut r = rng::seeded(29);
    for _ in 0..20 {
        let n = 50;
        let w_star: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let snaps: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let recs = parameter_trajectory(&snaps, &w_star).unwrap();
        let delta =
            |s: &[f64]| -> Vec<(f64, f64)> { s.iter().zip(&w_star).map(|(a, b)| two_sum(*a, -*b)).collect() };
        let d0 = delta(&snaps[0]);
        let n00 = dd_dot(&d0, &d0);
        for (t, s) in snaps.iter().enumerate() {
            let d = delta(s);
            let ntt = dd_dot(&d, &d);
            let c = dd_dot(&d, &d0);
            let r_want = dd_sqrt(ntt) / dd_sqrt(n00);
            // sin via Lagrange's identity: ‖a‖²‖b‖² − (a·b)²
            let cross = dd_add(dd_mul(ntt, n00), {
                let cc = dd_mul(c, c);
                (-cc.0, -cc.1)
            });
            let theta_want = dd_sqrt(cross).atan2(c.0 + c.1);
            assert!((recs[t].r - r_want).abs() <= 1e-10, "r at {t}");
            assert!(
                (recs[t].theta - theta_want).abs() <= 1e-10,
                "theta at {t}: {} vs {theta_want}",
                recs[t].theta
            );
        }
        assert_eq!((recs[0].r, recs[0].theta), (1.0, 0.0));
    }
}

// ---- loss landscape ---------------------------------------------------------------------

#[test]
fn landscape_center_diagonal_and_replay() {
    let data = tiny_data();
    let cfg = tiny_train_config(0);
    let mut model = GraphMixer::new(tiny_model_config(&data), 2, &data.features, 2).unwrap();
    randomize(&mut model, 2);
    let plan = EvalPlan::new(
        &data,
        Split::Train,
        &TrainConfig {
            train_eval_max: Some(200),
            ..cfg
        },
    )
    .unwrap();
    let loss = |m: &GraphMixer| plan_loss(m, &data, &plan, Parallelism::Auto);
    let (d1, d2) = landscape_directions(&model, 0);

    let grid = loss_landscape(&model, (&d1, &d2), 3, 0.5, loss).unwrap();
    assert_eq!(grid.center().unwrap().to_bits(), loss(&model).unwrap().to_bits());

    // replay every cell by hand
    for (i, &x) in grid.coords.iter().enumerate() {
        for (j, &y) in grid.coords.iter().enumerate() {
            let mut probe = model.clone();
            let w: Vec<f64> = probe
                .params
                .flatten()
                .iter()
                .zip(d1.iter().zip(&d2))
                .map(|(b, (a, c))| b + (x * a + y * c))
                .collect();
            probe.params.assign_flat(&w).unwrap();
            assert_eq!(grid.losses[i][j].to_bits(), loss(&probe).unwrap().to_bits());
        }
    }

    // with d2 = d1 the loss depends on x + y only
    let same = loss_landscape(&model, (&d1, &d1), 5, 1.0, loss).unwrap();
    for s in 0..9usize {
        let cells: Vec<f64> = (0..5)
            .filter_map(|i| s.checked_sub(i).filter(|&j| j < 5).map(|j| same.losses[i][j]))
            .collect();
        for c in &cells {
            assert!(
                (c - cells[0]).abs() <= 1e-9 * cells[0].abs().max(1.0),
                "anti-diagonal {s}: {cells:?}"
            );
        }
    }
}
