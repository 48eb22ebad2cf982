use ndarray::{Array1, Array2};
use proptest::prelude::*;

use mgdil_learn::bench::metrics::metrics;
use mgdil_learn::encode::{HashingEncoder, TextEncoder};
use mgdil_learn::graph::{message_pass, Aggregation, EdgeRow, GnnParams, RelationGraph};
use mgdil_learn::grl::{grl_backward, grl_forward, grl_schedule};
use mgdil_learn::losses::{contrastive_sets, loss_adv, loss_cls, loss_con, project_u, total_loss, LossWeights};
use mgdil_learn::model::{Linear, ModelDims, ModelState};
use mgdil_learn::Batch;

fn batch_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, Vec<usize>)> {
    (2usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, n * 4),
            prop::collection::vec(0usize..2, n),
            prop::collection::vec(0usize..3, n),
        )
    })
}

fn head(seed: u64, inputs: usize, outputs: usize) -> Linear {
    let dims = ModelDims { input: 2, hidden: 2, latent: inputs, domains: 3, projection: outputs, classes: 2 };
    ModelState::init(dims, seed).proj
}

/// Random orthogonal matrix via Gram-Schmidt on a seeded square.
fn orthogonal(seed: u64, k: usize) -> Array2<f64> {
    let a = head(seed, k, k).w;
    let mut q = Array2::<f64>::zeros((k, k));
    for j in 0..k {
        let mut v: Array1<f64> = a.column(j).to_owned();
        for p in 0..j {
            let prev = q.column(p).to_owned();
            let c = prev.dot(&v);
            v.scaled_add(-c, &prev);
        }
        let n = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / n));
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_non_negative((h, y, d) in batch_strategy(), seed in 0u64..1000) {
        let n = y.len();
        let h = Array2::from_shape_vec((n, 4), h).unwrap();
        let doms: Vec<Option<usize>> = d.into_iter().map(Some).collect();
        prop_assert!(loss_cls(h.view(), &y, &head(seed, 4, 2)).value >= 0.0);
        prop_assert!(loss_adv(h.view(), &doms, &head(seed, 4, 3)).unwrap().value >= 0.0);
        if let Ok(c) = loss_con(h.view(), &y, &doms, &head(seed, 4, 3), 0.1) {
            prop_assert!(c.value >= 0.0);
        }
    }

    #[test]
    fn contrastive_loss_ignores_batch_order((h, y, d) in batch_strategy(), seed in 0u64..1000, rot in 0usize..8) {
        let n = y.len();
        let h = Array2::from_shape_vec((n, 4), h).unwrap();
        let doms: Vec<Option<usize>> = d.into_iter().map(Some).collect();
        let g = head(seed, 4, 3);
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let hp = h.select(ndarray::Axis(0), &perm);
        let yp: Vec<usize> = perm.iter().map(|i| y[*i]).collect();
        let dp: Vec<Option<usize>> = perm.iter().map(|i| doms[*i]).collect();
        if let (Ok(a), Ok(b)) = (loss_con(h.view(), &y, &doms, &g, 0.1), loss_con(hp.view(), &yp, &dp, &g, 0.1)) {
            prop_assert!((a.value - b.value).abs() < 1e-9, "{} vs {}", a.value, b.value);
            prop_assert_eq!(a.anchors, b.anchors);
        }
    }

    #[test]
    fn contrastive_loss_is_rotation_invariant((h, y, d) in batch_strategy(), seed in 0u64..1000) {
        let n = y.len();
        let h = Array2::from_shape_vec((n, 4), h).unwrap();
        let doms: Vec<Option<usize>> = d.into_iter().map(Some).collect();
        let g = head(seed, 4, 3);
        let q = orthogonal(seed + 1, 3);
        let rotated = Linear { w: g.w.dot(&q), b: g.b.dot(&q) };
        if let (Ok(a), Ok(b)) = (loss_con(h.view(), &y, &doms, &g, 0.1), loss_con(h.view(), &y, &doms, &rotated, 0.1)) {
            prop_assert!((a.value - b.value).abs() < 1e-9);
        }
    }

    #[test]
    fn anchors_without_positives_carry_no_gradient((h, y, d) in batch_strategy(), seed in 0u64..1000) {
        let n = y.len();
        let h = Array2::from_shape_vec((n, 4), h).unwrap();
        let doms: Vec<Option<usize>> = d.into_iter().map(Some).collect();
        let sets = contrastive_sets(&y, &doms);
        if let Ok(c) = loss_con(h.view(), &y, &doms, &head(seed, 4, 3), 0.1) {
            // a sample that is neither an anchor nor anyone's candidate gets no gradient
            for i in 0..n {
                let involved = sets.anchors.contains(&i)
                    || sets.anchors.iter().any(|a| sets.positives[*a].contains(&i) || sets.negatives[*a].contains(&i));
                if !involved {
                    prop_assert!(c.dh.row(i).iter().all(|v| *v == 0.0));
                }
            }
            if sets.anchors.is_empty() {
                prop_assert_eq!(c.value, 0.0);
            }
        }
    }

    #[test]
    fn projection_has_unit_norm(v in prop::collection::vec(-5.0f64..5.0, 1..16), c in 0.1f64..10.0) {
        let a = Array1::from(v);
        prop_assume!(a.dot(&a) > 1e-12);
        let u = project_u(a.view()).unwrap();
        prop_assert!((u.dot(&u).sqrt() - 1.0).abs() < 1e-9);
        let scaled = project_u((&a * c).view()).unwrap();
        for (x, y) in u.iter().zip(scaled.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_output_has_unit_norm(text in "[a-z]{1,6}[a-zA-Z0-9 _=;.,!?]{0,200}") {
        let v = HashingEncoder::new(512).encode(&text).unwrap();
        let n: f64 = v.iter().map(|x| x * x).sum();
        prop_assert!((n.sqrt() - 1.0).abs() < 1e-9);
        prop_assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn grl_backward_scales_by_minus_lambda(g in prop::collection::vec(-10.0f64..10.0, 1..12), lambda in 0.0f64..2.0) {
        let up = Array2::from_shape_vec((1, g.len()), g.clone()).unwrap();
        let out = grl_backward(up.view(), lambda);
        for (o, x) in out.iter().zip(&g) {
            prop_assert_eq!(*o, -lambda * x);
        }
        prop_assert_eq!(grl_forward(up.view()), up.view());
    }

    #[test]
    fn metrics_are_invariant_under_paired_shuffles(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..40), k in 0usize..40) {
        let t: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let n = t.len();
        let rot = |v: &[usize]| (0..n).map(|i| v[(i + k) % n]).collect::<Vec<_>>();
        let a = metrics(&t, &p).unwrap();
        let b = metrics(&rot(&t), &rot(&p)).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert_eq!(a.macro_f1, b.macro_f1);
        prop_assert_eq!(a.confusion.iter().flatten().sum::<usize>(), n);
    }

    #[test]
    fn message_passing_is_permutation_equivariant(
        n in 1usize..9,
        edges in prop::collection::vec((0usize..9, 0usize..3, 0usize..9), 0..30),
        seed in 0u64..1000,
        agg in prop::sample::select(vec![Aggregation::Mean, Aggregation::Sum]),
    ) {
        let ids: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
        let rows: Vec<EdgeRow> = edges
            .iter()
            .filter(|(s, _, d)| *s < n && *d < n)
            .map(|(s, r, d)| EdgeRow { src: ids[*s].clone(), relation: format!("r{r}"), dst: ids[*d].clone() })
            .collect();
        let feats = head(seed, n, 3).w;
        let g = RelationGraph::new(ids, feats, &rows, false).unwrap();
        let p = GnnParams::init(3, g.relations.len(), 2, agg, seed);
        let z = message_pass(&g, &p).unwrap();
        let perm: Vec<usize> = (0..n).rev().collect();
        let zp = message_pass(&g.permuted(&perm), &p).unwrap();
        for (new, old) in perm.iter().enumerate() {
            prop_assert_eq!(zp.row(new), z.row(*old));
        }
    }
}

#[test]
fn grl_schedule_is_a_linear_ramp() {
    assert_eq!(grl_schedule(0.0, 1.0), 0.0);
    assert_eq!(grl_schedule(1.0, 1.0), 1.0);
    assert_eq!(grl_schedule(0.5, 1.0), 0.5);
}

#[test]
fn zero_auxiliary_weights_reduce_to_classification_loss() {
    let (state, batch): (ModelState, Batch) = mgdil_learn::gradcheck::random_problem(11);
    let w = LossWeights { cls: 1.0, adv: 0.0, con: 0.0, tau: 0.1 };
    let out = total_loss(&state, &batch, &w, 0.7).unwrap();
    assert_eq!(out.total, out.l_cls);
    let w = LossWeights::default();
    let out = total_loss(&state, &batch, &w, 0.7).unwrap();
    assert!((out.total - (out.l_cls + 0.2 * out.l_adv + 0.2 * out.l_con)).abs() < 1e-12);
}

#[test]
fn metrics_agree_with_brute_force_on_all_short_label_vectors() {
    for n in 1..=8usize {
        for bits in 0..(1u32 << (2 * n)) {
            let t: Vec<usize> = (0..n).map(|i| ((bits >> i) & 1) as usize).collect();
            let p: Vec<usize> = (0..n).map(|i| ((bits >> (n + i)) & 1) as usize).collect();
            let r = metrics(&t, &p).unwrap();
            let tp = |c: usize| t.iter().zip(&p).filter(|(a, b)| **a == c && **b == c).count() as f64;
            let f1 = |c: usize| {
                let pred = p.iter().filter(|x| **x == c).count() as f64;
                let real = t.iter().filter(|x| **x == c).count() as f64;
                if pred + real == 0.0 { 0.0 } else { 2.0 * tp(c) / (pred + real) }
            };
            let acc = (tp(0) + tp(1)) / n as f64;
            assert!((r.accuracy - acc).abs() < 1e-12);
            assert!((r.macro_f1 - (f1(0) + f1(1)) / 2.0).abs() < 1e-12, "{t:?} {p:?}");
        }
    }
}
