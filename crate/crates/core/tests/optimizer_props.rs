mod common;

use common::*;
use hyperml::baselines::{hyperts_step, to_tangent};
use hyperml::objective::{loss_and_grad, pull_push_loss, total_loss};
use hyperml::optimizer::{rescale_factor, rsgd_step, OptimConfig, Optimizer, OptimizerKind, RescaleMode};
use hyperml::{Curvature, EmbeddingStore, Triplet, Variant};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn optim(lr: f64, variant: Variant) -> OptimConfig {
    OptimConfig {
        learning_rate: lr,
        curvature: Curvature::UNIT,
        grad_clip: None,
        rescale: RescaleMode::Unit,
        kind: OptimizerKind::default_for(variant),
    }
}

fn triplet_store(p: &[Vec<f64>; 3], variant: Variant) -> EmbeddingStore {
    let items = [p[1].clone(), p[2].clone()].concat();
    EmbeddingStore::from_rows(p[0].clone(), items, p[0].len(), Curvature::UNIT, variant).unwrap()
}

fn rows(s: &EmbeddingStore) -> [Vec<f64>; 3] {
    [s.user(0).unwrap().to_vec(), s.item(0).unwrap().to_vec(), s.item(1).unwrap().to_vec()]
}

fn random_store(rng: &mut ChaCha8Rng, n_users: usize, n_items: usize, dim: usize, variant: Variant, max: f64) -> EmbeddingStore {
    let users: Vec<f64> = (0..n_users).flat_map(|_| random_point(rng, dim, max)).collect();
    let items: Vec<f64> = (0..n_items).flat_map(|_| random_point(rng, dim, max)).collect();
    EmbeddingStore::from_rows(users, items, dim, Curvature::UNIT, variant).unwrap()
}

fn random_triplet_ids(rng: &mut ChaCha8Rng, n_users: usize, n_items: usize) -> Triplet {
    let pos = rng.gen_range(0..n_items);
    let mut neg = rng.gen_range(0..n_items);
    while neg == pos {
        neg = rng.gen_range(0..n_items);
    }
    Triplet::new(rng.gen_range(0..n_users) as u32, pos as u32, neg as u32)
}

proptest! {
    #[test]
    fn rescale_factor_is_in_range(p in prop::collection::vec(-0.57f64..0.57, 1..4)) {
        let n2: f64 = p.iter().map(|v| v * v).sum();
        prop_assume!(n2 < 1.0);
        let f = rescale_factor(&p, Curvature::UNIT).unwrap();
        prop_assert!(f > 0.0 && f <= 0.25);
        prop_assert_eq!(f == 0.25, n2 == 0.0);
    }
}

#[test]
fn rows_stay_admissible_under_large_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for variant in Variant::ALL {
        let mut store = random_store(&mut rng, 20, 30, 4, variant, 0.9);
        let loss = loss_config(variant, 0.75, 1.0, 0.5);
        let mut opt = Optimizer::new(optim(0.5, variant), &store).unwrap();
        for _ in 0..20_000 {
            let t = random_triplet_ids(&mut rng, 20, 30);
            let (_, g) = {
                let (u, vp, vn) = store.lookup_triplet(t).unwrap();
                loss_and_grad(u, vp, vn, &loss).unwrap()
            };
            opt.step(&mut store, t, &g).unwrap();
        }
        store.check_invariants().unwrap();
        assert!(store.max_norm() <= store.max_row_norm(), "{variant}");
    }
}

#[test]
fn small_step_decreases_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for gamma in [0.0, 0.75] {
        let loss = loss_config(Variant::Hyper, gamma, 1.0, 0.5);
        let mut failures = 0;
        let mut cases = 0;
        while cases < 100 {
            let p = random_triplet(&mut rng, 4, 0.8, &loss, 1e-3);
            if pull_push_loss(&p[0], &p[1], &p[2], &loss).unwrap() == 0.0 {
                continue;
            }
            cases += 1;
            let before = total_loss(&p[0], &p[1], &p[2], &loss).unwrap();
            let mut store = triplet_store(&p, Variant::Hyper);
            let (_, g) = loss_and_grad(&p[0], &p[1], &p[2], &loss).unwrap();
            rsgd_step(&mut store, Triplet::new(0, 0, 1), &g, &optim(1e-4, Variant::Hyper)).unwrap();
            let q = rows(&store);
            if total_loss(&q[0], &q[1], &q[2], &loss).unwrap() >= before {
                failures += 1;
            }
        }
        assert_eq!(failures, 0, "gamma = {gamma}");
    }
}

#[test]
fn identical_triplet_streams_give_identical_parameters() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut store = random_store(&mut rng, 10, 15, 3, Variant::Hyper, 0.5);
        let loss = loss_config(Variant::Hyper, 0.75, 1.0, 0.5);
        for _ in 0..5000 {
            let t = random_triplet_ids(&mut rng, 10, 15);
            let (_, g) = {
                let (u, vp, vn) = store.lookup_triplet(t).unwrap();
                loss_and_grad(u, vp, vn, &loss).unwrap()
            };
            rsgd_step(&mut store, t, &g, &optim(0.05, Variant::Hyper)).unwrap();
        }
        store
    };
    let (a, b) = (run(), run());
    let bits = |s: &EmbeddingStore| s.user_matrix().iter().chain(s.item_matrix()).map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn tangent_and_ball_steps_agree_near_the_origin() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let p = [random_point(&mut rng, 4, 0.01), random_point(&mut rng, 4, 0.01), random_point(&mut rng, 4, 0.01)];
        let mut hyper = triplet_store(&p, Variant::Hyper);
        let mut ts = triplet_store(&p, Variant::HyperTs);
        let t = Triplet::new(0, 0, 1);
        let lh = loss_config(Variant::Hyper, 0.0, 1.0, 0.5);
        let lt = loss_config(Variant::HyperTs, 0.0, 1.0, 0.5);
        let (_, g) = loss_and_grad(&p[0], &p[1], &p[2], &lh).unwrap();
        rsgd_step(&mut hyper, t, &g, &optim(0.01, Variant::Hyper)).unwrap();
        hyperts_step(&mut ts, t, &lt, &optim(0.01, Variant::HyperTs)).unwrap();
        for (a, b) in rows(&hyper).iter().flatten().zip(rows(&ts).iter().flatten()) {
            assert!((a - b).abs() <= 1e-4, "{a} vs {b}");
        }
    }
}

#[test]
fn tangent_step_decreases_tangent_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let loss = loss_config(Variant::HyperTs, 0.0, 1.0, 0.5);
    let tangent_loss = |s: &EmbeddingStore| {
        let r = rows(s).map(|x| to_tangent(&x, Curvature::UNIT).unwrap());
        hyperml::baselines::euclidean_triplet_loss(&r[0], &r[1], &r[2], 0.5)
    };
    let mut checked = 0;
    while checked < 100 {
        let p = [random_point(&mut rng, 4, 0.8), random_point(&mut rng, 4, 0.8), random_point(&mut rng, 4, 0.8)];
        let mut s = triplet_store(&p, Variant::HyperTs);
        let before = tangent_loss(&s);
        if before == 0.0 {
            continue;
        }
        hyperts_step(&mut s, Triplet::new(0, 0, 1), &loss, &optim(1e-4, Variant::HyperTs)).unwrap();
        assert!(tangent_loss(&s) < before);
        checked += 1;
    }
}

#[test]
fn cml_rows_never_exceed_unit_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut store = random_store(&mut rng, 5, 8, 3, Variant::Cml, 1.0);
    let loss = loss_config(Variant::Cml, 0.0, 1.0, 2.0);
    for _ in 0..10_000 {
        let t = random_triplet_ids(&mut rng, 5, 8);
        let (_, g) = {
            let (u, vp, vn) = store.lookup_triplet(t).unwrap();
            loss_and_grad(u, vp, vn, &loss).unwrap()
        };
        rsgd_step(&mut store, t, &g, &optim(1.0, Variant::Cml)).unwrap();
        assert!(store.max_norm() <= 1.0);
    }
}
