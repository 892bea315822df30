use std::collections::HashSet;

use hyperml::data::{
    build_candidate_set, build_dataset, build_eval_candidates, read_candidates, sample_triplet, write_candidates,
    Interaction,
};
use hyperml::synthetic::random_interactions;
use hyperml::{Execution, Split};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn interactions() -> impl Strategy<Value = Vec<Interaction>> {
    prop::collection::vec((0u8..12, 0u8..25, prop::option::of(0i64..50)), 1..200).prop_map(|rows| {
        rows.into_iter()
            .map(|(u, i, ts)| Interaction::new(format!("user{u}"), format!("item{i}"), ts))
            .collect()
    })
}

proptest! {
    #[test]
    fn built_datasets_satisfy_their_invariants(data in interactions()) {
        let Ok(ds) = build_dataset(&data, 3) else { return Ok(()); };
        ds.validate().unwrap();
        for u in 0..ds.n_users() {
            prop_assert_eq!(ds.user_index(ds.user_label(u)), Some(u));
            let train: HashSet<u32> = ds.train_items(u).iter().copied().collect();
            let (val, test) = (ds.held_out(u, Split::Validation), ds.held_out(u, Split::Test));
            prop_assert!(!train.is_empty());
            prop_assert!(val != test && !train.contains(&val) && !train.contains(&test));
            prop_assert_eq!(ds.positives(u).len(), train.len() + 2);
        }
        for i in 0..ds.n_items() {
            prop_assert_eq!(ds.item_index(ds.item_label(i)), Some(i));
        }
    }
}

#[test]
fn a_million_triplets_are_valid() {
    let ds = build_dataset(&random_interactions(300, 200, 20, 1).unwrap(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1_000_000 {
        let t = sample_triplet(&ds, &mut rng).unwrap();
        let u = t.user as usize;
        assert!(ds.train_items(u).contains(&t.pos_item));
        assert!(!ds.is_positive(u, t.neg_item));
    }
}

#[test]
fn candidates_are_fixed_per_seed_and_mode_independent() {
    let ds = build_dataset(&random_interactions(200, 300, 15, 4).unwrap(), 3).unwrap();
    let seq = build_candidate_set(&ds, Split::Test, 100, 9, Execution::Sequential).unwrap();
    let par = build_candidate_set(&ds, Split::Test, 100, 9, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    let other = build_candidate_set(&ds, Split::Test, 100, 10, Execution::Sequential).unwrap();
    assert_ne!(seq.lists, other.lists);
    for (u, list) in seq.lists.iter().enumerate() {
        assert_eq!(list[0], ds.held_out(u, Split::Test));
        let negs: HashSet<u32> = list[1..].iter().copied().collect();
        assert_eq!(negs.len(), 100);
        assert!(negs.iter().all(|&i| !ds.is_positive(u, i)));
        assert_eq!(list, &build_eval_candidates(&ds, u, Split::Test, 100, 9).unwrap());
    }
}

#[test]
fn candidate_cache_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = build_dataset(&random_interactions(50, 150, 10, 5).unwrap(), 3).unwrap();
    let cands = build_candidate_set(&ds, Split::Validation, 100, 3, Execution::Parallel).unwrap();
    let path = dir.path().join("cands.tsv");
    write_candidates(&path, &ds, &cands).unwrap();
    assert_eq!(read_candidates(&path, &ds, Split::Validation, 3).unwrap(), cands);
    let text = std::fs::read_to_string(&path).unwrap();
    let first = text.lines().next().unwrap();
    let fields: Vec<&str> = first.split('\t').collect();
    assert_eq!(fields.len(), 3);
    assert_eq!(fields[2].split(',').count(), 100);
}

#[test]
fn too_small_catalogue_is_a_sampling_error() {
    let ds = build_dataset(&random_interactions(10, 50, 10, 6).unwrap(), 3).unwrap();
    let err = build_candidate_set(&ds, Split::Test, 100, 1, Execution::Sequential).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}
