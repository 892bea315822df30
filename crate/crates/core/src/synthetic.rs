//! Synthetic interaction generators for tests, benchmarks and smoke runs.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Interaction;
use crate::error::{Error, Result};

/// Users split round-robin over `n_blocks` equal item blocks; every user
/// interacts with each item of its block, in a seeded random order with
/// increasing timestamps.
pub fn planted_blocks(n_users: usize, n_items: usize, n_blocks: usize, seed: u64) -> Result<Vec<Interaction>> {
    if n_blocks == 0 || n_items % n_blocks != 0 {
        return Err(Error::InvalidInput(format!(
            "{n_items} items cannot be split into {n_blocks} equal blocks"
        )));
    }
    let block = n_items / n_blocks;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_users * block);
    for u in 0..n_users {
        let b = u % n_blocks;
        let mut items: Vec<usize> = (b * block..(b + 1) * block).collect();
        items.shuffle(&mut rng);
        for (t, i) in items.into_iter().enumerate() {
            out.push(Interaction::new(format!("u{u}"), format!("i{i}"), Some(t as i64)));
        }
    }
    Ok(out)
}

/// Each user interacts with `per_user` distinct items drawn uniformly.
pub fn random_interactions(n_users: usize, n_items: usize, per_user: usize, seed: u64) -> Result<Vec<Interaction>> {
    if per_user > n_items {
        return Err(Error::InvalidInput(format!(
            "{per_user} interactions per user exceed the {n_items}-item catalogue"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_users * per_user);
    for u in 0..n_users {
        for (t, i) in index::sample(&mut rng, n_items, per_user).iter().enumerate() {
            out.push(Interaction::new(format!("u{u}"), format!("i{i}"), Some(t as i64)));
        }
    }
    Ok(out)
}

/// Renders interactions as a tab-separated file body (`user item ts`).
pub fn to_tsv(interactions: &[Interaction]) -> String {
    let mut s = String::new();
    for it in interactions {
        s.push_str(&it.user);
        s.push('\t');
        s.push_str(&it.item);
        s.push_str("\t1");
        if let Some(ts) = it.timestamp {
            s.push('\t');
            s.push_str(&ts.to_string());
        }
        s.push('\n');
    }
    s
}
