//! Training triplets and fixed evaluation candidate lists.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Split, Triplet};
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Rejection-sampling budget for one negative item.
pub const MAX_NEGATIVE_RETRIES: usize = 1000;

/// Samples a user uniformly, one of their training items uniformly, and a
/// negative item uniformly among items the user never interacted with.
pub fn sample_triplet<R: Rng + ?Sized>(ds: &Dataset, rng: &mut R) -> Result<Triplet> {
    if ds.n_users() == 0 || ds.n_items() == 0 {
        return Err(Error::Empty("dataset".into()));
    }
    let user = rng.gen_range(0..ds.n_users());
    let train = ds.train_items(user);
    let pos = train[rng.gen_range(0..train.len())];
    if ds.positives(user).len() >= ds.n_items() {
        return Err(Error::SamplingExhausted {
            user,
            msg: "user interacted with the whole catalogue".into(),
        });
    }
    for _ in 0..MAX_NEGATIVE_RETRIES {
        let neg = rng.gen_range(0..ds.n_items()) as u32;
        if !ds.is_positive(user, neg) {
            return Ok(Triplet::new(user as u32, pos, neg));
        }
    }
    Err(Error::SamplingExhausted {
        user,
        msg: format!("no negative found in {MAX_NEGATIVE_RETRIES} draws"),
    })
}

/// SplitMix64 finalizer, used to derive independent per-user streams.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn candidate_rng(seed: u64, user: usize, split: Split) -> ChaCha8Rng {
    let tag = match split {
        Split::Validation => 0x5641_4c49_4441_5445,
        Split::Test => 0x0054_4553_5400_0000,
    };
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ tag) ^ user as u64))
}

/// The held-out item followed by `n_negatives` distinct items the user never
/// interacted with. Deterministic in `(seed, user, split)`.
pub fn build_eval_candidates(
    ds: &Dataset,
    user: usize,
    split: Split,
    n_negatives: usize,
    seed: u64,
) -> Result<Vec<u32>> {
    if user >= ds.n_users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: user,
            len: ds.n_users(),
        });
    }
    let available = ds.n_items() - ds.positives(user).len();
    if available < n_negatives {
        return Err(Error::SamplingExhausted {
            user,
            msg: format!(
                "{n_negatives} distinct negatives requested but only {available} items are unobserved"
            ),
        });
    }
    let mut rng = candidate_rng(seed, user, split);
    let mut out = Vec::with_capacity(n_negatives + 1);
    out.push(ds.held_out(user, split));
    if n_negatives * 2 <= available {
        let mut chosen = HashSet::with_capacity(n_negatives);
        while out.len() < n_negatives + 1 {
            let item = rng.gen_range(0..ds.n_items()) as u32;
            if !ds.is_positive(user, item) && chosen.insert(item) {
                out.push(item);
            }
        }
    } else {
        let pool: Vec<u32> = (0..ds.n_items() as u32)
            .filter(|&i| !ds.is_positive(user, i))
            .collect();
        out.extend(index::sample(&mut rng, pool.len(), n_negatives).iter().map(|k| pool[k]));
    }
    Ok(out)
}

/// Candidate lists for every user, shared by all models evaluated on a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub split: Split,
    pub n_negatives: usize,
    pub seed: u64,
    /// One list per user, ground truth first.
    pub lists: Vec<Vec<u32>>,
}

pub fn build_candidate_set(
    ds: &Dataset,
    split: Split,
    n_negatives: usize,
    seed: u64,
    exec: Execution,
) -> Result<CandidateSet> {
    let lists = exec
        .map(ds.n_users(), |u| build_eval_candidates(ds, u, split, n_negatives, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet {
        split,
        n_negatives,
        seed,
        lists,
    })
}

/// Persists candidates as `user<TAB>gt_item<TAB>neg1,neg2,...` with external ids.
pub fn write_candidates(path: &Path, ds: &Dataset, cands: &CandidateSet) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    for (u, list) in cands.lists.iter().enumerate() {
        let negs: Vec<&str> = list[1..].iter().map(|&i| ds.item_label(i as usize)).collect();
        writeln!(
            w,
            "{}\t{}\t{}",
            ds.user_label(u),
            ds.item_label(list[0] as usize),
            negs.join(",")
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_candidates(path: &Path, ds: &Dataset, split: Split, seed: u64) -> Result<CandidateSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lists: Vec<Option<Vec<u32>>> = vec![None; ds.n_users()];
    let mut n_negatives = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let mut parts = line.split('\t');
        let (Some(user), Some(gt), Some(negs)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err("expected user, ground truth and negatives".into()));
        };
        let u = ds
            .user_index(user)
            .ok_or_else(|| parse_err(format!("unknown user `{user}`")))?;
        let item = |label: &str| {
            ds.item_index(label)
                .map(|i| i as u32)
                .ok_or_else(|| parse_err(format!("unknown item `{label}`")))
        };
        let mut list = vec![item(gt)?];
        if !negs.is_empty() {
            for label in negs.split(',') {
                list.push(item(label)?);
            }
        }
        if list[0] != ds.held_out(u, split) {
            return Err(parse_err(format!("ground truth for `{user}` does not match the {split} split")));
        }
        match n_negatives {
            None => n_negatives = Some(list.len() - 1),
            Some(n) if n != list.len() - 1 => {
                return Err(parse_err("inconsistent number of negatives".into()))
            }
            _ => {}
        }
        lists[u] = Some(list);
    }
    let lists = lists
        .into_iter()
        .enumerate()
        .map(|(u, l)| {
            l.ok_or_else(|| Error::InvalidInput(format!("no candidates for user `{}`", ds.user_label(u))))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet {
        split,
        n_negatives: n_negatives.unwrap_or(0),
        seed,
        lists,
    })
}
