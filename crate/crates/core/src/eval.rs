//! Leave-one-out ranking metrics over sampled candidate lists.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baselines::to_tangent;
use crate::data::{build_candidate_set, CandidateSet, Dataset, Split};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gyrovector::{dist_c_raw, euclidean_dist};
use crate::model::{EmbeddingStore, Variant};

/// Mean ranking metrics over the evaluated users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub hr: f64,
    pub ndcg: f64,
    pub k: usize,
    pub n_users_evaluated: usize,
    pub split: Split,
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} HR@{k}={:.5} nDCG@{k}={:.5} ({} users)",
            self.split,
            self.hr,
            self.ndcg,
            self.n_users_evaluated,
            k = self.k
        )
    }
}

/// Rank (1-based) of the first entry of `scores`, a list of `(item, distance)`.
///
/// Smaller distances rank higher; equal distances are broken by item id.
pub fn rank_ground_truth(scores: &[(u32, f64)]) -> Result<usize> {
    let Some(&(gt_item, gt_dist)) = scores.first() else {
        return Err(Error::Empty("candidate list".into()));
    };
    let mut rank = 1;
    for &(item, d) in scores {
        if !d.is_finite() {
            return Err(Error::NonFinite(format!("distance to item {item}")));
        }
        if d < gt_dist || (d == gt_dist && item < gt_item) {
            rank += 1;
        }
    }
    Ok(rank)
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0
    } else {
        0.0
    }
}

/// Expected `(HR@k, nDCG@k)` when the ground truth's rank is uniform over
/// `n_negatives + 1` positions.
pub fn null_model_expectation(k: usize, n_negatives: usize) -> (f64, f64) {
    let n = (n_negatives + 1) as f64;
    let kk = k.min(n_negatives + 1);
    let dcg: f64 = (1..=kk).map(|r| ndcg_at_k(r, k)).sum();
    (kk as f64 / n, dcg / n)
}

/// Builds (or reuses) candidates for `split` and evaluates `store` on them.
pub fn evaluate(
    store: &EmbeddingStore,
    ds: &Dataset,
    split: Split,
    k: usize,
    n_negatives: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvalResult> {
    let cands = build_candidate_set(ds, split, n_negatives, seed, exec)?;
    evaluate_candidates(store, &cands, k, exec)
}

/// Variant-specific distance used for ranking.
enum Scorer<'a> {
    Poincare { store: &'a EmbeddingStore, c: f64 },
    Euclidean { store: &'a EmbeddingStore },
    Tangent { users: Vec<f64>, items: Vec<f64>, dim: usize },
}

impl<'a> Scorer<'a> {
    fn new(store: &'a EmbeddingStore, exec: Execution) -> Result<Self> {
        Ok(match store.variant() {
            Variant::Hyper => Scorer::Poincare {
                store,
                c: store.curvature().value(),
            },
            Variant::Cml => Scorer::Euclidean { store },
            Variant::HyperTs => {
                let dim = store.dim();
                let c = store.curvature();
                let map = |m: &[f64]| -> Result<Vec<f64>> {
                    let rows: Vec<&[f64]> = m.chunks_exact(dim).collect();
                    let mapped = exec.map_slice(&rows, |r| to_tangent(r, c));
                    let mut out = Vec::with_capacity(m.len());
                    for r in mapped {
                        out.extend(r?);
                    }
                    Ok(out)
                };
                Scorer::Tangent {
                    users: map(store.user_matrix())?,
                    items: map(store.item_matrix())?,
                    dim,
                }
            }
        })
    }

    fn distance(&self, user: usize, item: usize) -> Result<f64> {
        match self {
            Scorer::Poincare { store, c } => dist_c_raw(store.user(user)?, store.item(item)?, *c),
            Scorer::Euclidean { store } => Ok(euclidean_dist(store.user(user)?, store.item(item)?)),
            Scorer::Tangent { users, items, dim } => Ok(euclidean_dist(
                &users[user * dim..(user + 1) * dim],
                &items[item * dim..(item + 1) * dim],
            )),
        }
    }
}

/// Rank of the ground truth for each user, in user order.
pub fn ranks(store: &EmbeddingStore, cands: &CandidateSet, exec: Execution) -> Result<Vec<usize>> {
    if cands.lists.len() != store.n_users() {
        return Err(Error::DimensionMismatch {
            expected: store.n_users(),
            got: cands.lists.len(),
        });
    }
    let scorer = Scorer::new(store, exec)?;
    exec.map(cands.lists.len(), |u| {
        let list = &cands.lists[u];
        let mut scores = Vec::with_capacity(list.len());
        for &item in list {
            scores.push((item, scorer.distance(u, item as usize)?));
        }
        rank_ground_truth(&scores)
    })
    .into_iter()
    .collect()
}

/// Mean HR@k and nDCG@k of `store` on precomputed candidates. The sum is taken
/// in user order, so the result does not depend on the execution mode.
pub fn evaluate_candidates(
    store: &EmbeddingStore,
    cands: &CandidateSet,
    k: usize,
    exec: Execution,
) -> Result<EvalResult> {
    if k == 0 {
        return Err(Error::config("k", "must be >= 1"));
    }
    let ranks = ranks(store, cands, exec)?;
    if ranks.is_empty() {
        return Err(Error::Empty("no users to evaluate".into()));
    }
    let n = ranks.len() as f64;
    let hr = ranks.iter().map(|&r| hr_at_k(r, k)).sum::<f64>() / n;
    let ndcg = ranks.iter().map(|&r| ndcg_at_k(r, k)).sum::<f64>() / n;
    Ok(EvalResult {
        hr,
        ndcg,
        k,
        n_users_evaluated: ranks.len(),
        split: cands.split,
    })
}

/// `epoch<TAB>split<TAB>HR<TAB>nDCG` with five decimals.
pub fn format_metrics_line(epoch: usize, r: &EvalResult) -> String {
    format!("{epoch}\t{}\t{:.5}\t{:.5}", r.split, r.hr, r.ndcg)
}

pub fn write_metrics_line<W: Write>(w: &mut W, epoch: usize, r: &EvalResult) -> std::io::Result<()> {
    writeln!(w, "{}", format_metrics_line(epoch, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_ground_truth(&[(5, 0.1), (1, 0.2), (2, 0.3)]).unwrap(), 1);
        let mut tied: Vec<(u32, f64)> = vec![(100, 1.0)];
        tied.extend((0..100).map(|i| (i, 1.0)));
        assert_eq!(rank_ground_truth(&tied).unwrap(), 101);
        assert_eq!(rank_ground_truth(&[(0, 0.5), (1, 0.4), (2, 0.6)]).unwrap(), 2);
        assert!(rank_ground_truth(&[(0, 0.5), (1, f64::NAN)]).is_err());
    }

    #[test]
    fn metric_examples() {
        assert_eq!(ndcg_at_k(1, 10), 1.0);
        assert_eq!(ndcg_at_k(3, 10), 0.5);
        assert_eq!(ndcg_at_k(11, 10), 0.0);
        assert_eq!(hr_at_k(10, 10), 1.0);
        assert_eq!(hr_at_k(11, 10), 0.0);
        assert_eq!(hr_at_k(1, 1), 1.0);
    }

    #[test]
    fn null_expectation() {
        let (hr, ndcg) = null_model_expectation(10, 100);
        assert!((hr - 10.0 / 101.0).abs() < 1e-15);
        assert!((ndcg - 0.044_985_736_020_676_687).abs() < 1e-15, "{ndcg}");
    }

    #[test]
    fn metrics_line() {
        let r = EvalResult {
            hr: 0.5,
            ndcg: 1.0 / 3.0,
            k: 10,
            n_users_evaluated: 4,
            split: Split::Validation,
        };
        assert_eq!(format_metrics_line(50, &r), "50\tvalidation\t0.50000\t0.33333");
    }
}
