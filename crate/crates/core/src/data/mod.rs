//! Implicit-feedback datasets with a leave-one-out split.

mod load;
mod sample;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use load::{load_interactions, parse_interactions, FormatOptions, Interaction};
pub use sample::{
    build_candidate_set, build_eval_candidates, read_candidates, sample_triplet,
    write_candidates, CandidateSet, MAX_NEGATIVE_RETRIES,
};

/// Minimum interactions per user: at least one train item plus the two held-out ones.
pub const MIN_USER_INTERACTIONS: usize = 3;

/// Held-out evaluation split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" | "valid" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::config(
                "split",
                format!("unknown split `{s}` (expected validation or test)"),
            )),
        }
    }
}

/// One training example: a user, an item they interacted with, and one they did not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub user: u32,
    pub pos_item: u32,
    pub neg_item: u32,
}

impl Triplet {
    pub fn new(user: u32, pos_item: u32, neg_item: u32) -> Self {
        Triplet {
            user,
            pos_item,
            neg_item,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetOptions {
    pub min_interactions: usize,
    /// Iterative k-core filter on both users and items; `None` disables it.
    pub k_core: Option<usize>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            min_interactions: MIN_USER_INTERACTIONS,
            k_core: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    user_labels: Vec<String>,
    item_labels: Vec<String>,
    user_ids: HashMap<String, u32>,
    item_ids: HashMap<String, u32>,
    train: Vec<Vec<u32>>,
    validation: Vec<u32>,
    test: Vec<u32>,
    /// Sorted union of train, validation and test items per user.
    positives: Vec<Vec<u32>>,
}

/// Builds a dataset keeping users with at least `max(min_interactions, 3)` interactions.
pub fn build_dataset(interactions: &[Interaction], min_interactions: usize) -> Result<Dataset> {
    build_dataset_with(
        interactions,
        &DatasetOptions {
            min_interactions,
            k_core: None,
        },
    )
}

pub fn build_dataset_with(interactions: &[Interaction], opts: &DatasetOptions) -> Result<Dataset> {
    // Group by user in first-appearance order, remembering file positions.
    let mut user_slot: HashMap<&str, usize> = HashMap::new();
    let mut users: Vec<(&str, Vec<(Option<i64>, usize, &str)>)> = Vec::new();
    for (pos, it) in interactions.iter().enumerate() {
        let slot = *user_slot.entry(it.user.as_str()).or_insert_with(|| {
            users.push((it.user.as_str(), Vec::new()));
            users.len() - 1
        });
        users[slot].1.push((it.timestamp, pos, it.item.as_str()));
    }

    // Chronological order (file order breaks ties and covers missing timestamps),
    // then drop repeated items keeping the earliest.
    for (_, events) in users.iter_mut() {
        events.sort_by_key(|&(ts, pos, _)| (ts, pos));
        let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
        events.retain(|&(_, _, item)| seen.insert(item));
    }

    let user_min = opts
        .min_interactions
        .max(MIN_USER_INTERACTIONS)
        .max(opts.k_core.unwrap_or(0));
    let mut alive_user = vec![true; users.len()];
    let mut dead_items: std::collections::HashSet<&str> = std::collections::HashSet::new();
    loop {
        let mut changed = false;
        for (u, (_, events)) in users.iter().enumerate() {
            if alive_user[u] {
                let n = events.iter().filter(|e| !dead_items.contains(e.2)).count();
                if n < user_min {
                    alive_user[u] = false;
                    changed = true;
                }
            }
        }
        if let Some(k) = opts.k_core {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for (u, (_, events)) in users.iter().enumerate() {
                if alive_user[u] {
                    for e in events.iter().filter(|e| !dead_items.contains(e.2)) {
                        *counts.entry(e.2).or_default() += 1;
                    }
                }
            }
            for (item, n) in counts {
                if n < k && dead_items.insert(item) {
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Dense item ids in order of first appearance in the file among survivors.
    let mut item_first: Vec<(usize, &str)> = Vec::new();
    {
        let mut first_pos: HashMap<&str, usize> = HashMap::new();
        for (u, (_, events)) in users.iter().enumerate() {
            if !alive_user[u] {
                continue;
            }
            for &(_, pos, item) in events {
                if dead_items.contains(item) {
                    continue;
                }
                let e = first_pos.entry(item).or_insert(pos);
                *e = (*e).min(pos);
            }
        }
        item_first.extend(first_pos.into_iter().map(|(item, pos)| (pos, item)));
        item_first.sort_unstable();
    }
    let item_labels: Vec<String> = item_first.iter().map(|(_, s)| s.to_string()).collect();
    let item_ids: HashMap<String, u32> = item_labels
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();

    let mut user_labels = Vec::new();
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut positives = Vec::new();
    for (u, (label, events)) in users.iter().enumerate() {
        if !alive_user[u] {
            continue;
        }
        let seq: Vec<u32> = events
            .iter()
            .filter(|e| !dead_items.contains(e.2))
            .map(|e| item_ids[e.2])
            .collect();
        debug_assert!(seq.len() >= MIN_USER_INTERACTIONS);
        let n = seq.len();
        user_labels.push(label.to_string());
        test.push(seq[n - 1]);
        validation.push(seq[n - 2]);
        let mut pos = seq.clone();
        pos.sort_unstable();
        positives.push(pos);
        train.push(seq[..n - 2].to_vec());
    }
    if user_labels.is_empty() {
        return Err(Error::Empty(format!(
            "no user has at least {user_min} interactions"
        )));
    }
    let user_ids = user_labels
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    Ok(Dataset {
        user_labels,
        item_labels,
        user_ids,
        item_ids,
        train,
        validation,
        test,
        positives,
    })
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.user_labels.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_labels.len()
    }

    /// Number of training (user, item) pairs.
    pub fn n_train(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn train_items(&self, user: usize) -> &[u32] {
        &self.train[user]
    }

    pub fn held_out(&self, user: usize, split: Split) -> u32 {
        match split {
            Split::Validation => self.validation[user],
            Split::Test => self.test[user],
        }
    }

    /// All items the user interacted with, sorted.
    pub fn positives(&self, user: usize) -> &[u32] {
        &self.positives[user]
    }

    pub fn is_positive(&self, user: usize, item: u32) -> bool {
        self.positives[user].binary_search(&item).is_ok()
    }

    pub fn user_label(&self, user: usize) -> &str {
        &self.user_labels[user]
    }

    pub fn item_label(&self, item: usize) -> &str {
        &self.item_labels[item]
    }

    pub fn user_index(&self, label: &str) -> Option<usize> {
        self.user_ids.get(label).map(|&u| u as usize)
    }

    pub fn item_index(&self, label: &str) -> Option<usize> {
        self.item_ids.get(label).map(|&i| i as usize)
    }

    /// Checks the split invariants; used by tests and after loading.
    pub fn validate(&self) -> Result<()> {
        for u in 0..self.n_users() {
            let (v, t) = (self.validation[u], self.test[u]);
            let train = &self.train[u];
            if train.is_empty() {
                return Err(Error::InvalidInput(format!("user {u} has no training items")));
            }
            if v == t || train.contains(&v) || train.contains(&t) {
                return Err(Error::InvalidInput(format!("user {u} has overlapping splits")));
            }
            if self.positives[u].len() != train.len() + 2 {
                return Err(Error::InvalidInput(format!("user {u} has duplicate items")));
            }
        }
        Ok(())
    }
}
