use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, ProfileSet, Result};

/// Train / validation / test fractions.
pub const DEFAULT_SPLIT: [f64; 3] = [0.75, 0.05, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// Profile-level partition assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub assignment: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn partition_of(&self, profile_id: &str) -> Option<Partition> {
        self.assignment.get(profile_id).copied()
    }

    pub fn ids(&self, partition: Partition) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, p)| **p == partition)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// `(train, val, test)` profile counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let count = |p| self.assignment.values().filter(|v| **v == p).count();
        (count(Partition::Train), count(Partition::Val), count(Partition::Test))
    }
}

pub fn split_profiles(ps: &ProfileSet, fractions: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    let ids: Vec<String> = ps.profiles.iter().map(|p| p.id()).collect();
    split_ids(&ids, fractions, seed)
}

/// Shuffles profile ids with `seed` and assigns whole profiles. Validation
/// and test counts are the rounded targets; train takes the remainder.
pub fn split_ids(ids: &[String], fractions: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    let valid = fractions.iter().all(|f| (0.0..=1.0).contains(f)) && (fractions.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    if !valid {
        return Err(DataError::InvalidFractions(fractions));
    }
    let n = ids.len();
    if n < 3 {
        return Err(DataError::TooFewProfiles { count: n });
    }
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n);
    let n_test = ((fractions[2] * n as f64).round() as usize).min(n - n_val);
    let n_train = n - n_val - n_test;

    let mut order: Vec<&String> = ids.iter().collect();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let part = if i < n_train {
                Partition::Train
            } else if i < n_train + n_val {
                Partition::Val
            } else {
                Partition::Test
            };
            (id.clone(), part)
        })
        .collect();
    Ok(SplitAssignment {
        fractions,
        seed,
        assignment,
    })
}
