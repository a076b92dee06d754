use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::catalog::{ItemIdx, LabeledPair};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledPair>,
    pub validation: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

impl DatasetSplit {
    pub fn seeds(pairs: &[LabeledPair]) -> BTreeSet<ItemIdx> {
        pairs.iter().map(|p| p.seed).collect()
    }

    /// Every item that appears in `train`, as seed or target.
    pub fn train_items(&self) -> HashSet<ItemIdx> {
        self.train.iter().flat_map(|p| [p.seed, p.target]).collect()
    }
}

/// Partitions pairs by seed item so held-out seeds are cold.
///
/// Distinct seeds are shuffled with `seed`; the first `round(train_fraction * n)`
/// seeds go to train and the rest is halved between validation and test. Train
/// pairs whose target is a held-out seed are dropped so that held-out seeds never
/// appear in train at all.
pub fn split_cold(pairs: &[LabeledPair], train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut seeds: Vec<ItemIdx> = DatasetSplit::seeds(pairs).into_iter().collect();
    let n = seeds.len();
    if n < 3 {
        return Err(Error::SplitInfeasible(format!(
            "{n} distinct seed items; at least 3 are needed"
        )));
    }
    seeds.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 2);
    let n_val = (n - n_train) / 2;
    let train_seeds: HashSet<ItemIdx> = seeds[..n_train].iter().copied().collect();
    let val_seeds: HashSet<ItemIdx> = seeds[n_train..n_train + n_val].iter().copied().collect();
    let held_out: HashSet<ItemIdx> = seeds[n_train..].iter().copied().collect();

    let mut split = DatasetSplit::default();
    let mut dropped = 0;
    for &p in pairs {
        if train_seeds.contains(&p.seed) {
            if !held_out.contains(&p.target) {
                split.train.push(p);
            } else {
                dropped += 1;
            }
        } else if val_seeds.contains(&p.seed) {
            split.validation.push(p);
        } else {
            split.test.push(p);
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} train pairs whose target is a held-out seed");
    }
    Ok(split)
}
