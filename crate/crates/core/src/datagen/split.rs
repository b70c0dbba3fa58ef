use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GriddedSequence, SplitRole};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplits {
    pub train: Vec<GriddedSequence>,
    pub val: Vec<GriddedSequence>,
    pub test: Vec<GriddedSequence>,
}

/// Seeded disjoint partition into train/val/test by `fractions`.
///
/// Counts are rounded for train and validation; test takes the remainder.
/// Members of each split keep ascending sample-id order.
pub fn split_dataset(
    sequences: Vec<GriddedSequence>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<DatasetSplits> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::config("fractions", "each fraction must lie in [0, 1]"));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("fractions", "must sum to 1"));
    }
    let n = sequences.len();
    if n == 0 {
        return Err(Error::config("count", "nothing to split"));
    }
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let counts = [n_train, n_val, n - n_train - n_val];
    for (i, name) in ["train", "val", "test"].iter().enumerate() {
        if fractions[i] > 0.0 && counts[i] == 0 {
            return Err(Error::config(
                format!("fractions[{i}]"),
                format!("{name} split would be empty with {n} sequences"),
            ));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut role = vec![SplitRole::Test; n];
    for &i in &order[..n_train] {
        role[i] = SplitRole::Train;
    }
    for &i in &order[n_train..n_train + n_val] {
        role[i] = SplitRole::Val;
    }
    let mut out = DatasetSplits::default();
    for (mut seq, r) in sequences.into_iter().zip(role) {
        seq.split = r;
        match r {
            SplitRole::Train => out.train.push(seq),
            SplitRole::Val => out.val.push(seq),
            _ => out.test.push(seq),
        }
    }
    Ok(out)
}
