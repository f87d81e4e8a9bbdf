//! Train/test splitting and k-fold partitions.

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::seed::{tag, SeedPolicy};

/// Row indices of a train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn apply(&self, data: &Dataset) -> (Dataset, Dataset) {
        (data.select_rows(&self.train), data.select_rows(&self.test))
    }
}

/// Random holdout partition with `round(n * train_fraction)` training rows.
pub fn split_indices(n: usize, train_fraction: f64, seed: SeedPolicy) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(invalid(format!("split of {n} rows at fraction {train_fraction} leaves an empty part")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng(&[tag::SPLIT]));
    let test = idx.split_off(n_train);
    Ok(SplitIndices { train: idx, test })
}

pub fn split(data: &Dataset, train_fraction: f64, seed: SeedPolicy) -> Result<(Dataset, Dataset)> {
    Ok(split_indices(data.n(), train_fraction, seed)?.apply(data))
}

/// `k` folds over `n` rows. Fold sizes differ by at most one; the first
/// `n % k` folds get the extra row.
pub fn kfold(n: usize, k: usize, seed: SeedPolicy) -> Result<Vec<SplitIndices>> {
    if k < 2 || k > n {
        return Err(invalid(format!("k must satisfy 2 <= k <= n ({n}), got {k}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng(&[tag::KFOLD]));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test = idx[start..start + size].to_vec();
        let train = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        folds.push(SplitIndices { train, test });
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn holdout_sizes() {
        let s = split_indices(10, 0.7, SeedPolicy::new(1)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (7, 3));
        let s = split_indices(10_000, 0.7, SeedPolicy::new(1)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (7000, 3000));
        assert_eq!(s, split_indices(10_000, 0.7, SeedPolicy::new(1)).unwrap());
        assert!(split_indices(10, 1.0, SeedPolicy::new(1)).is_err());
        assert!(split_indices(10, 0.0, SeedPolicy::new(1)).is_err());
        assert!(split_indices(1, 0.5, SeedPolicy::new(1)).is_err());
    }

    #[test]
    fn kfold_sizes() {
        let f = kfold(10, 5, SeedPolicy::new(3)).unwrap();
        assert!(f.iter().all(|s| s.test.len() == 2));
        let mut sizes: Vec<usize> = kfold(103, 5, SeedPolicy::new(3)).unwrap().iter().map(|s| s.test.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![20, 20, 21, 21, 21]);
        assert!(kfold(10, 1, SeedPolicy::new(3)).is_err());
        assert!(kfold(10, 11, SeedPolicy::new(3)).is_err());
    }

    proptest! {
        #[test]
        fn kfold_partitions_rows(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = kfold(n, k, SeedPolicy::new(seed)).unwrap();
            let mut seen = vec![0u8; n];
            for f in &folds {
                prop_assert_eq!(f.train.len() + f.test.len(), n);
                for &i in &f.test { seen[i] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn holdout_is_disjoint_partition(n in 2usize..500, frac in 0.05f64..0.95, seed in any::<u64>()) {
            if let Ok(s) = split_indices(n, frac, SeedPolicy::new(seed)) {
                let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
