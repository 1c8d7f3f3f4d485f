use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MatkError, Result};

/// A train / validation / test partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train_idx.len(), self.val_idx.len(), self.test_idx.len())
    }
}

/// Shuffles `0..n` and cuts it into `ceil(n/2)` train, `floor(n/4)` validation
/// and the remainder as test.
pub fn make_split(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < 4 {
        return Err(MatkError::param(format!("need at least 4 samples to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = n.div_ceil(2);
    let n_val = n / 4;
    let test_idx = idx.split_off(n_train + n_val);
    let val_idx = idx.split_off(n_train);
    Ok(SplitPlan {
        train_idx: idx,
        val_idx,
        test_idx,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes() {
        assert_eq!(make_split(8, 0).unwrap().sizes(), (4, 2, 2));
        assert_eq!(make_split(10, 0).unwrap().sizes(), (5, 2, 3));
        assert!(make_split(3, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(make_split(50, 9).unwrap(), make_split(50, 9).unwrap());
        assert_ne!(make_split(50, 9).unwrap(), make_split(50, 10).unwrap());
    }

    proptest! {
        #[test]
        fn partitions_indices(n in 4usize..300, seed in any::<u64>()) {
            let plan = make_split(n, seed).unwrap();
            let mut all: Vec<usize> = plan.train_idx.iter()
                .chain(&plan.val_idx)
                .chain(&plan.test_idx)
                .copied()
                .collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
