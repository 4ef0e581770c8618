//! Five-fold cross-validation splitting with a nested 80/20 train/val split.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use trabs_core::CoreError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Shuffles ids with a fixed seed, deals them into `k` disjoint test folds
/// covering all ids, and splits each fold's remainder 80/20 into train/val
/// (at least one validation case).
pub fn make_cv_splits(
    case_ids: &[String],
    k: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>, CoreError> {
    if case_ids.len() < k || k == 0 {
        return Err(CoreError::TooFewCases {
            k,
            n: case_ids.len(),
        });
    }
    let mut ids: Vec<String> = case_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0usize;
    for fold_index in 0..k {
        let size = base + usize::from(fold_index < extra);
        let test_ids: Vec<String> = ids[start..start + size].to_vec();
        let rest: Vec<String> = ids[..start]
            .iter()
            .chain(ids[start + size..].iter())
            .cloned()
            .collect();
        let n_val = ((rest.len() as f64) * 0.2).round().max(1.0) as usize;
        let n_val = n_val.min(rest.len() - 1);
        let split_at = rest.len() - n_val;
        folds.push(FoldSplit {
            fold_index,
            train_ids: rest[..split_at].to_vec(),
            val_ids: rest[split_at..].to_vec(),
            test_ids,
        });
        start += size;
    }
    Ok(folds)
}
