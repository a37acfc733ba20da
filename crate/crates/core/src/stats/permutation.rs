use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::TestResult;
use crate::error::{Error, Result};

const BATCH: usize = 1024;
pub const MIN_PERMUTATIONS: usize = 1000;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// Paired sign-flip permutation test for the difference in accuracy of two
/// classifiers scored on the same items. `correct_a[i]` / `correct_b[i]`
/// say whether each model got item `i` right. The statistic is the absolute
/// accuracy difference; each permutation swaps the pair's outcomes with
/// probability 1/2. `p = (1 + #{perm >= observed}) / (n_perm + 1)`.
///
/// Permutations are drawn in fixed-size batches, each from its own ChaCha
/// stream, so the result depends only on `seed` and not on thread count.
pub fn paired_permutation_test(correct_a: &[bool], correct_b: &[bool], n_perm: usize, seed: u64) -> Result<TestResult> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::domain("permutation test: length mismatch"));
    }
    if correct_a.is_empty() {
        return Err(Error::domain("permutation test: no items"));
    }
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::domain(format!("permutation test: n_perm must be at least {MIN_PERMUTATIONS}")));
    }
    let n = correct_a.len() as f64;
    // only discordant pairs change under a swap
    let diffs: Vec<i64> = correct_a
        .iter()
        .zip(correct_b)
        .filter(|(a, b)| a != b)
        .map(|(&a, _)| if a { 1 } else { -1 })
        .collect();
    let observed: i64 = diffs.iter().sum::<i64>().abs();
    let batches = n_perm.div_ceil(BATCH);
    let hits: usize = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let todo = BATCH.min(n_perm - b * BATCH);
            (0..todo)
                .filter(|_| {
                    let s: i64 = diffs.iter().map(|&d| if rng.random::<bool>() { d } else { -d }).sum();
                    s.abs() >= observed
                })
                .count()
        })
        .sum();
    Ok(TestResult {
        statistic: observed as f64 / n,
        p_value: (1 + hits) as f64 / (n_perm + 1) as f64,
        df: None,
        method: "paired permutation".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_predictions() {
        let a = [true, false, true, true];
        let r = paired_permutation_test(&a, &a, 1000, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Vec<bool> = (0..200).map(|i| i % 3 != 0).collect();
        let b: Vec<bool> = (0..200).map(|i| i % 4 != 0).collect();
        let x = paired_permutation_test(&a, &b, 5000, 9).unwrap();
        let y = paired_permutation_test(&a, &b, 5000, 9).unwrap();
        assert_eq!(x, y);
    }
}
