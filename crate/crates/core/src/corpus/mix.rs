use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sample::{Label, Sample};
use crate::error::{Error, Result};

/// Augment a code-mixed training set with `per_class` positives and
/// `per_class` negatives drawn without replacement from a native pool.
///
/// Pool samples whose id already occurs in `cm_train` are never drawn.
/// The output is `cm_train` followed by the drawn samples in pool order.
pub fn mix_native(
    cm_train: &[Sample],
    native_pool: &[Sample],
    per_class: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let taken: HashSet<&str> = cm_train.iter().map(|s| s.id.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = Vec::with_capacity(2 * per_class);
    for (class, label) in [(1u8, Label::Positive), (0u8, Label::Negative)] {
        let candidates: Vec<usize> = (0..native_pool.len())
            .filter(|&i| {
                let s = &native_pool[i];
                s.label == label && !taken.contains(s.id.as_str())
            })
            .collect();
        if candidates.len() < per_class {
            return Err(Error::InsufficientPool {
                class,
                requested: per_class,
                available: candidates.len(),
            });
        }
        chosen.extend(
            index::sample(&mut rng, candidates.len(), per_class)
                .into_iter()
                .map(|j| candidates[j]),
        );
    }
    chosen.sort_unstable();

    let mut out = cm_train.to_vec();
    out.extend(chosen.into_iter().map(|i| native_pool[i].clone()));
    Ok(out)
}
