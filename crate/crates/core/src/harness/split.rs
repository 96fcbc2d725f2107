use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// `(train, test)` sizes for `n` items: `⌊n·f⌋` and the remainder.
///
/// A product within 1e-9 of an integer is rounded first, so fractions written
/// as `a / n` give exactly `a` despite binary rounding.
pub fn split_sizes(n: usize, train_fraction: f64) -> Result<(usize, usize)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    let x = n as f64 * train_fraction;
    let train = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.floor() } as usize;
    Ok((train, n - train))
}

/// Seeded uniform partition without replacement. Both parts keep the input
/// order.
pub fn split_dataset<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (n_train, _) = split_sizes(items.len(), train_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; items.len()];
    for i in sample(&mut rng, items.len(), n_train) {
        in_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(items.len() - n_train);
    for (item, keep) in items.iter().zip(in_train) {
        if keep {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok((train, test))
}
