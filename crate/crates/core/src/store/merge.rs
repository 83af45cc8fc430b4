use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng;

/// Balances two training sets by subsampling the larger one, uniformly and
/// without replacement, down to the size of the smaller. Selected items keep
/// their original relative order; the result is `a`'s share followed by `b`'s.
pub fn balanced_merge<T: Clone>(a: &[T], b: &[T], seed: u64) -> Result<Vec<T>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation(format!(
            "balanced merge needs two non-empty sets, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len().min(b.len());
    let mut out = Vec::with_capacity(2 * n);
    out.extend(subsample(a, n, seed, "a"));
    out.extend(subsample(b, n, seed, "b"));
    Ok(out)
}

fn subsample<T: Clone>(items: &[T], n: usize, seed: u64, tag: &str) -> Vec<T> {
    if items.len() == n {
        return items.to_vec();
    }
    let mut rng = rng::stream(seed, &["balanced-merge", tag]);
    let mut idx = sample(&mut rng, items.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}
