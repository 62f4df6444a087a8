//! Order-preserving parallel maps. Results are collected by index, so any
//! subsequent sequential reduction is independent of thread scheduling.

use rayon::prelude::*;

use crate::error::Result;

pub(crate) fn map_ordered<T, U, F>(xs: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    xs.par_iter().map(f).collect()
}

pub(crate) fn try_map_ordered<T, U, F>(xs: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    xs.par_iter().map(f).collect()
}

/// Pairwise sum split at the midpoint. A slice formed by concatenating a
/// slice with itself sums to exactly twice the original.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}
