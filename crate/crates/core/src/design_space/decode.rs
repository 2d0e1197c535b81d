//! Mapping unit-interval actions onto discrete values.

use crate::design_space::Dim;
use crate::error::{Error, Result};

/// Index of the bucket `b` falls in when `[0, 1]` is cut into `count`
/// equal buckets. `b = 1` lands in the last bucket rather than one past it.
pub(crate) fn bucket(b: f64, count: u64) -> u64 {
    debug_assert!(count >= 1);
    let scaled = (count as f64 * b.clamp(0.0, 1.0)).floor();
    (scaled as u64).min(count - 1)
}

/// Number of grid points `low, low+step, …` not exceeding `bound`.
pub(crate) fn choice_count(low: i64, bound: i64, step: i64) -> u64 {
    if bound < low {
        1
    } else {
        ((bound - low) / step) as u64 + 1
    }
}

pub(crate) fn check_range(low: i64, up: i64, step: i64) -> Result<()> {
    if step < 1 {
        return Err(Error::Config(format!("step must be >= 1, got {step}")));
    }
    if low > up {
        return Err(Error::Config(format!("empty range {low}..={up}")));
    }
    if (up - low) % step != 0 {
        return Err(Error::Config(format!(
            "range {low}..={up} is not a multiple of step {step}"
        )));
    }
    Ok(())
}

/// Quantizes `b ∈ [0, 1]` onto `{low, low+step, …, up}`.
///
/// ```
/// use core_dse::design_space::decode_range;
/// assert_eq!(decode_range(0.5, 2, 1024, 2).unwrap(), 514);
/// assert_eq!(decode_range(1.0, 2, 1024, 2).unwrap(), 1024);
/// ```
pub fn decode_range(b: f64, low: i64, up: i64, step: i64) -> Result<i64> {
    check_range(low, up, step)?;
    if !b.is_finite() {
        return Err(Error::Domain {
            context: "decode_range",
            value: b,
        });
    }
    let count = choice_count(low, up, step);
    Ok(low + bucket(b, count) as i64 * step)
}

/// Like [`decode_range`], with the upper bound taken from the smallest
/// decoded source value.
pub fn decode_scaled(b: f64, low: i64, step: i64, sources: &[i64]) -> Result<i64> {
    let bound = *sources
        .iter()
        .min()
        .ok_or_else(|| Error::Config("scaled parameter needs at least one source".into()))?;
    if bound < low {
        return Err(Error::Config(format!(
            "degenerate bound: smallest source {bound} is below the lower bound {low}"
        )));
    }
    if step < 1 {
        return Err(Error::Config(format!("step must be >= 1, got {step}")));
    }
    if !b.is_finite() {
        return Err(Error::Domain {
            context: "decode_scaled",
            value: b,
        });
    }
    Ok(low + bucket(b, choice_count(low, bound, step)) as i64 * step)
}

/// Loop order from six sort keys: larger key means further out. Equal keys
/// keep canonical `S, R, K, C, X, Y` order.
pub fn decode_order(keys: &[f64; 6]) -> [Dim; 6] {
    let perm = argsort_desc(keys);
    let mut order = [Dim::S; 6];
    for (slot, &i) in order.iter_mut().zip(&perm) {
        *slot = Dim::ALL[i];
    }
    order
}

pub(crate) fn argsort_desc(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    // stable sort keeps index order among ties
    idx.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}
