//! Small shared helpers: order-invariant content hashing for seed
//! derivation and linear interpolation over irregular grids.

/// FNV-1a over a byte stream. Used to derive RNG seeds from content so that
/// results depend on *what* the data is, not on input order or caller state.
pub(crate) fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hash a multiset of real-valued rows, invariant to row order.
pub(crate) fn content_seed(rows: &[Vec<f64>]) -> u64 {
    let mut keys: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    keys.sort_unstable();
    fnv1a(
        keys.iter()
            .flatten()
            .flat_map(|k| k.to_le_bytes()),
    )
}

/// splitmix64 step, for deriving independent seeds from a base seed.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Piecewise-linear interpolation of `(xs[i], ys[i])` at `x`, with constant
/// extrapolation beyond the observed span. `xs` must be sorted ascending and
/// non-empty.
pub(crate) fn lerp_at(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(!xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    // xs sorted, so the partition point is the first index with xs[i] > x.
    let hi = xs.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let span = xs[hi] - xs[lo];
    if span <= 0.0 {
        return ys[lo];
    }
    let w = (x - xs[lo]) / span;
    ys[lo] + w * (ys[hi] - ys[lo])
}
