//! Counter-based pseudo-randomness.
//!
//! Instead of a stateful generator, every random quantity in the crate is a
//! pure function of a 64-bit seed and one or more integer coordinates.  This
//! makes sampled instances independent of iteration order and worker count:
//! entry (i, j) of a matrix drawn with seed s is the same whether it is
//! produced first, last, or on another thread.

/// Bit-mixing finalizer (splitmix64).  Bijective on `u64`, with strong
/// avalanche behavior: flipping any input bit flips each output bit with
/// probability close to 1/2.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `seed` and a counter `k`.
///
/// Distinct `(seed, k)` pairs map to distinct-looking streams; chaining
/// `derive` calls partitions one master seed into an arbitrary tree of
/// sub-seeds.
#[inline]
pub fn derive(seed: u64, k: u64) -> u64 {
    mix64(seed ^ mix64(k.wrapping_add(0xa076_1d64_78bd_642f)))
}

/// Maps 64 random bits to a float strictly inside (0, 1).
///
/// Uses the top 52 bits shifted onto the midpoints of a uniform grid: the
/// result is `(h + 0.5) * 2^-52` for `h` in `[0, 2^52)`.  Every step is
/// exact in f64 (a 53-bit grid is not: its top midpoint rounds to 1.0), so
/// the value lies in `[2^-53, 1 - 2^-53]` — never 0 or 1.  Open endpoints
/// matter because inverse-CDF sampling divides by densities.
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Uniform (0, 1) variate addressed by `(seed, k)`.
#[inline]
pub fn uniform_open(seed: u64, k: u64) -> f64 {
    unit_open(derive(seed, k))
}
