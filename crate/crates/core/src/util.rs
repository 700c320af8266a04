//! Small shared numeric helpers.

/// Squared Euclidean norm of a flat vector.
pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// splitmix64 step; used to derive independent RNG streams from a master seed.
pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with salt words into one stream seed. Each distinct
/// salt sequence yields a statistically independent ChaCha seed.
pub fn mix_seed(master: u64, salts: &[u64]) -> u64 {
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    let mut out = splitmix64(&mut state);
    for &s in salts {
        state ^= s;
        out ^= splitmix64(&mut state);
    }
    out
}
