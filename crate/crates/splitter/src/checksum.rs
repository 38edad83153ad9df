//! One's-complement arithmetic for the IPv4 header checksum.

/// Folds a wide accumulator down to a 16-bit one's-complement sum.
#[inline]
pub fn fold(mut acc: u32) -> u16 {
    while acc > 0xffff {
        acc = (acc & 0xffff) + (acc >> 16);
    }
    acc as u16
}

/// One's-complement sum of a sequence of 16-bit words.
#[inline]
pub fn ones_complement_sum(words: &[u16]) -> u16 {
    fold(words.iter().map(|&w| u32::from(w)).sum())
}

/// Checksum to store in a header whose checksum field is zero in `words`.
#[inline]
pub fn compute(words: &[u16]) -> u16 {
    !ones_complement_sum(words)
}

/// True when the words, checksum field included, sum to 0xffff.
#[inline]
pub fn verify(words: &[u16]) -> bool {
    ones_complement_sum(words) == 0xffff
}

/// Incremental update after one 16-bit word changed from `old_word` to
/// `new_word`: `HC' = ~(~HC + ~m + m')` (RFC 1624, eqn. 3).
#[inline]
pub fn update(old_checksum: u16, old_word: u16, new_word: u16) -> u16 {
    let acc = u32::from(!old_checksum) + u32::from(!old_word) + u32::from(new_word);
    !fold(acc)
}
