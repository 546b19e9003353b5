const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Bag-of-tokens counts over `buckets` hash buckets.
pub fn hash_tokens(text: &str, buckets: usize) -> Vec<u32> {
    let mut counts = vec![0u32; buckets];
    for token in tokenize(text) {
        counts[(fnv1a64(token.as_bytes()) % buckets as u64) as usize] += 1;
    }
    counts
}
