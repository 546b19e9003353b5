use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::fnv1a64;

/// Picks one of a recording's captions uniformly, deterministically in
/// `(recording_id, epoch, seed)`. `None` only for an empty slice.
pub fn sample_caption<'a, T>(captions: &'a [T], recording_id: &str, epoch: usize, seed: u64) -> Option<&'a T> {
    match captions.len() {
        0 => None,
        1 => captions.first(),
        n => {
            let mut key = Vec::with_capacity(recording_id.len() + 16);
            key.extend_from_slice(recording_id.as_bytes());
            key.extend_from_slice(&(epoch as u64).to_le_bytes());
            key.extend_from_slice(&seed.to_le_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(&key));
            captions.get(rng.random_range(0..n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_empty() {
        assert_eq!(sample_caption(&["only"], "r1", 3, 9), Some(&"only"));
        assert_eq!(sample_caption::<&str>(&[], "r1", 3, 9), None);
    }

    #[test]
    fn deterministic() {
        let caps = ["a", "b", "c", "d"];
        for epoch in 0..20 {
            assert_eq!(sample_caption(&caps, "xc:42", epoch, 7), sample_caption(&caps, "xc:42", epoch, 7));
        }
    }

    #[test]
    fn two_captions_are_balanced() {
        let caps = ["common", "scientific"];
        let draws = 10_000;
        let first = (0..draws)
            .filter(|&i| sample_caption(&caps, &format!("rec{}", i % 100), i / 100, 1) == Some(&"common"))
            .count();
        let frac = first as f64 / draws as f64;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }

    #[test]
    fn varies_across_epochs() {
        let caps = ["a", "b"];
        let picks: std::collections::HashSet<_> = (0..50).map(|e| sample_caption(&caps, "r", e, 0)).collect();
        assert_eq!(picks.len(), 2);
    }
}
