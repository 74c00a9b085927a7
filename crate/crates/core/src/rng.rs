//! Counter-based random streams.
//!
//! Each stream is a ChaCha8 keystream keyed by the 64-bit seed and selected
//! by a 64-bit stream id, so the value at a given draw position depends only
//! on `(seed, stream_id, position)` and never on which thread asked for it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// A stream in the namespace `label`, so that e.g. sampler and training
    /// streams with the same index never collide.
    pub fn named(seed: u64, label: &str, index: u64) -> Self {
        let mut state = seed ^ fnv1a(label);
        Self::new(splitmix64(&mut state), index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Moves to an absolute word position in the stream.
    pub fn seek(&mut self, position: u128) {
        self.rng.set_word_pos(position);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_int(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.uniform_int(0, i);
            v.swap(i, j);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn equal_keys_give_equal_sequences() {
        let a = RngStream::new(42, 7).normal_vec(1000);
        let b = RngStream::new(42, 7).normal_vec(1000);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let a = RngStream::new(42, 0).normal_vec(10_000);
        for id in 1..5 {
            let b = RngStream::new(42, id).normal_vec(10_000);
            assert!(correlation(&a, &b).abs() < 0.05);
        }
        let c = RngStream::new(43, 0).normal_vec(10_000);
        assert!(correlation(&a, &c).abs() < 0.05);
    }

    #[test]
    fn parallel_matches_serial() {
        let serial: Vec<Vec<f64>> = (0..16).map(|h| RngStream::new(9, h).normal_vec(64)).collect();
        let parallel: Vec<Vec<f64>> = (0..16usize)
            .into_par_iter()
            .rev()
            .map(|h| RngStream::new(9, h as u64).normal_vec(64))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn seek_replays_draws() {
        let mut s = RngStream::new(1, 2);
        let _ = s.next_u64();
        let pos = s.position();
        let x = s.next_u64();
        s.seek(pos);
        assert_eq!(s.next_u64(), x);
    }

    #[test]
    fn named_streams_differ_by_label() {
        let a = RngStream::named(5, "sampler", 0).next_u64();
        let b = RngStream::named(5, "train", 0).next_u64();
        assert_ne!(a, b);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = RngStream::new(3, 0).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
