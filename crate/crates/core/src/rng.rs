//! SplitMix64, the fixed generator behind every seeded draw that must be
//! reproducible across platforms and ports (bootstrap samples, feature
//! subsets, dataset splits).
//!
//! Bounded draws use rejection: with `t = 2^64 mod n`, outputs below `t`
//! are discarded and the rest are reduced `mod n`.

/// Name recorded in model files.
pub const RNG_NAME: &str = "splitmix64";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream number `stream` under `seed`:
    /// state = mix64(seed XOR mix64((stream + 1) * GOLDEN)).
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        Self::new(mix64(seed ^ mix64(stream.wrapping_add(1).wrapping_mul(GOLDEN))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform draw from `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle, drawing `below(i + 1)` for `i` from
    /// the last index down to 1.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct values from `0..n` by a partial Fisher-Yates pass
    /// (`swap(j, j + below(n - j))` for `j` in `0..k`), returned sorted.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for j in 0..k {
            let r = j + self.below_usize(n - j);
            pool.swap(j, r);
        }
        pool.truncate(k);
        pool.sort_unstable();
        pool
    }
}
