//! Deterministic pseudo-random number generation.
//!
//! Simulation results must be bit-reproducible across runs, across the
//! naive/fast event kernels, and independent of how replicas are scheduled
//! onto threads. A self-contained generator keeps the byte stream pinned:
//! xoshiro256++ for the stream, SplitMix64 for seeding and for deriving
//! independent per-replica seeds from a base seed.

/// SplitMix64 step: used to expand seeds and to derive replica streams.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed for replica `index` from `base_seed`.
///
/// Replica streams depend only on (base_seed, index), never on scheduling,
/// so the worker count cannot change any statistical output.
#[inline]
pub fn replica_seed(base_seed: u64, index: u64) -> u64 {
    let mut s = base_seed ^ index.wrapping_mul(0xA24B_AED4_963E_E407);
    splitmix64(&mut s)
}

/// xoshiro256++ generator (Blackman & Vigna), seeded via SplitMix64.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        // All-zero is the one forbidden xoshiro state.
        if s == [0, 0, 0, 0] {
            s[0] = 0x9E37_79B9_7F4A_7C15;
        }
        Self { s }
    }

    /// Generator for replica `index` of a batch experiment.
    pub fn for_replica(base_seed: u64, index: u64) -> Self {
        Self::new(replica_seed(base_seed, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform `f64` in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform `f64` in `(0, 1]`, safe as a logarithm argument.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform `f64` strictly inside `(0, 1)`.
    #[inline]
    pub fn uniform_pos(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential variate with the given rate (mean `1/rate`).
    /// Strictly positive, so holding times and jump sizes never collapse
    /// to zero.
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform_pos().ln() / rate
    }

    /// Standard normal via Box–Muller (used in test-state generators).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(2);
        let equal = (0..1000).filter(|_| a.next_u64() == b.next_u64()).count();
        assert!(equal < 3);
    }

    #[test]
    fn uniform_in_range() {
        let mut r = Rng::new(7);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = r.uniform_open();
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn exponential_moments() {
        let mut r = Rng::new(99);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| r.exponential(2.0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn replica_seeds_distinct() {
        let seeds: Vec<u64> = (0..100).map(|i| replica_seed(1234, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }
}
