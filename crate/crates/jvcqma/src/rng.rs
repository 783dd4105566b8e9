//! Deterministic, splittable pseudo-random generation.
//!
//! Replication r of a run draws from a stream whose seed is a hash of
//! (master_seed, r), so parallel execution order cannot change any number.

/// splitmix64 step; used for seeding and stream derivation.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a master seed and a stream index.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut s = master;
    let a = splitmix64(&mut s);
    let mut t = a ^ stream.wrapping_mul(0xD134_2543_DE82_EF95);
    splitmix64(&mut t)
}

/// xoshiro256++ generator.
#[derive(Debug, Clone)]
pub struct SplitRng {
    s: [u64; 4],
}

impl SplitRng {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        // all-zero state is invalid for xoshiro
        if s == [0, 0, 0, 0] {
            s[0] = 0x9E37_79B9_7F4A_7C15;
        }
        SplitRng { s }
    }

    /// Stream `index` of a master seed; independent of other streams.
    pub fn stream(master: u64, index: u64) -> Self {
        Self::from_seed(derive_seed(master, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = (self.s[0].wrapping_add(self.s[3]))
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

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe as a log argument.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller (cosine branch).
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Student t with three degrees of freedom.
    pub fn student_t3(&mut self) -> f64 {
        let z = self.standard_normal();
        let c = (0..3).map(|_| self.standard_normal().powi(2)).sum::<f64>();
        z / (c / 3.0).sqrt()
    }

    /// Mixture 0.95 N(0,1) + 0.05 N(0,25).
    pub fn normal_mixture(&mut self) -> f64 {
        let pick = self.uniform();
        let z = self.standard_normal();
        if pick < 0.95 {
            z
        } else {
            5.0 * z
        }
    }

    /// Chi-square with one degree of freedom.
    pub fn chi_square_1(&mut self) -> f64 {
        self.standard_normal().powi(2)
    }

    /// Gamma(1, 1), i.e. a unit exponential.
    pub fn gamma_1_1(&mut self) -> f64 {
        -self.uniform_open().ln()
    }

    /// Lognormal with mean 0.5 and sd 0.5 on the log scale.
    pub fn lognormal_half(&mut self) -> f64 {
        (0.5 + 0.5 * self.standard_normal()).exp()
    }

    /// Binomial(k, 1/2) as a sum of fair Bernoulli draws.
    pub fn binomial_half(&mut self, k: u32) -> f64 {
        (0..k).filter(|_| self.uniform() < 0.5).count() as f64
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = SplitRng::from_seed(123);
        let mut b = SplitRng::from_seed(123);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_streams_differ() {
        let mut a = SplitRng::stream(9, 0);
        let mut b = SplitRng::stream(9, 1);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn normal_moments_reasonable() {
        let mut rng = SplitRng::from_seed(5);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.standard_normal();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn mixture_variance_matches_moment_identity() {
        // Var = 0.95 * 1 + 0.05 * 25 = 2.2
        let mut rng = SplitRng::from_seed(31);
        let n = 1_000_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.normal_mixture();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((var - 2.2).abs() / 2.2 < 0.02, "var {var}");
    }

    #[test]
    fn positive_error_distributions_are_positive() {
        let mut rng = SplitRng::from_seed(77);
        for _ in 0..10_000 {
            assert!(rng.chi_square_1() >= 0.0);
            assert!(rng.gamma_1_1() > 0.0);
            assert!(rng.lognormal_half() > 0.0);
        }
    }

    #[test]
    fn binomial_range() {
        let mut rng = SplitRng::from_seed(3);
        for _ in 0..1000 {
            let v = rng.binomial_half(3);
            assert!((0.0..=3.0).contains(&v));
        }
    }
}
