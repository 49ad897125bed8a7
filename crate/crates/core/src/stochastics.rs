//! Deterministic random streams and the distributions used by the domain samplers.
//!
//! Every sample computation owns one [`RandomStream`]. A stream is fully
//! determined by a root seed and a sample index: the root seed is expanded
//! through splitmix64 into a xoshiro256** state, which is then advanced by
//! `sample_index` jumps of 2^128 steps. Consecutive sample indices therefore
//! address disjoint 2^128-long subsequences of one generator.
//!
//! Jumping `n` times is done in `O(log n)` by raising the jump polynomial to
//! the `n`-th power in GF(2)[x] modulo the characteristic polynomial of the
//! xoshiro256 linear engine. The characteristic polynomial itself is recovered
//! once with Berlekamp-Massey and checked against the published jump constant.

use std::f64::consts::PI;
use std::sync::OnceLock;

use thiserror::Error;

/// Default cap on truncated-normal rejection attempts.
pub const DEFAULT_REJECTION_CAP: u64 = 1_000_000;

/// Coefficients of x^(2^128) mod P, as published with xoshiro256**.
pub const JUMP: [u64; 4] = [
    0x180e_c6d3_3cfd_0aba,
    0xd5a6_1266_f0c9_392c,
    0xa958_2618_e03f_c9aa,
    0x39ab_dc45_29b1_661c,
];

/// Coefficients of x^(2^192) mod P.
pub const LONG_JUMP: [u64; 4] = [
    0x76e1_5d3e_fefd_cbbf,
    0xc500_4e44_1c52_2fb3,
    0x7771_0069_854e_e241,
    0x3910_9bb0_2acb_e635,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("truncated normal rejection exceeded {cap} attempts on [{lower}, {upper}]")]
    RejectionCapExceeded { cap: u64, lower: f64, upper: f64 },
}

/// The splitmix64 generator, used only to expand a 64-bit seed.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// xoshiro256** with jump support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Xoshiro256StarStar {
    state: [u64; 4],
}

impl Xoshiro256StarStar {
    /// Panics if `state` is all zero.
    pub fn from_state(state: [u64; 4]) -> Self {
        assert!(state != [0; 4], "xoshiro256** state must be nonzero");
        Self { state }
    }

    pub fn state(&self) -> [u64; 4] {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.state[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        self.step();
        result
    }

    /// Advances the linear engine by one step without producing output.
    #[inline]
    fn step(&mut self) {
        let s = &mut self.state;
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
    }

    /// Replaces the state by `q(T) state`, where `T` is the one-step transition
    /// and `q` has the given 256 coefficient bits.
    fn apply_polynomial(&mut self, poly: &[u64; 4]) {
        let mut acc = [0u64; 4];
        for &word in poly {
            for bit in 0..64 {
                if word & (1u64 << bit) != 0 {
                    for (a, s) in acc.iter_mut().zip(self.state.iter()) {
                        *a ^= *s;
                    }
                }
                self.step();
            }
        }
        self.state = acc;
    }

    /// Advances the generator by 2^128 steps.
    pub fn jump(&mut self) {
        self.apply_polynomial(&JUMP);
    }

    /// Advances the generator by 2^192 steps.
    pub fn long_jump(&mut self) {
        self.apply_polynomial(&LONG_JUMP);
    }

    /// Equivalent to calling [`jump`](Self::jump) `count` times.
    pub fn jump_n(&mut self, count: u64) {
        if count == 0 {
            return;
        }
        let table = jump_table();
        let mut poly = [1u64, 0, 0, 0];
        for (k, power) in table.powers.iter().enumerate() {
            if count & (1u64 << k) != 0 {
                poly = table.char_poly.mulmod(&poly, power);
            }
        }
        self.apply_polynomial(&poly);
    }
}

/// Characteristic polynomial of the linear engine, stored as its 256 low
/// coefficients (the leading x^256 term is implicit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CharPoly {
    low: [u64; 4],
}

impl CharPoly {
    /// Product of two reduced polynomials, reduced mod P.
    fn mulmod(&self, a: &[u64; 4], b: &[u64; 4]) -> [u64; 4] {
        let mut result = [0u64; 4];
        // Horner over the bits of `a`, most significant first.
        for i in (0..256).rev() {
            let carry = result[3] >> 63;
            shl1(&mut result);
            if carry == 1 {
                xor_into(&mut result, &self.low);
            }
            if a[i / 64] & (1u64 << (i % 64)) != 0 {
                xor_into(&mut result, b);
            }
        }
        result
    }

    /// x^(2^k) mod P by repeated squaring of x.
    fn x_pow_two_pow(&self, k: u32) -> [u64; 4] {
        let mut p = [2u64, 0, 0, 0];
        for _ in 0..k {
            p = self.mulmod(&p, &p);
        }
        p
    }
}

fn shl1(p: &mut [u64; 4]) {
    p[3] = (p[3] << 1) | (p[2] >> 63);
    p[2] = (p[2] << 1) | (p[1] >> 63);
    p[1] = (p[1] << 1) | (p[0] >> 63);
    p[0] <<= 1;
}

fn xor_into(dst: &mut [u64; 4], src: &[u64; 4]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= *s;
    }
}

struct JumpTable {
    char_poly: CharPoly,
    /// `powers[k]` = x^(2^128 * 2^k) mod P.
    powers: Vec<[u64; 4]>,
}

fn jump_table() -> &'static JumpTable {
    static TABLE: OnceLock<JumpTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let char_poly = engine_char_poly();
        debug_assert_eq!(char_poly.x_pow_two_pow(128), JUMP);
        let mut powers = Vec::with_capacity(64);
        let mut p = JUMP;
        for _ in 0..64 {
            powers.push(p);
            p = char_poly.mulmod(&p, &p);
        }
        JumpTable { char_poly, powers }
    })
}

/// Recovers the degree-256 characteristic polynomial of the xoshiro256 linear
/// engine from one output bit of the state via Berlekamp-Massey.
fn engine_char_poly() -> CharPoly {
    let mut gen = Xoshiro256StarStar::from_state([1, 2, 3, 4]);
    let bits: Vec<u8> = (0..512)
        .map(|_| {
            let b = (gen.state[0] & 1) as u8;
            gen.step();
            b
        })
        .collect();
    let connection = berlekamp_massey(&bits);
    assert_eq!(connection.len(), 257, "linear engine must have degree 256");
    // The characteristic polynomial is the reciprocal of the connection polynomial.
    let mut low = [0u64; 4];
    for (i, &c) in connection.iter().enumerate().skip(1) {
        if c == 1 {
            let exponent = 256 - i;
            low[exponent / 64] |= 1u64 << (exponent % 64);
        }
    }
    CharPoly { low }
}

/// Berlekamp-Massey over GF(2). Returns the connection polynomial
/// `1 + c_1 x + ... + c_L x^L` as a coefficient vector of length `L + 1`.
fn berlekamp_massey(seq: &[u8]) -> Vec<u8> {
    let n = seq.len();
    let mut c = vec![0u8; n + 1];
    let mut b = vec![0u8; n + 1];
    c[0] = 1;
    b[0] = 1;
    let mut l = 0usize;
    let mut m: isize = -1;
    for i in 0..n {
        let mut d = seq[i];
        for j in 1..=l {
            d ^= c[j] & seq[i - j];
        }
        if d == 1 {
            let t = c.clone();
            let shift = (i as isize - m) as usize;
            for j in 0..=(n - shift) {
                c[j + shift] ^= b[j];
            }
            if 2 * l <= i {
                l = i + 1 - l;
                m = i as isize;
                b = t;
            }
        }
    }
    c.truncate(l + 1);
    c
}

/// Expands a 64-bit seed into a nonzero xoshiro256 state.
pub fn expand_seed(root_seed: u64) -> [u64; 4] {
    let mut sm = SplitMix64::new(root_seed);
    let mut state = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
    while state == [0; 4] {
        state[0] = sm.next_u64();
    }
    state
}

/// A per-sample random stream positioned by `(root_seed, sample_index)`.
#[derive(Debug, Clone)]
pub struct RandomStream {
    gen: Xoshiro256StarStar,
    root_seed: u64,
    sample_index: u64,
}

/// Positions a stream at `sample_index` jumps past the expanded root seed.
pub fn seed_stream(root_seed: u64, sample_index: u64) -> RandomStream {
    let mut gen = Xoshiro256StarStar::from_state(expand_seed(root_seed));
    gen.jump_n(sample_index);
    RandomStream {
        gen,
        root_seed,
        sample_index,
    }
}

impl RandomStream {
    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn state(&self) -> [u64; 4] {
        self.gen.state()
    }

    /// Stream for redraw attempt `attempt` of the same sample: the initial
    /// state moved by `attempt` long jumps (2^192 steps each), which lands
    /// outside the region addressed by any 64-bit sample index.
    pub fn redraw(root_seed: u64, sample_index: u64, attempt: u32) -> RandomStream {
        let mut stream = seed_stream(root_seed, sample_index);
        for _ in 0..attempt {
            stream.gen.long_jump();
        }
        stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.gen.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lower: f64, upper: f64) -> f64 {
        if lower == upper {
            return lower;
        }
        lower + (upper - lower) * self.next_f64()
    }

    /// Standard normal via Box-Muller (one variate per pair of uniforms).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    pub fn truncated_normal(
        &mut self,
        mean: f64,
        std_dev: f64,
        lower: f64,
        upper: f64,
        cap: u64,
    ) -> Result<f64, SamplingError> {
        for _ in 0..cap {
            let x = mean + std_dev * self.standard_normal();
            if (lower..=upper).contains(&x) {
                return Ok(x);
            }
        }
        Err(SamplingError::RejectionCapExceeded { cap, lower, upper })
    }

    /// Knuth's product method.
    pub fn poisson(&mut self, rate: f64) -> u64 {
        let limit = (-rate).exp();
        let mut k = 0;
        let mut p = self.next_f64();
        while p > limit {
            k += 1;
            p *= self.next_f64();
        }
        k
    }

    pub fn unit_circle(&mut self) -> [f64; 2] {
        let theta = self.uniform(0.0, 2.0 * PI);
        [theta.cos(), theta.sin()]
    }

    pub fn draw(&mut self, spec: &DistributionSpec) -> Result<Variate, SamplingError> {
        Ok(match *spec {
            DistributionSpec::Uniform { lower, upper } => Variate::Real(self.uniform(lower, upper)),
            DistributionSpec::TruncatedNormal {
                mean,
                std_dev,
                lower,
                upper,
                rejection_cap,
            } => Variate::Real(self.truncated_normal(mean, std_dev, lower, upper, rejection_cap)?),
            DistributionSpec::Poisson { rate } => Variate::Count(self.poisson(rate)),
            DistributionSpec::UnitSphere { .. } => Variate::Vector(self.unit_circle()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variate {
    Real(f64),
    Count(u64),
    Vector([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    Uniform {
        lower: f64,
        upper: f64,
    },
    TruncatedNormal {
        mean: f64,
        std_dev: f64,
        lower: f64,
        upper: f64,
        rejection_cap: u64,
    },
    Poisson {
        rate: f64,
    },
    UnitSphere {
        dim: usize,
    },
}

impl DistributionSpec {
    /// `lower == upper` is accepted and yields the point mass.
    pub fn uniform(lower: f64, upper: f64) -> Result<Self, SamplingError> {
        if !(lower <= upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(SamplingError::InvalidDistribution(format!(
                "uniform requires lower <= upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self::Uniform { lower, upper })
    }

    pub fn truncated_normal(mean: f64, std_dev: f64, lower: f64, upper: f64) -> Result<Self, SamplingError> {
        if !(lower < upper) {
            return Err(SamplingError::InvalidDistribution(format!(
                "truncated normal requires lower < upper, got [{lower}, {upper}]"
            )));
        }
        if !(std_dev > 0.0) || !mean.is_finite() {
            return Err(SamplingError::InvalidDistribution(format!(
                "truncated normal requires std_dev > 0 and finite mean, got ({mean}, {std_dev})"
            )));
        }
        Ok(Self::TruncatedNormal {
            mean,
            std_dev,
            lower,
            upper,
            rejection_cap: DEFAULT_REJECTION_CAP,
        })
    }

    pub fn with_rejection_cap(self, cap: u64) -> Self {
        match self {
            Self::TruncatedNormal {
                mean,
                std_dev,
                lower,
                upper,
                ..
            } => Self::TruncatedNormal {
                mean,
                std_dev,
                lower,
                upper,
                rejection_cap: cap,
            },
            other => other,
        }
    }

    pub fn poisson(rate: f64) -> Result<Self, SamplingError> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(SamplingError::InvalidDistribution(format!(
                "poisson requires a finite rate >= 0, got {rate}"
            )));
        }
        Ok(Self::Poisson { rate })
    }

    pub fn unit_sphere(dim: usize) -> Result<Self, SamplingError> {
        if dim != 2 {
            return Err(SamplingError::InvalidDistribution(format!(
                "only the unit circle (dim 2) is supported, got {dim}"
            )));
        }
        Ok(Self::UnitSphere { dim })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_zero_seed_matches_reference() {
        // Reference splitmix64 (Vigna) seeded with 0.
        let mut sm = SplitMix64::new(0);
        assert_eq!(sm.next_u64(), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn recovered_char_poly_reproduces_published_jumps() {
        let p = engine_char_poly();
        assert_eq!(p.x_pow_two_pow(128), JUMP);
        assert_eq!(p.x_pow_two_pow(192), LONG_JUMP);
    }

    #[test]
    fn fast_jump_matches_repeated_jumps() {
        let start = Xoshiro256StarStar::from_state(expand_seed(7));
        let mut naive = start;
        for n in 0..40u64 {
            let mut fast = start;
            fast.jump_n(n);
            assert_eq!(fast, naive, "jump count {n}");
            naive.jump();
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = seed_stream(42, 0);
        let mut b = seed_stream(42, 0);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_indices_give_distinct_streams() {
        let mut a = seed_stream(42, 0);
        let mut b = seed_stream(42, 1);
        assert_ne!(a.state(), b.state());
        let xs: Vec<u64> = (0..1000).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..1000).map(|_| b.next_u64()).collect();
        assert!(xs.iter().zip(&ys).all(|(x, y)| x != y));
    }

    #[test]
    fn one_jump_moves_to_next_index() {
        for idx in [0u64, 1, 17, 1 << 20] {
            let mut gen = Xoshiro256StarStar::from_state(seed_stream(9, idx).state());
            gen.jump();
            assert_eq!(gen.state(), seed_stream(9, idx + 1).state());
        }
    }

    #[test]
    fn redraw_attempt_zero_is_the_sample_stream() {
        assert_eq!(RandomStream::redraw(3, 11, 0).state(), seed_stream(3, 11).state());
        assert_ne!(RandomStream::redraw(3, 11, 1).state(), seed_stream(3, 11).state());
    }

    #[test]
    fn degenerate_uniform() {
        let mut s = seed_stream(1, 0);
        let spec = DistributionSpec::uniform(0.5, 0.5).unwrap();
        assert_eq!(s.draw(&spec).unwrap(), Variate::Real(0.5));
    }

    #[test]
    fn poisson_zero_rate() {
        let mut s = seed_stream(1, 0);
        for _ in 0..1000 {
            assert_eq!(s.poisson(0.0), 0);
        }
    }

    #[test]
    fn unit_circle_has_unit_norm() {
        let mut s = seed_stream(5, 3);
        for _ in 0..1000 {
            let [x, y] = s.unit_circle();
            assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DistributionSpec::uniform(1.0, 0.0).is_err());
        assert!(DistributionSpec::truncated_normal(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(DistributionSpec::truncated_normal(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(DistributionSpec::poisson(-1.0).is_err());
        assert!(DistributionSpec::unit_sphere(3).is_err());
    }

    #[test]
    fn rejection_cap_reports_degenerate_interval() {
        let mut s = seed_stream(1, 0);
        let spec = DistributionSpec::truncated_normal(0.0, 1.0, 40.0, 41.0)
            .unwrap()
            .with_rejection_cap(1000);
        assert!(matches!(
            s.draw(&spec),
            Err(SamplingError::RejectionCapExceeded { cap: 1000, .. })
        ));
    }
}
