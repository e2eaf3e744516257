//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, time index, component)`, so a payload
//! at any time can be produced without walking a sequential stream. This is what
//! lets orbit windows be filled in parallel and re-sampled bit-identically.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN_GAMMA);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a `(seed, time, component)` key.
#[inline]
pub fn counter_hash(seed: u64, time: i64, component: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ (time as u64));
    splitmix64(h ^ component.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Maps 64 random bits to a uniform double in `[0, 1)`.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn counter_uniform(seed: u64, time: i64, component: u64) -> f64 {
    unit_f64(counter_hash(seed, time, component))
}

/// Small sequential stream for probe points and test fixtures.
#[derive(Debug, Clone)]
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self { state: splitmix64(seed ^ 0x5EED) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        splitmix64(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
