//! Counter-based random number generation with named streams.
//!
//! Every stochastic site (a dropout mask, a weight initializer) derives its own
//! stream from the single root seed and a site name, so adding or removing one
//! site never shifts the draws of another and runs are bit-reproducible.

/// SplitMix64 finalizer; full-period mixing of a 64-bit counter.
fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_name(name: &str) -> u64 {
    // FNV-1a over the UTF-8 bytes of the site name.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Root generator holding the run seed; hands out independent named streams.
#[derive(Debug, Clone, Copy)]
pub struct RootRng {
    seed: u64,
}

impl RootRng {
    pub fn new(seed: u64) -> Self {
        RootRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive the stream for a named stochastic site.
    pub fn stream(&self, name: &str) -> RngStream {
        RngStream {
            key: mix(self.seed ^ hash_name(name)),
            counter: 0,
        }
    }
}

/// One independent stream: a keyed counter fed through the mixer.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self
            .key
            .wrapping_add(self.counter.wrapping_mul(0xD1B5_4A32_D192_ED03)))
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Fill a buffer with centered uniform values in (-scale, scale).
    pub fn fill_uniform_centered(&mut self, out: &mut [f64], scale: f64) {
        for v in out.iter_mut() {
            *v = self.uniform(-scale, scale);
        }
    }
}
