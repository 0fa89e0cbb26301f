//! Counter-based deterministic random stream.
//!
//! Every draw is a pure function of `(seed, counter)`, so cloning a stream
//! and replaying it reproduces the exact same values. This is what makes
//! whole training runs bit-reproducible and lets the finite-difference
//! oracle re-run a forward pass with identical noise.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Derives an independent stream. Used to give each pipeline stage its
    /// own stream so stages stay reproducible regardless of how much
    /// randomness earlier stages consumed.
    pub fn substream(&self, tag: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let x = splitmix64(self.seed.wrapping_add(GOLDEN.wrapping_mul(self.counter.wrapping_add(1))));
        self.counter += 1;
        x
    }

    /// Uniform in the open interval (0, 1).
    pub fn uniform(&mut self) -> f32 {
        // 23 mantissa bits with a half-step offset: representable exactly
        // in f32 and strictly inside (0, 1), so log(u) and log(-log(u))
        // stay finite. A wider mantissa rounds the top value to 1.0f32.
        ((self.next_u64() >> 41) as f32 + 0.5) / (1u64 << 23) as f32
    }

    pub fn uniform_range(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller; consumes two uniforms per draw.
    pub fn normal(&mut self) -> f32 {
        let u1 = self.uniform() as f64;
        let u2 = self.uniform() as f64;
        ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
    }

    /// Gumbel(0,1) sample: -log(-log(u)).
    pub fn gumbel(&mut self) -> f32 {
        let u = self.uniform() as f64;
        (-(-u.ln()).ln()) as f32
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
