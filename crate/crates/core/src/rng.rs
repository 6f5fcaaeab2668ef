//! Counter-based SplitMix64 stream used by every instance generator.
//!
//! The mapping is fixed so that other implementations can regenerate the same
//! instances from a seed:
//!
//! * draw `i` (0-based) is `mix(seed + (i + 1) * 0x9E3779B97F4A7C15)` with
//!   wrapping arithmetic, where `mix` is the SplitMix64 finalizer;
//! * `uniform()` maps a draw `u` to `(u >> 11) as f64 * 2^-53`, in `[0, 1)`;
//! * `normal()` uses Box-Muller on two consecutive uniforms `u1, u2`:
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` (the sine branch is discarded).

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    seed: u64,
    counter: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Derives an independent stream for a sub-task (e.g. the mask of an instance).
    pub fn substream(seed: u64, tag: u64) -> Self {
        Self::new(mix(seed ^ mix(tag.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in `0..bound` by multiply-shift on the top 32 bits.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        ((self.next_u64() >> 32).wrapping_mul(bound as u64) >> 32) as usize
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    /// Fisher-Yates shuffle driven by `below`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
