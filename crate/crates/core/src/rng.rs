//! Deterministic sampling.
//!
//! SplitMix64 with the reference increment/mix constants. The generator
//! is part of the report format: any implementation that seeds SplitMix64
//! identically reproduces the sampled verdicts byte for byte. Doubles are
//! drawn by taking the top 53 bits of each output.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform double in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// A point with every coordinate uniform in [lo, hi).
    pub fn point(&mut self, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..dim).map(|_| self.range(lo, hi)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sequence_is_stable() {
        // First outputs for seed 1234567, from the published SplitMix64
        // reference implementation.
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
    }

    #[test]
    fn doubles_land_in_range() {
        let mut rng = SplitMix64::new(0);
        for _ in 0..1000 {
            let v = rng.range(-2.0, 2.0);
            assert!((-2.0..2.0).contains(&v));
        }
    }

    #[test]
    fn identical_seeds_reproduce() {
        let a: Vec<f64> = SplitMix64::new(7).point(8, -1.0, 1.0);
        let b: Vec<f64> = SplitMix64::new(7).point(8, -1.0, 1.0);
        assert_eq!(a, b);
    }
}
