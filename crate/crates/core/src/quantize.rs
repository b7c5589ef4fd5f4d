//! Uniform n-bit quantization of bounded velocities.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec<T> {
    pub lo: T,
    pub hi: T,
    pub n_bits: u32,
}

impl<T: Real> QuantizerSpec<T> {
    pub fn new(lo: T, hi: T, n_bits: u32) -> Self {
        Self { lo, hi, n_bits }
    }

    pub fn is_valid(&self) -> bool {
        self.hi > self.lo && (1..=31).contains(&self.n_bits)
    }

    /// Number of codes, `2^n`.
    pub fn levels(&self) -> u32 {
        1u32 << self.n_bits
    }

    pub fn step(&self) -> T {
        (self.hi - self.lo) / T::lit(self.levels() as f64)
    }

    /// Round-to-nearest error bound for values inside the range.
    pub fn max_error(&self) -> T {
        self.step() * T::lit(0.5)
    }

    pub fn quantize(&self, value: T) -> u32 {
        let v = value.clamp(self.lo, self.hi);
        let raw = ((v - self.lo) / self.step()).round();
        let top = T::lit((self.levels() - 1) as f64);
        raw.clamp(T::zero(), top).to_f64_lossy() as u32
    }

    pub fn dequantize(&self, code: u32) -> T {
        let code = code.min(self.levels() - 1);
        self.lo + T::lit(code as f64) * self.step()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn velocity_range_examples() {
        let q = QuantizerSpec::new(0.0, 0.6, 8);
        assert_eq!(q.quantize(0.0), 0);
        assert_eq!(q.dequantize(0), 0.0);
        assert_eq!(q.quantize(0.6), 255);
        assert_abs_diff_eq!(q.dequantize(255), 0.6 - 0.6 / 256.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.dequantize(255), 0.5977, epsilon = 1e-4);
        assert_eq!(q.quantize(0.3), 128);
        assert_abs_diff_eq!(q.dequantize(128), 0.3, epsilon = 0.6 / 512.0);
        assert_abs_diff_eq!(q.max_error(), 0.6 / 512.0, epsilon = 1e-15);
    }

    #[test]
    fn clamps_outside_range() {
        let q = QuantizerSpec::new(-0.2, 0.2, 8);
        assert_eq!(q.quantize(-5.0), 0);
        assert_eq!(q.quantize(5.0), 255);
        assert_eq!(q.dequantize(999), q.dequantize(255));
    }

    proptest! {
        #[test]
        fn interior_error_bounded(v in 0.0f64..0.597) {
            let q = QuantizerSpec::new(0.0, 0.6, 8);
            let back = q.dequantize(q.quantize(v));
            prop_assert!((v - back).abs() <= q.max_error() + 1e-12);
        }
    }
}
