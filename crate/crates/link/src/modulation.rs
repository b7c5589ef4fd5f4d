//! Mapping coded bits onto a grid of cell intensities.
//!
//! In FFT mode every bit is the sign of one real or imaginary part of a
//! low-frequency coefficient; the conjugate coefficient is set to keep the
//! spatial block real. In DIRECT mode every bit is one black or white cell.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    #[default]
    Fft,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{bits} bits do not fit in {capacity} slots")]
pub struct CapacityExceeded {
    pub bits: usize,
    pub capacity: usize,
}

/// Frequencies used by FFT mode, one per Hermitian pair, lowest first.
/// DC and everything above a quarter of the grid size are left empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotTable {
    pub rows: usize,
    pub cols: usize,
    pub freqs: Vec<(i32, i32)>,
}

impl SlotTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        let kr = (rows / 4) as i32;
        let kc = (cols / 4) as i32;
        let mut freqs = Vec::new();
        for k in 0..=kr {
            for l in -kc..=kc {
                if k > 0 || l > 0 {
                    freqs.push((k, l));
                }
            }
        }
        freqs.sort_by_key(|&(k, l)| (k.abs().max(l.abs()), k.abs() + l.abs(), k, l));
        Self { rows, cols, freqs }
    }

    /// Bits carried: real and imaginary part of each pair.
    pub fn capacity(&self) -> usize {
        2 * self.freqs.len()
    }

    fn index(&self, k: i32, l: i32) -> usize {
        let r = k.rem_euclid(self.rows as i32) as usize;
        let c = l.rem_euclid(self.cols as i32) as usize;
        r * self.cols + c
    }
}

pub fn capacity(rows: usize, cols: usize, mode: Modulation) -> usize {
    match mode {
        Modulation::Fft => SlotTable::new(rows, cols).capacity(),
        Modulation::Direct => rows * cols,
    }
}

fn fft2(buf: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            buf[r * cols + c] = column[r];
        }
    }
}

/// FFT-mode spatial block before intensity rescaling, and the largest
/// imaginary magnitude left by the inverse transform.
pub fn synthesize(bits: &[bool], rows: usize, cols: usize) -> Result<(Vec<f64>, f64), CapacityExceeded> {
    let table = SlotTable::new(rows, cols);
    if bits.len() > table.capacity() {
        return Err(CapacityExceeded {
            bits: bits.len(),
            capacity: table.capacity(),
        });
    }
    let sign = |b: bool| if b { 1.0 } else { -1.0 };
    let mut spec = vec![Complex64::default(); rows * cols];
    for (pair, &(k, l)) in bits.chunks(2).zip(table.freqs.iter()) {
        let re = sign(pair[0]);
        let im = pair.get(1).map_or(0.0, |b| sign(*b));
        spec[table.index(k, l)] = Complex64::new(re, im);
        spec[table.index(-k, -l)] = Complex64::new(re, -im);
    }
    fft2(&mut spec, rows, cols, true);
    let max_imag = spec.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    Ok((spec.iter().map(|c| c.re).collect(), max_imag))
}

/// Row-major cell intensities in `[0, 255]`.
pub fn modulate(bits: &[bool], rows: usize, cols: usize, mode: Modulation) -> Result<Vec<f64>, CapacityExceeded> {
    match mode {
        Modulation::Fft => {
            let (block, _) = synthesize(bits, rows, cols)?;
            let lo = block.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            Ok(block.iter().map(|v| (v - lo) / span * 255.0).collect())
        }
        Modulation::Direct => {
            let cap = rows * cols;
            if bits.len() > cap {
                return Err(CapacityExceeded {
                    bits: bits.len(),
                    capacity: cap,
                });
            }
            // spare cells alternate so the block stays balanced
            Ok((0..cap)
                .map(|i| {
                    let on = bits.get(i).copied().unwrap_or(i % 2 == 0);
                    if on {
                        255.0
                    } else {
                        0.0
                    }
                })
                .collect())
        }
    }
}

/// Per-bit soft values: positive means 1. Magnitudes are comparable within a
/// mode only.
pub fn demodulate_soft(block: &[f64], rows: usize, cols: usize, n_bits: usize, mode: Modulation) -> Vec<f64> {
    match mode {
        Modulation::Fft => {
            let table = SlotTable::new(rows, cols);
            let mut spec: Vec<Complex64> = block.iter().map(|v| Complex64::new(*v, 0.0)).collect();
            fft2(&mut spec, rows, cols, false);
            table
                .freqs
                .iter()
                .flat_map(|&(k, l)| {
                    let c = spec[table.index(k, l)];
                    [c.re, c.im]
                })
                .take(n_bits)
                .collect()
        }
        Modulation::Direct => block.iter().take(n_bits).map(|v| v - 127.5).collect(),
    }
}

pub fn demodulate(block: &[f64], rows: usize, cols: usize, n_bits: usize, mode: Modulation) -> Vec<bool> {
    demodulate_soft(block, rows, cols, n_bits, mode)
        .into_iter()
        .map(|s| s > 0.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(n: usize, seed: u64) -> Vec<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random()).collect()
    }

    #[test]
    fn slot_table_shape() {
        let t = SlotTable::new(32, 32);
        assert_eq!(t.freqs.len(), 144);
        assert_eq!(t.capacity(), 288);
        assert!(!t.freqs.contains(&(0, 0)));
        assert!(t.freqs.iter().all(|&(k, l)| k.abs() <= 8 && l.abs() <= 8));
        assert_eq!(t.freqs[0..2], [(0, 1), (1, 0)]);
        // no frequency appears together with its conjugate
        for &(k, l) in &t.freqs {
            assert!(!t.freqs.contains(&(-k, -l)));
        }
        assert_eq!(SlotTable::new(16, 16).capacity(), 80);
    }

    #[test]
    fn round_trip_both_modes() {
        let bits = random_bits(64, 1);
        for mode in [Modulation::Direct, Modulation::Fft] {
            let block = modulate(&bits, 16, 16, mode).unwrap();
            assert!(block.iter().all(|v| (0.0..=255.0).contains(v)));
            assert_eq!(demodulate(&block, 16, 16, 64, mode), bits, "{mode:?}");
        }
        let bits = random_bits(288, 2);
        let block = modulate(&bits, 32, 32, Modulation::Fft).unwrap();
        assert_eq!(demodulate(&block, 32, 32, 288, Modulation::Fft), bits);
    }

    #[test]
    fn spatial_block_is_real() {
        let (_, imag) = synthesize(&random_bits(288, 3), 32, 32).unwrap();
        assert!(imag < 1e-9, "{imag}");
    }

    #[test]
    fn capacity_is_enforced() {
        let bits = random_bits(81, 4);
        assert_eq!(
            modulate(&bits, 16, 16, Modulation::Fft).unwrap_err(),
            CapacityExceeded { bits: 81, capacity: 80 }
        );
        assert!(modulate(&random_bits(257, 4), 16, 16, Modulation::Direct).is_err());
    }

    #[test]
    fn brightness_offset_and_gain_do_not_matter() {
        let bits = random_bits(200, 5);
        let block = modulate(&bits, 32, 32, Modulation::Fft).unwrap();
        let dimmed: Vec<f64> = block.iter().map(|v| 40.0 + 0.5 * v).collect();
        assert_eq!(demodulate(&dimmed, 32, 32, 200, Modulation::Fft), bits);
    }
}
