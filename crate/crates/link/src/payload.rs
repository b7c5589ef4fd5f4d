//! Velocity payload and the repetition code that protects it.

use oisac_core::geometry::{Bounds, Twist};
use oisac_core::quantize::QuantizerSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bits of a data byte are repeated 5 times (high nibble) or 3 times (low nibble).
pub const BYTE_REPEATS: [usize; 8] = [5, 5, 5, 5, 3, 3, 3, 3];
/// Coded length of one data byte.
pub const CODED_BYTE_BITS: usize = 32;
/// Repetition applied to the sequence number and timestamp bits.
pub const HEADER_REPEATS: usize = 3;
/// Coded length of a full payload: two data bytes, then seq and timestamp.
pub const PAYLOAD_BITS: usize = 2 * CODED_BYTE_BITS + HEADER_REPEATS * (16 + 32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct VelocityPayload {
    pub code_v: u8,
    pub code_omega: u8,
    pub seq: u16,
    pub timestamp_ms: u32,
}

/// Where the copies of each bit go inside a coded byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interleaving {
    /// All copies of a bit are adjacent.
    #[default]
    Grouped,
    /// Copies are spread round-robin across the bits of each nibble.
    Spread,
}

impl Interleaving {
    /// Position in the coded block of copy `copy` of bit `bit`.
    fn position(self, bit: usize, copy: usize) -> usize {
        let (base, reps, first) = if bit < 4 { (0, 5, 0) } else { (20, 3, 4) };
        match self {
            Interleaving::Grouped => base + (bit - first) * reps + copy,
            Interleaving::Spread => base + copy * 4 + (bit - first),
        }
    }
}

/// Repetition-codes one byte, most significant bit first.
pub fn expand_bits(byte: u8, il: Interleaving) -> [bool; CODED_BYTE_BITS] {
    let mut out = [false; CODED_BYTE_BITS];
    for (bit, &reps) in BYTE_REPEATS.iter().enumerate() {
        let value = byte & (0x80 >> bit) != 0;
        for copy in 0..reps {
            out[il.position(bit, copy)] = value;
        }
    }
    out
}

/// Majority-vote decode. Margins are `votes_for - votes_against` for the
/// winning value of each bit, so they are always positive.
pub fn collapse_bits(coded: &[bool; CODED_BYTE_BITS], il: Interleaving) -> (u8, [u8; 8]) {
    let mut byte = 0u8;
    let mut margins = [0u8; 8];
    for (bit, &reps) in BYTE_REPEATS.iter().enumerate() {
        let ones = (0..reps).filter(|&c| coded[il.position(bit, c)]).count();
        let zeros = reps - ones;
        if ones > zeros {
            byte |= 0x80 >> bit;
        }
        margins[bit] = ones.abs_diff(zeros) as u8;
    }
    (byte, margins)
}

fn push_repeated(out: &mut Vec<bool>, value: u64, width: u32) {
    for i in (0..width).rev() {
        let b = (value >> i) & 1 == 1;
        out.extend(std::iter::repeat_n(b, HEADER_REPEATS));
    }
}

fn read_repeated(bits: &[bool], width: u32) -> u64 {
    bits.chunks(HEADER_REPEATS).take(width as usize).fold(0u64, |acc, c| {
        let ones = c.iter().filter(|b| **b).count();
        (acc << 1) | u64::from(2 * ones > HEADER_REPEATS)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("expected {expected} coded bits, got {got}")]
pub struct LengthMismatch {
    pub expected: usize,
    pub got: usize,
}

impl VelocityPayload {
    pub fn to_bits(&self, il: Interleaving) -> Vec<bool> {
        let mut out = Vec::with_capacity(PAYLOAD_BITS);
        out.extend(expand_bits(self.code_v, il));
        out.extend(expand_bits(self.code_omega, il));
        push_repeated(&mut out, u64::from(self.seq), 16);
        push_repeated(&mut out, u64::from(self.timestamp_ms), 32);
        out
    }

    /// Decodes a coded block. The second value is the smallest vote margin
    /// over the two data bytes.
    pub fn from_bits(bits: &[bool], il: Interleaving) -> Result<(Self, u8), LengthMismatch> {
        if bits.len() != PAYLOAD_BITS {
            return Err(LengthMismatch {
                expected: PAYLOAD_BITS,
                got: bits.len(),
            });
        }
        let block = |i: usize| -> [bool; CODED_BYTE_BITS] {
            bits[i * CODED_BYTE_BITS..(i + 1) * CODED_BYTE_BITS].try_into().unwrap()
        };
        let (code_v, mv) = collapse_bits(&block(0), il);
        let (code_omega, mw) = collapse_bits(&block(1), il);
        let header = &bits[2 * CODED_BYTE_BITS..];
        let seq = read_repeated(header, 16) as u16;
        let timestamp_ms = read_repeated(&header[16 * HEADER_REPEATS..], 32) as u32;
        let margin = mv.iter().chain(mw.iter()).copied().min().unwrap_or(0);
        Ok((
            Self {
                code_v,
                code_omega,
                seq,
                timestamp_ms,
            },
            margin,
        ))
    }
}

/// Quantizers for the two velocity components: forward speed over
/// `[0, v_max]`, turn rate over `[-omega_max, omega_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadCodec {
    pub v: QuantizerSpec<f64>,
    pub omega: QuantizerSpec<f64>,
}

impl PayloadCodec {
    pub fn for_bounds(bounds: &Bounds<f64>) -> Self {
        Self {
            v: QuantizerSpec::new(0.0, bounds.v_max, 8),
            omega: QuantizerSpec::new(-bounds.omega_max, bounds.omega_max, 8),
        }
    }

    pub fn encode(&self, u: &Twist<f64>, seq: u16, timestamp_ms: u32) -> VelocityPayload {
        VelocityPayload {
            code_v: self.v.quantize(u.v) as u8,
            code_omega: self.omega.quantize(u.omega) as u8,
            seq,
            timestamp_ms,
        }
    }

    pub fn decode(&self, p: &VelocityPayload) -> Twist<f64> {
        Twist::new(
            self.v.dequantize(u32::from(p.code_v)),
            self.omega.dequantize(u32::from(p.code_omega)),
        )
    }
}
