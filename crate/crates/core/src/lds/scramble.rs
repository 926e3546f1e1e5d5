//! Random linear scrambling with digital shifts.
//!
//! Each dimension gets an independent random nonsingular lower-triangular
//! bit matrix `L` (unit diagonal) and a 32-bit digital shift `d`. A point's
//! digit vector `x` is randomized as `y = L x ⊕ d` over GF(2). The state is
//! derived deterministically from `(master_seed, replicate, dimension)`
//! through a counter-keyed stream cipher, so identical seeds reproduce
//! identical states on any platform or thread count.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use super::sobol::DIGITS;

/// Per-replicate randomization state for one generator.
#[derive(Debug, Clone)]
pub struct ScrambleState {
    /// Column-packed scramble matrices: `cols[j][l]` holds column `l` of
    /// dimension j's matrix, rows packed with row k at bit 31-k.
    cols: Vec<[u32; DIGITS as usize]>,
    shifts: Vec<u32>,
}

impl ScrambleState {
    /// Identity scramble with zero shift (useful for tests).
    pub fn identity(dimension: usize) -> Self {
        let mut cols = [0u32; DIGITS as usize];
        for (l, c) in cols.iter_mut().enumerate() {
            *c = 1u32 << (31 - l);
        }
        ScrambleState {
            cols: vec![cols; dimension],
            shifts: vec![0; dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.cols.len()
    }

    pub fn shift(&self, dim: usize) -> u32 {
        self.shifts[dim]
    }

    /// Apply dimension `dim`'s matrix and shift to a digit vector.
    #[inline]
    pub fn apply(&self, dim: usize, x: u32) -> u32 {
        let cols = &self.cols[dim];
        let mut y = 0u32;
        let mut rem = x;
        while rem != 0 {
            let bit = rem & rem.wrapping_neg();
            // Digit l sits at bit position 31-l.
            let l = 31 - bit.trailing_zeros();
            y ^= cols[l as usize];
            rem ^= bit;
        }
        y ^ self.shifts[dim]
    }
}

fn stream_for(master_seed: u64, replicate: u64, dimension: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..24].copy_from_slice(&dimension.to_le_bytes());
    key[24..32].copy_from_slice(&0x726c_7363_616d_626cu64.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Derive the randomization for one replicate.
///
/// Each `(master_seed, replicate, dimension)` triple keys an independent
/// stream; distinct replicate indices therefore give independent-quality
/// randomizations without any sequential draw order to worry about.
pub fn fresh_scramble(master_seed: u64, replicate: u64, dimension: usize) -> ScrambleState {
    let mut cols = Vec::with_capacity(dimension);
    let mut shifts = Vec::with_capacity(dimension);
    for j in 0..dimension {
        let mut rng = stream_for(master_seed, replicate, j as u64);
        // Row k: random strictly-lower bits (columns 0..k), unit diagonal.
        let mut rows = [0u32; DIGITS as usize];
        for (k, row) in rows.iter_mut().enumerate() {
            let strict_lower = if k == 0 { 0 } else { !0u32 << (32 - k) };
            *row = (rng.next_u32() & strict_lower) | (1u32 << (31 - k));
        }
        // Transpose to columns for the fast per-point apply.
        let mut c = [0u32; DIGITS as usize];
        for (k, row) in rows.iter().enumerate() {
            for (l, col) in c.iter_mut().enumerate() {
                if (row >> (31 - l)) & 1 == 1 {
                    *col |= 1u32 << (31 - k);
                }
            }
        }
        cols.push(c);
        shifts.push(rng.next_u32());
    }
    ScrambleState { cols, shifts }
}
