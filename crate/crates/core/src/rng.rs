//! Deterministic random streams.
//!
//! Every draw sequence is a pure function of a 64-bit seed. Normals come from
//! the inverse CDF applied to one uniform per draw, so the number of uniforms
//! consumed never depends on the values drawn and streams line up across
//! platforms and thread counts.

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::prob::normal_quantile;

/// A seeded random stream. Single owner; parallel callers derive independent
/// streams with [`derive_seed`].
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }
}

/// Splitmix64 finalizer applied to `base ^ index`.
///
/// The finalizer is a bijection on `u64`, so distinct indices under one base
/// never collide.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = (base ^ index).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `rows × cols` matrix of i.i.d. standard normals, filled row by row.
pub fn standard_normal_matrix(rng: &mut RngState, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = rng.standard_normal();
        }
    }
    m
}
