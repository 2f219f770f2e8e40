//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is a
//! hash of `(seed, tag...)`, so sub-streams do not depend on the order in
//! which they are consumed.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numkernel::ComplexMatrix;

/// Domain tags separating the users of [`substream`].
pub(crate) mod tag {
    pub const CHANNEL_A: u64 = 0xa;
    pub const CHANNEL_B: u64 = 0xb;
    pub const BEAM: u64 = 0xbea;
    pub const SYMBOL: u64 = 0x5e;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn key(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)))
}

pub(crate) fn substream(seed: u64, tags: &[u64]) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(key(seed, tags))
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub(crate) fn complex_gaussian<R: rand::Rng>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

pub(crate) fn gaussian_matrix<R: rand::Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    // column-major fill so the draw order is fixed
    let mut m = ComplexMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_gaussian(rng);
        }
    }
    m
}
