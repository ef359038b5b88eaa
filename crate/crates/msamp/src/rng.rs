//! Labeled random-number substreams.
//!
//! Every consumer of randomness derives its own ChaCha12 stream from the
//! master seed and a human-readable label: the stream seed is
//! SHA-256(little-endian u64 master seed ‖ 0x1F ‖ UTF-8 label). Two
//! consequences the rest of the crate relies on:
//!
//! * results are independent of evaluation order and worker count, because
//!   no two consumers share a stream;
//! * reruns with the same master seed are byte-identical.

use crate::linalg::{C64, CMat};
use rand::{Rng, RngExt};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub fn stream(master_seed: u64, label: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update([0x1F]);
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}

/// One CN(0, 1) draw: real and imaginary parts are independent N(0, 1/2).
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// n×m matrix of i.i.d. CN(0, 1) entries.
pub fn standard_complex_matrix<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> CMat {
    CMat::from_fn(n, m, |_, _| standard_complex(rng))
}
