//! Seed derivation and the documented Gaussian noise generator.
//!
//! All randomness flows from one root seed. [`derive_seed`] splits it per
//! purpose (initialization, shuffling, noise, search) so that streams never
//! overlap and adding a consumer does not perturb the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for `(root, purpose, index)`.
pub fn derive_seed(root: u64, purpose: &str, index: u64) -> u64 {
    let mut h = splitmix64(root);
    for b in purpose.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// General-purpose seeded generator.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Counter-based standard normal stream.
///
/// Draw `i` of the underlying uniform stream is
/// `splitmix64(seed + i·0x9E3779B97F4A7C15)`, mapped to `(0, 1]` from its top
/// 53 bits. Consecutive uniform pairs `(u1, u2)` become two normals through
/// the Box–Muller transform: `√(−2 ln u1)·cos(2πu2)` then
/// `√(−2 ln u1)·sin(2πu2)`.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    seed: u64,
    counter: u64,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counter: 0,
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        let x = splitmix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter += 1;
        ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }
}
