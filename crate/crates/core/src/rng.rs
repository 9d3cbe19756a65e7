//! Seeded random streams and the two distributions the samplers need.
//!
//! Every stochastic routine takes a `u64` seed and derives independent
//! ChaCha8 streams from it, so results never depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// The `stream`-th independent stream of `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed together with a path of integers into a new seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ 0x6A09_E667_F3BC_C908);
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x3C6E_F372_FE94_F82B)));
    }
    splitmix(h ^ path.len() as u64)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, variance: f64) -> f64 {
    mean + libm::sqrt(variance) * standard_normal(rng)
}

/// `ln G` for `G ~ Gamma(shape, 1)`.
///
/// Shapes below one use `G = G' * U^(1/shape)` with `G' ~ Gamma(shape + 1)`
/// in log space, which keeps tiny shapes from underflowing to zero.
pub fn ln_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        libm::log(g)
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        // Open interval (0, 1): reject an exact zero.
        let mut u: f64 = rng.random();
        while u == 0.0 {
            u = rng.random();
        }
        libm::log(g) + libm::log(u) / shape
    }
}

/// Draw from Inv-Gamma(shape, scale), density proportional to
/// `x^(-shape-1) exp(-scale / x)`. Values beyond `f64::MAX` saturate.
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let x = libm::exp(libm::log(scale) - ln_gamma_variate(rng, shape));
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}
