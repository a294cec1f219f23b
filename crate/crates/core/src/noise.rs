//! Seeded noise sources. Every random draw in the simulator goes through here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c64, C64};

/// Complex AWGN description: total variance per complex sample and the seed
/// of its stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub variance: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(variance: f64, seed: u64) -> Self {
        assert!(variance >= 0.0, "noise variance must be non-negative");
        NoiseSpec { variance, seed }
    }
}

/// Mix a label into a master seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut z = master ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Incremental circular complex Gaussian generator.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: ChaCha8Rng,
    /// Standard deviation of each real component.
    component_std: f64,
}

impl GaussianSource {
    pub fn new(spec: NoiseSpec) -> Self {
        GaussianSource {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            component_std: (spec.variance / 2.0).sqrt(),
        }
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.component_std * self.component_std
    }

    pub fn sample(&mut self) -> C64 {
        if self.component_std == 0.0 {
            return c64(0.0, 0.0);
        }
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        c64(re * self.component_std, im * self.component_std)
    }

    /// Add noise to every sample of `block` in place.
    pub fn add_to(&mut self, block: &mut [C64]) {
        if self.component_std == 0.0 {
            return;
        }
        for v in block.iter_mut() {
            *v += self.sample();
        }
    }

    /// A real standard normal draw, for random walks.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }
}

/// `count` complex Gaussian samples of the given variance.
pub fn seeded_gaussian_stream(spec: NoiseSpec, count: usize) -> Vec<C64> {
    let mut src = GaussianSource::new(spec);
    (0..count).map(|_| src.sample()).collect()
}

/// Pseudo-random bits from a seed.
pub fn prbs_bits(seed: u64, count: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random::<bool>() as u8).collect()
}
