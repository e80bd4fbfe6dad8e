#![allow(dead_code)]

use ddft_core::grid::integrate;
use ddft_core::{Field, Grid, KernelSpec, TensorKernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normalize(g: &Grid, f: Field) -> Field {
    let m = integrate(g, &f).unwrap();
    f.map(|v| v / m)
}

/// Smooth random positive density with unit mass.
pub fn random_density(g: &Grid, rng: &mut ChaCha8Rng) -> Field {
    let modes: Vec<(f64, f64, f64)> =
        (0..4).map(|_| (rng.random_range(-0.3..0.3), rng.random_range(1.0..6.0), rng.random_range(1.0..6.0))).collect();
    let f = Field::from_fn(g, |x| {
        1.0 + modes.iter().map(|(a, k, l)| a * (k * x[0]).cos() * (l * x[1]).cos()).sum::<f64>()
    });
    normalize(g, f)
}

pub fn gaussian_hi(amplitude: f64, width: f64) -> TensorKernelSpec {
    TensorKernelSpec::isotropic(KernelSpec::gaussian(amplitude, width))
}
