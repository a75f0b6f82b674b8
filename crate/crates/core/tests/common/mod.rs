#![allow(dead_code)]

use mabc_relay::model::{derive, generate_channels, NetworkConfig};
use mabc_relay::{CMatrix, CVector, Complex64, DerivedQuantities};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn cn(r: &mut impl Rng) -> Complex64 {
    let re: f64 = r.sample(StandardNormal);
    let im: f64 = r.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cvec(r: &mut impl Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| cn(r))
}

pub fn cmat(r: &mut impl Rng, n: usize, m: usize) -> CMatrix {
    CMatrix::from_fn(n, m, |_, _| cn(r))
}

/// `A A^H + floor I` for a random `A`.
pub fn random_pd(r: &mut impl Rng, n: usize, floor: f64) -> CMatrix {
    let a = cmat(r, n, n);
    &a * a.adjoint() + CMatrix::identity(n, n).scale(floor)
}

/// Uniform point of the complex `eps`-ball, by rejection from the cube.
pub fn ball_point(r: &mut impl Rng, n: usize, eps: f64) -> CVector {
    if n <= 3 {
        loop {
            let v = CVector::from_fn(n, |_, _| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
            if v.norm() <= 1.0 {
                return v.scale(eps);
            }
        }
    }
    let dir = cvec(r, n);
    let radius: f64 = r.random::<f64>().powf(1.0 / (2 * n) as f64);
    dir.scale(eps * radius / dir.norm())
}

pub fn dbm(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Ten relays, two interferers at -1 dBm, 0 dBm transceivers, 1 dBm caps.
pub fn default_config(noise_dbm: f64, mu: f64) -> NetworkConfig {
    NetworkConfig::uniform(10, 2, 1.0, dbm(-1.0), dbm(noise_dbm), mu, dbm(1.0))
}

pub fn instance(config: &NetworkConfig, seed: u64) -> DerivedQuantities {
    derive(config, &generate_channels(config, seed)).unwrap()
}

/// A beamformer drawn at random and scaled so every relay is within its cap
/// and the most loaded relay sits at `fill` times its cap.
pub fn power_feasible(r: &mut impl Rng, dq: &DerivedQuantities, config: &NetworkConfig, fill: f64) -> CVector {
    let w = cvec(r, dq.n_relays());
    let load = w
        .iter()
        .zip(&dq.xi_r)
        .zip(&config.p_relay_max)
        .map(|((wj, xi), cap)| xi * wj.norm_sqr() / cap)
        .fold(0.0, f64::max);
    w.scale((fill / load).sqrt())
}

/// `P k^H Q^{-1} k` through an explicit LU inverse.
pub fn bound_by_inverse(p: f64, q: &CMatrix, k: &CVector) -> f64 {
    let inv = q.clone().try_inverse().expect("invertible");
    p * (k.adjoint() * inv * k)[(0, 0)].re
}
