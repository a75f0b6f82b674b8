//! Worst-case closed forms over norm-bounded interferer CSI errors.
//!
//! Every interferer-side vector `h` is only known as `h_hat` with
//! `||h - h_hat|| <= eps`, independently per constraint. Two bounds absorb the
//! uncertainty:
//!
//! - linear: `max_{||b||<=eps} |c^H (a + b)| = |c^H a| + eps ||c||`, attained;
//! - scaled: `max_{||b||<=eps} ||(a + b)^H D|| <= ||a^H D|| + eps sigma_max(D)`,
//!   attained at `b = eps a / ||a||` whenever `a` is a top singular direction
//!   of `D` (in particular when `D` is a multiple of the identity).

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hadamard, quad_form, spectral_norm, uniform_in_ball, CMatrix, CVector};
use crate::metrics::User;
use crate::model::{ChannelSet, DerivedQuantities, NetworkConfig, UncertaintyModel};

/// Worst-case interference and power constants of the robust constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustConstants {
    /// Worst-case direct interference power at each primary.
    pub kappa_p: [f64; 2],
    pub kappa_s: [f64; 2],
    /// Worst-case received power per relay.
    pub kappa_r: Vec<f64>,
}

/// `max_{||b||<=eps} |c^H (a + b)|` and its maximiser.
pub fn worst_case_linear(c: &CVector, a_hat: &CVector, eps: f64) -> Result<(f64, CVector)> {
    if c.len() != a_hat.len() {
        return Err(Error::dim("worst-case vector", c.len(), a_hat.len()));
    }
    let inner = c.dotc(a_hat);
    let c_norm = c.norm();
    let value = inner.norm() + eps * c_norm;
    let maximizer = if c_norm == 0.0 || eps == 0.0 {
        CVector::zeros(c.len())
    } else {
        c * Complex64::from_polar(eps / c_norm, inner.arg())
    };
    Ok((value, maximizer))
}

/// Upper bound on `max_{||b||<=eps} ||(a_hat + b)^H delta||`.
///
/// Equals `(1 + eps/||a_hat||) ||a_hat^H delta||` when `a_hat` attains the
/// largest singular value of `delta`, and stays a valid bound otherwise;
/// for `a_hat = 0` it reduces to the exact `eps sigma_max(delta)`.
pub fn worst_case_scaled(a_hat: &CVector, eps: f64, delta: &CMatrix) -> Result<f64> {
    if delta.nrows() != a_hat.len() {
        return Err(Error::dim("worst-case matrix rows", a_hat.len(), delta.nrows()));
    }
    let row = delta.adjoint() * a_hat;
    let sigma = if eps > 0.0 { spectral_norm(delta) } else { 0.0 };
    Ok(row.norm() + eps * sigma)
}

fn interferer_sqrt(config: &NetworkConfig) -> CMatrix {
    let d = DVector::from_iterator(
        config.n_interferers,
        config.p_interferer.iter().map(|&p| Complex64::new(p.sqrt(), 0.0)),
    );
    CMatrix::from_diagonal(&d)
}

/// Closed-form worst-case constants for the estimated channels in `um`.
pub fn robust_constants(
    um: &UncertaintyModel,
    config: &NetworkConfig,
    dq_hat: &DerivedQuantities,
) -> Result<RobustConstants> {
    um.estimates.check_dims(config)?;
    let sqrt_pi = interferer_sqrt(config);
    let r = &um.radii;
    let kappa = |h: &CVector, eps: f64| worst_case_scaled(h, eps, &sqrt_pi).map(|v| v * v);
    let kappa_p = [kappa(&um.estimates.h_p[0], r.primary[0])?, kappa(&um.estimates.h_p[1], r.primary[1])?];
    let kappa_s = [kappa(&um.estimates.h_s[0], r.secondary[0])?, kappa(&um.estimates.h_s[1], r.secondary[1])?];
    let kappa_r = (0..config.n_relays)
        .map(|j| {
            um.estimates
                .h_i
                .iter()
                .zip(&config.p_interferer)
                .zip(&r.interferer)
                .map(|((h, &p), &eps)| p * (h[j].norm() + eps).powi(2))
                .sum::<f64>()
                + dq_hat.chi_r[j]
        })
        .collect();
    Ok(RobustConstants {
        kappa_p,
        kappa_s,
        kappa_r,
    })
}

/// Estimates plus independent uniform-in-ball errors on every
/// interferer-side vector.
pub fn sample_uncertainty(um: &UncertaintyModel, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = um.estimates.clone();
    let radii = um.radii.ordered();
    let mut k = 0;
    let mut perturb = |h: &mut CVector| {
        let eps = radii[k];
        k += 1;
        if eps > 0.0 {
            *h += uniform_in_ball(&mut rng, h.len(), eps);
        }
    };
    out.h_p.iter_mut().for_each(&mut perturb);
    out.h_s.iter_mut().for_each(&mut perturb);
    out.h_i.iter_mut().for_each(&mut perturb);
    out
}

/// Worst-case interference-plus-noise power relayed and received by `user`:
/// `sum_l P_l (|w^H F h_l| + eps_l ||w^H F||)^2 + w^H T w + kappa + sigma^2`.
pub fn worst_case_denominator(
    w: &CVector,
    dq_hat: &DerivedQuantities,
    rc: &RobustConstants,
    um: &UncertaintyModel,
    config: &NetworkConfig,
    user: User,
) -> f64 {
    let i = user.index();
    let (f, t, kappa) = if user.is_primary() {
        (&um.estimates.f_p[i], &dq_hat.t_p[i], rc.kappa_p[i])
    } else {
        (&um.estimates.f_s[i], &dq_hat.t_s[i], rc.kappa_s[i])
    };
    let spread = hadamard(f, w).norm();
    let relayed: f64 = um
        .estimates
        .h_i
        .iter()
        .zip(&config.p_interferer)
        .zip(&um.radii.interferer)
        .map(|((h, &p), &eps)| {
            let v = hadamard(f, h).dotc(w).norm();
            p * (v + eps * spread).powi(2)
        })
        .sum();
    relayed + quad_form(t, w).max(0.0) + kappa + config.noise_var
}

/// Smallest SINR of `user` over the uncertainty set, per the closed forms.
pub fn worst_case_sinr(
    w: &CVector,
    dq_hat: &DerivedQuantities,
    rc: &RobustConstants,
    um: &UncertaintyModel,
    config: &NetworkConfig,
    user: User,
) -> f64 {
    let i = user.index();
    let (p_other, k) = if user.is_primary() {
        (config.p_primary[1 - i], &dq_hat.k_p1p2)
    } else {
        (config.p_secondary[1 - i], &dq_hat.k_s1s2)
    };
    p_other * k.dotc(w).norm_sqr() / worst_case_denominator(w, dq_hat, rc, um, config, user)
}

/// Largest relay powers over the uncertainty set.
pub fn worst_case_relay_powers(w: &CVector, rc: &RobustConstants) -> Vec<f64> {
    rc.kappa_r.iter().zip(w.iter()).map(|(k, wj)| k * wj.norm_sqr()).collect()
}
