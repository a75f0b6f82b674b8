//! Per-constraint feasibility of ratio constraints and the resulting upper
//! bound on the max-min level.
//!
//! A constraint `|a^H x|^2 / (x^H Δ x + c) >= t` with `Δ ≻ 0`, `c > 0` admits
//! some `x` exactly when `a^H Δ^{-1} a > t`: the rank-one matrix
//! `a a^H - t Δ` must not be negative semidefinite, and its only possibly
//! positive congruent eigenvalue is `a^H Δ^{-1} a - t`. Since the bound does
//! not depend on `x`, every SINR is capped by it for any beamformer.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix, CVector};
use crate::model::{DerivedQuantities, NetworkConfig};

/// Relative margin by which `a^H Δ^{-1} a` must exceed `t`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Smallest eigenvalue accepted as positive definite.
pub const MIN_EIGENVALUE: f64 = 1e-10;

/// Ridge added to a numerically singular Q, relative to `trace(Q) / n`.
const RIDGE: f64 = 1e-12;

/// `a^H Δ^{-1} a` through a Cholesky solve.
pub fn inverse_quad_form(delta: &CMatrix, a: &CVector) -> Result<f64> {
    if delta.nrows() != a.len() || delta.ncols() != a.len() {
        return Err(Error::dim("matrix size", a.len(), delta.nrows()));
    }
    let chol = Cholesky::new(delta.clone()).ok_or(Error::NotPositiveDefinite)?;
    let y = chol.l().solve_lower_triangular(a).ok_or(Error::NotPositiveDefinite)?;
    Ok(y.norm_squared())
}

/// Whether `|a^H x|^2 / (x^H Δ x + c) >= t` is satisfiable for some `x`.
pub fn lemma1_feasible(delta: &CMatrix, a: &CVector, t: f64) -> Result<bool> {
    if !(t > 0.0) {
        return Err(Error::InvalidConfig(format!("threshold must be positive, got {t}")));
    }
    if delta.nrows() != a.len() {
        return Err(Error::dim("matrix size", a.len(), delta.nrows()));
    }
    if hermitian_eigen(delta).0.first().is_some_and(|&l| l <= MIN_EIGENVALUE) {
        return Err(Error::NotPositiveDefinite);
    }
    let value = inverse_quad_form(delta, a)?;
    Ok(value - t > FEASIBILITY_TOL * value)
}

/// `a^H Q^{-1} a`, with a small ridge when Q is numerically singular.
fn regularized_inverse_quad(q: &CMatrix, a: &CVector) -> Result<f64> {
    if a.norm() == 0.0 {
        return Ok(0.0);
    }
    match inverse_quad_form(q, a) {
        Ok(v) => Ok(v),
        Err(Error::NotPositiveDefinite) => {
            let n = q.nrows();
            let ridge = RIDGE * q.trace().re / n as f64;
            if !(ridge > 0.0) {
                return Err(Error::Singular);
            }
            let reg = q + CMatrix::identity(n, n).scale(ridge);
            inverse_quad_form(&reg, a).map_err(|_| Error::Singular)
        }
        Err(e) => Err(e),
    }
}

/// The four per-constraint bounds `[P1, P2, S1, S2]`; secondary entries are
/// `+inf` when the secondary pair is absent. Secondary entries include `mu`.
pub fn gamma_upper_terms(dq: &DerivedQuantities, config: &NetworkConfig) -> Result<[f64; 4]> {
    let mut terms = [f64::INFINITY; 4];
    for i in 0..2 {
        terms[i] = config.p_primary[1 - i] * regularized_inverse_quad(&dq.q_p[i], &dq.k_p1p2)?;
        if config.has_secondaries() {
            terms[2 + i] =
                config.mu * config.p_secondary[1 - i] * regularized_inverse_quad(&dq.q_s[i], &dq.k_s1s2)?;
        }
    }
    Ok(terms)
}

/// Smallest per-constraint bound: no beamformer can push the max-min level
/// past it.
pub fn gamma_upper_bound(dq: &DerivedQuantities, config: &NetworkConfig) -> Result<f64> {
    Ok(gamma_upper_terms(dq, config)?.into_iter().fold(f64::INFINITY, f64::min))
}
