//! Small dense complex linear-algebra helpers shared by the model, metric and
//! conic layers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `a a^H`.
pub fn outer(a: &CVector) -> CMatrix {
    a * a.adjoint()
}

/// Real part of `w^H M w`; exact for Hermitian `M`.
pub fn quad_form(m: &CMatrix, w: &CVector) -> f64 {
    w.dotc(&(m * w)).re
}

/// `Re tr(A^H B)`, the real matrix inner product.
pub fn inner_real(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Elementwise product `diag(a) b`.
pub fn hadamard(a: &CVector, b: &CVector) -> CVector {
    a.component_mul(b)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue_real(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()).scale(0.5);
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// A factor `G` with `G^H G = M` for Hermitian PSD `M`.
///
/// Rows belonging to eigenvalues below `1e-14 * λ_max` are dropped, so the
/// factor may have fewer rows than `M` has columns.
pub fn gram_factor(m: &CMatrix) -> CMatrix {
    let n = m.ncols();
    let (values, vectors) = hermitian_eigen(m);
    let top = values.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..n).filter(|&i| values[i] > 1e-14 * top && values[i] > 0.0).collect();
    let mut g = CMatrix::zeros(keep.len(), n);
    for (r, &i) in keep.iter().enumerate() {
        let s = values[i].sqrt();
        for c in 0..n {
            g[(r, c)] = vectors[(c, i)].conj() * s;
        }
    }
    g
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Circularly-symmetric complex Gaussian sample with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| complex_gaussian(rng))
}

/// Uniform sample from the complex ball `{b in C^n : ||b|| <= radius}`.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> CVector {
    if n == 0 {
        return CVector::zeros(0);
    }
    let mut dir = complex_gaussian_vector(rng, n);
    let norm = dir.norm();
    if norm == 0.0 || radius <= 0.0 {
        return CVector::zeros(n);
    }
    // real dimension is 2n
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / (2 * n) as f64);
    dir.scale_mut(r / norm);
    dir
}

/// Unit-modulus symbol with uniform phase.
pub fn unit_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    Complex64::from_polar(1.0, theta)
}

/// `e^{-j arg(k^H w)} w`, so that `k^H w` becomes real and nonnegative.
pub fn align_phase(w: &CVector, k: &CVector) -> CVector {
    let inner = k.dotc(w);
    if inner.norm() == 0.0 {
        return w.clone();
    }
    w * Complex64::from_polar(1.0, -inner.arg())
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
