//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Relative floor applied to eigenvalues before taking matrix functions.
pub const EIGEN_FLOOR: f64 = 1e-14;

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `A^t` for a symmetric positive semidefinite `A`, via eigendecomposition with
/// eigenvalues floored at `EIGEN_FLOOR · λ_max`.
pub fn sym_pow(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    let floor = EIGEN_FLOOR * max;
    let mapped = eig.eigenvalues.map(|v| v.max(floor).powf(t));
    &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose()
}

pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_pow(a, 0.5)
}

pub fn sym_inv(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_pow(a, -1.0)
}

/// Matrix exponential of a symmetric matrix.
pub fn sym_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mapped = eig.eigenvalues.map(f64::exp);
    &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose()
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.nrows() == 1 || a.ncols() == 1 {
        return a.norm();
    }
    a.clone().svd(false, false).singular_values.iter().fold(0.0_f64, |m, v| m.max(*v))
}

/// Top singular triple `(σ, u, v)` with `A v = σ u`.
pub fn top_singular(a: &DMatrix<f64>) -> (f64, DVector<f64>, DVector<f64>) {
    let svd = a.clone().svd(true, true);
    let (idx, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) });
    let u = svd.u.expect("requested").column(idx).into_owned();
    let v = svd.v_t.expect("requested").row(idx).transpose();
    (sigma, u, v)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v))
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    let scale = a.amax().max(1.0);
    (a - a.transpose()).amax() <= tol * scale
}

/// Haar-ish random orthogonal matrix from QR of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// Rotation of the plane by `theta`.
pub fn rotation2(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}
