//! Dense linear algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Max element magnitude of `M - M^H`.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub fn assert_hermitian(m: &CMatrix, tolerance: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let deviation = hermiticity_deviation(m);
    if deviation > tolerance {
        return Err(Error::NotHermitian { deviation, tolerance });
    }
    Ok(())
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `k` in column `k`.
/// Matrices whose imaginary parts are negligible take a real-symmetric path,
/// which is several times faster; the caller is expected to have validated
/// Hermiticity already, so discarding imaginary dust below the threshold is
/// safe.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_imag = m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);

    let (mut values, mut vectors): (Vec<f64>, CMatrix) = if max_imag <= 1e-14 * (1.0 + scale) {
        let re = DMatrix::<f64>::from_fn(n, n, |i, j| m[(i, j)].re);
        let eig = re.symmetric_eigen();
        let vecs = CMatrix::from_fn(n, n, |i, j| Complex64::new(eig.eigenvectors[(i, j)], 0.0));
        (eig.eigenvalues.iter().copied().collect(), vecs)
    } else {
        let eig = m.clone().symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };

    // sort ascending, permuting columns to match
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let mut sorted_vecs = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted_vecs.set_column(dst, &vectors.column(src));
    }
    values = sorted_vals;
    vectors = sorted_vecs;
    (values, vectors)
}

/// Random Hermitian matrix with entries of unit scale; used by tests and the
/// observable constructors.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
        for j in (i + 1)..n {
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Frobenius-normalized trace, returned as a complex number.
pub fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}
