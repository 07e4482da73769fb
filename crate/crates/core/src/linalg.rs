//! Small complex linear algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Frobenius norm squared of a complex matrix.
pub fn fro_norm_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Squared spectral norm of `a`, computed as the largest eigenvalue of
/// the Hermitian Gram matrix of the thinner side.
pub fn spectral_norm_sq(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    max_eig_hermitian(&gram).0
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
///
/// The matrix is symmetrized first so tiny round-off asymmetries do not
/// leak into complex eigenvalues.
pub fn max_eig_hermitian(h: &CMat) -> (f64, CVec) {
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "hermitian eigendecomposition needs a square matrix");
    let sym = (h + h.adjoint()) / Complex64::new(2.0, 0.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut best = 0usize;
    for i in 1..n {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order.  Returns `(values, vectors)` with vectors stored
/// column-wise in the matching order.
pub fn eig_hermitian_desc(h: &CMat) -> (RVec, CMat) {
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "hermitian eigendecomposition needs a square matrix");
    let sym = (h + h.adjoint()) / Complex64::new(2.0, 0.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalues must be finite")
    });
    let values = RVec::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Column-major vectorization of a matrix.
pub fn vec_c(a: &CMat) -> CVec {
    CVec::from_iterator(a.nrows() * a.ncols(), a.iter().cloned())
}

/// Inverse of [`vec_c`] for a matrix with `rows` rows.
pub fn unvec_c(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "vector length must match target shape");
    CMat::from_iterator(rows, cols, v.iter().cloned())
}

/// Kronecker product of two complex matrices.
pub fn kron_c(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for ja in 0..ac {
        for ia in 0..ar {
            let s = a[(ia, ja)];
            for jb in 0..bc {
                for ib in 0..br {
                    out[(ia * br + ib, ja * bc + jb)] = s * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Hermitian part of a square matrix.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()) / Complex64::new(2.0, 0.0)
}

/// Block diagonal matrix built from square complex blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(total, total);
    let mut off = 0;
    for b in blocks {
        assert_eq!(b.nrows(), b.ncols(), "block diagonal blocks must be square");
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// `tr(A B)` for complex matrices with compatible shapes, without
/// forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> Complex64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
