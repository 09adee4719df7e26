//! Small fixed-size helpers and thin wrappers over the dense solver.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type Mat2 = [[C64; 2]; 2];

pub const ZERO2: Mat2 = [[C64::new(0.0, 0.0); 2]; 2];

pub fn identity2() -> Mat2 {
    [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]]
}

pub fn add2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = *a;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn scale2(a: &Mat2, s: C64) -> Mat2 {
    let mut out = *a;
    for row in out.iter_mut() {
        for x in row.iter_mut() {
            *x *= s;
        }
    }
    out
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = ZERO2;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn adjoint2(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

/// Max-abs entry difference.
pub fn dist2(a: &Mat2, b: &Mat2) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            d = d.max((a[i][j] - b[i][j]).norm());
        }
    }
    d
}

pub fn norm2(a: &Mat2) -> f64 {
    dist2(a, &ZERO2)
}

/// Closed-form eigenpairs of a general complex 2x2 matrix.
///
/// Eigenvalues are ordered by real part; eigenvectors are unit-normalised
/// right eigenvectors with an unspecified phase.
pub fn eig2(m: &Mat2) -> ([C64; 2], [[C64; 2]; 2]) {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let half_tr = (a + d) * 0.5;
    let half_diff = (a - d) * 0.5;
    let disc = (half_diff * half_diff + b * c).sqrt();
    let mut lam = [half_tr - disc, half_tr + disc];
    if lam[0].re > lam[1].re {
        lam.swap(0, 1);
    }
    let scale = a.norm() + b.norm() + c.norm() + d.norm();
    let vecs = lam.map(|l| {
        let v1 = [b, l - a];
        let v2 = [l - d, c];
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        if n.sqrt() <= 1e-300_f64.max(1e-15 * scale) {
            return [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        }
        let s = 1.0 / n.sqrt();
        [v[0] * s, v[1] * s]
    });
    // a degenerate, diagonal matrix needs two independent vectors
    let overlap = vecs[0][0].conj() * vecs[1][0] + vecs[0][1].conj() * vecs[1][1];
    if overlap.norm() > 1.0 - 1e-12 && b.norm() + c.norm() <= 1e-14 * scale {
        return (lam, [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]]);
    }
    (lam, vecs)
}

/// Dense right eigen-decomposition: eigenvalues and column eigenvectors.
pub struct DenseEig {
    pub values: Vec<C64>,
    pub vectors: Mat<C64>,
}

// faer's threaded kernels change summation order between runs; results
// must be bit-identical for a fixed seed, so the dense solvers stay serial.
fn sequential() {
    faer::set_global_parallelism(faer::Par::Seq);
}

pub fn eig_dense(m: &Mat<C64>) -> Result<DenseEig> {
    sequential();
    let evd = m.eigen().map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let values: Vec<C64> = evd.S().column_vector().iter().copied().collect();
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical("eigendecomposition produced non-finite eigenvalues".into()));
    }
    let mut vectors = evd.U().to_owned();
    for j in 0..vectors.ncols() {
        let n: f64 = (0..vectors.nrows()).map(|i| vectors[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            for i in 0..vectors.nrows() {
                vectors[(i, j)] /= n;
            }
        }
    }
    Ok(DenseEig { values, vectors })
}

pub fn eigenvalues_dense(m: &Mat<C64>) -> Result<Vec<C64>> {
    sequential();
    m.eigenvalues().map_err(|e| Error::Numerical(format!("eigenvalue solve failed: {e:?}")))
}

pub fn inverse_dense(m: &Mat<C64>) -> Result<Mat<C64>> {
    sequential();
    let inv = m.partial_piv_lu().inverse();
    if inv.col_iter().any(|c| c.iter().any(|x| !x.re.is_finite() || !x.im.is_finite())) {
        return Err(Error::Numerical("matrix is singular".into()));
    }
    Ok(inv)
}
