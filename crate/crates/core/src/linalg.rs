//! Small fixed-size complex matrices for the two-level system and its
//! Liouville space, plus a few dense helpers on top of `ndarray-linalg`.
//!
//! Liouville-space vectorisation is row-major throughout the crate:
//! `vec(rho)[2 * a + b] = rho[a][b]`, so that `vec(A X B) = (A ⊗ Bᵀ) vec(X)`.
//! The first (row) index of a density matrix is the forward branch, the second
//! (column) index the backward branch.

use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, QR, SVD, UPLO};
use num_complex::Complex64 as C64;

use crate::error::Result;

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity2() -> Mat2 {
    [[ONE, ZERO], [ZERO, ONE]]
}

pub fn zeros2() -> Mat2 {
    [[ZERO; 2]; 2]
}

pub fn sigma_x() -> Mat2 {
    [[ZERO, ONE], [ONE, ZERO]]
}

pub fn sigma_y() -> Mat2 {
    [[ZERO, -I], [I, ZERO]]
}

pub fn sigma_z() -> Mat2 {
    [[ONE, ZERO], [ZERO, -ONE]]
}

pub fn add2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = zeros2();
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

pub fn scale2(a: &Mat2, s: C64) -> Mat2 {
    let mut out = *a;
    out.iter_mut().flatten().for_each(|x| *x *= s);
    out
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = zeros2();
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn dagger2(a: &Mat2) -> Mat2 {
    [
        [a[0][0].conj(), a[1][0].conj()],
        [a[0][1].conj(), a[1][1].conj()],
    ]
}

pub fn transpose2(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn trace2(a: &Mat2) -> C64 {
    a[0][0] + a[1][1]
}

pub fn max_abs_diff2(a: &Mat2, b: &Mat2) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_hermitian2(a: &Mat2, tol: f64) -> bool {
    max_abs_diff2(a, &dagger2(a)) <= tol
}

/// Pauli decomposition `H = a0·1 + ax·σx + ay·σy + az·σz` of a Hermitian 2×2
/// matrix (anti-Hermitian parts are discarded).
fn pauli_coefficients(h: &Mat2) -> (f64, [f64; 3]) {
    let a0 = 0.5 * (h[0][0].re + h[1][1].re);
    let az = 0.5 * (h[0][0].re - h[1][1].re);
    let off = 0.5 * (h[0][1] + h[1][0].conj());
    (a0, [off.re, -off.im, az])
}

/// `exp(-i·tau·H)` for Hermitian `H`, in closed form.
pub fn expm_herm2(h: &Mat2, tau: f64) -> Mat2 {
    let (a0, a) = pauli_coefficients(h);
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let c = (tau * n).cos();
    // sin(tau n)/n, continuous at n = 0
    let s = if n * tau.abs() < 1e-8 {
        tau * (1.0 - (tau * n).powi(2) / 6.0)
    } else {
        (tau * n).sin() / n
    };
    let phase = C64::from_polar(1.0, -tau * a0);
    let mis = -I * s;
    let m = [
        [C64::new(c, 0.0) + mis * a[2], mis * C64::new(a[0], -a[1])],
        [mis * C64::new(a[0], a[1]), C64::new(c, 0.0) - mis * a[2]],
    ];
    scale2(&m, phase)
}

/// Eigen-decomposition of a Hermitian 2×2 matrix. Returns the eigenvalues in
/// ascending order and the matching normalised eigenvectors.
pub fn eigh2(h: &Mat2) -> ([f64; 2], [[C64; 2]; 2]) {
    let (a0, a) = pauli_coefficients(h);
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    if n < 1e-300 {
        return ([a0, a0], [[ONE, ZERO], [ZERO, ONE]]);
    }
    let values = [a0 - n, a0 + n];
    let mut vectors = [[ZERO; 2]; 2];
    for (k, &lambda) in values.iter().enumerate() {
        // (H - mu) with mu the other eigenvalue projects onto the lambda eigenspace
        let mu = 2.0 * a0 - lambda;
        let p = [
            [h[0][0] - mu, h[0][1]],
            [h[1][0], h[1][1] - mu],
        ];
        let c0 = p[0][0].norm_sqr() + p[1][0].norm_sqr();
        let c1 = p[0][1].norm_sqr() + p[1][1].norm_sqr();
        let (col, norm) = if c0 >= c1 { (0, c0.sqrt()) } else { (1, c1.sqrt()) };
        vectors[k] = [p[0][col] / norm, p[1][col] / norm];
    }
    (values, vectors)
}

pub fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn identity4() -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    (0..4).for_each(|i| out[i][i] = ONE);
    out
}

pub fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn apply4(m: &Mat4, v: &[C64; 4]) -> [C64; 4] {
    let mut out = [ZERO; 4];
    for i in 0..4 {
        out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2] + m[i][3] * v[3];
    }
    out
}

pub fn vectorize(rho: &Mat2) -> [C64; 4] {
    [rho[0][0], rho[0][1], rho[1][0], rho[1][1]]
}

pub fn unvectorize(v: &[C64; 4]) -> Mat2 {
    [[v[0], v[1]], [v[2], v[3]]]
}

pub fn mat2_to_array(m: &Mat2) -> Array2<C64> {
    Array2::from_shape_fn((2, 2), |(i, j)| m[i][j])
}

pub fn mat4_to_array(m: &Mat4) -> Array2<C64> {
    Array2::from_shape_fn((4, 4), |(i, j)| m[i][j])
}

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|x| x.conj())
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| {
        a[[i / br, j / bc]] * b[[i % br, j % bc]]
    })
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

/// Eigen-decomposition of a dense Hermitian matrix (ascending eigenvalues).
pub fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    // symmetrise so round-off asymmetry does not leak into LAPACK
    // column-major copy: the LAPACK wrapper mishandles row-major Hermitian input
    let mut sym = Array2::<C64>::zeros(a.raw_dim().f());
    sym.zip_mut_with(&(a + &dagger(a)), |s, x| *s = 0.5 * x);
    Ok(sym.eigh(UPLO::Lower)?)
}

fn column_major(a: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::<C64>::zeros(a.raw_dim().f());
    out.assign(a);
    out
}

/// Thin QR factorisation `a = q r` of a matrix with at least as many rows as
/// columns, with the diagonal of `r` made real and non-negative.
pub fn qr(a: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let (rows, cols) = a.dim();
    if rows < cols {
        return Err(crate::error::Error::Structure(format!("qr needs rows >= cols, got {rows}x{cols}")));
    }
    let (mut q, mut r) = column_major(a).qr()?;
    for i in 0..cols {
        let d = r[[i, i]];
        let norm = d.norm();
        if norm > 0.0 {
            let phase = d / norm;
            r.row_mut(i).mapv_inplace(|x| x * phase.conj());
            q.column_mut(i).mapv_inplace(|x| x * phase);
        }
    }
    Ok((q, r))
}

/// Thin LQ factorisation `a = l q` of a matrix with at least as many columns
/// as rows; `l` is lower triangular with a non-negative diagonal.
pub fn lq(a: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let (q, r) = qr(&dagger(a))?;
    Ok((dagger(&r), dagger(&q)))
}

/// Thin singular value decomposition `a = u diag(s) vt`, singular values in
/// descending order.
pub fn svd(a: &Array2<C64>) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>)> {
    let (rows, cols) = a.dim();
    let k = rows.min(cols);
    let (u, s, vt) = column_major(a).svd(true, true)?;
    let (u, vt) = match (u, vt) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(crate::error::Error::Numerical("svd returned no singular vectors".into())),
    };
    Ok((
        u.slice(ndarray::s![.., ..k]).to_owned(),
        s,
        vt.slice(ndarray::s![..k, ..]).to_owned(),
    ))
}

/// `exp(-i·tau·H)` for dense Hermitian `H`, via its eigenbasis.
pub fn expm_herm(h: &Array2<C64>, tau: f64) -> Result<Array2<C64>> {
    let (values, vectors) = eigh(h)?;
    let phases = values.mapv(|e| C64::from_polar(1.0, -tau * e));
    let scaled = &vectors * &phases.insert_axis(ndarray::Axis(0));
    Ok(scaled.dot(&dagger(&vectors)))
}
