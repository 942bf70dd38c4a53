//! Dense complex linear-algebra helpers on top of `faer`.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Solves are rejected below this reciprocal condition estimate.
pub const RCOND_MIN: f64 = 1e-14;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Builds a complex matrix from a row-major slice of reals.
pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> CMat {
    assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| c(data[i * cols + j], 0.0))
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn scaled(a: MatRef<'_, C64>, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// `a*x + b*y` elementwise.
pub fn axpby(a: C64, x: MatRef<'_, C64>, b: C64, y: MatRef<'_, C64>) -> CMat {
    assert_eq!((x.nrows(), x.ncols()), (y.nrows(), y.ncols()));
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| a * x[(i, j)] + b * y[(i, j)])
}

pub fn frob(a: MatRef<'_, C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute difference when `b` vanishes.
pub fn rel_frob_err(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    let diff = axpby(ONE, a, -ONE, b);
    let nb = frob(b);
    if nb == 0.0 {
        frob(diff.as_ref())
    } else {
        frob(diff.as_ref()) / nb
    }
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_imag(a: MatRef<'_, C64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].im.abs());
        }
    }
    m
}

pub fn real_part(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c(a[(i, j)].re, 0.0))
}

pub fn is_real(a: MatRef<'_, C64>) -> bool {
    max_abs_imag(a) == 0.0
}

fn norm1(a: MatRef<'_, C64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization with partial pivoting and a reciprocal 1-norm condition
/// estimate (Hager–Higham).
pub struct Lu {
    lu: PartialPivLu<C64>,
    pub rcond: f64,
}

impl Lu {
    pub fn new(a: MatRef<'_, C64>) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        let lu = a.partial_piv_lu();
        let anorm = norm1(a);
        let rcond = if anorm == 0.0 {
            0.0
        } else {
            match inverse_norm1_estimate(&lu, a.nrows()) {
                Some(inv) if inv > 0.0 => 1.0 / (anorm * inv),
                _ => 0.0,
            }
        };
        Lu { lu, rcond }
    }

    pub fn is_well_conditioned(&self) -> bool {
        self.rcond >= RCOND_MIN
    }

    pub fn solve(&self, b: MatRef<'_, C64>) -> CMat {
        self.lu.solve(b)
    }

    /// Solves `aᴴ x = b`.
    pub fn solve_adjoint(&self, b: MatRef<'_, C64>) -> CMat {
        self.lu.solve_adjoint(b)
    }
}

fn inverse_norm1_estimate(lu: &PartialPivLu<C64>, n: usize) -> Option<f64> {
    if n == 0 {
        return Some(0.0);
    }
    let mut x = Mat::<C64>::from_fn(n, 1, |_, _| c(1.0 / n as f64, 0.0));
    let mut est = 0.0;
    let mut last_j = usize::MAX;
    for iter in 0..5 {
        let y = lu.solve(x.as_ref());
        let ynorm: f64 = (0..n).map(|i| y[(i, 0)].norm()).sum();
        if !ynorm.is_finite() {
            return None;
        }
        if iter > 0 && ynorm <= est {
            break;
        }
        est = ynorm;
        let xi = Mat::<C64>::from_fn(n, 1, |i, _| {
            let v = y[(i, 0)];
            let a = v.norm();
            if a == 0.0 {
                ONE
            } else {
                v / a
            }
        });
        let z = lu.solve_adjoint(xi.as_ref());
        let (mut jmax, mut zmax) = (0, -1.0);
        for i in 0..n {
            let a = z[(i, 0)].norm();
            if !a.is_finite() {
                return None;
            }
            if a > zmax {
                zmax = a;
                jmax = i;
            }
        }
        let ztx: f64 = (0..n).map(|i| (z[(i, 0)].conj() * x[(i, 0)]).re).sum();
        if zmax <= ztx || jmax == last_j {
            break;
        }
        last_j = jmax;
        x = Mat::zeros(n, 1);
        x[(jmax, 0)] = ONE;
    }
    // Alternative lower bound with an alternating-sign vector guards against
    // the rare failure modes of the power iteration.
    let b = Mat::<C64>::from_fn(n, 1, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        c(sign * (1.0 + t), 0.0)
    });
    let y = lu.solve(b.as_ref());
    let alt: f64 = (0..n).map(|i| y[(i, 0)].norm()).sum::<f64>() * 2.0 / (3.0 * n as f64);
    if !alt.is_finite() {
        return None;
    }
    Some(est.max(alt))
}

/// Thin SVD `a = U diag(s) Vᴴ` with singular values in nonincreasing order.
///
/// Each left singular vector is rotated so its largest-magnitude entry is
/// real and positive; the right vector receives the same phase.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(a: MatRef<'_, C64>) -> Result<Svd> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok(Svd {
            u: zeros(a.nrows(), 0),
            s: vec![],
            v: zeros(a.ncols(), 0),
        });
    }
    let dec = a
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("svd: {e:?}")))?;
    let sd = dec.S().column_vector();
    let s: Vec<f64> = (0..k).map(|i| sd[i].re).collect();
    let mut u = dec.U().to_owned();
    let mut v = dec.V().to_owned();
    for j in 0..k {
        let mut best = ZERO;
        let mut best_abs = -1.0;
        for i in 0..u.nrows() {
            let a = u[(i, j)].norm();
            if a > best_abs * (1.0 + 1e-12) {
                best_abs = a;
                best = u[(i, j)];
            }
        }
        if best_abs > 0.0 {
            let phase = best.conj() / best_abs;
            for i in 0..u.nrows() {
                u[(i, j)] *= phase;
            }
            for i in 0..v.nrows() {
                v[(i, j)] *= phase;
            }
        }
    }
    Ok(Svd { u, s, v })
}

pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(vec![]);
    }
    a.singular_values()
        .map_err(|e| Error::Decomposition(format!("svd: {e:?}")))
}

/// Spectral norm (largest singular value).
pub fn norm2(a: MatRef<'_, C64>) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Square-root factor `r` with `p ≈ r rᴴ` for Hermitian positive
/// semidefinite `p`. Eigenvalues below `1e-14·λ_max` are set to zero.
pub fn psd_factor(p: MatRef<'_, C64>) -> Result<CMat> {
    let n = p.nrows();
    let herm = Mat::from_fn(n, n, |i, j| (p[(i, j)] + p[(j, i)].conj()) * 0.5);
    let eig = herm
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("hermitian eigen: {e:?}")))?;
    let lam = eig.S().column_vector();
    let lmax = (0..n).map(|i| lam[i].re).fold(0.0, f64::max);
    let cut = 1e-14 * lmax;
    let u = eig.U();
    Ok(Mat::from_fn(n, n, |i, j| {
        let l = lam[j].re;
        if l <= cut {
            ZERO
        } else {
            u[(i, j)] * l.sqrt()
        }
    }))
}

/// Eigenvalues and eigenvectors of a general complex matrix.
pub fn eig(a: MatRef<'_, C64>) -> Result<(Vec<C64>, CMat)> {
    let dec = a
        .eigen()
        .map_err(|e| Error::Decomposition(format!("eigen: {e:?}")))?;
    let s = dec.S().column_vector();
    let vals = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, dec.U().to_owned()))
}

pub fn eigvals(a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    if a.nrows() == 0 {
        return Ok(vec![]);
    }
    a.eigenvalues()
        .map_err(|e| Error::Decomposition(format!("eigen: {e:?}")))
}

/// 2-norm condition number via singular values.
pub fn cond2(a: MatRef<'_, C64>) -> Result<f64> {
    let s = singular_values(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

/// Copies `src` into `dst` at offset `(i0, j0)`.
pub fn set_block(dst: &mut CMat, i0: usize, j0: usize, src: MatRef<'_, C64>) {
    for j in 0..src.ncols() {
        for i in 0..src.nrows() {
            dst[(i0 + i, j0 + j)] = src[(i, j)];
        }
    }
}
