//! Complex dense linear-algebra helpers shared across the crate.
//!
//! Everything operates on `DMatrix<Complex<f64>>`. Row vectors are 1×F
//! matrices throughout the crate: a channel row `x` has covariance
//! `E[x† x]` (F×F), so Gaussian rows with covariance `A = B B†` are drawn
//! as `z B†` with `z` standard complex normal.

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn cone() -> C64 {
    C64::new(1.0, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// (A + A†)/2. Used to keep Monte-Carlo estimates of Hermitian quantities
/// exactly Hermitian before factorization.
pub fn hermitianize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn frob(a: &CMat) -> f64 {
    a.norm()
}

/// ‖a − b‖_F / ‖b‖_F (b is the reference).
pub fn rel_frob_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm()
}

/// F×F block (t, s) of a block matrix with F×F blocks.
pub fn get_block(a: &CMat, f: usize, t: usize, s: usize) -> CMat {
    a.view((t * f, s * f), (f, f)).into_owned()
}

pub fn set_block(a: &mut CMat, f: usize, t: usize, s: usize, val: &CMat) {
    a.view_mut((t * f, s * f), (f, f)).copy_from(val);
}

/// Lower-triangular Cholesky factor of a Hermitian positive semidefinite
/// matrix, A = L L†, tolerant of zero pivots.
///
/// Pivots within `[-neg_tol, clamp_tol]` (scaled by the largest diagonal
/// magnitude) are treated as exact zeros: the pivot and the rest of its
/// column are zeroed, which is exact for a PSD matrix whose rank deficiency
/// is real and bounded-error for Monte-Carlo noise of that size. A pivot
/// below `-neg_tol` means the input is genuinely indefinite and is reported
/// as an error carrying the offending index.
pub fn psd_cholesky(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "psd_cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = a
        .diagonal()
        .iter()
        .map(|d| d.re.abs())
        .fold(1.0_f64, f64::max);
    let clamp_tol = 1e-10 * scale;
    let neg_tol = 1e-8 * scale;

    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d < -neg_tol {
            return Err(Error::Indefinite {
                index: j,
                value: d,
                tol: neg_tol,
                hint: String::new(),
            });
        }
        if d <= clamp_tol {
            // semidefinite direction: pivot and column stay zero
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Strict Cholesky of a Hermitian positive definite matrix together with
/// log det A (real). Errors on non-PD input.
pub fn chol_logdet(a: &CMat) -> Result<(CMat, f64)> {
    let chol = nalgebra::Cholesky::new(a.clone())
        .ok_or_else(|| Error::NotPsd("Cholesky failed; matrix is not positive definite".into()))?;
    let l = chol.l();
    let logdet = 2.0 * l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    Ok((l, logdet))
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn pd_inverse(a: &CMat) -> Result<CMat> {
    let chol = nalgebra::Cholesky::new(a.clone())
        .ok_or_else(|| Error::NotPsd("cannot invert: matrix is not positive definite".into()))?;
    Ok(chol.inverse())
}

/// Solve A X = B for Hermitian positive definite A.
pub fn pd_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let chol = nalgebra::Cholesky::new(a.clone())
        .ok_or_else(|| Error::NotPsd("cannot solve: matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Eigendecomposition of a Hermitian matrix: (eigenvalues ascending, unitary V).
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let se = nalgebra::SymmetricEigen::new(hermitianize(a));
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let n = a.nrows();
    let mut v = CMat::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        v.column_mut(col).copy_from(&se.eigenvectors.column(i));
    }
    (vals, v)
}

/// Hermitian principal square root with small negative eigenvalues clamped
/// to zero. Eigenvalues below the negative tolerance are an error.
pub fn hermitian_sqrt(a: &CMat) -> Result<CMat> {
    let (vals, v) = hermitian_eigen(a);
    let scale = vals.iter().fold(1.0_f64, |m, &x| m.max(x.abs()));
    let tol = 1e-10 * scale;
    let mut d = CMat::zeros(a.nrows(), a.nrows());
    for (i, &lam) in vals.iter().enumerate() {
        if lam < -tol {
            return Err(Error::NotPsd(format!(
                "eigenvalue {lam:.3e} below -{tol:.3e} in matrix square root"
            )));
        }
        d[(i, i)] = C64::new(lam.max(0.0).sqrt(), 0.0);
    }
    Ok(&v * d * v.adjoint())
}

/// Hermitian principal inverse square root. Rank deficiency (smallest
/// eigenvalue at or below `rank_tol` times the largest) is an error.
pub fn hermitian_inv_sqrt(a: &CMat, rank_tol: f64) -> Result<CMat> {
    let (vals, v) = hermitian_eigen(a);
    let max_eig = vals.iter().fold(0.0_f64, |m, &x| m.max(x));
    let min_eig = vals.first().copied().unwrap_or(0.0);
    if min_eig <= rank_tol * max_eig.max(1e-300) {
        return Err(Error::RankDeficient { min_eig, max_eig });
    }
    let mut d = CMat::zeros(a.nrows(), a.nrows());
    for (i, &lam) in vals.iter().enumerate() {
        d[(i, i)] = C64::new(1.0 / lam.sqrt(), 0.0);
    }
    Ok(&v * d * v.adjoint())
}

/// Transform the rows of an n×F sample bank so its empirical second moment
/// (1/n)·bank†bank equals `target` exactly (on the range of `target`).
/// Zero rows stay zero, so mixture structure survives. This is a
/// moment-matching variance-reduction device: the returned bank differs from
/// the input by an O(n^{-1/2}) linear recoloring.
pub fn gram_match(bank: &CMat, target: &CMat) -> Result<CMat> {
    let n = bank.nrows() as f64;
    let gram = (bank.adjoint() * bank).unscale(n);
    // pseudo inverse square root of the empirical Gram
    let (vals, v) = hermitian_eigen(&gram);
    let scale = vals.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    if scale == 0.0 {
        // all-zero bank; only a zero target is reachable
        if frob(target) > 0.0 {
            return Err(Error::RankDeficient { min_eig: 0.0, max_eig: 0.0 });
        }
        return Ok(bank.clone());
    }
    let f = gram.nrows();
    let mut d = CMat::zeros(f, f);
    for (i, &lam) in vals.iter().enumerate() {
        if lam > 1e-12 * scale {
            d[(i, i)] = C64::new(1.0 / lam.sqrt(), 0.0);
        }
    }
    let inv_root = &v * d * v.adjoint();
    Ok(bank * inv_root * hermitian_sqrt(target)?)
}

/// Quadratic forms Re(r_n A r_n†) for every row r_n of R. A must be F×F.
pub fn row_quad_forms(r: &CMat, a: &CMat) -> Vec<f64> {
    let ra = r * a;
    (0..r.nrows())
        .map(|n| {
            let mut s = 0.0;
            for f in 0..r.ncols() {
                s += (ra[(n, f)] * r[(n, f)].conj()).re;
            }
            s
        })
        .collect()
}
