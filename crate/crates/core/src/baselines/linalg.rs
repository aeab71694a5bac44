//! Thin wrappers over faer for the factorizations the baselines need.

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::{c64, Mat, Side};

use crate::error::{Error, Result};

pub(crate) struct ThinSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

pub(crate) fn thin_svd(a: &Mat<f64>) -> Result<ThinSvd> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("svd did not converge: {e:?}")))?;
    let s = svd.S().column_vector().iter().copied().collect();
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s,
        v: svd.V().to_owned(),
    })
}

/// Eigenvalues and right eigenvectors (columns) of a real square matrix.
pub(crate) fn eig(a: &Mat<f64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let e = a
        .eigen()
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let values = e.S().column_vector().iter().copied().collect();
    Ok((values, e.U().to_owned()))
}

pub(crate) fn eigenvalues(a: &Mat<f64>) -> Result<Vec<c64>> {
    a.eigenvalues()
        .map_err(|e| Error::Numeric(format!("eigenvalue solve failed: {e:?}")))
}

/// Least-squares solution of `a x = b`.
pub(crate) fn lstsq(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    a.qr().solve_lstsq(b)
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub(crate) fn spd_solve(a: &Mat<f64>, b: &Mat<f64>) -> Result<Mat<f64>> {
    let llt = a.llt(Side::Lower).map_err(|e| {
        Error::Numeric(format!("normal equations are not positive definite: {e:?}"))
    })?;
    Ok(llt.solve(b))
}

pub(crate) fn to_complex(a: &Mat<f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}
