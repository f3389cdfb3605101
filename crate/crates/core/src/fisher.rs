//! Block partition of the Fisher information and the Schur-complement
//! quantities that drive the limiting quadratic form.
//!
//! With `I = [[A, B], [B^T, C]]` (tested block `A` is `r x r`), the limiting
//! statistic is `g(xi, eta) = (xi - D eta)^T U (xi - D eta)` where
//! `U = (A - B C^{-1} B^T)^{-1}` and `D = B C^{-1}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest condition number accepted for an SPD inversion.
pub const MAX_CONDITION: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-12;

/// The partitioned information matrix with its derived Schur quantities.
#[derive(Debug, Clone)]
pub struct FisherBlocks {
    pub full: DMatrix<f64>,
    pub full_inv: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c_block: DMatrix<f64>,
    /// `C^{-1}`; empty when `r = d`.
    pub c_inv: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// `max(|||U|||, |||D^T U D|||, |||D^T U|||)` in the L-infinity matrix norm.
    pub c: f64,
    pub r: usize,
}

impl FisherBlocks {
    pub fn dim(&self) -> usize {
        self.full.nrows()
    }

    pub fn nuisance_dim(&self) -> usize {
        self.dim() - self.r
    }
}

/// Maximum absolute row sum. Zero for an empty matrix.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// The constant `c(U, D)`.
pub fn schur_constant(u: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let dtu = d.transpose() * u;
    let dtud = &dtu * d;
    inf_norm(u).max(inf_norm(&dtud)).max(inf_norm(&dtu))
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Cholesky inverse of an SPD matrix with a condition-number guard.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let chol: Cholesky<f64, Dyn> =
        Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(what))?;
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite(what));
    }
    let cond = max / min;
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    Ok(chol.inverse())
}

/// Symmetric inverse square root `M^{-1/2}` of an SPD matrix.
pub fn spd_inverse_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite("information matrix"));
    }
    let scaled = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * scaled * eig.eigenvectors.transpose())
}

/// Split `info` into tested (`r` leading coordinates) and nuisance blocks.
pub fn partition_fisher(info: &DMatrix<f64>, r: usize) -> Result<FisherBlocks> {
    let dim = info.nrows();
    if info.ncols() != dim || dim == 0 {
        return Err(Error::DimensionMismatch(format!(
            "information matrix must be square and nonempty, got {}x{}",
            info.nrows(),
            info.ncols()
        )));
    }
    if r == 0 || r > dim {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= r <= d, got r = {r}, d = {dim}"
        )));
    }
    check_symmetric(info)?;
    let full_inv = spd_inverse(info, "information matrix")?;

    let q = dim - r;
    let a = info.view((0, 0), (r, r)).into_owned();
    let b = info.view((0, r), (r, q)).into_owned();
    let c_block = info.view((r, r), (q, q)).into_owned();
    let c_inv = spd_inverse(&c_block, "nuisance block C")?;
    let d = &b * &c_inv;
    let schur = &a - &d * b.transpose();
    let u = spd_inverse(&schur, "Schur complement A - B C^-1 B^T")?;
    let c = schur_constant(&u, &d);

    Ok(FisherBlocks {
        full: info.clone(),
        full_inv,
        a,
        b,
        c_block,
        c_inv,
        u,
        d,
        c,
        r,
    })
}

/// Both algebraic forms of the limiting statistic: `(g_full, g_schur)`.
pub fn quadratic_form_g(
    xi: &DVector<f64>,
    eta: &DVector<f64>,
    blocks: &FisherBlocks,
) -> Result<(f64, f64)> {
    if xi.len() != blocks.r || eta.len() != blocks.nuisance_dim() {
        return Err(Error::DimensionMismatch(format!(
            "xi has {} entries and eta {}, blocks expect {} and {}",
            xi.len(),
            eta.len(),
            blocks.r,
            blocks.nuisance_dim()
        )));
    }
    let w = DVector::from_iterator(blocks.dim(), xi.iter().chain(eta.iter()).copied());
    let full = w.dot(&(&blocks.full_inv * &w));
    let nuisance = if eta.is_empty() {
        0.0
    } else {
        eta.dot(&(&blocks.c_inv * eta))
    };
    let g_full = full - nuisance;

    let resid = xi - &blocks.d * eta;
    let g_schur = resid.dot(&(&blocks.u * &resid));
    Ok((g_full, g_schur))
}
