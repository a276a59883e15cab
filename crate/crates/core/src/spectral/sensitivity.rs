use nalgebra::DMatrix;

use super::ModalData;
use crate::netmodel::SparseEntry;
use crate::{Error, Result, C64};

/// `ζ = -σ / |λ|` for an oscillatory eigenvalue `λ = σ + iω`, `ω > 0`.
pub fn damping_ratio(lambda: C64) -> Result<f64> {
    if !(lambda.im > 0.0) {
        return Err(Error::NotOscillatory { re: lambda.re, im: lambda.im });
    }
    Ok(-lambda.re / lambda.norm())
}

/// `dζ/dα = ω (σ dω/dα - ω dσ/dα) / |λ|³`.
pub fn damping_sensitivity(lambda: C64, dlambda: C64) -> Result<f64> {
    if !(lambda.im > 0.0) {
        return Err(Error::NotOscillatory { re: lambda.re, im: lambda.im });
    }
    let (s, w) = (lambda.re, lambda.im);
    Ok(w * (s * dlambda.im - w * dlambda.re) / lambda.norm_sqr().powf(1.5))
}

/// `dλ_i/dα = l_i (∂A/∂α) u_i` for every mode, with a one-entry `∂A/∂α`.
pub fn eig_sensitivity(modal: &ModalData, da: &SparseEntry) -> Vec<C64> {
    (0..modal.len()).map(|i| modal.left[(i, da.row)] * modal.right[(da.col, i)] * da.value).collect()
}

/// `P d(u_i l_i)/dα Q` for mode `i`, where `P` selects output rows and `Q`
/// input columns (pass identities for the full dyad derivative).
///
/// Uses `d(u_i l_i)/dα = Σ_{j≠i} [u_j c_ij l_i - u_i c_ji l_j]` with
/// `c_ij = l_j (∂A/∂α) u_i / (λ_i - λ_j)`, so only `P u_j` and `l_j Q` are
/// ever formed.
pub fn dyad_derivative(
    modal: &ModalData,
    da: &SparseEntry,
    i: usize,
    rows: &DMatrix<f64>,
    cols: &DMatrix<f64>,
) -> Result<DMatrix<C64>> {
    modal.check_separated(i)?;
    let n = modal.len();
    let rows_c = rows.map(|v| C64::new(v, 0.0));
    let cols_c = cols.map(|v| C64::new(v, 0.0));
    let pu = &rows_c * &modal.right; // m × n, column j = P u_j
    let lq = &modal.left * &cols_c; // n × d, row j = l_j Q

    let lambda = &modal.eigenvalues;
    let zero = C64::new(0.0, 0.0);
    let mut a = nalgebra::DVector::from_element(rows.nrows(), zero);
    let mut b = nalgebra::RowDVector::from_element(cols.ncols(), zero);
    for j in (0..n).filter(|&j| j != i) {
        let gap = lambda[i] - lambda[j];
        let c_ij = modal.left[(j, da.row)] * modal.right[(da.col, i)] * da.value / gap;
        let c_ji = -modal.left[(i, da.row)] * modal.right[(da.col, j)] * da.value / gap;
        a += pu.column(j) * c_ij;
        b += lq.row(j) * c_ji;
    }
    Ok(&a * lq.row(i) - pu.column(i) * &b)
}
