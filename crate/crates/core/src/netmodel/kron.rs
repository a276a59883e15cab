use nalgebra::DMatrix;

use crate::{Error, Result};

/// Largest admissible 2-norm condition number of the eliminated block.
pub const KRON_CONDITION_LIMIT: f64 = 1e12;

/// Schur complement `A11 - A12 A22⁻¹ A21`, eliminating the algebraic
/// variables of `[A11 A12; A21 A22]`.
pub fn kron_reduce(
    a11: &DMatrix<f64>,
    a12: &DMatrix<f64>,
    a21: &DMatrix<f64>,
    a22: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let k = a22.nrows();
    if a22.ncols() != k
        || a12.nrows() != a11.nrows()
        || a12.ncols() != k
        || a21.nrows() != k
        || a21.ncols() != a11.ncols()
    {
        return Err(Error::invalid("kron reduction", "inconsistent block dimensions"));
    }
    if k == 0 {
        return Ok(a11.clone());
    }

    let singular = a22.clone().singular_values();
    let smax = singular.max();
    let smin = singular.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= KRON_CONDITION_LIMIT) {
        return Err(Error::SingularAlgebraicBlock { condition });
    }

    let x = a22.clone().lu().solve(a21).ok_or(Error::SingularAlgebraicBlock { condition })?;
    Ok(a11 - a12 * x)
}
