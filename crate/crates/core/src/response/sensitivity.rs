use nalgebra::DMatrix;

use super::extrema::{ExtremumKind, ExtremumMatrix};
use super::residues::ResidueSet;
use crate::netmodel::SparseEntry;
use crate::spectral::{eig_sensitivity, ModalData};
use crate::{Result, C64};

/// Relative curvature below which an extremum is treated as flat and its
/// time sensitivity is dropped.
const FLAT_CURVATURE: f64 = 1e-9;

/// First-order changes of eigenvalues and residues for one parameter.
#[derive(Debug, Clone)]
pub struct ResidueSensitivity {
    pub dlambda: Vec<C64>,
    pub dresidue: Vec<DMatrix<C64>>,
}

impl ResidueSensitivity {
    /// `dk_i/dα = -(dr_i λ_i - r_i dλ_i) / λ_i²`.
    pub fn dstep_coefficient(&self, res: &ResidueSet, i: usize) -> DMatrix<C64> {
        let l = res.eigenvalues[i];
        let dl = self.dlambda[i];
        self.dresidue[i].zip_map(&res.residues[i], |dr, r| -(dr * l - r * dl) / (l * l))
    }
}

/// Extrema where the peak-time term was dropped because of vanishing curvature.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SensitivityFlags {
    pub flat_extrema: usize,
}

/// `dλ_i/dα` and `dr_i/dα = C d(u_i l_i)/dα B` for all modes.
///
/// Only the projections `C u_j` and `l_j B` enter, so the cost per parameter
/// is `O(N² (m + d))` rather than `O(N³)`.
pub fn residue_sensitivity(modal: &ModalData, res: &ResidueSet, da: &SparseEntry) -> Result<ResidueSensitivity> {
    modal.check_all_separated()?;
    let n = modal.len();
    let (m, d) = (res.outputs(), res.inputs());
    let dlambda = eig_sensitivity(modal, da);
    let lambda = &modal.eigenvalues;

    // c_ij = p_j q_i / (λ_i - λ_j) with p_j = w l_j[row], q_i = u_i[col].
    let p: Vec<C64> = (0..n).map(|j| modal.left[(j, da.row)] * da.value).collect();
    let q: Vec<C64> = (0..n).map(|i| modal.right[(da.col, i)]).collect();
    let zero = C64::new(0.0, 0.0);

    let mut dresidue = Vec::with_capacity(n);
    for i in 0..n {
        let mut a = nalgebra::DVector::from_element(m, zero);
        let mut b = nalgebra::RowDVector::from_element(d, zero);
        for j in (0..n).filter(|&j| j != i) {
            let gap = lambda[i] - lambda[j];
            let c_ij = p[j] * q[i] / gap;
            let c_ji = -p[i] * q[j] / gap;
            a += res.cu.column(j) * c_ij;
            b += res.lb.row(j) * c_ji;
        }
        dresidue.push(&a * res.lb.row(i) - res.cu.column(i) * &b);
    }
    Ok(ResidueSensitivity { dlambda, dresidue })
}

/// Per-pair sums needed by the extremum sensitivities at time `t`.
struct PairTerms {
    /// `y⁽ⁿ⁾(t)` for n = 1, 2, 3.
    y1: f64,
    y2: f64,
    y3: f64,
    /// `∂y⁽ⁿ⁾/∂α` at frozen `t` for n = 0..=3.
    d0: f64,
    d1: f64,
    d2: f64,
    d3: f64,
    /// `Σ |r_i| |λ_i|` and `Σ |r_i| |λ_i|²`, curvature scales.
    scale2: f64,
    scale3: f64,
}

fn pair_terms(res: &ResidueSet, sens: &ResidueSensitivity, o: usize, j: usize, t: f64) -> PairTerms {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let (mut y1, mut y2, mut y3) = (zero, zero, zero);
    let (mut d0, mut d1, mut d2, mut d3) = (zero, zero, zero, zero);
    let (mut scale2, mut scale3) = (0.0, 0.0);
    for i in 0..res.modes() {
        let l = res.eigenvalues[i];
        let dl = sens.dlambda[i];
        let r = res.residues[i][(o, j)];
        let dr = sens.dresidue[i][(o, j)];
        let e = (l * t).exp();
        let k = -r / l;
        let dk = -(dr * l - r * dl) / (l * l);

        y1 += r * e;
        y2 += r * l * e;
        y3 += r * l * l * e;
        d0 += dk * (one - e) - k * dl * t * e;
        d1 += (dr + r * t * dl) * e;
        d2 += (dr * l + r * dl + r * t * l * dl) * e;
        d3 += (dr * l * l + r * l * dl * 2.0 + r * t * l * l * dl) * e;
        scale2 += r.norm() * l.norm();
        scale3 += r.norm() * l.norm_sqr();
    }
    PairTerms { y1: y1.re, y2: y2.re, y3: y3.re, d0: d0.re, d1: d1.re, d2: d2.re, d3: d3.re, scale2, scale3 }
}

/// `dMp/dα`, including the first-order drift of the peak time obtained by
/// differentiating the Newton update `t - ẏ/ÿ`.
pub fn overshoot_sensitivity(
    res: &ResidueSet,
    sens: &ResidueSensitivity,
    extrema: &ExtremumMatrix,
) -> (DMatrix<f64>, SensitivityFlags) {
    let mut flags = SensitivityFlags::default();
    let out = DMatrix::from_fn(extrema.outputs, extrema.inputs, |o, j| {
        let ext = extrema.get(o, j);
        match ext.kind {
            ExtremumKind::Steady | ExtremumKind::Initial => {
                let dc: C64 = (0..res.modes())
                    .map(|i| {
                        let l = res.eigenvalues[i];
                        let r = res.residues[i][(o, j)];
                        -(sens.dresidue[i][(o, j)] * l - r * sens.dlambda[i]) / (l * l)
                    })
                    .sum();
                if ext.kind == ExtremumKind::Steady {
                    ext.sign * dc.re
                } else {
                    0.0
                }
            }
            ExtremumKind::Interior => {
                let p = pair_terms(res, sens, o, j, ext.time);
                let dt = if p.y2.abs() > FLAT_CURVATURE * p.scale2 {
                    -(p.d1 * p.y2 - p.y1 * p.d2) / (p.y2 * p.y2)
                } else {
                    flags.flat_extrema += 1;
                    0.0
                };
                // d/dα y(t_p(α)) = ∂y/∂α + ẏ(t_p) dt_p/dα
                ext.sign * (p.d0 + p.y1 * dt)
            }
        }
    });
    (out, flags)
}

/// `dR/dα`, including the drift of the RoCoF time from the derivative of
/// the Newton update `t - ÿ/y⃛`; onset extrema use the frozen-time value.
pub fn rocof_sensitivity(
    res: &ResidueSet,
    sens: &ResidueSensitivity,
    extrema: &ExtremumMatrix,
) -> (DMatrix<f64>, SensitivityFlags) {
    let mut flags = SensitivityFlags::default();
    let out = DMatrix::from_fn(extrema.outputs, extrema.inputs, |o, j| {
        let ext = extrema.get(o, j);
        let p = pair_terms(res, sens, o, j, ext.time);
        match ext.kind {
            ExtremumKind::Initial => ext.sign * p.d1,
            // ẏ → 0 as t → ∞, so a steady RoCoF extremum is identically zero.
            ExtremumKind::Steady => 0.0,
            ExtremumKind::Interior => {
                let dt = if p.y3.abs() > FLAT_CURVATURE * p.scale3 {
                    -(p.d2 * p.y3 - p.y2 * p.d3) / (p.y3 * p.y3)
                } else {
                    flags.flat_extrema += 1;
                    0.0
                };
                ext.sign * (p.d1 + p.y2 * dt)
            }
        }
    });
    (out, flags)
}

/// Derivative of `|y(t)|` with the peak time held fixed.
pub fn frozen_overshoot_derivative(
    res: &ResidueSet,
    sens: &ResidueSensitivity,
    extrema: &ExtremumMatrix,
) -> DMatrix<f64> {
    DMatrix::from_fn(extrema.outputs, extrema.inputs, |o, j| {
        let ext = extrema.get(o, j);
        ext.sign * pair_terms(res, sens, o, j, ext.time).d0
    })
}
