use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::netmodel::{
    attach_devices, build_base_system, system_derivative, DeviceGains, LinearSystem, ParamId, PowerSystemCase,
};
use crate::response::{
    find_overshoot, find_rocof, overshoot_sensitivity, residue_sensitivity, residues, rocof_sensitivity, ExtremumMatrix,
};
use crate::spectral::{damping_ratio, damping_sensitivity, eig_sensitivity, eigensolve};
use crate::Result;

/// Damping of one oscillatory mode (positive imaginary part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDamping {
    pub re: f64,
    pub im: f64,
    pub zeta: f64,
    /// `dζ/dα` in parameter order; empty for a metrics-only evaluation.
    pub sensitivity: Vec<f64>,
}

/// Time-domain and modal performance of one gain setting.
///
/// Overshoots are in Hz and RoCoF values in Hz/s. Sensitivity matrices
/// are stored per parameter, row-major over (output, disturbance) like
/// the extremum matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub gains: DeviceGains,
    pub params: Vec<ParamId>,
    pub modes: Vec<ModeDamping>,
    /// Smallest damping ratio, or 1 when no mode oscillates.
    pub zeta_min: f64,
    pub overshoot: ExtremumMatrix,
    pub rocof: ExtremumMatrix,
    pub s_inf: f64,
    pub r_inf: f64,
    /// Mean overshoot and mean RoCoF over all pairs.
    pub s1: f64,
    pub r1: f64,
    pub d_overshoot: Vec<Vec<f64>>,
    pub d_rocof: Vec<Vec<f64>>,
    /// Extrema whose peak-time drift was dropped for lack of curvature.
    pub flat_extrema: usize,
}

impl MetricBundle {
    pub fn has_sensitivities(&self) -> bool {
        self.params.is_empty() || !self.d_rocof.is_empty()
    }

    pub fn pairs(&self) -> usize {
        self.rocof.entries.len()
    }
}

/// Builds closed-loop systems and their metrics for one case. The
/// device-free model is assembled once.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub case: PowerSystemCase,
    pub base: LinearSystem,
}

impl Evaluator {
    pub fn new(case: &PowerSystemCase) -> Result<Self> {
        Ok(Evaluator { case: case.clone(), base: build_base_system(case)? })
    }

    pub fn system(&self, gains: &DeviceGains) -> Result<LinearSystem> {
        attach_devices(&self.base, &self.case, gains)
    }

    /// Metrics together with all first-order sensitivities.
    pub fn evaluate(&self, gains: &DeviceGains) -> Result<MetricBundle> {
        self.run(gains, true)
    }

    /// Metrics only, skipping every derivative.
    pub fn metrics(&self, gains: &DeviceGains) -> Result<MetricBundle> {
        self.run(gains, false)
    }

    fn run(&self, gains: &DeviceGains, with_sensitivities: bool) -> Result<MetricBundle> {
        let sys = self.system(gains)?;
        let modal = eigensolve(&sys.a)?;
        let res = residues(&modal, &sys.scaled_input(), &sys.c)?;
        let overshoot = find_overshoot(&res)?;
        let rocof = find_rocof(&res)?;
        let params: Vec<ParamId> = sys.params().collect();

        let oscillatory = modal.oscillatory_modes();
        let mut modes: Vec<ModeDamping> = oscillatory
            .iter()
            .map(|&i| {
                let l = modal.eigenvalues[i];
                Ok(ModeDamping { re: l.re, im: l.im, zeta: damping_ratio(l)?, sensitivity: Vec::new() })
            })
            .collect::<Result<_>>()?;

        let mut d_overshoot = Vec::new();
        let mut d_rocof = Vec::new();
        let mut flat_extrema = 0;
        if with_sensitivities {
            for &param in &params {
                let da = system_derivative(&sys, param)?;
                let sens = residue_sensitivity(&modal, &res, &da)?;
                let dl = eig_sensitivity(&modal, &da);
                for (mode, &i) in modes.iter_mut().zip(&oscillatory) {
                    mode.sensitivity.push(damping_sensitivity(modal.eigenvalues[i], dl[i])?);
                }
                let (dmp, f1) = overshoot_sensitivity(&res, &sens, &overshoot);
                let (dr, f2) = rocof_sensitivity(&res, &sens, &rocof);
                flat_extrema += f1.flat_extrema + f2.flat_extrema;
                d_overshoot.push(row_major(&dmp).into_iter().map(|v| v / TAU).collect());
                d_rocof.push(row_major(&dr).into_iter().map(|v| v / TAU).collect());
            }
        }

        let overshoot = to_hz(overshoot);
        let rocof = to_hz(rocof);
        let zeta_min = modes.iter().map(|m| m.zeta).fold(1.0, f64::min);
        Ok(MetricBundle {
            gains: gains.clone(),
            params,
            modes,
            zeta_min,
            s_inf: overshoot.max(),
            r_inf: rocof.max(),
            s1: overshoot.mean(),
            r1: rocof.mean(),
            overshoot,
            rocof,
            d_overshoot,
            d_rocof,
            flat_extrema,
        })
    }
}

/// Convenience wrapper building an [`Evaluator`] for a single evaluation.
pub fn evaluate(case: &PowerSystemCase, gains: &DeviceGains) -> Result<MetricBundle> {
    Evaluator::new(case)?.evaluate(gains)
}

fn row_major(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|o| (0..m.ncols()).map(move |j| m[(o, j)])).collect()
}

// Outputs are scaled by ω0 in rad/s; report them in Hz.
fn to_hz(mut m: ExtremumMatrix) -> ExtremumMatrix {
    for e in &mut m.entries {
        e.value /= TAU;
    }
    m
}
