//! Modal step responses, overshoot/RoCoF extrema and their gain sensitivities.
//!
//! With residues `r_i = C u_i l_i B` and step coefficients `k_i = -r_i/λ_i`
//! the unit-step response is `y(t) = Σ k_i (1 - e^{λ_i t})`, which equals
//! `C A⁻¹ (e^{At} - I) B`, and its derivatives are
//! `y⁽ⁿ⁾(t) = Σ λ_i^{n-1} r_i e^{λ_i t}` for `n ≥ 1`.

mod extrema;
mod oracle;
mod residues;
mod sensitivity;

pub use extrema::{find_overshoot, find_rocof, search_grid, Extremum, ExtremumKind, ExtremumMatrix, SearchGrid};
pub use oracle::{simulate_oracle, simulate_system, OracleTrajectory};
pub use residues::{residues, step_response, PairResponse, ResidueSet};
pub use sensitivity::{
    frozen_overshoot_derivative, overshoot_sensitivity, residue_sensitivity, rocof_sensitivity, ResidueSensitivity,
    SensitivityFlags,
};
