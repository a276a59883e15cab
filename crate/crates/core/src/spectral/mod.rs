//! Dense eigen-analysis and first-order eigen-sensitivities.

mod eigen;
mod sensitivity;

pub use eigen::{eigensolve, ModalData, DEGENERACY_TOLERANCE};
pub use sensitivity::{damping_ratio, damping_sensitivity, dyad_derivative, eig_sensitivity};
