//! Numerical tolerances shared by the solvers and certificate checks.

use serde::{Deserialize, Serialize};

/// Every tolerance used across the crate, with the defaults the checks are
/// calibrated against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Jacobi stops once the off-diagonal Frobenius norm is below this
    /// fraction of the Frobenius norm of the input.
    pub jacobi_offdiag_rel: f64,
    pub jacobi_max_sweeps: usize,
    /// Minimum eigenvalue accepted as PSD, relative to `‖Q‖_max`.
    pub psd_rel: f64,
    /// Eigenvalues with `|λ| ≤ nullspace_rel · max(1, λ_max)` count as zero.
    pub nullspace_rel: f64,
    /// `Q·1_a = 0` check, relative to `‖Q‖_max`.
    pub q_ones_rel: f64,
    /// Dual-objective identity check (relative).
    pub dual_objective_rel: f64,
    /// Strict inequalities on squared distances (distance dominance).
    pub strict_sq_dist: f64,
    /// Entry-to-value-set distance accepted as integral.
    pub integrality: f64,
    /// Small margin added on top of `z*` when building the SDP certificate,
    /// relative to `1 + z*`.
    pub z_margin_rel: f64,
    /// Lower bound accepted on entries of β, relative to `max(1, ‖D‖_max)`.
    pub beta_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            jacobi_offdiag_rel: 1e-12,
            jacobi_max_sweeps: 100,
            psd_rel: 1e-8,
            nullspace_rel: 1e-7,
            q_ones_rel: 1e-8,
            dual_objective_rel: 1e-8,
            strict_sq_dist: 1e-10,
            integrality: 1e-6,
            z_margin_rel: 1e-6,
            beta_rel: 1e-10,
        }
    }
}
