//! Limiting distribution of `(alpha_mult, Sigma_d, Sigma_nd)`.
//!
//! The estimators are smooth functions `g` of the characteristic function
//! at a fixed set of points ([`EcfGrid`]). The empirical moments are
//! asymptotically normal with covariance [`omega`], so the delta method gives
//! `sqrt(n) (g(theta_n) - g(theta0)) -> N(0, G Omega G')`.

mod delta;
mod grid;
mod jacobian;
mod omega;

pub use delta::{
    delta_covariance, estimate_labels, normal_critical_value, ConfidenceInterval, DeltaReport,
    JacMode, ASSEMBLY_TOL,
};
pub use grid::{build_grid, EcfGrid, MomentVector};
pub use jacobian::{
    block_name, compare_blocks, g_map, g_map_counted, jacobian_audit, jacobian_closed, jacobian_fd,
    rows_max_rel, BlockAudit, ClosedForm, FdJacobian, JacobianAudit, AUDIT_TOL, FD_STEP,
    RICHARDSON_TOL, SMALL_ENTRY,
};
pub use omega::{omega, OmegaMatrix};
