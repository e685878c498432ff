//! Simulation and characteristic-function based estimation for
//! multivariate sub-Gaussian alpha-stable laws.
//!
//! A law is described by [`StableParams`]: the tail index `alpha`, a
//! location `mu` and a PSD scale matrix `Sigma` stored in
//! [`PackedSymmetric`] form. [`sampler`] draws from it, [`estimators`]
//! recovers the parameters from a [`SampleMatrix`], [`asymptotics`] gives
//! delta-method standard errors and [`montecarlo`] runs replication
//! studies.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases fix the scalar to `f64`.

// `!(x > 0)` style guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod charfun;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod montecarlo;
pub mod packed;
pub mod params;
pub mod sampler;
pub mod scalar;

pub use asymptotics::{delta_covariance, DeltaReport, JacMode};
pub use charfun::{cf_theoretical, ecf, safe_log_modulus, CharacteristicFunction, ComplexValue};
pub use error::{Error, Result};
pub use estimators::{
    alpha_mult, alpha_press, alpha_single, estimate_all, mu_estimate, sigma_diag, sigma_offdiag,
    AlphaMethod, EstimateOptions, EstimationReport, FrequencyPair, MuConfig, MuScale,
};
pub use linalg::Matrix;
pub use montecarlo::{emit_table, preset, run_experiment, ExperimentSpec, TableFormat};
pub use packed::{pack_index, unpack_index, PackedSymmetric};
pub use params::{SampleMatrix, StableParams};
pub use sampler::{sample_positive_stable, sample_subgaussian, RngSpec};
pub use scalar::Real;

pub type StableParams64 = StableParams<f64>;
pub type SampleMatrix64 = SampleMatrix<f64>;
pub type PackedSymmetric64 = PackedSymmetric<f64>;
pub type FrequencyPair64 = FrequencyPair<f64>;
pub type EstimationReport64 = EstimationReport<f64>;
pub type Matrix64 = Matrix<f64>;
pub type ExperimentSpec64 = ExperimentSpec<f64>;
pub type DeltaReport64 = DeltaReport<f64>;
