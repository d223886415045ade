//! Numerical toolkit for Gibbsianness of transformed mean-field models.
//!
//! A mean-field spin system with interaction Φ(ν) = F(ν[g]) is pushed through
//! a single-site kernel k(σ, η). The crate solves the constrained mean-field
//! equation for the first layer given the empirical measure ν′ of the second,
//! evaluates the associated rate functions, assembles contraction constants
//! that certify uniqueness, computes the limiting single-site kernel γ′₁ of the
//! transformed system and scans for points where it fails to be defined.
//! Finite-N exact sums for Ising spins provide ground truth.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cflm;
pub mod error;
pub mod gibbs;
pub mod interaction;
pub mod kernels;
pub mod models;
pub mod oracle;
pub mod parallel;
pub mod quadrature;
pub mod spinspace;

pub use cflm::{
    cflpk_apply, consistency_residual, fixed_point, j_constrained, multistart, psi, psi_homogeneous,
    transformed_interaction, transformed_rate, ConstrainedState, FixedPointReport, MultistartResult, SearchParams,
    SolverParams, TwoLayerModel,
};
pub use error::{Error, Result};
pub use gibbs::{bad_point_scan, certify, continuity_check, gamma1_prime, Certificate, ScanParams, ScanTable};
pub use interaction::{
    compute_constants, ClosureFunction, Interaction, InteractionConstants, MeanFieldFunction, PSpin, QuadraticCoupling,
};
pub use kernels::{
    circle_heat_kernel, coarse_grain_kernel, rho_alpha, rho_alpha_k, sphere_heat_kernel, spin_flip_kernel, Kernel,
    Partition,
};
pub use models::{CoarseGrainPreset, IsingPSpin, ModelPreset, Rotator};
pub use oracle::{convergence_study, grid_minimize_psi_tau, ising_exact_conditional, FiniteNSpec};
pub use spinspace::{
    make_circle, make_sphere, moment_vector, relative_entropy, variational_distance, Measure, Observables, SpinSpace,
};
