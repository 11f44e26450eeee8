//! Interacting-particle engine for entropy-regularized optimization over
//! probability measures: a cloud of N particles follows the noisy descent
//!
//!   X_{k+1}^i = X_k^i - eta_k v_k^i + sqrt(2 lambda eta_k) xi_k^i,
//!
//! where v_k^i estimates the gradient of the first variation of a convex
//! functional at the empirical measure of the cloud. The crate provides the
//! particle state with counter-based (fully reproducible) noise, four model
//! functionals, full / mini-batch / variance-reduced drift estimators, the
//! closed-form convergence diagnostics, and the brute-force oracles used to
//! cross-check every analytic path.

pub mod assignment;
pub mod diagnostics;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod functionals;
mod linalg;
pub mod models;
pub mod oracle;

pub use ensemble::{
    gaussian_noise, init_ensemble, second_moment, InitSpec, NoiseSource, ParticleEnsemble, Stream,
};
pub use error::{MfldError, Result};
pub use estimators::{
    draw_batch, sgd_drift, svrg_drift, variance_probe, BatchMode, EstimatorConfig, EstimatorKind,
    SvrgState,
};
pub use functionals::{
    check_assumptions, full_drift, reg_grad, AssumptionInputs, AssumptionReport,
    MeanFieldFunctional, ModelConstants, Regularizer, WeightedCloud,
};

pub use dynamics::{
    check_eta, run, schedule_eta, step, DiagnosticsSet, DriftSource, DynamicsParams, EtaWarnings,
    RunOutput, Schedule, TraceRecord,
};
