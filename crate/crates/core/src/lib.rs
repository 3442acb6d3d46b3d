//! Estimators for extending causal inferences from a cluster randomized trial
//! to a target population of trial-eligible clusters.
//!
//! The trial is nested in a cohort of `m` clusters. Every cluster contributes
//! cluster-level covariates `X` and an individual-level covariate matrix `W`;
//! only randomized clusters (`S = 1`) contribute an arm `A` and individual
//! outcomes `Y`. From that data this crate computes
//!
//! * the augmented inverse probability of participation weighting (AIPW)
//!   estimator of `E[Ȳ^a]` over the whole target population, which is
//!   consistent when either the participation model or the outcome model is
//!   correct,
//! * its non-robust relatives: unnormalized and normalized (Hajek) inverse
//!   probability weighting, the aggregated-data weighting estimator, the
//!   g-formula, and a trial-only baseline,
//! * the augmented inverse odds weighting estimator of `E[Ȳ^a | S = 0]` for
//!   the non-randomized clusters,
//!
//! together with influence-curve, cluster-bootstrap and cluster-robust
//! intervals, and a simulation harness with a Monte Carlo oracle.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration,
//! parallel execution and the command line live in the `ecrt` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod data_model;
pub mod error;
pub mod estimators;
pub mod features;
pub mod inference;
mod linalg;
pub mod models;
pub mod numeric;
pub mod rng;
pub mod simulation;

pub use data_model::{
    cluster_average_outcome, dataset_summary, validate_dataset, ArmLabel, ClusterRecord, DatasetSummary, StudyDataset,
};
pub use error::{Error, Result};
pub use estimators::{
    aipw_psi, compute_nuisance_estimates, contrast, crossfit_aipw_psi, crossfit_folds, crossfit_nuisance_estimates,
    gformula_psi, ipw_psi, ipw_psi_aggregated, transport_phi, trial_only_estimate, ClusterNuisance, EstimatorKind,
    NuisanceEstimates, PointEstimate, Target, TrialPooling, WeightDiagnostics,
};
pub use features::{cluster_features, individual_features, Aggregate, FeatureMatrix, FeatureSpec};
pub use inference::{
    bootstrap_sample, cluster_bootstrap_interval, cluster_robust_trial_contrast, cluster_robust_trial_interval,
    influence_curve_interval, normal_quantile, summarize_bootstrap, BootstrapConfig, IntervalEstimate, IntervalMethod,
};
pub use models::{
    fit_logistic_elastic_net, fit_logistic_mle, fit_nuisance, fit_treatment_model, predict, FitMethod, FittedNuisance,
    ModelSpec, NuisanceConfig, ProbabilityModel, TreatmentMode, TreatmentModel, TreatmentSpec,
};
pub use simulation::{
    generate_dataset, generate_replicate, oracle_truth, run_scenario, DgpConfig, OracleTruth, Scenario, ScenarioResult,
};
