//! Working models for the nuisance functions: participation `p̂`,
//! treatment `ê_a` and the individual outcome model `ĥ_a`.

mod logistic;
mod nuisance;
mod treatment;

pub use logistic::{
    fit_logistic_elastic_net, fit_logistic_mle, null_lambda, predict, FitDiagnostics, FitMethod, ProbabilityModel,
    SEPARATION_CAP,
};
pub(crate) use nuisance::fit_nuisance_on;
pub use nuisance::{fit_nuisance, FittedNuisance, ModelSpec, NuisanceConfig};
pub use treatment::{fit_treatment_model, TreatmentMode, TreatmentModel, TreatmentSpec};
