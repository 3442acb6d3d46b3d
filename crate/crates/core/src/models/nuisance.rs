//! Fitting the three working models on a dataset (or a subset of its
//! clusters, for cross-fitting).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::logistic::{fit_logistic_elastic_net, fit_logistic_mle, in_model, FitMethod, ProbabilityModel};
use super::treatment::{fit_treatment_model_on, TreatmentModel, TreatmentSpec};
use crate::data_model::{ArmLabel, StudyDataset};
use crate::error::{Error, Result};
use crate::features::{cluster_features, individual_features, FeatureMatrix, FeatureSpec};

/// Feature construction and fitting method of one working model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub features: FeatureSpec,
    pub method: FitMethod,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NuisanceConfig {
    pub participation: ModelSpec,
    pub treatment: TreatmentSpec,
    pub outcome: ModelSpec,
}

impl NuisanceConfig {
    /// Working-model tag for reports, e.g. `LR (MLE)`.
    pub fn tag(&self) -> String {
        let p = self.participation.method.tag();
        let o = self.outcome.method.tag();
        if p == o {
            p
        } else {
            format!("{p} / {o}")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedNuisance {
    pub participation: ProbabilityModel,
    pub treatment: TreatmentModel,
    /// One outcome model per arm, in catalog order.
    pub outcome_by_arm: Vec<(ArmLabel, ProbabilityModel)>,
    pub config: NuisanceConfig,
}

impl FittedNuisance {
    pub fn outcome_model(&self, arm: &ArmLabel) -> Option<&ProbabilityModel> {
        self.outcome_by_arm.iter().find(|(a, _)| a == arm).map(|(_, m)| m)
    }
}

fn fit_with(method: FitMethod, x: &FeatureMatrix, labels: &[f64], name: &str) -> Result<ProbabilityModel> {
    let fitted = match method {
        FitMethod::Mle => fit_logistic_mle(x, labels, None),
        FitMethod::ElasticNet { lambda, alpha } => fit_logistic_elastic_net(x, labels, lambda, alpha),
    };
    fitted.map_err(|e| in_model(e, name))
}

fn training_matrix(raw: &FeatureMatrix, rows: &[usize], standardize: bool) -> FeatureMatrix {
    let x = raw.select_rows(rows);
    if standardize {
        x.standardized()
    } else {
        x
    }
}

/// Fit every working model on all clusters of `ds`.
pub fn fit_nuisance(ds: &StudyDataset, config: &NuisanceConfig) -> Result<FittedNuisance> {
    let all: Vec<usize> = (0..ds.len()).collect();
    fit_nuisance_on(ds, config, &all)
}

/// Fit every working model using only the clusters listed in `train`.
///
/// The participation model is fit on the listed clusters with label `S`;
/// the treatment model on the listed randomized clusters; the outcome model
/// separately per arm on the individuals of that arm's listed randomized
/// clusters with label `Y_{j,i}`.
pub fn fit_nuisance_on(ds: &StudyDataset, config: &NuisanceConfig, train: &[usize]) -> Result<FittedNuisance> {
    let pspec = &config.participation.features;
    let raw = cluster_features(ds, &FeatureSpec { standardize: false, ..pspec.clone() })?;
    let x = training_matrix(&raw, train, pspec.standardize);
    let labels: Vec<f64> = train.iter().map(|&j| f64::from(u8::from(ds.clusters()[j].s))).collect();
    let participation = fit_with(config.participation.method, &x, &labels, "participation model")?;

    let arm_of = ds.arm_indices();
    for (k, arm) in ds.arms().iter().enumerate() {
        let count = train.iter().filter(|&&j| arm_of[j] == Some(k)).count();
        if count < 2 {
            return Err(Error::TooFewTrialClusters(arm.to_string()));
        }
    }

    let treatment = fit_treatment_model_on(ds, &config.treatment, train).map_err(|e| in_model(e, "treatment model"))?;

    let ospec = &config.outcome.features;
    let raw = individual_features(ds, &FeatureSpec { standardize: false, ..ospec.clone() })?;
    let mut in_train = alloc::vec![false; ds.len()];
    train.iter().for_each(|&j| in_train[j] = true);
    let mut outcome_by_arm = Vec::with_capacity(ds.arms().len());
    for (k, arm) in ds.arms().iter().enumerate() {
        let rows: Vec<usize> = raw
            .origins()
            .iter()
            .enumerate()
            .filter(|(_, &(j, _))| in_train[j] && arm_of[j] == Some(k))
            .map(|(r, _)| r)
            .collect();
        let labels: Vec<f64> = rows
            .iter()
            .map(|&r| {
                let (j, i) = raw.origins()[r];
                ds.clusters()[j].y.as_ref().expect("validated trial cluster")[i]
            })
            .collect();
        let x = training_matrix(&raw, &rows, ospec.standardize);
        let name = format!("outcome model for arm `{arm}`");
        let model = fit_with(config.outcome.method, &x, &labels, &name)?;
        outcome_by_arm.push((arm.clone(), model));
    }

    Ok(FittedNuisance { participation, treatment, outcome_by_arm, config: config.clone() })
}

impl ModelSpec {
    pub fn mle(features: FeatureSpec) -> Self {
        Self { features, method: FitMethod::Mle }
    }
}
