//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//! level = 0.95
//! percent = true
//!
//! [data]
//! clusters = "clusters.csv"
//! individuals = "individuals.csv"
//!
//! [nuisance.participation]
//! method = "mle"
//!
//! [nuisance.treatment]
//! mode = "known"
//! probabilities = { control = 0.5, treated = 0.5 }
//!
//! [estimation]
//! estimators = ["trial_only", "hajek", "g_formula", "aipw", "transport"]
//! contrasts = [["treated", "control"]]
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ecrt_core::simulation::{DgpConfig, Scenario};
use ecrt_core::{
    Aggregate, ArmLabel, EstimatorKind, FeatureSpec, FitMethod, IntervalMethod, ModelSpec, NuisanceConfig,
    StudyDataset, TreatmentMode, TreatmentSpec, TrialPooling,
};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub percent: bool,
    pub format: Option<OutputFormat>,
    pub output: Option<PathBuf>,
    pub data: Option<DataSection>,
    pub dgp: Option<DgpConfig>,
    #[serde(default)]
    pub nuisance: NuisanceSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub clusters: PathBuf,
    pub individuals: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Mle,
    ElasticNet,
    Lasso,
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub method: MethodName,
    pub lambda: Option<f64>,
    /// Elastic-net mixing weight; 1 is the lasso.
    pub alpha: Option<f64>,
    #[serde(default = "yes")]
    pub x: bool,
    #[serde(default = "yes")]
    pub w_mean: bool,
    /// Individual covariates `W_i` (outcome model only).
    pub w_individual: Option<bool>,
    pub standardize: Option<bool>,
}

fn yes() -> bool {
    true
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            method: MethodName::Mle,
            lambda: None,
            alpha: None,
            x: true,
            w_mean: true,
            w_individual: None,
            standardize: None,
        }
    }
}

impl ModelSection {
    fn fit_method(&self, name: &str) -> Result<FitMethod> {
        let penalty = || {
            self.lambda
                .filter(|l| l.is_finite() && *l >= 0.0)
                .ok_or_else(|| CliError::Config(format!("{name}: a penalized fit needs lambda >= 0")))
        };
        Ok(match self.method {
            MethodName::Mle => FitMethod::Mle,
            MethodName::Lasso => FitMethod::ElasticNet { lambda: penalty()?, alpha: 1.0 },
            MethodName::Ridge => FitMethod::ElasticNet { lambda: penalty()?, alpha: 0.0 },
            MethodName::ElasticNet => {
                let alpha = self
                    .alpha
                    .filter(|a| (0.0..=1.0).contains(a))
                    .ok_or_else(|| CliError::Config(format!("{name}: elastic_net needs alpha in [0, 1]")))?;
                FitMethod::ElasticNet { lambda: penalty()?, alpha }
            }
        })
    }

    fn features(&self, p: usize, individual: bool) -> FeatureSpec {
        FeatureSpec {
            use_x: self.x,
            w_aggregates: if self.w_mean { vec![Aggregate::Mean; p] } else { Vec::new() },
            include_individual: individual,
            standardize: self.standardize.unwrap_or(self.method != MethodName::Mle),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentSection {
    pub mode: Option<TreatmentMode>,
    /// Known randomization probabilities by arm.
    #[serde(default)]
    pub probabilities: BTreeMap<String, f64>,
    #[serde(default)]
    pub x: bool,
    #[serde(default)]
    pub w_mean: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceSection {
    #[serde(default)]
    pub participation: ModelSection,
    #[serde(default)]
    pub outcome: ModelSection,
    #[serde(default)]
    pub treatment: TreatmentSection,
}

impl NuisanceSection {
    /// Working-model configuration for a dataset with `p` individual covariates.
    pub fn build(&self, p: usize) -> Result<NuisanceConfig> {
        if self.participation.w_individual == Some(true) {
            return Err(CliError::Config("participation: the participation model is cluster-level".to_string()));
        }
        let participation = ModelSpec {
            features: self.participation.features(p, false),
            method: self.participation.fit_method("participation")?,
        };
        let outcome = ModelSpec {
            features: self.outcome.features(p, self.outcome.w_individual.unwrap_or(true)),
            method: self.outcome.fit_method("outcome")?,
        };
        let t = &self.treatment;
        let mode =
            t.mode.unwrap_or(if t.probabilities.is_empty() { TreatmentMode::Empirical } else { TreatmentMode::Known });
        if mode == TreatmentMode::Known && t.probabilities.is_empty() {
            return Err(CliError::Config("treatment: known mode needs probabilities".to_string()));
        }
        let known =
            t.probabilities.iter().map(|(a, p)| Ok((ArmLabel::new(a.as_str())?, *p))).collect::<Result<Vec<_>>>()?;
        let treatment = TreatmentSpec {
            mode,
            features: FeatureSpec {
                use_x: t.x,
                w_aggregates: if t.w_mean { vec![Aggregate::Mean; p] } else { Vec::new() },
                include_individual: false,
                standardize: false,
            },
            known,
        };
        Ok(NuisanceConfig { participation, treatment, outcome })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Arms to report; all arms of the data when absent.
    pub arms: Option<Vec<ArmLabel>>,
    /// Pairs `[a, b]` reported as `a − b`.
    #[serde(default)]
    pub contrasts: Vec<(ArmLabel, ArmLabel)>,
    #[serde(default = "default_inference")]
    pub inference: IntervalMethod,
    /// Interval method of the trial-only baseline.
    #[serde(default = "default_trial_inference")]
    pub trial_inference: IntervalMethod,
    #[serde(default)]
    pub trial_pooling: TrialPooling,
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
    #[serde(default)]
    pub stratified_bootstrap: bool,
    /// Cross-fitting folds; in-sample nuisance fits when absent.
    pub folds: Option<usize>,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::TrialOnly,
        EstimatorKind::Hajek,
        EstimatorKind::GFormula,
        EstimatorKind::Aipw,
        EstimatorKind::Transport,
    ]
}

fn default_inference() -> IntervalMethod {
    IntervalMethod::InfluenceCurve
}

fn default_trial_inference() -> IntervalMethod {
    IntervalMethod::ClusterRobustOls
}

fn default_replicates() -> usize {
    500
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self {
            estimators: default_estimators(),
            arms: None,
            contrasts: Vec::new(),
            inference: default_inference(),
            trial_inference: default_trial_inference(),
            trial_pooling: TrialPooling::default(),
            bootstrap_replicates: default_replicates(),
            stratified_bootstrap: false,
            folds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "all_scenarios")]
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_draws")]
    pub oracle_draws: usize,
    #[serde(default = "simulation_estimators")]
    pub estimators: Vec<EstimatorKind>,
}

fn all_scenarios() -> Vec<Scenario> {
    Scenario::ALL.to_vec()
}

fn default_replications() -> usize {
    500
}

fn default_draws() -> usize {
    1_000_000
}

fn simulation_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::TrialOnly,
        EstimatorKind::Ipw,
        EstimatorKind::Hajek,
        EstimatorKind::GFormula,
        EstimatorKind::Aipw,
        EstimatorKind::Transport,
    ]
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            scenarios: all_scenarios(),
            replications: default_replications(),
            oracle_draws: default_draws(),
            estimators: simulation_estimators(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(one_line_message(&e.to_string())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and resolve its relative paths.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(data) = cfg.data.as_mut() {
            data.clusters = base.join(&data.clusters);
            data.individuals = base.join(&data.individuals);
        }
        if let Some(out) = cfg.output.as_mut() {
            *out = base.join(&*out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_some() == self.dgp.is_some() {
            return Err(CliError::Config("exactly one of [data] and [dgp] is required".to_string()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Config(format!("level {} is outside (0, 1)", self.level)));
        }
        if let Some(dgp) = &self.dgp {
            dgp.validate()?;
        }
        let est = &self.estimation;
        if est.estimators.is_empty() {
            return Err(CliError::Config("no estimators requested".to_string()));
        }
        if est.inference == IntervalMethod::ClusterRobustOls {
            return Err(CliError::Config(
                "cluster_robust_ols applies to the trial-only baseline; set it as trial_inference".to_string(),
            ));
        }
        let bootstrap = est.inference == IntervalMethod::ClusterBootstrap
            || est.trial_inference == IntervalMethod::ClusterBootstrap;
        if bootstrap && est.bootstrap_replicates < ecrt_core::inference::MIN_REPLICATES {
            return Err(CliError::Config(format!(
                "bootstrap_replicates must be at least {}",
                ecrt_core::inference::MIN_REPLICATES
            )));
        }
        if est.folds.is_some_and(|k| k < 2) {
            return Err(CliError::Config("folds must be at least 2".to_string()));
        }
        if self.simulation.scenarios.is_empty() || self.simulation.estimators.is_empty() {
            return Err(CliError::Config("simulation needs scenarios and estimators".to_string()));
        }
        Ok(())
    }

    /// Arms to report for a dataset, checked against its catalog together
    /// with every arm named in a contrast. Defaults to every arm, sorted.
    pub fn arms_for(&self, ds: &StudyDataset) -> Result<Vec<ArmLabel>> {
        let arms = self.estimation.arms.clone().unwrap_or_else(|| {
            let mut all = ds.arms().to_vec();
            all.sort();
            all
        });
        ds.check_arms(arms.iter().chain(self.estimation.contrasts.iter().flat_map(|(a, b)| [a, b])))?;
        Ok(arms)
    }
}

pub fn one_line_message(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
