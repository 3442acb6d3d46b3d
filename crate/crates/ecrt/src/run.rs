//! The `estimate` and `simulate` workflows.

use ecrt_core::inference::BootstrapConfig;
use ecrt_core::simulation::{DgpConfig, MIN_REPLICATIONS};
use ecrt_core::{
    aipw_psi, cluster_features, cluster_robust_trial_contrast, cluster_robust_trial_interval,
    compute_nuisance_estimates, contrast, crossfit_nuisance_estimates, dataset_summary, fit_nuisance, generate_dataset,
    gformula_psi, individual_features, influence_curve_interval, ipw_psi, ipw_psi_aggregated, transport_phi,
    trial_only_estimate, ArmLabel, EstimatorKind, FittedNuisance, IntervalEstimate, IntervalMethod, NuisanceConfig,
    NuisanceEstimates, PointEstimate, ProbabilityModel, StudyDataset, Target,
};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{load_csv, LoadedData};
use crate::parallel;
use crate::report::{
    EstimateReport, EstimateRow, ModelReport, NuisanceReport, OutcomeModelReport, SimulationReport, SummaryReport,
    SCHEMA_VERSION,
};

/// The DGP of a config, seeded by the config seed.
pub fn seeded_dgp(cfg: &RunConfig) -> Option<DgpConfig> {
    cfg.dgp.clone().map(|mut d| {
        d.seed = cfg.seed;
        d
    })
}

/// The dataset named by the config: the CSV pair, or replicate 0 of the DGP.
pub fn load_dataset(cfg: &RunConfig) -> Result<LoadedData> {
    match (&cfg.data, seeded_dgp(cfg)) {
        (Some(data), _) => load_csv(&data.clusters, &data.individuals),
        (None, Some(dgp)) => Ok(LoadedData { dataset: generate_dataset(&dgp)?, warnings: Vec::new() }),
        (None, None) => Err(CliError::Config("no [data] or [dgp] section".to_string())),
    }
}

pub fn run_summary(cfg: &RunConfig) -> Result<SummaryReport> {
    let loaded = load_dataset(cfg)?;
    Ok(SummaryReport {
        schema_version: SCHEMA_VERSION,
        command: "summary",
        summary: dataset_summary(&loaded.dataset),
        warnings: loaded.warnings,
    })
}

/// Fitted working models and the nuisance values the estimators consume.
struct Prepared {
    fitted: FittedNuisance,
    ne: NuisanceEstimates,
}

fn prepare(ds: &StudyDataset, ncfg: &NuisanceConfig, folds: Option<usize>, seed: u64) -> ecrt_core::Result<Prepared> {
    let fitted = fit_nuisance(ds, ncfg)?;
    let ne = match folds {
        Some(k) => crossfit_nuisance_estimates(ds, ncfg, k, seed)?,
        None => compute_nuisance_estimates(ds, &fitted)?,
    };
    Ok(Prepared { fitted, ne })
}

struct Plan {
    kinds: Vec<EstimatorKind>,
    targets: Vec<Target>,
}

impl Plan {
    fn cells(&self) -> impl Iterator<Item = (EstimatorKind, &Target)> + '_ {
        self.kinds.iter().flat_map(move |k| self.targets.iter().map(move |t| (*k, t)))
    }

    fn needs_nuisance(&self) -> bool {
        self.kinds.iter().any(|k| *k != EstimatorKind::TrialOnly)
    }
}

fn arm_estimate(
    kind: EstimatorKind,
    arm: &ArmLabel,
    ds: &StudyDataset,
    prepared: Option<&Prepared>,
    cfg: &RunConfig,
    ncfg: &NuisanceConfig,
) -> ecrt_core::Result<PointEstimate> {
    if kind == EstimatorKind::TrialOnly {
        return trial_only_estimate(ds, arm, cfg.estimation.trial_pooling);
    }
    let p = prepared.expect("nuisance models are fit when an adjusted estimator is requested");
    match kind {
        EstimatorKind::Aipw => aipw_psi(&p.ne, arm),
        EstimatorKind::Ipw => ipw_psi(&p.ne, arm, false),
        EstimatorKind::Hajek => ipw_psi(&p.ne, arm, true),
        EstimatorKind::GFormula => gformula_psi(&p.ne, arm),
        EstimatorKind::Transport => transport_phi(&p.ne, arm),
        EstimatorKind::IpwAggregated => {
            ipw_psi_aggregated(ds, &p.fitted.participation, &ncfg.participation.features, &p.fitted.treatment, arm)
        }
        EstimatorKind::TrialOnly => unreachable!(),
    }
}

fn target_estimate(
    kind: EstimatorKind,
    target: &Target,
    ds: &StudyDataset,
    prepared: Option<&Prepared>,
    cfg: &RunConfig,
    ncfg: &NuisanceConfig,
) -> ecrt_core::Result<PointEstimate> {
    match target {
        Target::Arm(a) => arm_estimate(kind, a, ds, prepared, cfg, ncfg),
        Target::Contrast(a, b) => {
            contrast(&arm_estimate(kind, a, ds, prepared, cfg, ncfg)?, &arm_estimate(kind, b, ds, prepared, cfg, ncfg)?)
        }
    }
}

fn model_report(model: &ProbabilityModel, features: Vec<String>) -> ModelReport {
    ModelReport {
        method: model.method.tag(),
        features,
        coefficients: model.coefficients.clone(),
        iterations: model.diagnostics.iterations,
        converged: model.diagnostics.converged,
        max_change: model.diagnostics.max_change,
        log_likelihood: model.diagnostics.log_likelihood,
    }
}

fn nuisance_report(ds: &StudyDataset, ncfg: &NuisanceConfig, p: &Prepared) -> Result<NuisanceReport> {
    let pnames = cluster_features(ds, &ncfg.participation.features)?.names().to_vec();
    let onames = individual_features(ds, &ncfg.outcome.features)?.names().to_vec();
    Ok(NuisanceReport {
        working_model: ncfg.tag(),
        participation: model_report(&p.fitted.participation, pnames),
        treatment: p.fitted.treatment.clone(),
        outcome: p
            .fitted
            .outcome_by_arm
            .iter()
            .map(|(arm, m)| OutcomeModelReport { arm: arm.clone(), model: model_report(m, onames.clone()) })
            .collect(),
        clipped_participation: p.ne.clipped_participation(),
        clipped_treatment: p.ne.clipped_treatment(),
    })
}

fn push_unique(warnings: &mut Vec<String>, w: String) {
    if !warnings.contains(&w) {
        warnings.push(w);
    }
}

/// Fit the working models once (or per fold), compute every requested
/// estimator for every arm and contrast, and attach intervals.
pub fn run_estimation(cfg: &RunConfig, pool: &rayon::ThreadPool) -> Result<EstimateReport> {
    cfg.validate()?;
    let loaded = load_dataset(cfg)?;
    let ds = &loaded.dataset;
    let arms = cfg.arms_for(ds)?;
    let est = &cfg.estimation;
    if est.trial_inference == IntervalMethod::ClusterRobustOls
        && est.trial_pooling != ecrt_core::TrialPooling::Individual
        && est.estimators.contains(&EstimatorKind::TrialOnly)
    {
        return Err(CliError::Config("cluster_robust_ols intervals need trial_pooling = \"individual\"".to_string()));
    }
    let ncfg = cfg.nuisance.build(ds.p())?;
    let plan = Plan {
        kinds: est.estimators.clone(),
        targets: arms
            .iter()
            .map(|a| Target::Arm(a.clone()))
            .chain(est.contrasts.iter().map(|(a, b)| Target::Contrast(a.clone(), b.clone())))
            .collect(),
    };

    let prepared = if plan.needs_nuisance() { Some(prepare(ds, &ncfg, est.folds, cfg.seed)?) } else { None };
    let points = plan
        .cells()
        .map(|(kind, target)| target_estimate(kind, target, ds, prepared.as_ref(), cfg, &ncfg))
        .collect::<ecrt_core::Result<Vec<_>>>()?;

    let method_of = |kind: EstimatorKind| {
        if kind == EstimatorKind::TrialOnly {
            est.trial_inference
        } else {
            est.inference
        }
    };
    let boot = if points.iter().any(|p| method_of(p.estimator) == IntervalMethod::ClusterBootstrap) {
        let config = BootstrapConfig {
            replicates: est.bootstrap_replicates,
            seed: cfg.seed,
            stratified: est.stratified_bootstrap,
        };
        let needs_nuisance = plan.needs_nuisance();
        Some(parallel::bootstrap_values(pool, ds, &config, |b| {
            let prepared = if needs_nuisance { Some(prepare(b, &ncfg, est.folds, cfg.seed)?) } else { None };
            Ok(plan
                .cells()
                .map(|(kind, target)| target_estimate(kind, target, b, prepared.as_ref(), cfg, &ncfg).map(|e| e.value))
                .collect())
        }))
    } else {
        None
    };

    let mut warnings = loaded.warnings.clone();
    let mut rows = Vec::with_capacity(points.len());
    for (k, point) in points.iter().enumerate() {
        let interval: IntervalEstimate = match method_of(point.estimator) {
            IntervalMethod::InfluenceCurve => influence_curve_interval(point, cfg.level)?,
            IntervalMethod::ClusterRobustOls => match &point.target {
                Target::Arm(a) => cluster_robust_trial_interval(ds, a, cfg.level)?,
                Target::Contrast(a, b) => cluster_robust_trial_contrast(ds, a, b, cfg.level)?,
            },
            IntervalMethod::ClusterBootstrap => {
                parallel::bootstrap_interval(point.value, boot.as_ref().expect("bootstrap ran"), k, cfg.level)?
            }
        };
        if let Some(failed) = interval.failed_replicates.filter(|f| *f > 0) {
            push_unique(&mut warnings, format!("{failed} bootstrap replicates failed and were dropped"));
        }
        for w in &point.warnings {
            push_unique(&mut warnings, w.clone());
        }
        let (arm, pair) = match &point.target {
            Target::Arm(a) => (Some(a.clone()), None),
            Target::Contrast(a, b) => (None, Some((a.clone(), b.clone()))),
        };
        rows.push(EstimateRow {
            estimator: point.estimator,
            label: point.estimator.name().to_string(),
            working_model: point.working_model.clone().unwrap_or_else(|| "-".to_string()),
            target: point.target.to_string(),
            arm,
            contrast: pair,
            point: point.value,
            se: interval.se,
            lower: interval.lower,
            upper: interval.upper,
            level: interval.level,
            method: interval.method,
            replicates: interval.replicates,
            failed_replicates: interval.failed_replicates,
            weights: point.weights,
            folds: point.folds,
            warnings: point.warnings.clone(),
        });
    }

    let nuisance = match &prepared {
        Some(p) => {
            let report = nuisance_report(ds, &ncfg, p)?;
            if report.clipped_participation > 0 {
                push_unique(
                    &mut warnings,
                    format!("{} participation probabilities clipped", report.clipped_participation),
                );
            }
            if report.clipped_treatment > 0 {
                push_unique(
                    &mut warnings,
                    format!("treatment probabilities clipped for {} clusters", report.clipped_treatment),
                );
            }
            Some(report)
        }
        None => None,
    };
    if est.folds.is_some() && est.estimators.contains(&EstimatorKind::IpwAggregated) {
        push_unique(&mut warnings, "IPW (aggregated) uses in-sample participation fits".to_string());
    }

    Ok(EstimateReport {
        schema_version: SCHEMA_VERSION,
        command: "estimate",
        seed: cfg.seed,
        level: cfg.level,
        inference: est.inference,
        trial_inference: est.trial_inference,
        folds: est.folds,
        dataset: dataset_summary(ds),
        nuisance,
        estimates: rows,
        warnings,
    })
}

/// Oracle truth followed by every configured scenario.
pub fn run_simulation(cfg: &RunConfig, pool: &rayon::ThreadPool) -> Result<SimulationReport> {
    cfg.validate()?;
    let dgp = seeded_dgp(cfg).ok_or_else(|| CliError::Config("simulate needs a [dgp] section".to_string()))?;
    let sim = &cfg.simulation;
    let oracle = parallel::oracle_truth(pool, &dgp, sim.oracle_draws)?;
    let mut warnings = Vec::new();
    let exploratory = sim.replications < MIN_REPLICATIONS;
    if exploratory {
        warnings.push(format!(
            "{} replications is below the floor of {MIN_REPLICATIONS}; results are exploratory",
            sim.replications
        ));
    }
    let mut scenarios = Vec::with_capacity(sim.scenarios.len());
    for scenario in &sim.scenarios {
        let result = parallel::run_scenario(pool, &dgp, *scenario, sim.replications, &sim.estimators, &oracle)?;
        if result.failed_replications > 0 {
            warnings.push(format!("{}: {} replications failed and were dropped", scenario, result.failed_replications));
        }
        scenarios.push(result);
    }
    Ok(SimulationReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        seed: cfg.seed,
        dgp,
        oracle,
        replications: sim.replications,
        exploratory,
        scenarios,
        warnings,
    })
}
