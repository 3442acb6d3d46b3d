//! Synthetic cluster data with within-cluster dependence, a Monte Carlo
//! oracle for the potential outcome means, and the misspecification
//! scenario runner.
//!
//! Per cluster `j` of replicate `r`:
//!
//! * `N_j` is uniform on `size_range`;
//! * `X_j ~ N(0, I_q)`;
//! * a cluster-level shift `V_j ~ N(0, w_cluster_sd² I_p)`;
//! * `W_{j,i,k} = ρ X_{j,(k mod q)} + V_{j,k} + ε`, `ε ~ N(0, 1)`;
//! * a shared effect `U_j ~ N(0, τ²)`;
//! * `S_j ~ Bernoulli(expit(αᵀ[1, X_j, mean W_j]))`;
//! * for `S_j = 1`, `A_j ~ Categorical(π)` and
//!   `Y_{j,i} ~ Bernoulli(expit(β_Aᵀ[1, X_j, W_{j,i}, mean W_j] + U_j))`.
//!
//! Random numbers come from Philox4x32-10 keyed by the seed. Cluster-level
//! draws use the stream `(Dataset, r, j, 0)` in the order `N, X, V, U`, then
//! one uniform for `S` and one for `A`. Individual `i` uses the stream
//! `(Dataset, r, j, i + 1)`: the `W` row first, then one uniform for `Y`.
//! The oracle uses the same layout under the `Oracle` domain.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data_model::{validate_dataset, ArmLabel, ClusterRecord, StudyDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    aipw_psi, compute_nuisance_estimates, gformula_psi, ipw_psi, ipw_psi_aggregated, transport_phi, EstimatorKind,
};
use crate::features::{Aggregate, FeatureSpec};
use crate::inference::{cluster_robust_trial_interval, influence_curve_interval, IntervalEstimate};
use crate::models::{fit_nuisance, FitMethod, ModelSpec, NuisanceConfig, TreatmentSpec};
use crate::numeric::{expit, sample_variance, KahanSum};
use crate::rng::{Domain, Stream};

/// Fewest oracle draws accepted.
pub const MIN_ORACLE_DRAWS: usize = 100_000;
/// Fewest replications accepted by the scenario runner.
pub const MIN_REPLICATIONS: usize = 200;
/// Largest share of replications allowed to fail.
pub const MAX_FAILED_SHARE: f64 = 0.02;
const LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DgpConfig {
    /// Clusters per dataset.
    pub m: usize,
    /// Inclusive range of cluster sizes.
    pub size_range: (usize, usize),
    /// Number of cluster-level covariates `X`.
    pub q: usize,
    /// Number of individual-level covariates `W`.
    pub p: usize,
    pub rho: f64,
    pub w_cluster_sd: f64,
    pub tau: f64,
    pub arms: Vec<ArmLabel>,
    /// Randomization probabilities aligned with `arms`.
    pub pi: Vec<f64>,
    /// Participation coefficients on `[1, X, mean W]`.
    pub alpha: Vec<f64>,
    /// Outcome coefficients per arm on `[1, X, W_i, mean W]`.
    pub beta: Vec<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.m < 2 {
            return Err(Error::TooFewClusters(self.m));
        }
        let (lo, hi) = self.size_range;
        if lo < 1 || hi < lo {
            return bad(format!("cluster size range ({lo}, {hi}) is empty or starts below 1"));
        }
        if !(self.tau >= 0.0 && self.w_cluster_sd >= 0.0 && self.rho.is_finite()) {
            return bad("tau and w_cluster_sd must be non-negative, rho finite".to_string());
        }
        if self.arms.is_empty() || self.arms.len() != self.pi.len() || self.beta.len() != self.arms.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} arms, {} randomization probabilities, {} outcome coefficient vectors",
                self.arms.len(),
                self.pi.len(),
                self.beta.len()
            )));
        }
        for (k, a) in self.arms.iter().enumerate() {
            if self.arms[..k].contains(a) {
                return Err(Error::DuplicateId(a.to_string()));
            }
        }
        let total: KahanSum = self.pi.iter().copied().collect();
        if self.pi.iter().any(|p| p.is_nan() || *p < 0.0) || (total.total() - 1.0).abs() > 1e-9 {
            return Err(Error::ProbabilitiesDontSumToOne(total.total()));
        }
        if self.alpha.len() != 1 + self.q + self.p {
            return Err(Error::DimensionMismatch(format!(
                "alpha has {} entries, expected {}",
                self.alpha.len(),
                1 + self.q + self.p
            )));
        }
        if let Some(b) = self.beta.iter().find(|b| b.len() != 1 + self.q + 2 * self.p) {
            return Err(Error::DimensionMismatch(format!(
                "an outcome coefficient vector has {} entries, expected {}",
                b.len(),
                1 + self.q + 2 * self.p
            )));
        }
        if self.alpha.iter().chain(self.beta.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DGP coefficients".to_string()));
        }
        Ok(())
    }

    /// Randomization probability of `arm`.
    pub fn arm_probability(&self, arm: &ArmLabel) -> Option<f64> {
        self.arms.iter().position(|a| a == arm).map(|k| self.pi[k])
    }
}

/// One cluster's latent draws.
struct LatentCluster {
    x: Vec<f64>,
    w: Vec<Vec<f64>>,
    w_mean: Vec<f64>,
    u: f64,
    s: bool,
    arm: usize,
    y_uniforms: Vec<f64>,
}

impl LatentCluster {
    fn draw(cfg: &DgpConfig, domain: Domain, replicate: u32, cluster: u32) -> Self {
        let mut cs = Stream::new(cfg.seed, domain, replicate, cluster, 0);
        let (lo, hi) = cfg.size_range;
        let n = lo + cs.below((hi - lo + 1) as u64) as usize;
        let x: Vec<f64> = (0..cfg.q).map(|_| cs.normal()).collect();
        let shift: Vec<f64> = (0..cfg.p).map(|_| cfg.w_cluster_sd * cs.normal()).collect();
        let u = cfg.tau * cs.normal();
        let u_s = cs.uniform();
        let u_a = cs.uniform();

        let mut w = Vec::with_capacity(n);
        let mut y_uniforms = Vec::with_capacity(n);
        for i in 0..n {
            let mut is = Stream::new(cfg.seed, domain, replicate, cluster, i as u32 + 1);
            let row: Vec<f64> = (0..cfg.p)
                .map(|k| {
                    let centre = if cfg.q > 0 { cfg.rho * x[k % cfg.q] } else { 0.0 };
                    centre + shift[k] + is.normal()
                })
                .collect();
            w.push(row);
            y_uniforms.push(is.uniform());
        }
        let w_mean: Vec<f64> =
            (0..cfg.p).map(|k| w.iter().map(|r| r[k]).collect::<KahanSum>().total() / n as f64).collect();

        let eta = cfg.alpha[0] + dot(&cfg.alpha[1..1 + cfg.q], &x) + dot(&cfg.alpha[1 + cfg.q..], &w_mean);
        let s = u_s < expit(eta);

        let mut arm = cfg.pi.len() - 1;
        let mut cumulative = 0.0;
        for (k, p) in cfg.pi.iter().enumerate() {
            cumulative += p;
            if u_a < cumulative {
                arm = k;
                break;
            }
        }
        Self { x, w, w_mean, u, s, arm, y_uniforms }
    }

    /// Individual success probabilities under arm `a`, including `U`.
    fn outcome_probabilities<'a>(&'a self, cfg: &'a DgpConfig, a: usize) -> impl Iterator<Item = f64> + 'a {
        let b = &cfg.beta[a];
        let (q, p) = (cfg.q, cfg.p);
        let base = b[0] + dot(&b[1..1 + q], &self.x) + dot(&b[1 + q + p..], &self.w_mean) + self.u;
        let slopes = &b[1 + q..1 + q + p];
        self.w.iter().map(move |row| expit(base + dot(slopes, row)))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `replicate`-th dataset of the DGP.
pub fn generate_replicate(cfg: &DgpConfig, replicate: usize) -> Result<StudyDataset> {
    cfg.validate()?;
    let clusters = (0..cfg.m)
        .map(|j| {
            let latent = LatentCluster::draw(cfg, Domain::Dataset, replicate as u32, j as u32);
            let (arm, y) = if latent.s {
                let y = latent
                    .outcome_probabilities(cfg, latent.arm)
                    .zip(&latent.y_uniforms)
                    .map(|(p, u)| if *u < p { 1.0 } else { 0.0 })
                    .collect();
                (Some(cfg.arms[latent.arm].clone()), Some(y))
            } else {
                (None, None)
            };
            ClusterRecord { cluster_id: format!("c{j:06}"), s: latent.s, arm, x: latent.x, w: latent.w, y }
        })
        .collect();
    validate_dataset(clusters)
}

/// Replicate 0 of the DGP.
pub fn generate_dataset(cfg: &DgpConfig) -> Result<StudyDataset> {
    generate_replicate(cfg, 0)
}

/// One oracle cluster: its realized participation and, per arm, the
/// expected cluster-average outcome given its covariates and shared effect.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDraw {
    pub s: bool,
    pub means: Vec<f64>,
}

/// Oracle cluster `index`. Averaging the individual success probabilities
/// instead of Bernoulli draws leaves the expectation unchanged and lowers
/// the Monte Carlo error.
pub fn oracle_draw(cfg: &DgpConfig, index: usize) -> OracleDraw {
    let latent = LatentCluster::draw(cfg, Domain::Oracle, 0, index as u32);
    let n = latent.w.len() as f64;
    let means =
        (0..cfg.arms.len()).map(|a| latent.outcome_probabilities(cfg, a).collect::<KahanSum>().total() / n).collect();
    OracleDraw { s: latent.s, means }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArmTruth {
    pub arm: ArmLabel,
    pub psi: f64,
    pub psi_mc_se: f64,
    pub phi: f64,
    pub phi_mc_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleTruth {
    pub arms: Vec<ArmTruth>,
    pub draws: usize,
    /// Draws with `S = 0`, the base of `φ_true`.
    pub nonrandomized_draws: usize,
}

impl OracleTruth {
    pub fn arm(&self, arm: &ArmLabel) -> Option<&ArmTruth> {
        self.arms.iter().find(|t| &t.arm == arm)
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let total: KahanSum = values.iter().copied().collect();
    let n = values.len() as f64;
    (total.total() / n, libm::sqrt(sample_variance(values) / n))
}

/// Combine oracle draws (in index order) into the truth.
pub fn oracle_from_draws(cfg: &DgpConfig, draws: &[OracleDraw]) -> OracleTruth {
    let arms = cfg
        .arms
        .iter()
        .enumerate()
        .map(|(a, label)| {
            let all: Vec<f64> = draws.iter().map(|d| d.means[a]).collect();
            let outside: Vec<f64> = draws.iter().filter(|d| !d.s).map(|d| d.means[a]).collect();
            let (psi, psi_mc_se) = mean_and_se(&all);
            let (phi, phi_mc_se) = mean_and_se(&outside);
            ArmTruth { arm: label.clone(), psi, psi_mc_se, phi, phi_mc_se }
        })
        .collect();
    OracleTruth { arms, draws: draws.len(), nonrandomized_draws: draws.iter().filter(|d| !d.s).count() }
}

/// Monte Carlo truth: `ψ_true(a)` over all oracle clusters with arm `a`
/// forced, `φ_true(a)` over those whose participation draw is 0.
pub fn oracle_truth(cfg: &DgpConfig, draws: usize) -> Result<OracleTruth> {
    cfg.validate()?;
    check_oracle_draws(draws)?;
    let all: Vec<OracleDraw> = (0..draws).map(|d| oracle_draw(cfg, d)).collect();
    Ok(oracle_from_draws(cfg, &all))
}

pub fn check_oracle_draws(draws: usize) -> Result<()> {
    if draws < MIN_ORACLE_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "{draws} oracle draws requested, at least {MIN_ORACLE_DRAWS} are needed"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scenario {
    BothCorrect,
    /// Outcome model without the mean-W term.
    OutcomeMisspecified,
    /// Participation model without `X`.
    ParticipationMisspecified,
    BothMisspecified,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::BothCorrect,
        Scenario::OutcomeMisspecified,
        Scenario::ParticipationMisspecified,
        Scenario::BothMisspecified,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            Scenario::BothCorrect => "both_correct",
            Scenario::OutcomeMisspecified => "outcome_misspecified",
            Scenario::ParticipationMisspecified => "participation_misspecified",
            Scenario::BothMisspecified => "both_misspecified",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.key() == key)
    }

    pub fn outcome_correct(&self) -> bool {
        matches!(self, Scenario::BothCorrect | Scenario::ParticipationMisspecified)
    }

    pub fn participation_correct(&self) -> bool {
        matches!(self, Scenario::BothCorrect | Scenario::OutcomeMisspecified)
    }

    /// Working models (MLE, known randomization probabilities) for this cell.
    pub fn nuisance_config(&self, cfg: &DgpConfig) -> NuisanceConfig {
        let participation = FeatureSpec {
            use_x: self.participation_correct(),
            w_aggregates: vec![Aggregate::Mean; cfg.p],
            include_individual: false,
            standardize: false,
        };
        let outcome = FeatureSpec {
            use_x: true,
            w_aggregates: if self.outcome_correct() { vec![Aggregate::Mean; cfg.p] } else { Vec::new() },
            include_individual: true,
            standardize: false,
        };
        NuisanceConfig {
            participation: ModelSpec { features: participation, method: FitMethod::Mle },
            treatment: TreatmentSpec::known(cfg.arms.iter().cloned().zip(cfg.pi.iter().copied()).collect()),
            outcome: ModelSpec { features: outcome, method: FitMethod::Mle },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// One estimate of one replication.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReplicationEstimate {
    pub estimator: EstimatorKind,
    pub arm: ArmLabel,
    pub interval: IntervalEstimate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReplicationResult {
    pub replicate: usize,
    pub estimates: Vec<ReplicationEstimate>,
}

/// Generate replicate `replicate`, fit the scenario's working models and
/// compute every requested estimator for every arm.
pub fn run_replication(
    cfg: &DgpConfig,
    scenario: Scenario,
    estimators: &[EstimatorKind],
    replicate: usize,
) -> Result<ReplicationResult> {
    let ds = generate_replicate(cfg, replicate)?;
    ds.check_arms(&cfg.arms)?;
    let nuisance = scenario.nuisance_config(cfg);
    let fitted = fit_nuisance(&ds, &nuisance)?;
    let ne = compute_nuisance_estimates(&ds, &fitted)?;
    let mut estimates = Vec::new();
    for kind in estimators {
        for arm in &cfg.arms {
            let interval = match kind {
                EstimatorKind::TrialOnly => cluster_robust_trial_interval(&ds, arm, LEVEL)?,
                EstimatorKind::Aipw => influence_curve_interval(&aipw_psi(&ne, arm)?, LEVEL)?,
                EstimatorKind::Ipw => influence_curve_interval(&ipw_psi(&ne, arm, false)?, LEVEL)?,
                EstimatorKind::Hajek => influence_curve_interval(&ipw_psi(&ne, arm, true)?, LEVEL)?,
                EstimatorKind::GFormula => influence_curve_interval(&gformula_psi(&ne, arm)?, LEVEL)?,
                EstimatorKind::Transport => influence_curve_interval(&transport_phi(&ne, arm)?, LEVEL)?,
                EstimatorKind::IpwAggregated => {
                    let est = ipw_psi_aggregated(
                        &ds,
                        &fitted.participation,
                        &nuisance.participation.features,
                        &fitted.treatment,
                        arm,
                    )?;
                    influence_curve_interval(&est, LEVEL)?
                }
            };
            estimates.push(ReplicationEstimate { estimator: *kind, arm: arm.clone(), interval });
        }
    }
    Ok(ReplicationResult { replicate, estimates })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub arm: ArmLabel,
    /// `ψ_true`, or `φ_true` for the transport estimator.
    pub truth: f64,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    pub empirical_se: f64,
    pub mean_estimated_se: f64,
    pub coverage: f64,
    /// Standard error of `mean_bias`, including the oracle's own error.
    pub mc_se: f64,
    pub replications: usize,
    /// Set when the interval ignores the estimation of the nuisance models,
    /// so its coverage is not a validity claim.
    pub exploratory: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub replications: usize,
    pub failed_replications: usize,
    pub summaries: Vec<EstimatorSummary>,
}

impl ScenarioResult {
    pub fn summary(&self, estimator: EstimatorKind, arm: &ArmLabel) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == estimator && &s.arm == arm)
    }
}

/// Aggregate replication results (any order) into bias, spread and coverage.
pub fn aggregate_replications(
    scenario: Scenario,
    truth: &OracleTruth,
    estimators: &[EstimatorKind],
    results: &[Result<ReplicationResult>],
) -> Result<ScenarioResult> {
    let total = results.len();
    let mut kept: Vec<&ReplicationResult> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failed = total - kept.len();
    if failed as f64 > MAX_FAILED_SHARE * total as f64 {
        return Err(Error::TooManyFailedReplicates { failed, total });
    }
    kept.sort_by_key(|r| r.replicate);
    let mut summaries = Vec::new();
    for kind in estimators {
        for arm_truth in &truth.arms {
            let (target, target_se) = if *kind == EstimatorKind::Transport {
                (arm_truth.phi, arm_truth.phi_mc_se)
            } else {
                (arm_truth.psi, arm_truth.psi_mc_se)
            };
            let intervals: Vec<&IntervalEstimate> = kept
                .iter()
                .filter_map(|r| {
                    r.estimates.iter().find(|e| e.estimator == *kind && e.arm == arm_truth.arm).map(|e| &e.interval)
                })
                .collect();
            if intervals.is_empty() {
                continue;
            }
            let n = intervals.len() as f64;
            let values: Vec<f64> = intervals.iter().map(|i| i.point).collect();
            let mean_estimate = values.iter().copied().collect::<KahanSum>().total() / n;
            let empirical_se = libm::sqrt(sample_variance(&values));
            let mean_estimated_se = intervals.iter().map(|i| i.se).collect::<KahanSum>().total() / n;
            let covered = intervals.iter().filter(|i| i.covers(target)).count();
            summaries.push(EstimatorSummary {
                estimator: *kind,
                arm: arm_truth.arm.clone(),
                truth: target,
                mean_estimate,
                mean_bias: mean_estimate - target,
                empirical_se,
                mean_estimated_se,
                coverage: covered as f64 / n,
                mc_se: libm::sqrt(empirical_se * empirical_se / n + target_se * target_se),
                replications: intervals.len(),
                exploratory: !matches!(kind, EstimatorKind::Aipw | EstimatorKind::Transport | EstimatorKind::TrialOnly),
            });
        }
    }
    Ok(ScenarioResult { scenario, replications: kept.len(), failed_replications: failed, summaries })
}

/// Run `replications` replications of one scenario serially.
pub fn run_scenario(
    cfg: &DgpConfig,
    scenario: Scenario,
    replications: usize,
    estimators: &[EstimatorKind],
    truth: &OracleTruth,
) -> Result<ScenarioResult> {
    check_replications(replications)?;
    cfg.validate()?;
    let results: Vec<Result<ReplicationResult>> =
        (0..replications).map(|r| run_replication(cfg, scenario, estimators, r)).collect();
    aggregate_replications(scenario, truth, estimators, &results)
}

pub fn check_replications(replications: usize) -> Result<()> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "{replications} replications requested, at least {MIN_REPLICATIONS} are needed"
        )));
    }
    Ok(())
}
