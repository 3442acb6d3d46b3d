//! Point estimators of the potential outcome means.
//!
//! All estimators work from per-cluster nuisance values collected in
//! [`NuisanceEstimates`]. Sums run over clusters in ascending `cluster_id`
//! order with compensated accumulation, so results do not depend on the
//! order clusters were supplied in.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data_model::{cluster_average_outcome, ArmLabel, StudyDataset};
use crate::error::{Error, Result};
use crate::features::{cluster_features, individual_features, FeatureSpec};
use crate::models::{fit_nuisance_on, predict, FittedNuisance, NuisanceConfig, ProbabilityModel, TreatmentModel};
use crate::numeric::{clip_probability, KahanSum, PROB_FLOOR};
use crate::rng::{Domain, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EstimatorKind {
    /// Augmented inverse probability of participation weighting.
    Aipw,
    /// Inverse probability weighting, weights averaged over `m`.
    Ipw,
    /// Inverse probability weighting, weights normalized by their sum.
    Hajek,
    /// Unnormalized weighting with a cluster-level participation model only.
    IpwAggregated,
    GFormula,
    TrialOnly,
    /// Augmented inverse odds weighting for the non-randomized clusters.
    Transport,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::TrialOnly,
        EstimatorKind::Ipw,
        EstimatorKind::Hajek,
        EstimatorKind::IpwAggregated,
        EstimatorKind::GFormula,
        EstimatorKind::Aipw,
        EstimatorKind::Transport,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Aipw => "AIPW",
            EstimatorKind::Ipw => "IPW (unnormalized)",
            EstimatorKind::Hajek => "IPW",
            EstimatorKind::IpwAggregated => "IPW (aggregated)",
            EstimatorKind::GFormula => "g-formula",
            EstimatorKind::TrialOnly => "Trial-only",
            EstimatorKind::Transport => "AIOW (S=0)",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            EstimatorKind::Aipw => "aipw",
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Hajek => "hajek",
            EstimatorKind::IpwAggregated => "ipw_aggregated",
            EstimatorKind::GFormula => "g_formula",
            EstimatorKind::TrialOnly => "trial_only",
            EstimatorKind::Transport => "transport",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.key() == key)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What an estimate refers to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Target {
    Arm(ArmLabel),
    Contrast(ArmLabel, ArmLabel),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Arm(a) => write!(f, "{a}"),
            Target::Contrast(a, b) => write!(f, "{a} - {b}"),
        }
    }
}

/// Summary of the inverse weights entering a weighting estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightDiagnostics {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    /// Kish effective sample size `(Σw)² / Σw²`.
    pub ess: f64,
}

impl WeightDiagnostics {
    fn of(weights: &[f64]) -> Option<Self> {
        if weights.is_empty() {
            return None;
        }
        let sum: KahanSum = weights.iter().copied().collect();
        let sq: KahanSum = weights.iter().map(|w| w * w).collect();
        Some(Self {
            count: weights.len(),
            min: weights.iter().copied().fold(f64::INFINITY, f64::min),
            max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ess: sum.total() * sum.total() / sq.total(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointEstimate {
    pub estimator: EstimatorKind,
    pub target: Target,
    pub value: f64,
    /// Per-cluster influence values in dataset order; they average to zero.
    pub influence: Option<Vec<f64>>,
    pub weights: Option<WeightDiagnostics>,
    /// Working-model tag of the nuisance fits, if any.
    pub working_model: Option<String>,
    pub folds: Option<usize>,
    pub warnings: Vec<String>,
}

impl PointEstimate {
    fn new(estimator: EstimatorKind, target: Target, value: f64) -> Self {
        Self {
            estimator,
            target,
            value,
            influence: None,
            weights: None,
            working_model: None,
            folds: None,
            warnings: Vec::new(),
        }
    }
}

/// Nuisance values of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNuisance {
    pub cluster_id: String,
    pub s: bool,
    /// Arm index into the catalog, for randomized clusters.
    pub arm: Option<usize>,
    pub p_hat: f64,
    /// `ê_a` for every arm of the catalog.
    pub e_hat: Vec<f64>,
    /// `ĝ_a` for every arm of the catalog.
    pub g_hat: Vec<f64>,
    /// Cluster average outcome, for randomized clusters.
    pub ybar: Option<f64>,
}

/// Per-cluster `p̂_j`, `ê_{a,j}`, `ĝ_{a,j}` and `Ȳ_j`, aligned with a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimates {
    arms: Vec<ArmLabel>,
    rows: Vec<ClusterNuisance>,
    order: Vec<usize>,
    clipped_participation: usize,
    clipped_treatment: usize,
    working_model: Option<String>,
    folds: Option<usize>,
}

const SUM_TOLERANCE: f64 = 1e-9;

impl NuisanceEstimates {
    /// Assemble from explicit per-cluster values. Probabilities must lie in
    /// `(0, 1]` and `ê` must sum to one over the arms.
    pub fn from_parts(arms: Vec<ArmLabel>, rows: Vec<ClusterNuisance>) -> Result<Self> {
        for r in &rows {
            if r.e_hat.len() != arms.len() || r.g_hat.len() != arms.len() {
                return Err(Error::DimensionMismatch(format!(
                    "cluster `{}` carries nuisance values for {} arms, expected {}",
                    r.cluster_id,
                    r.e_hat.len().min(r.g_hat.len()),
                    arms.len()
                )));
            }
            if !(r.p_hat > 0.0 && r.p_hat <= 1.0) || r.e_hat.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                return Err(Error::InvalidArgument(format!(
                    "cluster `{}` has a probability outside (0, 1]",
                    r.cluster_id
                )));
            }
            if !arms.is_empty() {
                let total: KahanSum = r.e_hat.iter().copied().collect();
                if (total.total() - 1.0).abs() > SUM_TOLERANCE {
                    return Err(Error::ProbabilitiesDontSumToOne(total.total()));
                }
            }
            if r.g_hat.iter().chain(r.ybar.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("nuisance values of `{}`", r.cluster_id)));
            }
            if r.s && (r.arm.is_none() || r.ybar.is_none()) {
                return Err(Error::IncompleteTrialCluster(r.cluster_id.clone()));
            }
            if r.arm.is_some_and(|k| k >= arms.len()) {
                return Err(Error::DimensionMismatch(format!("cluster `{}` refers to an unknown arm", r.cluster_id)));
            }
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a].cluster_id.cmp(&rows[b].cluster_id));
        Ok(Self { arms, rows, order, clipped_participation: 0, clipped_treatment: 0, working_model: None, folds: None })
    }

    pub fn arms(&self) -> &[ArmLabel] {
        &self.arms
    }

    pub fn rows(&self) -> &[ClusterNuisance] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of participation probabilities moved into the admissible band.
    pub fn clipped_participation(&self) -> usize {
        self.clipped_participation
    }

    /// Number of clusters whose treatment probabilities were clipped.
    pub fn clipped_treatment(&self) -> usize {
        self.clipped_treatment
    }

    pub fn working_model(&self) -> Option<&str> {
        self.working_model.as_deref()
    }

    pub fn folds(&self) -> Option<usize> {
        self.folds
    }

    pub fn arm_index(&self, arm: &ArmLabel) -> Result<usize> {
        self.arms.iter().position(|a| a == arm).ok_or_else(|| Error::EmptyArm(arm.to_string()))
    }

    fn sorted(&self) -> impl Iterator<Item = (usize, &ClusterNuisance)> {
        self.order.iter().map(move |&j| (j, &self.rows[j]))
    }

    fn stamp(&self, mut est: PointEstimate) -> PointEstimate {
        est.working_model = self.working_model.clone();
        est.folds = self.folds;
        est
    }
}

fn clipped_treatment_row(raw: &[f64]) -> (Vec<f64>, bool) {
    let mut moved = false;
    let mut row: Vec<f64> = raw
        .iter()
        .map(|&e| {
            let (v, c) = clip_probability(e);
            moved |= c;
            v
        })
        .collect();
    if moved {
        let total: KahanSum = row.iter().copied().collect();
        let total = total.total();
        row.iter_mut().for_each(|v| *v /= total);
    }
    (row, moved)
}

/// Predicted `ĝ_a` for every cluster: the within-cluster mean of the
/// individual-level predictions `ĥ_a(X_j, W_{j,i})`.
fn cluster_mean_predictions(ds: &StudyDataset, model: &ProbabilityModel, spec: &FeatureSpec) -> Result<Vec<f64>> {
    let x = individual_features(ds, &FeatureSpec { standardize: false, ..spec.clone() })?;
    let h = predict(model, &x)?;
    let mut sums = vec![KahanSum::new(); ds.len()];
    for (&(j, _), value) in x.origins().iter().zip(&h) {
        sums[j].add(*value);
    }
    Ok(sums.iter().zip(ds.clusters()).map(|(s, c)| s.total() / c.size() as f64).collect())
}

/// Evaluate fitted working models on every cluster of the dataset.
pub fn compute_nuisance_estimates(ds: &StudyDataset, fitted: &FittedNuisance) -> Result<NuisanceEstimates> {
    let pspec = FeatureSpec { standardize: false, ..fitted.config.participation.features.clone() };
    let p_raw = predict(&fitted.participation, &cluster_features(ds, &pspec)?)?;
    let e_raw = fitted.treatment.predict_all(ds)?;
    let mut g_by_arm = Vec::with_capacity(ds.arms().len());
    for arm in ds.arms() {
        let model = fitted.outcome_model(arm).ok_or_else(|| Error::EmptyArm(arm.to_string()))?;
        g_by_arm.push(cluster_mean_predictions(ds, model, &fitted.config.outcome.features)?);
    }
    let arm_of = ds.arm_indices();
    let mut clipped_p = 0;
    let mut clipped_e = 0;
    let mut rows = Vec::with_capacity(ds.len());
    for (j, c) in ds.clusters().iter().enumerate() {
        let (p_hat, moved) = clip_probability(p_raw[j]);
        clipped_p += usize::from(moved);
        let (e_hat, moved) = clipped_treatment_row(&e_raw[j]);
        clipped_e += usize::from(moved);
        rows.push(ClusterNuisance {
            cluster_id: c.cluster_id.clone(),
            s: c.s,
            arm: arm_of[j],
            p_hat,
            e_hat,
            g_hat: g_by_arm.iter().map(|g| g[j]).collect(),
            ybar: if c.s { Some(cluster_average_outcome(c)?) } else { None },
        });
    }
    let mut ne = NuisanceEstimates::from_parts(ds.arms().to_vec(), rows)?;
    ne.clipped_participation = clipped_p;
    ne.clipped_treatment = clipped_e;
    ne.working_model = Some(fitted.config.tag());
    Ok(ne)
}

#[inline]
fn in_arm(row: &ClusterNuisance, a: usize) -> bool {
    row.s && row.arm == Some(a)
}

/// `ψ̂(a) = (1/m) Σ_j { I(S_j=1, A_j=a) / (p̂_j ê_{a,j}) · (Ȳ_j − ĝ_{a,j}) + ĝ_{a,j} }`.
pub fn aipw_psi(ne: &NuisanceEstimates, arm: &ArmLabel) -> Result<PointEstimate> {
    let a = ne.arm_index(arm)?;
    let m = ne.len();
    let mut summands = vec![0.0; m];
    let mut acc = KahanSum::new();
    let mut weights = Vec::new();
    for (j, r) in ne.sorted() {
        let g = r.g_hat[a];
        let term = if in_arm(r, a) {
            let w = 1.0 / (r.p_hat * r.e_hat[a]);
            weights.push(w);
            w * (r.ybar.unwrap() - g) + g
        } else {
            g
        };
        summands[j] = term;
        acc.add(term);
    }
    let value = acc.total() / m as f64;
    let mut est = PointEstimate::new(EstimatorKind::Aipw, Target::Arm(arm.clone()), value);
    est.influence = Some(summands.iter().map(|t| t - value).collect());
    est.weights = WeightDiagnostics::of(&weights);
    if weights.is_empty() {
        est.warnings.push(format!("no randomized clusters in arm `{arm}`; AIPW reduces to the g-formula"));
    }
    Ok(ne.stamp(est))
}

/// Inverse probability weighting. Unnormalized:
/// `(1/m) Σ I(S=1,A=a) Ȳ_j / (p̂_j ê_{a,j})`; normalized (Hajek): the same
/// numerator divided by the sum of the weights.
pub fn ipw_psi(ne: &NuisanceEstimates, arm: &ArmLabel, normalized: bool) -> Result<PointEstimate> {
    let a = ne.arm_index(arm)?;
    let m = ne.len();
    let mut numerator = KahanSum::new();
    let mut denominator = KahanSum::new();
    let mut weights = vec![0.0; m];
    let mut used = Vec::new();
    for (j, r) in ne.sorted() {
        if in_arm(r, a) {
            let w = 1.0 / (r.p_hat * r.e_hat[a]);
            weights[j] = w;
            used.push(w);
            numerator.add(w * r.ybar.unwrap());
            denominator.add(w);
        }
    }
    if used.is_empty() {
        return Err(Error::NoTreatedClusters(arm.to_string()));
    }
    let (kind, value, influence) = if normalized {
        let total = denominator.total();
        let value = numerator.total() / total;
        let scale = m as f64 / total;
        let ic = ne
            .rows
            .iter()
            .zip(&weights)
            .map(|(r, w)| if in_arm(r, a) { scale * w * (r.ybar.unwrap() - value) } else { 0.0 })
            .collect();
        (EstimatorKind::Hajek, value, ic)
    } else {
        let value = numerator.total() / m as f64;
        let ic = ne
            .rows
            .iter()
            .zip(&weights)
            .map(|(r, w)| if in_arm(r, a) { w * r.ybar.unwrap() - value } else { -value })
            .collect();
        (EstimatorKind::Ipw, value, ic)
    };
    let mut est = PointEstimate::new(kind, Target::Arm(arm.clone()), value);
    est.influence = Some(influence);
    est.weights = WeightDiagnostics::of(&used);
    Ok(ne.stamp(est))
}

/// Unnormalized weighting with a participation model that only sees
/// aggregated cluster-level features.
pub fn ipw_psi_aggregated(
    ds: &StudyDataset,
    participation: &ProbabilityModel,
    participation_features: &FeatureSpec,
    treatment: &TreatmentModel,
    arm: &ArmLabel,
) -> Result<PointEstimate> {
    if participation_features.include_individual {
        return Err(Error::InvalidArgument(
            "the aggregated estimator needs a cluster-level participation model".to_string(),
        ));
    }
    let a = ds.arm_index(arm)?;
    let spec = FeatureSpec { standardize: false, ..participation_features.clone() };
    let p = predict(participation, &cluster_features(ds, &spec)?)?;
    let e = treatment.predict_all(ds)?;
    let arm_of = ds.arm_indices();
    let mut rows = Vec::with_capacity(ds.len());
    let mut clipped = 0;
    for (j, c) in ds.clusters().iter().enumerate() {
        let (p_hat, moved) = clip_probability(p[j]);
        clipped += usize::from(moved);
        rows.push(ClusterNuisance {
            cluster_id: c.cluster_id.clone(),
            s: c.s,
            arm: arm_of[j],
            p_hat,
            e_hat: clipped_treatment_row(&e[j]).0,
            g_hat: vec![0.0; ds.arms().len()],
            ybar: if c.s { Some(cluster_average_outcome(c)?) } else { None },
        });
    }
    let ne = NuisanceEstimates::from_parts(ds.arms().to_vec(), rows)?;
    let mut est = ipw_psi(&ne, &ds.arms()[a], false)?;
    est.estimator = EstimatorKind::IpwAggregated;
    est.working_model = Some(participation.method.tag());
    if clipped > 0 {
        est.warnings.push(format!("{clipped} participation probabilities clipped"));
    }
    Ok(est)
}

/// `ψ̂_g(a) = (1/m) Σ_j ĝ_{a,j}`.
pub fn gformula_psi(ne: &NuisanceEstimates, arm: &ArmLabel) -> Result<PointEstimate> {
    let a = ne.arm_index(arm)?;
    let acc: KahanSum = ne.sorted().map(|(_, r)| r.g_hat[a]).collect();
    let value = acc.total() / ne.len() as f64;
    let mut est = PointEstimate::new(EstimatorKind::GFormula, Target::Arm(arm.clone()), value);
    est.influence = Some(ne.rows.iter().map(|r| r.g_hat[a] - value).collect());
    Ok(ne.stamp(est))
}

/// How the trial-only baseline pools outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TrialPooling {
    /// Mean over all individuals of arm-`a` trial clusters (the arm
    /// coefficient of a saturated linear probability model).
    #[default]
    Individual,
    /// Unweighted mean of the cluster averages `Ȳ_j`.
    Cluster,
}

/// Trial-only estimate of the arm-`a` mean outcome.
///
/// Influence values are `m r_j / n_a` for individual pooling, with
/// `r_j = Σ_i (Y_{j,i} − μ̂)` and `n_a` the individuals in arm-`a` trial
/// clusters, and `m (Ȳ_j − μ̂) / G` for cluster pooling over `G` clusters;
/// they are zero elsewhere.
pub fn trial_only_estimate(ds: &StudyDataset, arm: &ArmLabel, pooling: TrialPooling) -> Result<PointEstimate> {
    let a = ds.arm_index(arm)?;
    let arm_of = ds.arm_indices();
    let members: Vec<usize> = ds.sorted_order().into_iter().filter(|&j| arm_of[j] == Some(a)).collect();
    if members.is_empty() {
        return Err(Error::NoTreatedClusters(arm.to_string()));
    }
    let outcomes = |j: usize| ds.clusters()[j].y.as_deref().expect("validated trial cluster");
    let mut total = KahanSum::new();
    let mut count = 0usize;
    for &j in &members {
        match pooling {
            TrialPooling::Individual => {
                outcomes(j).iter().for_each(|y| total.add(*y));
                count += outcomes(j).len();
            }
            TrialPooling::Cluster => {
                total.add(cluster_average_outcome(&ds.clusters()[j])?);
                count += 1;
            }
        }
    }
    let value = total.total() / count as f64;
    let scale = ds.len() as f64 / count as f64;
    let mut influence = vec![0.0; ds.len()];
    for &j in &members {
        let residual = match pooling {
            TrialPooling::Individual => outcomes(j).iter().map(|y| y - value).collect::<KahanSum>().total(),
            TrialPooling::Cluster => cluster_average_outcome(&ds.clusters()[j])? - value,
        };
        influence[j] = scale * residual;
    }
    let mut est = PointEstimate::new(EstimatorKind::TrialOnly, Target::Arm(arm.clone()), value);
    est.influence = Some(influence);
    est.working_model = Some(match pooling {
        TrialPooling::Individual => "Unadjusted".to_string(),
        TrialPooling::Cluster => "Unadjusted (cluster means)".to_string(),
    });
    Ok(est)
}

/// Augmented inverse odds weighting estimator of `E[Ȳ^a | S = 0]`:
/// `φ̂(a) = n₀⁻¹ Σ_j { ŵ_{a,j}(Ȳ_j − ĝ_{a,j}) + I(S_j=0) ĝ_{a,j} }` with
/// `ŵ_{a,j} = I(S_j=1, A_j=a)(1 − p̂_j)/(p̂_j ê_{a,j})`.
///
/// Influence values use `n₀/m` for `Pr[S = 0]`.
pub fn transport_phi(ne: &NuisanceEstimates, arm: &ArmLabel) -> Result<PointEstimate> {
    let a = ne.arm_index(arm)?;
    let m = ne.len();
    let n0 = ne.rows.iter().filter(|r| !r.s).count();
    if n0 == 0 {
        return Err(Error::NoNonRandomizedClusters);
    }
    let mut augmentation = vec![0.0; m];
    let mut acc = KahanSum::new();
    let mut weights = Vec::new();
    for (j, r) in ne.sorted() {
        let g = r.g_hat[a];
        let term = if in_arm(r, a) {
            let w = (1.0 - r.p_hat) / (r.p_hat * r.e_hat[a]);
            weights.push(w);
            w * (r.ybar.unwrap() - g)
        } else {
            0.0
        };
        augmentation[j] = term;
        acc.add(term);
        if !r.s {
            acc.add(g);
        }
    }
    let value = acc.total() / n0 as f64;
    let scale = m as f64 / n0 as f64;
    let influence = ne
        .rows
        .iter()
        .zip(&augmentation)
        .map(|(r, t)| {
            let outside = if r.s { 0.0 } else { r.g_hat[a] - value };
            scale * (t + outside)
        })
        .collect();
    let mut est = PointEstimate::new(EstimatorKind::Transport, Target::Arm(arm.clone()), value);
    est.influence = Some(influence);
    est.weights = WeightDiagnostics::of(&weights);
    if weights.is_empty() {
        est.warnings.push(format!(
            "no randomized clusters in arm `{arm}`; the estimate is the outcome-model mean over non-randomized clusters"
        ));
    }
    Ok(ne.stamp(est))
}

/// Difference `e1 − e2` of two estimates of the same kind.
pub fn contrast(e1: &PointEstimate, e2: &PointEstimate) -> Result<PointEstimate> {
    if e1.estimator != e2.estimator {
        return Err(Error::MismatchedEstimates(format!("{} and {} estimates", e1.estimator, e2.estimator)));
    }
    let (Target::Arm(a), Target::Arm(b)) = (&e1.target, &e2.target) else {
        return Err(Error::MismatchedEstimates("contrasts of contrasts".to_string()));
    };
    let influence = match (&e1.influence, &e2.influence) {
        (Some(x), Some(y)) if x.len() == y.len() => Some(x.iter().zip(y).map(|(u, v)| u - v).collect()),
        (None, None) => None,
        _ => return Err(Error::MismatchedEstimates("influence values are missing or misaligned".to_string())),
    };
    let mut est = PointEstimate::new(e1.estimator, Target::Contrast(a.clone(), b.clone()), e1.value - e2.value);
    est.influence = influence;
    est.working_model = e1.working_model.clone();
    est.folds = e1.folds;
    est.warnings = e1.warnings.iter().chain(&e2.warnings).cloned().collect();
    Ok(est)
}

/// Assign clusters to folds, stratified by participation and arm. Within a
/// stratum clusters are shuffled by a seeded stream and dealt round-robin,
/// continuing where the previous stratum stopped.
pub fn crossfit_folds(ds: &StudyDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let arm_of = ds.arm_indices();
    let max = (0..ds.arms().len()).map(|k| arm_of.iter().filter(|a| **a == Some(k)).count()).min().unwrap_or(0);
    if folds < 2 || folds > max {
        return Err(Error::TooManyFolds { folds, max });
    }
    let mut strata: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for j in ds.sorted_order() {
        strata.entry(arm_of[j]).or_default().push(j);
    }
    let mut assignment = vec![0usize; ds.len()];
    let mut dealt = 0usize;
    for (stratum, (_, mut members)) in strata.into_iter().enumerate() {
        let mut stream = Stream::new(seed, Domain::CrossFit, 0, stratum as u32, 0);
        for i in (1..members.len()).rev() {
            let k = stream.below(i as u64 + 1) as usize;
            members.swap(i, k);
        }
        for j in members {
            assignment[j] = dealt % folds;
            dealt += 1;
        }
    }
    Ok(assignment)
}

/// Out-of-fold nuisance values: the models used for fold `k` are fit on
/// the clusters outside fold `k`.
pub fn crossfit_nuisance_estimates(
    ds: &StudyDataset,
    config: &NuisanceConfig,
    folds: usize,
    seed: u64,
) -> Result<NuisanceEstimates> {
    let assignment = crossfit_folds(ds, folds, seed)?;
    let mut rows: Vec<Option<ClusterNuisance>> = vec![None; ds.len()];
    let mut clipped_p = 0;
    let mut clipped_e = 0;
    for k in 0..folds {
        let train: Vec<usize> = (0..ds.len()).filter(|&j| assignment[j] != k).collect();
        let fitted = fit_nuisance_on(ds, config, &train)?;
        let ne = compute_nuisance_estimates(ds, &fitted)?;
        for (j, row) in ne.rows.into_iter().enumerate() {
            if assignment[j] == k {
                let at_bound = row.p_hat <= PROB_FLOOR || row.p_hat >= 1.0 - PROB_FLOOR;
                clipped_p += usize::from(at_bound);
                let e_bound = row.e_hat.iter().any(|e| *e <= PROB_FLOOR || *e >= 1.0 - PROB_FLOOR);
                clipped_e += usize::from(e_bound);
                rows[j] = Some(row);
            }
        }
    }
    let rows = rows.into_iter().map(|r| r.expect("every cluster has a fold")).collect();
    let mut ne = NuisanceEstimates::from_parts(ds.arms().to_vec(), rows)?;
    ne.clipped_participation = clipped_p;
    ne.clipped_treatment = clipped_e;
    ne.working_model = Some(config.tag());
    ne.folds = Some(folds);
    Ok(ne)
}

/// AIPW with cross-fitted nuisance values.
pub fn crossfit_aipw_psi(
    ds: &StudyDataset,
    config: &NuisanceConfig,
    folds: usize,
    seed: u64,
    arm: &ArmLabel,
) -> Result<PointEstimate> {
    ds.arm_index(arm)?;
    let ne = crossfit_nuisance_estimates(ds, config, folds, seed)?;
    aipw_psi(&ne, arm)
}
