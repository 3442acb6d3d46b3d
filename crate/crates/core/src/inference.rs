//! Confidence intervals: influence-curve (sandwich), cluster bootstrap and
//! cluster-robust (CR1) variance for the trial-only baseline.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;

use crate::data_model::{validate_dataset, ArmLabel, ClusterRecord, StudyDataset};
use crate::error::{Error, Result};
use crate::estimators::{trial_only_estimate, PointEstimate, TrialPooling};
use crate::numeric::{quantile_sorted, sample_variance, KahanSum};
use crate::rng::{Domain, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum IntervalMethod {
    InfluenceCurve,
    ClusterBootstrap,
    ClusterRobustOls,
}

impl IntervalMethod {
    pub fn key(&self) -> &'static str {
        match self {
            IntervalMethod::InfluenceCurve => "influence_curve",
            IntervalMethod::ClusterBootstrap => "cluster_bootstrap",
            IntervalMethod::ClusterRobustOls => "cluster_robust_ols",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        [Self::InfluenceCurve, Self::ClusterBootstrap, Self::ClusterRobustOls].into_iter().find(|m| m.key() == key)
    }
}

impl fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntervalEstimate {
    pub point: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
    /// Replicates kept, for bootstrap intervals.
    pub replicates: Option<usize>,
    /// Replicates dropped because the estimator failed on them.
    pub failed_replicates: Option<usize>,
}

impl IntervalEstimate {
    fn wald(point: f64, se: f64, level: f64, method: IntervalMethod) -> Self {
        let half = normal_quantile(0.5 + level / 2.0) * se;
        Self {
            point,
            se,
            lower: point - half,
            upper: point + half,
            level,
            method,
            replicates: None,
            failed_replicates: None,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("confidence level {level} is outside (0, 1)")))
    }
}

/// Inverse of the standard normal distribution function (Wichura's AS 241,
/// relative accuracy about 1e-16).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = libm::sqrt(-libm::log(tail));
    let value = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Wald interval from the influence values carried by `est`:
/// `σ̂² = (1/m) · s²`, where `s²` is their sample variance.
pub fn influence_curve_interval(est: &PointEstimate, level: f64) -> Result<IntervalEstimate> {
    check_level(level)?;
    let influence = est.influence.as_deref().filter(|v| !v.is_empty()).ok_or(Error::NoInfluenceValues)?;
    let m = influence.len() as f64;
    let se = libm::sqrt(sample_variance(influence) / m);
    Ok(IntervalEstimate::wald(est.value, se, level, IntervalMethod::InfluenceCurve))
}

/// Trial-only mean and its CR1 variance for one arm.
fn cr1_parts(ds: &StudyDataset, arm: &ArmLabel) -> Result<(f64, f64)> {
    let est = trial_only_estimate(ds, arm, TrialPooling::Individual)?;
    let a = ds.arm_index(arm)?;
    let arm_of = ds.arm_indices();
    let mu = est.value;
    let mut squares = KahanSum::new();
    let mut n_a = 0usize;
    let mut g = 0usize;
    for j in ds.sorted_order() {
        if arm_of[j] != Some(a) {
            continue;
        }
        let y = ds.clusters()[j].y.as_ref().expect("validated trial cluster");
        let r: KahanSum = y.iter().map(|v| v - mu).collect();
        squares.add(r.total() * r.total());
        n_a += y.len();
        g += 1;
    }
    if g < 2 {
        return Err(Error::FewerThanTwoClusters(arm.to_string()));
    }
    let gf = g as f64;
    let n = n_a as f64;
    Ok((mu, gf / (gf - 1.0) * squares.total() / (n * n)))
}

/// CR1 interval for the trial-only arm mean: variance
/// `[G/(G−1)] Σ_j r_j² / n_a²` over the `G` arm-`a` trial clusters.
pub fn cluster_robust_trial_interval(ds: &StudyDataset, arm: &ArmLabel, level: f64) -> Result<IntervalEstimate> {
    check_level(level)?;
    let (mu, variance) = cr1_parts(ds, arm)?;
    Ok(IntervalEstimate::wald(mu, libm::sqrt(variance), level, IntervalMethod::ClusterRobustOls))
}

/// CR1 interval for a difference of trial-only arm means. The arms share no
/// clusters, so the variances add.
pub fn cluster_robust_trial_contrast(
    ds: &StudyDataset,
    arm: &ArmLabel,
    reference: &ArmLabel,
    level: f64,
) -> Result<IntervalEstimate> {
    check_level(level)?;
    let (mu_a, var_a) = cr1_parts(ds, arm)?;
    let (mu_b, var_b) = cr1_parts(ds, reference)?;
    Ok(IntervalEstimate::wald(mu_a - mu_b, libm::sqrt(var_a + var_b), level, IntervalMethod::ClusterRobustOls))
}

/// Bootstrap resampling options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Resample within (participation, arm) strata instead of from all clusters.
    pub stratified: bool,
}

/// Smallest replicate count accepted.
pub const MIN_REPLICATES: usize = 200;
/// Largest share of replicates allowed to fail.
pub const MAX_FAILED_SHARE: f64 = 0.02;

/// The `replicate`-th cluster bootstrap sample of `ds`. Each draw keeps the
/// source cluster and gets the id `"{id}#{k}"`, `k` being its draw position.
pub fn bootstrap_sample(ds: &StudyDataset, seed: u64, replicate: usize, stratified: bool) -> Result<StudyDataset> {
    let order = ds.sorted_order();
    let mut stream = Stream::new(seed, Domain::Bootstrap, replicate as u32, 0, 0);
    let picks: Vec<usize> = if stratified {
        let arm_of = ds.arm_indices();
        let mut strata: Vec<(Option<usize>, Vec<usize>)> = Vec::new();
        for &j in &order {
            match strata.iter_mut().find(|(key, _)| *key == arm_of[j]) {
                Some((_, members)) => members.push(j),
                None => strata.push((arm_of[j], alloc::vec![j])),
            }
        }
        strata.sort_by_key(|(key, _)| key.map_or(0, |k| k + 1));
        strata
            .iter()
            .flat_map(|(_, members)| {
                (0..members.len()).map(|_| members[stream.below(members.len() as u64) as usize]).collect::<Vec<_>>()
            })
            .collect()
    } else {
        (0..order.len()).map(|_| order[stream.below(order.len() as u64) as usize]).collect()
    };
    let clusters: Vec<ClusterRecord> = picks
        .into_iter()
        .enumerate()
        .map(|(k, j)| {
            let mut c = ds.clusters()[j].clone();
            c.cluster_id = format!("{}#{k}", c.cluster_id);
            c
        })
        .collect();
    validate_dataset(clusters)
}

/// Percentile interval and standard deviation from replicate values.
/// `values` holds `Ok` for kept replicates and `Err` for failed ones, in
/// replicate order.
pub fn summarize_bootstrap(point: f64, values: &[Result<f64>], level: f64) -> Result<IntervalEstimate> {
    check_level(level)?;
    let total = values.len();
    if total < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "{total} bootstrap replicates requested, at least {MIN_REPLICATES} are needed"
        )));
    }
    let mut kept: Vec<f64> = values.iter().filter_map(|v| v.as_ref().ok().copied()).collect();
    let failed = total - kept.len();
    if failed as f64 > MAX_FAILED_SHARE * total as f64 {
        return Err(Error::TooManyFailedReplicates { failed, total });
    }
    let se = libm::sqrt(sample_variance(&kept));
    kept.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(IntervalEstimate {
        point,
        se,
        lower: quantile_sorted(&kept, tail),
        upper: quantile_sorted(&kept, 1.0 - tail),
        level,
        method: IntervalMethod::ClusterBootstrap,
        replicates: Some(kept.len()),
        failed_replicates: Some(failed),
    })
}

/// Cluster bootstrap interval for `estimator`, which must refit every
/// nuisance model from the dataset it is given. Replicates run serially;
/// the `ecrt` crate has a parallel runner with identical output.
pub fn cluster_bootstrap_interval<F>(
    ds: &StudyDataset,
    mut estimator: F,
    level: f64,
    config: &BootstrapConfig,
) -> Result<IntervalEstimate>
where
    F: FnMut(&StudyDataset) -> Result<f64>,
{
    check_level(level)?;
    let point = estimator(ds)?;
    let values: Vec<Result<f64>> = (0..config.replicates)
        .map(|r| bootstrap_sample(ds, config.seed, r, config.stratified).and_then(|b| estimator(&b)))
        .collect();
    summarize_bootstrap(point, &values, level)
}
