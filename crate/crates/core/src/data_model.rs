//! Observed data `O_j = (X_j, W_j, S_j, A_j, Y_j)` for each cluster of the
//! target population, with `A_j` and `Y_j` optional outside the trial.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Name of a treatment strategy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ArmLabel(String);

impl ArmLabel {
    pub fn new(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidArgument("arm labels must be nonempty".to_string()));
        }
        Ok(Self(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArmLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ArmLabel {
    /// Panics on an empty label; use [`ArmLabel::new`] for untrusted input.
    fn from(s: &str) -> Self {
        ArmLabel::new(s).expect("empty arm label")
    }
}

/// One cluster of the cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRecord {
    pub cluster_id: String,
    /// Trial participation indicator `S_j`.
    pub s: bool,
    /// Assigned arm; required when `s` is true, ignored otherwise.
    pub arm: Option<ArmLabel>,
    /// Cluster-level covariates `X_j`.
    pub x: Vec<f64>,
    /// Individual-level covariates, one row per individual.
    pub w: Vec<Vec<f64>>,
    /// Individual outcomes in `[0, 1]`, aligned with the rows of `w`.
    pub y: Option<Vec<f64>>,
}

impl ClusterRecord {
    pub fn size(&self) -> usize {
        self.w.len()
    }

    /// Arm of a randomized cluster; `None` for non-randomized clusters even
    /// if an arm label was supplied.
    pub fn trial_arm(&self) -> Option<&ArmLabel> {
        if self.s {
            self.arm.as_ref()
        } else {
            None
        }
    }

    /// Column means of `W_j`.
    pub fn w_means(&self) -> Vec<f64> {
        let p = self.w.first().map_or(0, Vec::len);
        let n = self.w.len() as f64;
        (0..p).map(|k| compensated_sum(self.w.iter().map(|row| row[k])) / n).collect()
    }
}

/// Cluster-level average outcome `Ȳ_j`.
pub fn cluster_average_outcome(record: &ClusterRecord) -> Result<f64> {
    let y = record.y.as_ref().ok_or_else(|| Error::MissingOutcome(record.cluster_id.clone()))?;
    if y.is_empty() {
        return Err(Error::EmptyCluster(record.cluster_id.clone()));
    }
    Ok(compensated_sum(y.iter().copied()) / y.len() as f64)
}

/// A validated cohort of clusters. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyDataset {
    clusters: Vec<ClusterRecord>,
    arms: Vec<ArmLabel>,
    q: usize,
    p: usize,
}

/// Validate clusters and build the arm catalog in first-appearance order
/// among randomized clusters.
pub fn validate_dataset(clusters: Vec<ClusterRecord>) -> Result<StudyDataset> {
    if clusters.len() < 2 {
        return Err(Error::TooFewClusters(clusters.len()));
    }
    let q = clusters[0].x.len();
    let p = clusters[0].w.first().map_or(0, Vec::len);
    let mut seen = BTreeSet::new();
    let mut arms: Vec<ArmLabel> = Vec::new();
    for c in &clusters {
        if !seen.insert(c.cluster_id.as_str()) {
            return Err(Error::DuplicateId(c.cluster_id.clone()));
        }
        if c.x.len() != q {
            return Err(Error::DimensionMismatch(format!(
                "cluster `{}` has {} cluster covariates, expected {q}",
                c.cluster_id,
                c.x.len()
            )));
        }
        if c.w.is_empty() {
            return Err(Error::EmptyCluster(c.cluster_id.clone()));
        }
        for row in &c.w {
            if row.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "cluster `{}` has an individual row with {} covariates, expected {p}",
                    c.cluster_id,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("W of cluster `{}`", c.cluster_id)));
            }
        }
        if c.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("X of cluster `{}`", c.cluster_id)));
        }
        if let Some(y) = &c.y {
            if y.len() != c.w.len() {
                return Err(Error::DimensionMismatch(format!(
                    "cluster `{}` has {} outcomes for {} individuals",
                    c.cluster_id,
                    y.len(),
                    c.w.len()
                )));
            }
            if let Some(&bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::OutcomeOutOfRange { cluster: c.cluster_id.clone(), value: bad });
            }
        }
        if c.s {
            let arm = match (&c.arm, &c.y) {
                (Some(arm), Some(_)) => arm,
                _ => return Err(Error::IncompleteTrialCluster(c.cluster_id.clone())),
            };
            if !arms.contains(arm) {
                arms.push(arm.clone());
            }
        }
    }
    Ok(StudyDataset { clusters, arms, q, p })
}

impl StudyDataset {
    pub fn clusters(&self) -> &[ClusterRecord] {
        &self.clusters
    }

    pub fn into_clusters(self) -> Vec<ClusterRecord> {
        self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn arms(&self) -> &[ArmLabel] {
        &self.arms
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn arm_index(&self, arm: &ArmLabel) -> Result<usize> {
        self.arms.iter().position(|a| a == arm).ok_or_else(|| Error::EmptyArm(arm.to_string()))
    }

    /// Fails with `EmptyArm` for the first requested arm absent from the data.
    pub fn check_arms<'a>(&self, requested: impl IntoIterator<Item = &'a ArmLabel>) -> Result<()> {
        for arm in requested {
            self.arm_index(arm)?;
        }
        Ok(())
    }

    /// Arm index of each cluster (`None` outside the trial).
    pub fn arm_indices(&self) -> Vec<Option<usize>> {
        self.clusters.iter().map(|c| c.trial_arm().map(|a| self.arms.iter().position(|x| x == a).unwrap())).collect()
    }

    /// Cluster indices in ascending `cluster_id` order: the canonical
    /// summation order of every estimator.
    pub fn sorted_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.clusters.len()).collect();
        idx.sort_by(|&a, &b| self.clusters[a].cluster_id.cmp(&self.clusters[b].cluster_id));
        idx
    }

    pub fn trial_count(&self) -> usize {
        self.clusters.iter().filter(|c| c.s).count()
    }

    pub fn total_individuals(&self) -> usize {
        self.clusters.iter().map(ClusterRecord::size).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DatasetSummary {
    pub clusters: usize,
    pub trial_clusters: usize,
    pub individuals: usize,
    pub trial_individuals: usize,
    pub clusters_per_arm: BTreeMap<String, usize>,
    /// Share of clusters that participate in the trial.
    pub trial_fraction: f64,
    /// Share of individuals that live in trial clusters.
    pub trial_individual_fraction: f64,
}

pub fn dataset_summary(ds: &StudyDataset) -> DatasetSummary {
    let trial_individuals = ds.clusters.iter().filter(|c| c.s).map(ClusterRecord::size).sum();
    let individuals = ds.total_individuals();
    let mut clusters_per_arm = BTreeMap::new();
    for arm in &ds.arms {
        clusters_per_arm.insert(arm.to_string(), 0);
    }
    for c in &ds.clusters {
        if let Some(arm) = c.trial_arm() {
            *clusters_per_arm.get_mut(arm.as_str()).unwrap() += 1;
        }
    }
    let trial_clusters = ds.trial_count();
    DatasetSummary {
        clusters: ds.len(),
        trial_clusters,
        individuals,
        trial_individuals,
        clusters_per_arm,
        trial_fraction: trial_clusters as f64 / ds.len() as f64,
        trial_individual_fraction: trial_individuals as f64 / individuals as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn trial(id: &str, arm: &str, w: Vec<Vec<f64>>, y: Vec<f64>) -> ClusterRecord {
        ClusterRecord {
            cluster_id: id.to_string(),
            s: true,
            arm: Some(ArmLabel::from(arm)),
            x: vec![0.0],
            w,
            y: Some(y),
        }
    }

    fn outside(id: &str, n: usize) -> ClusterRecord {
        ClusterRecord {
            cluster_id: id.to_string(),
            s: false,
            arm: None,
            x: vec![1.0],
            w: vec![vec![0.0, 1.0, 2.0]; n],
            y: None,
        }
    }

    #[test]
    fn average_outcome() {
        let mut c = trial("a", "a1", vec![vec![]; 3], vec![1.0, 0.0, 1.0]);
        assert!((cluster_average_outcome(&c).unwrap() - 0.6666666667).abs() < 1e-10);
        c.w = vec![vec![]; 4];
        c.y = Some(vec![0.0; 4]);
        assert_eq!(cluster_average_outcome(&c).unwrap(), 0.0);
        let mut y = vec![0.0; 100];
        y.iter_mut().take(37).for_each(|v| *v = 1.0);
        c.w = vec![vec![]; 100];
        c.y = Some(y);
        assert!((cluster_average_outcome(&c).unwrap() - 0.37).abs() < 1e-15);
        c.y = None;
        assert_eq!(cluster_average_outcome(&c), Err(Error::MissingOutcome("a".into())));
    }

    #[test]
    fn minimal_valid_dataset() {
        let ds =
            validate_dataset(vec![trial("t", "a1", vec![vec![0.0, 1.0, 2.0]], vec![1.0]), outside("o", 2)]).unwrap();
        assert_eq!(ds.arms(), &[ArmLabel::from("a1")]);
        assert_eq!(ds.q(), 1);
        assert_eq!(ds.p(), 3);
    }

    #[test]
    fn rejects_incomplete_trial_cluster() {
        let mut t = trial("t", "a1", vec![vec![0.0, 1.0, 2.0]], vec![1.0]);
        t.y = None;
        assert_eq!(validate_dataset(vec![t, outside("o", 1)]), Err(Error::IncompleteTrialCluster("t".into())));
    }

    #[test]
    fn rejects_unequal_w_width() {
        let mut o = outside("o", 1);
        o.w = vec![vec![0.0; 4]];
        let r = validate_dataset(vec![outside("p", 1), o]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rejects_duplicates_and_singletons() {
        assert_eq!(validate_dataset(vec![outside("o", 1), outside("o", 1)]), Err(Error::DuplicateId("o".into())));
        assert_eq!(validate_dataset(vec![outside("o", 1)]), Err(Error::TooFewClusters(1)));
    }

    #[test]
    fn requested_arm_must_exist() {
        let ds = validate_dataset(vec![outside("o", 1), outside("p", 1)]).unwrap();
        assert!(ds.arms().is_empty());
        assert_eq!(ds.check_arms([&ArmLabel::from("a1")]), Err(Error::EmptyArm("a1".into())));
    }

    #[test]
    fn arm_on_nonrandomized_cluster_is_ignored() {
        let mut o = outside("o", 1);
        o.arm = Some(ArmLabel::from("ghost"));
        let ds = validate_dataset(vec![o, outside("p", 1)]).unwrap();
        assert!(ds.arms().is_empty());
        assert_eq!(ds.arm_indices(), vec![None, None]);
    }

    #[test]
    fn summary_counts() {
        let ds = validate_dataset(vec![outside("a", 2), outside("b", 3), outside("c", 5)]).unwrap();
        let s = dataset_summary(&ds);
        assert_eq!(s.individuals, 10);
        assert_eq!(s.trial_clusters, 0);
    }

    #[test]
    fn validation_is_idempotent() {
        let ds =
            validate_dataset(vec![trial("t", "a1", vec![vec![0.0, 1.0, 2.0]], vec![1.0]), outside("o", 2)]).unwrap();
        let again = validate_dataset(ds.clusters().to_vec()).unwrap();
        assert_eq!(ds, again);
    }
}
