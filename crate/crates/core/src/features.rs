//! Fixed-length feature vectors for the working models.
//!
//! Participation and treatment models see one row per cluster,
//! `[1, X_j, aggregates of W_j]`. The outcome model sees one row per
//! individual, `[1, X_j, aggregates of W_j, W_{j,i}]`, and each row remembers
//! which cluster and individual it came from so predictions can be averaged
//! back to the cluster.
//!
//! The `mean` aggregate of the columns of `W_j` is this crate's choice of
//! cluster summary; other summaries can be supplied as columns of `X`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data_model::StudyDataset;
use crate::error::{Error, Result};
use crate::numeric::{mean, sample_variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Aggregate {
    Mean,
    None,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSpec {
    pub use_x: bool,
    /// One entry per column of `W`; an empty list omits every aggregate.
    pub w_aggregates: Vec<Aggregate>,
    pub include_individual: bool,
    pub standardize: bool,
}

impl FeatureSpec {
    /// `[1, X, mean(W)]` for cluster-level models.
    pub fn cluster(p: usize) -> Self {
        Self { use_x: true, w_aggregates: vec![Aggregate::Mean; p], include_individual: false, standardize: false }
    }

    /// `[1, X, W_i]` for the individual-level outcome model.
    pub fn individual() -> Self {
        Self { use_x: true, w_aggregates: Vec::new(), include_individual: true, standardize: false }
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }

    fn check(&self, ds: &StudyDataset) -> Result<()> {
        if !self.w_aggregates.is_empty() && self.w_aggregates.len() != ds.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} aggregation kinds for {} individual covariates",
                self.w_aggregates.len(),
                ds.p()
            )));
        }
        let has_x = self.use_x && ds.q() > 0;
        let has_agg = self.w_aggregates.contains(&Aggregate::Mean);
        let has_w = self.include_individual && ds.p() > 0;
        if has_x || has_agg || has_w {
            Ok(())
        } else {
            Err(Error::EmptySpec)
        }
    }

    pub fn column_names(&self, ds: &StudyDataset) -> Vec<String> {
        let mut names = vec!["(intercept)".to_string()];
        if self.use_x {
            names.extend((1..=ds.q()).map(|k| format!("x{k}")));
        }
        for (k, agg) in self.w_aggregates.iter().enumerate() {
            if *agg == Aggregate::Mean {
                names.push(format!("mean_w{}", k + 1));
            }
        }
        if self.include_individual {
            names.extend((1..=ds.p()).map(|k| format!("w{k}")));
        }
        names
    }
}

/// Column centering and scaling fitted on a training sample. Column 0 is
/// the intercept and is never transformed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Sample SDs (divisor `n - 1`); constant columns get 1.
    pub sds: Vec<f64>,
}

impl Standardization {
    fn fit(matrix: &FeatureMatrix) -> Self {
        let mut means = vec![0.0; matrix.ncols];
        let mut sds = vec![1.0; matrix.ncols];
        for c in 1..matrix.ncols {
            let col = matrix.column(c);
            means[c] = mean(&col);
            let sd = libm::sqrt(sample_variance(&col));
            sds[c] = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        }
        Self { means, sds }
    }
}

/// Row-major design matrix with a leading intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
    names: Vec<String>,
    spec: Option<FeatureSpec>,
    standardization: Option<Standardization>,
    origins: Vec<(usize, usize)>,
}

impl FeatureMatrix {
    /// Build from explicit rows. Every row must start with the intercept 1.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if ncols == 0 {
            return Err(Error::EmptySpec);
        }
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch("ragged feature rows".to_string()));
            }
            if row[0] != 1.0 {
                return Err(Error::InvalidArgument("feature rows must start with the intercept 1".to_string()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("feature row".to_string()));
            }
            data.extend_from_slice(row);
        }
        let names = core::iter::once("(intercept)".to_string()).chain((1..ncols).map(|k| format!("f{k}"))).collect();
        Ok(Self { nrows: rows.len(), ncols, data, names, spec: None, standardization: None, origins: Vec::new() })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.ncols)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|r| r[c]).collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn spec(&self) -> Option<&FeatureSpec> {
        self.spec.as_ref()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// `(cluster index, individual index)` of each row of an individual-level
    /// matrix; empty for cluster-level matrices.
    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            nrows: idx.len(),
            ncols: self.ncols,
            data,
            names: self.names.clone(),
            spec: self.spec.clone(),
            standardization: self.standardization.clone(),
            origins: if self.origins.is_empty() { Vec::new() } else { idx.iter().map(|&i| self.origins[i]).collect() },
        }
    }

    /// Standardize using statistics of this matrix's own rows. Statistics
    /// of an earlier standardization are undone first.
    pub fn standardized(&self) -> Self {
        let raw = self.destandardized();
        let stats = Standardization::fit(&raw);
        raw.apply(stats)
    }

    /// Express the features on the scale of `stats` (raw when `None`).
    pub fn rescaled(&self, stats: Option<&Standardization>) -> Self {
        if self.standardization.as_ref() == stats {
            return self.clone();
        }
        let raw = self.destandardized();
        match stats {
            Some(s) => raw.apply(s.clone()),
            None => raw,
        }
    }

    /// Recover the raw features.
    pub fn destandardized(&self) -> Self {
        let Some(stats) = &self.standardization else {
            return self.clone();
        };
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.ncols) {
            for (c, v) in row.iter_mut().enumerate().skip(1) {
                *v = *v * stats.sds[c] + stats.means[c];
            }
        }
        out.standardization = None;
        out
    }

    fn apply(mut self, stats: Standardization) -> Self {
        debug_assert!(self.standardization.is_none());
        for row in self.data.chunks_exact_mut(self.ncols) {
            for (c, v) in row.iter_mut().enumerate().skip(1) {
                *v = (*v - stats.means[c]) / stats.sds[c];
            }
        }
        self.standardization = Some(stats);
        self
    }
}

fn cluster_block(ds: &StudyDataset, spec: &FeatureSpec, j: usize, out: &mut Vec<f64>) {
    let c = &ds.clusters()[j];
    out.push(1.0);
    if spec.use_x {
        out.extend_from_slice(&c.x);
    }
    if spec.w_aggregates.contains(&Aggregate::Mean) {
        let means = c.w_means();
        for (k, agg) in spec.w_aggregates.iter().enumerate() {
            if *agg == Aggregate::Mean {
                out.push(means[k]);
            }
        }
    }
}

/// One row per cluster: `[1, X_j, aggregates of W_j]`, standardized over
/// all clusters when `standardize` is set.
pub fn cluster_features(ds: &StudyDataset, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    if spec.include_individual {
        return Err(Error::InvalidArgument("cluster features cannot include individual rows".to_string()));
    }
    spec.check(ds)?;
    let names = spec.column_names(ds);
    let ncols = names.len();
    let mut data = Vec::with_capacity(ds.len() * ncols);
    for j in 0..ds.len() {
        cluster_block(ds, spec, j, &mut data);
    }
    let m = FeatureMatrix {
        nrows: ds.len(),
        ncols,
        data,
        names,
        spec: Some(spec.clone()),
        standardization: None,
        origins: Vec::new(),
    };
    Ok(if spec.standardize { m.standardized() } else { m })
}

/// One row per individual: `[1, X_j, aggregates of W_j, W_{j,i}]`.
pub fn individual_features(ds: &StudyDataset, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    if !spec.include_individual {
        return Err(Error::InvalidArgument("individual features require include_individual".to_string()));
    }
    spec.check(ds)?;
    let names = spec.column_names(ds);
    let ncols = names.len();
    let n = ds.total_individuals();
    let mut data = Vec::with_capacity(n * ncols);
    let mut origins = Vec::with_capacity(n);
    let mut block = Vec::with_capacity(ncols);
    for (j, c) in ds.clusters().iter().enumerate() {
        block.clear();
        cluster_block(ds, spec, j, &mut block);
        for (i, w) in c.w.iter().enumerate() {
            data.extend_from_slice(&block);
            data.extend_from_slice(w);
            origins.push((j, i));
        }
    }
    let m = FeatureMatrix { nrows: n, ncols, data, names, spec: Some(spec.clone()), standardization: None, origins };
    Ok(if spec.standardize { m.standardized() } else { m })
}
