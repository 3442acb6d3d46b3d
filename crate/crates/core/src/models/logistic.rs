//! Binary-response logistic regression: maximum likelihood by iteratively
//! reweighted least squares, and elastic-net penalized fits by cyclic
//! coordinate descent on the IRLS quadratic approximation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Standardization};
use crate::linalg::solve_spd;
use crate::numeric::{compensated_sum, expit, logit, soft_threshold};

const MLE_TOLERANCE: f64 = 1e-8;
const MLE_MAX_ITER: usize = 100;
const EN_TOLERANCE: f64 = 1e-7;
const EN_MAX_OUTER: usize = 250;
const CD_TOLERANCE: f64 = 1e-13;
const CD_MAX_SWEEPS: usize = 100_000;
const MAX_HALVINGS: usize = 10;
const MIN_WORKING_WEIGHT: f64 = 1e-5;
/// Norm of the coefficients on the standardized scale beyond which the
/// likelihood is treated as unbounded.
pub const SEPARATION_CAP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "method", rename_all = "snake_case"))]
pub enum FitMethod {
    Mle,
    ElasticNet { lambda: f64, alpha: f64 },
}

impl FitMethod {
    /// Working-model tag used in reports.
    pub fn tag(&self) -> String {
        match *self {
            FitMethod::Mle => "LR (MLE)".to_string(),
            FitMethod::ElasticNet { alpha: 1.0, .. } => "LASSO".to_string(),
            FitMethod::ElasticNet { alpha: 0.0, .. } => "Ridge".to_string(),
            FitMethod::ElasticNet { .. } => "EN".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitDiagnostics {
    pub iterations: usize,
    /// Largest absolute coefficient change in the final iteration.
    pub max_change: f64,
    pub converged: bool,
    pub log_likelihood: f64,
}

/// A fitted logistic model `expit(xᵀβ)`, intercept first.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbabilityModel {
    pub coefficients: Vec<f64>,
    pub method: FitMethod,
    /// Scale of the features the coefficients refer to.
    pub standardization: Option<Standardization>,
    pub diagnostics: FitDiagnostics,
}

impl ProbabilityModel {
    /// A model with given coefficients on raw features.
    pub fn from_coefficients(coefficients: Vec<f64>) -> Self {
        Self {
            coefficients,
            method: FitMethod::Mle,
            standardization: None,
            diagnostics: FitDiagnostics { iterations: 0, max_change: 0.0, converged: true, log_likelihood: f64::NAN },
        }
    }

    #[inline]
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        compensated_sum(row.iter().zip(&self.coefficients).map(|(x, b)| x * b))
    }
}

/// Probabilities `expit(xᵀβ)` for every row. Features are brought to the
/// model's training scale first.
pub fn predict(model: &ProbabilityModel, features: &FeatureMatrix) -> Result<Vec<f64>> {
    if features.ncols() != model.coefficients.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} coefficients, features have {} columns",
            model.coefficients.len(),
            features.ncols()
        )));
    }
    let scaled = features.rescaled(model.standardization.as_ref());
    Ok(scaled.rows().map(|r| expit(model.linear_predictor(r))).collect())
}

fn check_labels(features: &FeatureMatrix, labels: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} feature rows", labels.len())));
    }
    if labels.iter().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(Error::InvalidArgument("labels must lie in [0, 1]".to_string()));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch(format!("{} weights for {n} rows", w.len())));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".to_string()));
        }
    }
    let total = weights.map_or(n as f64, |w| compensated_sum(w.iter().copied()));
    let ybar = match weights {
        Some(w) => compensated_sum(labels.iter().zip(w).map(|(y, w)| y * w)) / total,
        None => compensated_sum(labels.iter().copied()) / total,
    };
    if !(ybar > 0.0 && ybar < 1.0) {
        return Err(Error::Separation {
            model: "logistic model".to_string(),
            detail: format!("labels have mean {ybar}; both outcomes must occur"),
        });
    }
    Ok(ybar)
}

/// Column means and SDs used to express coefficients on a standardized scale.
struct Scale {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Scale {
    fn of(features: &FeatureMatrix) -> Self {
        let d = features.ncols();
        let mut means = vec![0.0; d];
        let mut sds = vec![1.0; d];
        for c in 1..d {
            let col = features.column(c);
            let mu = crate::numeric::mean(&col);
            let var = crate::numeric::sample_variance(&col);
            means[c] = mu;
            sds[c] = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
        }
        Self { means, sds }
    }

    fn standardized_norm(&self, beta: &[f64]) -> f64 {
        let centre: f64 = beta[0] + (1..beta.len()).map(|c| beta[c] * self.means[c]).sum::<f64>();
        let rest: f64 = (1..beta.len())
            .map(|c| {
                let v = beta[c] * self.sds[c];
                v * v
            })
            .sum();
        libm::sqrt(centre * centre + rest)
    }
}

fn log_likelihood(features: &FeatureMatrix, labels: &[f64], weights: Option<&[f64]>, beta: &[f64]) -> f64 {
    compensated_sum(features.rows().enumerate().map(|(i, row)| {
        let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        // y·η − log(1 + e^η), evaluated stably
        let softplus = if eta > 0.0 { eta + libm::log1p(libm::exp(-eta)) } else { libm::log1p(libm::exp(eta)) };
        let w = weights.map_or(1.0, |w| w[i]);
        w * (labels[i] * eta - softplus)
    }))
}

fn separation(norm: f64) -> Error {
    Error::Separation {
        model: "logistic model".to_string(),
        detail: format!("standardized coefficient norm {norm:.3} exceeds {SEPARATION_CAP}"),
    }
}

/// Weighted maximum likelihood by IRLS with step halving.
pub fn fit_logistic_mle(features: &FeatureMatrix, labels: &[f64], weights: Option<&[f64]>) -> Result<ProbabilityModel> {
    let ybar = check_labels(features, labels, weights)?;
    let d = features.ncols();
    let scale = Scale::of(features);
    let mut beta = vec![0.0; d];
    beta[0] = logit(ybar);
    let mut ll = log_likelihood(features, labels, weights, &beta);
    let mut diagnostics =
        FitDiagnostics { iterations: 0, max_change: f64::INFINITY, converged: false, log_likelihood: ll };

    for iter in 1..=MLE_MAX_ITER {
        let mut info = vec![0.0; d * d];
        let mut score = vec![0.0; d];
        for (i, row) in features.rows().enumerate() {
            let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let mu = expit(eta);
            let w = weights.map_or(1.0, |w| w[i]);
            let resid = w * (labels[i] - mu);
            let v = w * mu * (1.0 - mu);
            for a in 0..d {
                score[a] += row[a] * resid;
                let va = v * row[a];
                for b in 0..=a {
                    info[a * d + b] += va * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                info[b * d + a] = info[a * d + b];
            }
        }
        let step = solve_spd(info, score).ok_or_else(|| {
            if scale.standardized_norm(&beta) > SEPARATION_CAP / 2.0 {
                separation(scale.standardized_norm(&beta))
            } else {
                Error::SingularSystem("logistic model".to_string())
            }
        })?;

        let mut t = 1.0;
        let mut candidate: Vec<f64>;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_ll = log_likelihood(features, labels, weights, &candidate);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                ll = cand_ll;
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::NonConvergence {
                    model: "logistic model".to_string(),
                    iterations: iter,
                    last_change: t * step.iter().fold(0.0_f64, |m, s| m.max(s.abs())),
                });
            }
            t *= 0.5;
        }
        let max_change = beta.iter().zip(&candidate).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        beta = candidate;
        diagnostics.iterations = iter;
        diagnostics.max_change = max_change;
        diagnostics.log_likelihood = ll;

        let norm = scale.standardized_norm(&beta);
        if norm > SEPARATION_CAP {
            return Err(separation(norm));
        }
        if max_change < MLE_TOLERANCE {
            diagnostics.converged = true;
            break;
        }
    }

    Ok(ProbabilityModel {
        coefficients: beta,
        method: FitMethod::Mle,
        standardization: features.standardization().cloned(),
        diagnostics,
    })
}

/// Smallest `λ` at which every penalized coefficient is zero, for
/// standardized features and mixing parameter `alpha > 0`.
pub fn null_lambda(features: &FeatureMatrix, labels: &[f64], alpha: f64) -> f64 {
    let n = features.nrows() as f64;
    let ybar = compensated_sum(labels.iter().copied()) / n;
    (1..features.ncols())
        .map(|c| {
            let g = compensated_sum(features.rows().zip(labels).map(|(r, y)| r[c] * (y - ybar)));
            (g / n).abs()
        })
        .fold(0.0, f64::max)
        / alpha
}

fn en_objective(features: &FeatureMatrix, labels: &[f64], beta: &[f64], lambda: f64, alpha: f64) -> f64 {
    let n = features.nrows() as f64;
    let l1: f64 = beta[1..].iter().map(|b| b.abs()).sum();
    let l2: f64 = beta[1..].iter().map(|b| b * b).sum();
    -log_likelihood(features, labels, None, beta) / n + lambda * (alpha * l1 + 0.5 * (1.0 - alpha) * l2)
}

/// Penalized maximum likelihood:
/// minimize `(1/n)·NLL(β) + λ[α‖β₋₀‖₁ + (1−α)/2‖β₋₀‖²]` with an unpenalized intercept.
pub fn fit_logistic_elastic_net(
    features: &FeatureMatrix,
    labels: &[f64],
    lambda: f64,
    alpha: f64,
) -> Result<ProbabilityModel> {
    if features.standardization().is_none() {
        return Err(Error::NotStandardized);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "elastic net needs lambda >= 0 and alpha in [0, 1], got {lambda}, {alpha}"
        )));
    }
    let ybar = check_labels(features, labels, None)?;
    let n = features.nrows();
    let nf = n as f64;
    let d = features.ncols();
    let scale = Scale::of(features);
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);

    let mut beta = vec![0.0; d];
    beta[0] = logit(ybar);
    let mut objective = en_objective(features, labels, &beta, lambda, alpha);
    let mut eta = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut last_change = f64::INFINITY;

    for outer in 1..=EN_MAX_OUTER {
        // Quadratic approximation around the current coefficients.
        for (i, row) in features.rows().enumerate() {
            eta[i] = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let mu = expit(eta[i]);
            v[i] = (mu * (1.0 - mu)).max(MIN_WORKING_WEIGHT);
            resid[i] = (labels[i] - mu) / v[i];
        }
        let curvature: Vec<f64> =
            (0..d).map(|c| features.rows().zip(&v).map(|(r, vi)| vi * r[c] * r[c]).sum::<f64>() / nf).collect();
        let v_total: f64 = v.iter().sum();

        let mut next = beta.clone();
        for _ in 0..CD_MAX_SWEEPS {
            let mut sweep_change = 0.0_f64;
            let shift = v.iter().zip(&resid).map(|(vi, r)| vi * r).sum::<f64>() / v_total;
            if shift != 0.0 {
                next[0] += shift;
                resid.iter_mut().for_each(|r| *r -= shift);
                sweep_change = sweep_change.max(shift.abs());
            }
            for c in 1..d {
                if curvature[c] == 0.0 {
                    continue;
                }
                let old = next[c];
                let z = features.rows().zip(&v).zip(&resid).map(|((r, vi), ri)| vi * r[c] * ri).sum::<f64>() / nf
                    + curvature[c] * old;
                // The slack absorbs rounding in `z` when λ sits exactly at the null threshold.
                let new = if l1 > 0.0 && z.abs() <= l1 * (1.0 + 1e-10) {
                    0.0
                } else {
                    soft_threshold(z, l1) / (curvature[c] + l2)
                };
                if new != old {
                    let delta = new - old;
                    for (ri, row) in resid.iter_mut().zip(features.rows()) {
                        *ri -= row[c] * delta;
                    }
                    next[c] = new;
                    sweep_change = sweep_change.max(delta.abs());
                }
            }
            if sweep_change < CD_TOLERANCE {
                break;
            }
        }

        // Step halving on the penalized objective.
        let mut t = 1.0;
        let mut candidate = next.clone();
        let mut cand_obj = en_objective(features, labels, &candidate, lambda, alpha);
        let mut halvings = 0;
        while cand_obj > objective + 1e-13 * objective.abs().max(1.0) {
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::NonConvergence { model: "elastic net".to_string(), iterations: outer, last_change });
            }
            t *= 0.5;
            candidate = beta.iter().zip(&next).map(|(b, n)| b + t * (n - b)).collect();
            cand_obj = en_objective(features, labels, &candidate, lambda, alpha);
        }
        last_change = beta.iter().zip(&candidate).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        beta = candidate;
        objective = cand_obj;

        let norm = scale.standardized_norm(&beta);
        if norm > SEPARATION_CAP {
            return Err(Error::Separation {
                model: "elastic net".to_string(),
                detail: format!("standardized coefficient norm {norm:.3} exceeds {SEPARATION_CAP}"),
            });
        }
        if last_change < EN_TOLERANCE {
            let log_likelihood = log_likelihood(features, labels, None, &beta);
            return Ok(ProbabilityModel {
                coefficients: beta,
                method: FitMethod::ElasticNet { lambda, alpha },
                standardization: features.standardization().cloned(),
                diagnostics: FitDiagnostics {
                    iterations: outer,
                    max_change: last_change,
                    converged: true,
                    log_likelihood,
                },
            });
        }
    }
    Err(Error::NonConvergence { model: "elastic net".to_string(), iterations: EN_MAX_OUTER, last_change })
}

/// Rename the model named in fitting errors.
pub(crate) fn in_model(err: Error, name: &str) -> Error {
    match err {
        Error::Separation { detail, .. } => Error::Separation { model: name.to_string(), detail },
        Error::SingularSystem(_) => Error::SingularSystem(name.to_string()),
        Error::NonConvergence { iterations, last_change, .. } => {
            Error::NonConvergence { model: name.to_string(), iterations, last_change }
        }
        other => other,
    }
}
