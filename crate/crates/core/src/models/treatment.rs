//! Treatment-assignment models `ê_a` among randomized clusters.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::logistic::{FitDiagnostics, SEPARATION_CAP};
use crate::data_model::{ArmLabel, StudyDataset};
use crate::error::{Error, Result};
use crate::features::{cluster_features, FeatureMatrix, FeatureSpec, Standardization};
use crate::linalg::solve_spd;
use crate::numeric::compensated_sum;

const GRADIENT_TOLERANCE: f64 = 1e-8;
const MAX_ITER: usize = 100;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TreatmentMode {
    /// Randomization probabilities supplied by the user.
    Known,
    /// Arm frequencies among randomized clusters.
    Empirical,
    /// Softmax of per-arm linear scores in cluster features.
    MultinomialLogit,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreatmentSpec {
    pub mode: TreatmentMode,
    pub features: FeatureSpec,
    /// Known probabilities by arm (mode `Known`).
    pub known: Vec<(ArmLabel, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TreatmentModel {
    /// The same probabilities for every cluster, aligned with the arm catalog.
    Known {
        probabilities: Vec<f64>,
    },
    /// Per-cluster known probabilities (cluster × arm).
    KnownPerCluster {
        probabilities: Vec<Vec<f64>>,
    },
    Empirical {
        shares: Vec<f64>,
    },
    /// Scores of every arm except the first (reference) arm.
    MultinomialLogit {
        coefficients: Vec<Vec<f64>>,
        features: FeatureSpec,
        standardization: Option<Standardization>,
        diagnostics: FitDiagnostics,
    },
}

impl TreatmentModel {
    pub fn tag(&self) -> &'static str {
        match self {
            TreatmentModel::Known { .. } | TreatmentModel::KnownPerCluster { .. } => "known",
            TreatmentModel::Empirical { .. } => "empirical",
            TreatmentModel::MultinomialLogit { .. } => "multinomial_logit",
        }
    }

    /// Assignment probabilities for every cluster of `ds` (cluster × arm).
    pub fn predict_all(&self, ds: &StudyDataset) -> Result<Vec<Vec<f64>>> {
        match self {
            TreatmentModel::Known { probabilities } => Ok(vec![probabilities.clone(); ds.len()]),
            TreatmentModel::Empirical { shares } => Ok(vec![shares.clone(); ds.len()]),
            TreatmentModel::KnownPerCluster { probabilities } => {
                if probabilities.len() != ds.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} rows of treatment probabilities for {} clusters",
                        probabilities.len(),
                        ds.len()
                    )));
                }
                Ok(probabilities.clone())
            }
            TreatmentModel::MultinomialLogit { coefficients, features, standardization, .. } => {
                let spec = FeatureSpec { standardize: false, ..features.clone() };
                let x = cluster_features(ds, &spec)?.rescaled(standardization.as_ref());
                Ok(x.rows().map(|row| softmax_scores(coefficients, row)).collect())
            }
        }
    }
}

fn softmax_scores(coefficients: &[Vec<f64>], row: &[f64]) -> Vec<f64> {
    let mut scores = Vec::with_capacity(coefficients.len() + 1);
    scores.push(0.0);
    for beta in coefficients {
        scores.push(compensated_sum(row.iter().zip(beta).map(|(x, b)| x * b)));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
    let total = compensated_sum(exps.iter().copied());
    exps.into_iter().map(|e| e / total).collect()
}

/// Fit the treatment model on every randomized cluster of `ds`.
pub fn fit_treatment_model(ds: &StudyDataset, spec: &TreatmentSpec) -> Result<TreatmentModel> {
    let all: Vec<usize> = (0..ds.len()).collect();
    fit_treatment_model_on(ds, spec, &all)
}

pub(crate) fn fit_treatment_model_on(
    ds: &StudyDataset,
    spec: &TreatmentSpec,
    train: &[usize],
) -> Result<TreatmentModel> {
    let arms = ds.arms();
    match spec.mode {
        TreatmentMode::Known => known_probabilities(arms, &spec.known),
        TreatmentMode::Empirical => {
            let counts = arm_counts(ds, train);
            let total: usize = counts.iter().sum();
            if let Some(k) = counts.iter().position(|&c| c == 0) {
                return Err(Error::EmptyArm(arms[k].to_string()));
            }
            Ok(TreatmentModel::Empirical { shares: counts.iter().map(|&c| c as f64 / total as f64).collect() })
        }
        TreatmentMode::MultinomialLogit => {
            let counts = arm_counts(ds, train);
            if let Some(k) = counts.iter().position(|&c| c == 0) {
                return Err(Error::EmptyArm(arms[k].to_string()));
            }
            let raw_spec = FeatureSpec { standardize: false, ..spec.features.clone() };
            let arm_of = ds.arm_indices();
            let rows: Vec<usize> = train.iter().copied().filter(|&j| arm_of[j].is_some()).collect();
            let mut x = cluster_features(ds, &raw_spec)?.select_rows(&rows);
            if spec.features.standardize {
                x = x.standardized();
            }
            let labels: Vec<usize> = rows.iter().map(|&j| arm_of[j].unwrap()).collect();
            let (coefficients, diagnostics) = fit_multinomial(&x, &labels, arms.len())?;
            Ok(TreatmentModel::MultinomialLogit {
                coefficients,
                features: spec.features.clone(),
                standardization: x.standardization().cloned(),
                diagnostics,
            })
        }
    }
}

fn arm_counts(ds: &StudyDataset, rows: &[usize]) -> Vec<usize> {
    let arm_of = ds.arm_indices();
    let mut counts = vec![0usize; ds.arms().len()];
    for &j in rows {
        if let Some(k) = arm_of[j] {
            counts[k] += 1;
        }
    }
    counts
}

fn known_probabilities(arms: &[ArmLabel], known: &[(ArmLabel, f64)]) -> Result<TreatmentModel> {
    for (label, _) in known {
        if !arms.contains(label) {
            return Err(Error::EmptyArm(label.to_string()));
        }
    }
    let mut probabilities = Vec::with_capacity(arms.len());
    for arm in arms {
        let p = known
            .iter()
            .find(|(label, _)| label == arm)
            .map(|(_, p)| *p)
            .ok_or_else(|| Error::InvalidArgument(format!("no known treatment probability for arm `{arm}`")))?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("treatment probability {p} for arm `{arm}` is outside (0, 1]")));
        }
        probabilities.push(p);
    }
    let total = compensated_sum(probabilities.iter().copied());
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::ProbabilitiesDontSumToOne(total));
    }
    Ok(TreatmentModel::Known { probabilities })
}

/// Newton ascent on the multinomial log-likelihood with the first arm as
/// reference; stops when the gradient norm drops below the tolerance.
fn fit_multinomial(x: &FeatureMatrix, labels: &[usize], k: usize) -> Result<(Vec<Vec<f64>>, FitDiagnostics)> {
    let d = x.ncols();
    let free = k - 1;
    let dim = free * d;
    let n = labels.len() as f64;
    let mut counts = vec![0.0; k];
    labels.iter().for_each(|&a| counts[a] += 1.0);

    let mut theta = vec![0.0; dim];
    for a in 1..k {
        theta[(a - 1) * d] = libm::log(counts[a] / counts[0]);
    }
    let unpack = |theta: &[f64]| -> Vec<Vec<f64>> { theta.chunks(d).map(<[f64]>::to_vec).collect() };

    let loglik = |theta: &[f64]| -> f64 {
        let coefs = unpack(theta);
        compensated_sum(x.rows().zip(labels).map(|(row, &a)| libm::log(softmax_scores(&coefs, row)[a])))
    };

    let mut ll = loglik(&theta);
    let mut diagnostics = FitDiagnostics { iterations: 0, max_change: 0.0, converged: false, log_likelihood: ll };
    for iter in 0..=MAX_ITER {
        let coefs = unpack(&theta);
        let mut grad = vec![0.0; dim];
        let mut neg_hess = vec![0.0; dim * dim];
        for (row, &label) in x.rows().zip(labels) {
            let pi = softmax_scores(&coefs, row);
            for a in 1..k {
                let r = f64::from(u8::from(label == a)) - pi[a];
                for c in 0..d {
                    grad[(a - 1) * d + c] += r * row[c];
                }
                for b in 1..k {
                    let cov = pi[a] * (f64::from(u8::from(a == b)) - pi[b]);
                    for c in 0..d {
                        for e in 0..d {
                            neg_hess[((a - 1) * d + c) * dim + (b - 1) * d + e] += cov * row[c] * row[e];
                        }
                    }
                }
            }
        }
        let grad_norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
        if grad_norm < GRADIENT_TOLERANCE * n.max(1.0) {
            diagnostics.converged = true;
            diagnostics.log_likelihood = ll;
            return Ok((coefs, diagnostics));
        }
        if iter == MAX_ITER {
            break;
        }
        let step =
            solve_spd(neg_hess, grad.clone()).ok_or_else(|| Error::SingularSystem("treatment model".to_string()))?;
        let mut t = 1.0;
        let mut halvings = 0;
        let candidate = loop {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let cand_ll = loglik(&cand);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                ll = cand_ll;
                break cand;
            }
            halvings += 1;
            if halvings > 10 {
                return Err(Error::NonConvergence {
                    model: "treatment model".to_string(),
                    iterations: iter,
                    last_change: t,
                });
            }
            t *= 0.5;
        };
        diagnostics.max_change = theta.iter().zip(&candidate).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        diagnostics.iterations = iter + 1;
        theta = candidate;
        let norm = libm::sqrt(theta.iter().map(|v| v * v).sum::<f64>());
        if norm > SEPARATION_CAP && x.standardization().is_some() {
            return Err(Error::Separation {
                model: "treatment model".to_string(),
                detail: format!("coefficient norm {norm:.3} exceeds {SEPARATION_CAP}"),
            });
        }
    }
    Err(Error::NonConvergence {
        model: "treatment model".to_string(),
        iterations: MAX_ITER,
        last_change: diagnostics.max_change,
    })
}

impl TreatmentSpec {
    pub fn known(known: Vec<(ArmLabel, f64)>) -> Self {
        Self { mode: TreatmentMode::Known, features: FeatureSpec::cluster(0), known }
    }

    pub fn describe(&self) -> String {
        match self.mode {
            TreatmentMode::Known => "known".to_string(),
            TreatmentMode::Empirical => "empirical".to_string(),
            TreatmentMode::MultinomialLogit => "multinomial_logit".to_string(),
        }
    }
}
