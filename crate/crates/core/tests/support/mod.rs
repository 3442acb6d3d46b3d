//! Test helpers: a small independent RNG, random datasets, and brute-force
//! evaluations of every estimator written directly from its defining sum.
//! Nothing here calls the estimator code under test.

#![allow(dead_code)]

pub mod criteria;

use ecrt_core::{
    validate_dataset, ArmLabel, ClusterNuisance, ClusterRecord, FeatureSpec, FitMethod, FittedNuisance, ModelSpec,
    NuisanceConfig, NuisanceEstimates, ProbabilityModel, StudyDataset, TreatmentMode, TreatmentModel, TreatmentSpec,
};

/// SplitMix64.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.uniform() * n as f64) as usize % n
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn arms() -> Vec<ArmLabel> {
    vec![ArmLabel::from("control"), ArmLabel::from("treated")]
}

/// `m` in `4..=10` clusters of `1..=5` individuals, `q = p = 1`, with at
/// least one cluster per arm in the trial and at least one outside it.
pub fn small_dataset(seed: u64) -> StudyDataset {
    let mut rng = SplitMix(seed);
    let m = 4 + rng.below(7);
    let arms = arms();
    let clusters = (0..m)
        .map(|j| {
            let s = match j {
                0 | 1 => true,
                2 => false,
                _ => rng.coin(0.6),
            };
            let n = 1 + rng.below(5);
            let arm = if j < 2 { j } else { rng.below(2) };
            let w: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal()]).collect();
            let y: Vec<f64> = (0..n).map(|_| if rng.coin(0.45) { 1.0 } else { 0.0 }).collect();
            ClusterRecord {
                cluster_id: format!("k{:02}", m - j),
                s,
                arm: s.then(|| arms[arm].clone()),
                x: vec![rng.normal()],
                w,
                y: s.then_some(y),
            }
        })
        .collect();
    validate_dataset(clusters).expect("generated dataset is valid")
}

/// Working models with random coefficients: participation on
/// `[1, X, mean W]`, outcome on `[1, X, mean W, W_i]`, and known or
/// per-arm constant treatment probabilities.
pub fn random_models(ds: &StudyDataset, seed: u64) -> FittedNuisance {
    let mut rng = SplitMix(seed ^ 0xA5A5);
    let mut coefs = |d: usize| (0..d).map(|_| rng.range(-1.0, 1.0)).collect::<Vec<f64>>();
    let participation = ProbabilityModel::from_coefficients(coefs(3));
    let outcome_by_arm = ds.arms().iter().map(|a| (a.clone(), ProbabilityModel::from_coefficients(coefs(4)))).collect();
    let e = rng.range(0.2, 0.8);
    let probabilities: Vec<f64> = ds.arms().iter().enumerate().map(|(k, _)| if k == 0 { e } else { 1.0 - e }).collect();
    let known = ds.arms().iter().cloned().zip(probabilities.iter().copied()).collect();
    FittedNuisance {
        participation,
        treatment: TreatmentModel::Known { probabilities },
        outcome_by_arm,
        config: NuisanceConfig {
            participation: ModelSpec::mle(FeatureSpec::cluster(1)),
            treatment: TreatmentSpec { mode: TreatmentMode::Known, features: FeatureSpec::cluster(1), known },
            outcome: ModelSpec {
                features: FeatureSpec { include_individual: true, ..FeatureSpec::cluster(1) },
                method: FitMethod::Mle,
            },
        },
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-cluster quantities evaluated directly from the raw data.
pub struct Direct {
    pub s: Vec<bool>,
    pub arm: Vec<Option<usize>>,
    pub p: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    /// `g[a][j]`: average over individuals of the arm-`a` prediction.
    pub g: Vec<Vec<f64>>,
    pub ybar: Vec<f64>,
}

pub fn direct(ds: &StudyDataset, fitted: &FittedNuisance) -> Direct {
    let TreatmentModel::Known { probabilities } = &fitted.treatment else {
        panic!("helpers only use known treatment probabilities")
    };
    let mut out =
        Direct { s: vec![], arm: vec![], p: vec![], e: vec![], g: vec![vec![]; ds.arms().len()], ybar: vec![] };
    for c in ds.clusters() {
        let wbar = c.w.iter().map(|r| r[0]).sum::<f64>() / c.w.len() as f64;
        out.s.push(c.s);
        out.arm.push(c.trial_arm().map(|a| ds.arms().iter().position(|b| b == a).unwrap()));
        out.p.push(expit(dot(&fitted.participation.coefficients, &[1.0, c.x[0], wbar])));
        out.e.push(probabilities.clone());
        for (a, (_, model)) in fitted.outcome_by_arm.iter().enumerate() {
            let total: f64 = c.w.iter().map(|w| expit(dot(&model.coefficients, &[1.0, c.x[0], wbar, w[0]]))).sum();
            out.g[a].push(total / c.w.len() as f64);
        }
        out.ybar.push(c.y.as_ref().map_or(f64::NAN, |y| y.iter().sum::<f64>() / y.len() as f64));
    }
    out
}

impl Direct {
    pub fn m(&self) -> usize {
        self.s.len()
    }

    fn hit(&self, j: usize, a: usize) -> bool {
        self.s[j] && self.arm[j] == Some(a)
    }

    pub fn aipw(&self, a: usize) -> (f64, Vec<f64>) {
        let terms: Vec<f64> = (0..self.m())
            .map(|j| {
                let g = self.g[a][j];
                if self.hit(j, a) {
                    (self.ybar[j] - g) / (self.p[j] * self.e[j][a]) + g
                } else {
                    g
                }
            })
            .collect();
        let psi = terms.iter().sum::<f64>() / self.m() as f64;
        (psi, terms.iter().map(|t| t - psi).collect())
    }

    pub fn ipw(&self, a: usize) -> (f64, Vec<f64>) {
        let terms: Vec<f64> = (0..self.m())
            .map(|j| if self.hit(j, a) { self.ybar[j] / (self.p[j] * self.e[j][a]) } else { 0.0 })
            .collect();
        let psi = terms.iter().sum::<f64>() / self.m() as f64;
        (psi, terms.iter().map(|t| t - psi).collect())
    }

    pub fn hajek(&self, a: usize) -> (f64, Vec<f64>) {
        let w: Vec<f64> =
            (0..self.m()).map(|j| if self.hit(j, a) { 1.0 / (self.p[j] * self.e[j][a]) } else { 0.0 }).collect();
        let sw: f64 = w.iter().sum();
        let psi = (0..self.m()).filter(|&j| w[j] > 0.0).map(|j| w[j] * self.ybar[j]).sum::<f64>() / sw;
        let ic = (0..self.m())
            .map(|j| if w[j] > 0.0 { self.m() as f64 * w[j] * (self.ybar[j] - psi) / sw } else { 0.0 })
            .collect();
        (psi, ic)
    }

    pub fn gformula(&self, a: usize) -> (f64, Vec<f64>) {
        let psi = self.g[a].iter().sum::<f64>() / self.m() as f64;
        (psi, self.g[a].iter().map(|g| g - psi).collect())
    }

    pub fn transport(&self, a: usize) -> (f64, Vec<f64>) {
        let n0 = self.s.iter().filter(|s| !**s).count() as f64;
        let terms: Vec<f64> = (0..self.m())
            .map(|j| {
                if self.hit(j, a) {
                    (1.0 - self.p[j]) / (self.p[j] * self.e[j][a]) * (self.ybar[j] - self.g[a][j])
                } else if !self.s[j] {
                    self.g[a][j]
                } else {
                    0.0
                }
            })
            .collect();
        let phi = terms.iter().sum::<f64>() / n0;
        let ic = (0..self.m())
            .map(|j| {
                let centered = if self.s[j] { terms[j] } else { terms[j] - phi };
                self.m() as f64 / n0 * centered
            })
            .collect();
        (phi, ic)
    }
}

/// Individual-pooled trial mean, its influence values and CR1 variance.
pub fn trial_only(ds: &StudyDataset, a: usize) -> (f64, Vec<f64>, f64) {
    let arm = &ds.arms()[a];
    let members: Vec<&ClusterRecord> = ds.clusters().iter().filter(|c| c.trial_arm() == Some(arm)).collect();
    let n: usize = members.iter().map(|c| c.size()).sum();
    let mu = members.iter().flat_map(|c| c.y.as_ref().unwrap()).sum::<f64>() / n as f64;
    let ic = ds
        .clusters()
        .iter()
        .map(|c| {
            if c.trial_arm() == Some(arm) {
                ds.len() as f64 * c.y.as_ref().unwrap().iter().map(|y| y - mu).sum::<f64>() / n as f64
            } else {
                0.0
            }
        })
        .collect();
    let g = members.len() as f64;
    let meat: f64 = members.iter().map(|c| c.y.as_ref().unwrap().iter().map(|y| y - mu).sum::<f64>().powi(2)).sum();
    (mu, ic, g / (g - 1.0) * meat / (n as f64 * n as f64))
}

/// `sqrt(sample variance / m)` written out longhand.
pub fn sandwich_se(ic: &[f64]) -> f64 {
    let m = ic.len() as f64;
    let mean = ic.iter().sum::<f64>() / m;
    (ic.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0) / m).sqrt()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-3)
}

pub fn all_close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, rel))
}

/// Nuisance estimates with arbitrary values for two arms.
pub fn nuisance_rows(rng: &mut SplitMix, m: usize) -> Vec<ClusterNuisance> {
    (0..m)
        .map(|j| {
            let s = j < 2 || rng.coin(0.5);
            let arm = if j < 2 { j } else { rng.below(2) };
            let e = rng.range(0.05, 0.95);
            ClusterNuisance {
                cluster_id: format!("c{j:03}"),
                s,
                arm: s.then_some(arm),
                p_hat: rng.range(0.05, 1.0),
                e_hat: vec![e, 1.0 - e],
                g_hat: vec![rng.uniform(), rng.uniform()],
                ybar: s.then(|| rng.uniform()),
            }
        })
        .collect()
}

pub fn nuisance(rows: Vec<ClusterNuisance>) -> NuisanceEstimates {
    NuisanceEstimates::from_parts(arms(), rows).expect("valid nuisance rows")
}

/// CR1 variance of the arm coefficients of a saturated linear probability
/// model fit by OLS on all trial individuals, as a matrix sandwich
/// `(X'X)⁻¹ [Σ_g X_g' u_g u_g' X_g] (X'X)⁻¹`, with the diagonal entry of arm
/// `a` scaled by `G_a/(G_a − 1)`.
pub fn cr1_matrix(ds: &StudyDataset) -> (Vec<f64>, Vec<f64>) {
    use nalgebra::{DMatrix, DVector};
    let k = ds.arms().len();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut groups = Vec::new();
    for (g, c) in ds.clusters().iter().enumerate() {
        let Some(arm) = c.trial_arm() else { continue };
        let a = ds.arms().iter().position(|b| b == arm).unwrap();
        for y in c.y.as_ref().unwrap() {
            let mut row = vec![0.0; k];
            row[a] = 1.0;
            rows.extend(row);
            ys.push(*y);
            groups.push(g);
        }
    }
    let n = ys.len();
    let x = DMatrix::from_row_slice(n, k, &rows);
    let y = DVector::from_vec(ys);
    let bread = (x.transpose() * &x).try_inverse().unwrap();
    let beta = &bread * x.transpose() * &y;
    let u = &y - &x * &beta;
    let mut meat = DMatrix::zeros(k, k);
    for g in 0..ds.len() {
        let mut score = DVector::zeros(k);
        for i in (0..n).filter(|&i| groups[i] == g) {
            score += x.row(i).transpose() * u[i];
        }
        meat += &score * score.transpose();
    }
    let v = &bread * meat * &bread;
    let variances = (0..k)
        .map(|a| {
            let arm = &ds.arms()[a];
            let ga = ds.clusters().iter().filter(|c| c.trial_arm() == Some(arm)).count() as f64;
            ga / (ga - 1.0) * v[(a, a)]
        })
        .collect();
    (beta.iter().copied().collect(), variances)
}
