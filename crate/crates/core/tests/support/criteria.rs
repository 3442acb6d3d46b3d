//! Checks shared by the test suites and the acceptance runner. Each returns
//! a one-line summary on success and the first discrepancy on failure.

use ecrt_core::models::null_lambda;
use ecrt_core::{
    aipw_psi, cluster_robust_trial_interval, compute_nuisance_estimates, contrast, fit_logistic_elastic_net,
    fit_logistic_mle, gformula_psi, influence_curve_interval, ipw_psi, ipw_psi_aggregated, transport_phi,
    trial_only_estimate, FeatureMatrix, FeatureSpec, TrialPooling,
};
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use super::*;

pub type Outcome = Result<String, String>;

pub const IDENTITY_CASES: u32 = 1000;
pub const ORACLE_DATASETS: u64 = 50;
pub const MAXIMIZER_PROBLEMS: u64 = 20;

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(what()))
    }
}

fn run_cases(name: &str, body: impl Fn(&mut SplitMix, usize) -> Result<(), TestCaseError>) -> Outcome {
    let mut runner = TestRunner::new(Config { cases: IDENTITY_CASES, failure_persistence: None, ..Config::default() });
    runner
        .run(&(2usize..40, proptest::num::u64::ANY), |(m, seed)| body(&mut SplitMix(seed), m))
        .map(|_| format!("{name}: {IDENTITY_CASES} cases"))
        .map_err(|e| format!("{name}: {e}"))
}

fn variance(ic: &[f64]) -> f64 {
    let se = sandwich_se(ic);
    se * se
}

/// Algebraic identities on arbitrary nuisance values, to 1e-12 relative.
pub fn identities() -> Outcome {
    const TOL: f64 = 1e-12;
    let arms = arms();
    let mut lines = Vec::new();

    lines.push(run_cases("AIPW with g = 0 equals unnormalized IPW", |rng, m| {
        let mut rows = nuisance_rows(rng, m);
        rows.iter_mut().for_each(|r| r.g_hat = vec![0.0, 0.0]);
        let ne = nuisance(rows);
        for arm in &arms {
            let aipw = aipw_psi(&ne, arm).unwrap();
            let ipw = ipw_psi(&ne, arm, false).unwrap();
            check(close(aipw.value, ipw.value, TOL), || format!("{} vs {}", aipw.value, ipw.value))?;
            check(all_close(aipw.influence.as_ref().unwrap(), ipw.influence.as_ref().unwrap(), TOL), || {
                "influence values differ".to_string()
            })?;
        }
        Ok(())
    })?);

    lines.push(run_cases("AIPW equals the g-formula when g interpolates Ybar", |rng, m| {
        let rows = nuisance_rows(rng, m);
        for (a, arm) in arms.iter().enumerate() {
            let mut rows = rows.clone();
            for r in rows.iter_mut().filter(|r| r.s && r.arm == Some(a)) {
                r.g_hat[a] = r.ybar.unwrap();
            }
            let ne = nuisance(rows);
            let aipw = aipw_psi(&ne, arm).unwrap();
            let g = gformula_psi(&ne, arm).unwrap();
            check(close(aipw.value, g.value, TOL), || format!("{} vs {}", aipw.value, g.value))?;
            check(all_close(aipw.influence.as_ref().unwrap(), g.influence.as_ref().unwrap(), TOL), || {
                "influence values differ".to_string()
            })?;
        }
        Ok(())
    })?);

    lines.push(run_cases("Hajek lies within the arm's range of Ybar", |rng, m| {
        let rows = nuisance_rows(rng, m);
        let ne = nuisance(rows.clone());
        for (a, arm) in arms.iter().enumerate() {
            let ys: Vec<f64> = rows.iter().filter(|r| r.s && r.arm == Some(a)).map(|r| r.ybar.unwrap()).collect();
            let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let h = ipw_psi(&ne, arm, true).unwrap();
            check(h.value >= lo - TOL && h.value <= hi + TOL, || format!("{} outside [{lo}, {hi}]", h.value))?;
            let sum: f64 = h.influence.as_ref().unwrap().iter().sum();
            check(sum.abs() <= 1e-10 * m as f64, || format!("Hajek influence values sum to {sum}"))?;
        }
        Ok(())
    })?);

    lines.push(run_cases("contrast influence values and variance", |rng, m| {
        let ne = nuisance(nuisance_rows(rng, m));
        let t = aipw_psi(&ne, &arms[1]).unwrap();
        let c = aipw_psi(&ne, &arms[0]).unwrap();
        let d = contrast(&t, &c).unwrap();
        check(close(d.value, t.value - c.value, TOL), || "contrast value".to_string())?;
        let (it, ic) = (t.influence.as_ref().unwrap(), c.influence.as_ref().unwrap());
        let diff: Vec<f64> = it.iter().zip(ic).map(|(x, y)| x - y).collect();
        check(all_close(d.influence.as_ref().unwrap(), &diff, TOL), || "contrast influence".to_string())?;
        let mf = m as f64;
        let cov = it.iter().zip(ic).map(|(x, y)| x * y).sum::<f64>() / (mf - 1.0) / mf
            - it.iter().sum::<f64>() * ic.iter().sum::<f64>() / (mf * (mf - 1.0)) / mf;
        let expected = variance(it) + variance(ic) - 2.0 * cov;
        let se = influence_curve_interval(&d, 0.95).unwrap().se;
        check(close(se * se, expected, 1e-9), || format!("contrast variance {} vs {expected}", se * se))?;
        let zero = contrast(&t, &t).unwrap();
        check(zero.value == 0.0 && zero.influence.unwrap().iter().all(|v| *v == 0.0), || {
            "self-contrast is not exactly zero".to_string()
        })?;
        Ok(())
    })?);

    Ok(lines.join("; "))
}

/// Every estimator against its defining sum on seeded small datasets.
pub fn oracle_equivalence() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut compared = 0usize;
    for seed in 0..ORACLE_DATASETS {
        let ds = small_dataset(seed);
        let fitted = random_models(&ds, seed);
        let ne = compute_nuisance_estimates(&ds, &fitted).map_err(|e| format!("seed {seed}: {e}"))?;
        let d = direct(&ds, &fitted);
        let mut compare = |what: &str, got: f64, want: f64| {
            compared += 1;
            if close(got, want, TOL) {
                Ok(())
            } else {
                Err(format!("seed {seed}: {what} {got} vs oracle {want}"))
            }
        };
        for (j, r) in ne.rows().iter().enumerate() {
            compare("p_hat", r.p_hat, d.p[j])?;
            for a in 0..2 {
                compare("g_hat", r.g_hat[a], d.g[a][j])?;
            }
        }
        for (a, arm) in ds.arms().iter().enumerate() {
            let pairs = [
                ("AIPW", aipw_psi(&ne, arm), d.aipw(a)),
                ("IPW", ipw_psi(&ne, arm, false), d.ipw(a)),
                ("Hajek", ipw_psi(&ne, arm, true), d.hajek(a)),
                ("g-formula", gformula_psi(&ne, arm), d.gformula(a)),
                ("transport", transport_phi(&ne, arm), d.transport(a)),
                (
                    "aggregated IPW",
                    ipw_psi_aggregated(&ds, &fitted.participation, &FeatureSpec::cluster(1), &fitted.treatment, arm),
                    d.ipw(a),
                ),
            ];
            for (name, got, (value, ic)) in pairs {
                let got = got.map_err(|e| format!("seed {seed}: {name}: {e}"))?;
                compare(name, got.value, value)?;
                for (x, y) in got.influence.as_ref().unwrap().iter().zip(&ic) {
                    compare(name, *x, *y)?;
                }
                let se = influence_curve_interval(&got, 0.95).unwrap().se;
                compare(name, se, sandwich_se(&ic))?;
            }

            let (mu, ic, cr1) = trial_only(&ds, a);
            let got = trial_only_estimate(&ds, arm, TrialPooling::Individual).unwrap();
            compare("trial-only", got.value, mu)?;
            for (x, y) in got.influence.as_ref().unwrap().iter().zip(&ic) {
                compare("trial-only influence", *x, *y)?;
            }
            let (beta, variances) = cr1_matrix(&ds);
            compare("OLS arm coefficient", mu, beta[a])?;
            let g = ds.clusters().iter().filter(|c| c.trial_arm() == Some(arm)).count();
            match cluster_robust_trial_interval(&ds, arm, 0.95) {
                Ok(iv) if g >= 2 => {
                    compare("CR1 variance", cr1, variances[a])?;
                    compare("CR1 se", iv.se, cr1.sqrt())?;
                }
                Err(_) if g < 2 => {}
                other => return Err(format!("seed {seed}: CR1 with {g} clusters gave {other:?}")),
            }
        }
    }
    Ok(format!("{ORACLE_DATASETS} datasets, {compared} values"))
}

/// Score of the logistic log-likelihood along coordinate `k`.
fn partial_score(rows: &[Vec<f64>], y: &[f64], beta: &[f64], k: usize) -> f64 {
    rows.iter()
        .zip(y)
        .map(|(r, yi)| {
            let eta: f64 = r.iter().zip(beta).map(|(x, b)| x * b).sum();
            (yi - expit(eta)) * r[k]
        })
        .sum()
}

/// Maximize the likelihood one coordinate at a time, solving each
/// coordinate's score equation by bisection (the score is monotone along
/// every coordinate), until a full sweep moves nothing by more than 1e-12.
fn coordinate_bisection(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>, String> {
    let d = rows[0].len();
    let mut beta = vec![0.0; d];
    for _ in 0..20_000 {
        let mut moved = 0.0_f64;
        for k in 0..d {
            let at = |v: f64, beta: &mut Vec<f64>| {
                beta[k] = v;
                partial_score(rows, y, beta, k)
            };
            let start = beta[k];
            let (mut lo, mut hi) = (start - 1.0, start + 1.0);
            while at(lo, &mut beta) < 0.0 {
                lo -= 2.0 * (hi - lo);
                if lo < -1e6 {
                    return Err("score has no root along a coordinate".to_string());
                }
            }
            while at(hi, &mut beta) > 0.0 {
                hi += 2.0 * (hi - lo);
                if hi > 1e6 {
                    return Err("score has no root along a coordinate".to_string());
                }
            }
            while hi - lo > 1e-15 * (1.0 + lo.abs()) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if at(mid, &mut beta) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            beta[k] = 0.5 * (lo + hi);
            moved = moved.max((beta[k] - start).abs());
        }
        if moved < 1e-12 {
            return Ok(beta);
        }
    }
    Err("coordinate bisection did not settle".to_string())
}

fn logistic_problem(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = SplitMix(seed.wrapping_mul(31).wrapping_add(7));
    let beta: Vec<f64> = (0..=d).map(|_| rng.range(-1.0, 1.0)).collect();
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| std::iter::once(1.0).chain((0..d).map(|_| rng.normal())).collect()).collect();
    let y = rows
        .iter()
        .map(|r| {
            let eta: f64 = r.iter().zip(&beta).map(|(x, b)| x * b).sum();
            if rng.coin(expit(eta)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    (rows, y)
}

/// IRLS against a coordinate-wise likelihood maximizer, the elastic net at the extremes
/// of its penalty path, and intercept-only fits.
pub fn working_models() -> Outcome {
    for seed in 0..MAXIMIZER_PROBLEMS {
        let (rows, y) = logistic_problem(seed, 50, 2);
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let irls = fit_logistic_mle(&x, &y, None).map_err(|e| format!("problem {seed}: {e}"))?;
        let reference = coordinate_bisection(&rows, &y).map_err(|e| format!("problem {seed}: {e}"))?;
        for (a, b) in irls.coefficients.iter().zip(&reference) {
            if (a - b).abs() > 1e-6 {
                return Err(format!("problem {seed}: IRLS {:?} vs reference {:?}", irls.coefficients, reference));
            }
        }
        let xs = x.standardized();
        let mle = fit_logistic_mle(&xs, &y, None).map_err(|e| e.to_string())?;
        for alpha in [0.0, 0.5, 1.0] {
            let en = fit_logistic_elastic_net(&xs, &y, 0.0, alpha).map_err(|e| e.to_string())?;
            for (a, b) in en.coefficients.iter().zip(&mle.coefficients) {
                if (a - b).abs() > 1e-5 {
                    return Err(format!("problem {seed}: lambda 0 elastic net {a} vs MLE {b}"));
                }
            }
        }

        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        for alpha in [0.3, 1.0] {
            let threshold = (1..xs.ncols())
                .map(|c| (xs.rows().zip(&y).map(|(r, yi)| r[c] * (yi - ybar)).sum::<f64>() / y.len() as f64).abs())
                .fold(0.0, f64::max)
                / alpha;
            if !close(threshold, null_lambda(&xs, &y, alpha), 1e-12) {
                return Err(format!("problem {seed}: null threshold {threshold} vs {}", null_lambda(&xs, &y, alpha)));
            }
            for scale in [1.0, 2.0] {
                let fit = fit_logistic_elastic_net(&xs, &y, scale * threshold, alpha).map_err(|e| e.to_string())?;
                if fit.coefficients[1..].iter().any(|b| *b != 0.0) {
                    return Err(format!("problem {seed}: {:?} at the null threshold", fit.coefficients));
                }
                if (fit.coefficients[0] - (ybar / (1.0 - ybar)).ln()).abs() > 1e-10 {
                    return Err(format!("problem {seed}: null intercept {}", fit.coefficients[0]));
                }
            }
        }

        let ones: Vec<Vec<f64>> = vec![vec![1.0]; y.len()];
        let fit = fit_logistic_mle(&FeatureMatrix::from_rows(&ones).unwrap(), &y, None).map_err(|e| e.to_string())?;
        let p = expit(fit.coefficients[0]);
        if (p - ybar).abs() > 1e-12 {
            return Err(format!("problem {seed}: intercept-only fit gives {p}, sample proportion {ybar}"));
        }
    }
    Ok(format!("{MAXIMIZER_PROBLEMS} problems"))
}
