use ecrt_core::simulation::{oracle_draw, run_replication};
use ecrt_core::{generate_replicate, oracle_truth, run_scenario, DgpConfig, Error, EstimatorKind, Scenario};

fn config() -> DgpConfig {
    DgpConfig {
        m: 50,
        size_range: (2, 6),
        q: 1,
        p: 1,
        rho: 0.4,
        w_cluster_sd: 0.7,
        tau: 0.4,
        arms: vec!["control".into(), "treated".into()],
        pi: vec![0.5, 0.5],
        alpha: vec![-0.4, 1.0, 0.6],
        beta: vec![vec![-0.6, 0.9, 0.5, 0.8], vec![0.1, 0.9, 0.5, 1.1]],
        seed: 31,
    }
}

const DRAWS: usize = 100_000;

#[test]
fn psi_truth_does_not_depend_on_participation() {
    let base = oracle_truth(&config(), DRAWS).unwrap();
    let shifted = oracle_truth(&DgpConfig { alpha: vec![1.5, -2.0, 0.3], ..config() }, DRAWS).unwrap();
    for (a, b) in base.arms.iter().zip(&shifted.arms) {
        assert_eq!(a.psi, b.psi);
        assert!((a.phi - b.phi).abs() > 5.0 * (a.phi_mc_se + b.phi_mc_se), "{} vs {}", a.phi, b.phi);
    }
    assert_ne!(base.nonrandomized_draws, shifted.nonrandomized_draws);
}

#[test]
fn flat_outcome_model_has_truth_one_half() {
    let cfg = DgpConfig { tau: 0.0, beta: vec![vec![0.0; 4], vec![0.0; 4]], ..config() };
    let truth = oracle_truth(&cfg, DRAWS).unwrap();
    for arm in &truth.arms {
        assert!((arm.psi - 0.5).abs() < 1e-12);
        assert!((arm.phi - 0.5).abs() < 1e-12);
    }
}

#[test]
fn identical_arms_have_identical_truths() {
    let cfg = DgpConfig { beta: vec![vec![-0.2, 0.4, 0.6, 0.3]; 2], ..config() };
    let truth = oracle_truth(&cfg, DRAWS).unwrap();
    assert_eq!(truth.arms[0].psi, truth.arms[1].psi);
    assert_eq!(truth.arms[0].phi, truth.arms[1].phi);
    let draw = oracle_draw(&cfg, 17);
    assert_eq!(draw.means[0], draw.means[1]);
}

#[test]
fn replicates_are_reproducible_and_distinct() {
    let cfg = config();
    let a = generate_replicate(&cfg, 3).unwrap();
    assert_eq!(a, generate_replicate(&cfg, 3).unwrap());
    assert_ne!(a, generate_replicate(&cfg, 4).unwrap());
    assert_ne!(a, generate_replicate(&DgpConfig { seed: 32, ..cfg.clone() }, 3).unwrap());
    assert_eq!(a.len(), 50);
    assert!(a.clusters().iter().all(|c| (2..=6).contains(&c.size())));
    assert!(a.clusters().iter().all(|c| c.y.is_some() == c.s && c.arm.is_some() == c.s));
}

#[test]
fn scenario_runner_requires_enough_replications() {
    let cfg = config();
    let truth = oracle_truth(&cfg, DRAWS).unwrap();
    let result = run_scenario(&cfg, Scenario::BothCorrect, 199, &[EstimatorKind::Aipw], &truth);
    assert!(matches!(result, Err(Error::InvalidArgument(_))));
    assert!(oracle_truth(&cfg, DRAWS - 1).is_err());
}

#[test]
fn no_trial_clusters_fails_downstream() {
    let cfg = DgpConfig { alpha: vec![-200.0, 0.0, 0.0], tau: 0.0, rho: 0.0, ..config() };
    let ds = generate_replicate(&cfg, 0).unwrap();
    assert_eq!(ds.trial_count(), 0);
    let result = run_replication(&cfg, Scenario::BothCorrect, &[EstimatorKind::Aipw], 0);
    assert!(matches!(result, Err(Error::EmptyArm(_))), "{result:?}");
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(matches!(
        generate_replicate(&DgpConfig { pi: vec![0.5, 0.6], ..config() }, 0),
        Err(Error::ProbabilitiesDontSumToOne(_))
    ));
    assert!(matches!(
        generate_replicate(&DgpConfig { alpha: vec![0.0; 2], ..config() }, 0),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(generate_replicate(&DgpConfig { size_range: (0, 3), ..config() }, 0).is_err());
    assert!(matches!(generate_replicate(&DgpConfig { m: 1, ..config() }, 0), Err(Error::TooFewClusters(1))));
}

#[test]
fn scenario_keys_round_trip() {
    for s in Scenario::ALL {
        assert_eq!(Scenario::from_key(s.key()), Some(s));
    }
    assert_eq!(Scenario::from_key("neither"), None);
}
