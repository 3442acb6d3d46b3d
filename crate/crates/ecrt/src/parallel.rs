//! Thread-pool runners for the oracle, scenario replications and bootstrap
//! replicates. Every unit of work draws from its own counter-addressed
//! stream and results are combined in index order, so the output does not
//! depend on the number of threads.

use ecrt_core::inference::{bootstrap_sample, summarize_bootstrap, BootstrapConfig};
use ecrt_core::simulation::{
    aggregate_replications, check_oracle_draws, oracle_draw, oracle_from_draws, run_replication, DgpConfig, OracleDraw,
    OracleTruth, ReplicationResult, Scenario, ScenarioResult,
};
use ecrt_core::{EstimatorKind, IntervalEstimate, StudyDataset};
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// A pool with `threads` workers, or one per core when `None`.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

pub fn oracle_truth(pool: &rayon::ThreadPool, cfg: &DgpConfig, draws: usize) -> Result<OracleTruth> {
    cfg.validate()?;
    check_oracle_draws(draws)?;
    let all: Vec<OracleDraw> = pool.install(|| (0..draws).into_par_iter().map(|d| oracle_draw(cfg, d)).collect());
    Ok(oracle_from_draws(cfg, &all))
}

/// Run replications `0..replications` of a scenario. No lower bound on the
/// replication count is enforced here; callers flag small runs.
pub fn run_scenario(
    pool: &rayon::ThreadPool,
    cfg: &DgpConfig,
    scenario: Scenario,
    replications: usize,
    estimators: &[EstimatorKind],
    truth: &OracleTruth,
) -> Result<ScenarioResult> {
    cfg.validate()?;
    let results: Vec<ecrt_core::Result<ReplicationResult>> = pool
        .install(|| (0..replications).into_par_iter().map(|r| run_replication(cfg, scenario, estimators, r)).collect());
    Ok(aggregate_replications(scenario, truth, estimators, &results)?)
}

/// Evaluate `estimates` on every bootstrap sample. Entry `r` holds the
/// values of replicate `r`, one per estimand, or the error that stopped it.
pub fn bootstrap_values<F>(
    pool: &rayon::ThreadPool,
    ds: &StudyDataset,
    config: &BootstrapConfig,
    estimates: F,
) -> Vec<ecrt_core::Result<Vec<ecrt_core::Result<f64>>>>
where
    F: Fn(&StudyDataset) -> ecrt_core::Result<Vec<ecrt_core::Result<f64>>> + Sync,
{
    pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| bootstrap_sample(ds, config.seed, r, config.stratified).and_then(|b| estimates(&b)))
            .collect()
    })
}

/// Percentile interval for estimand `k` from [`bootstrap_values`] output.
pub fn bootstrap_interval(
    point: f64,
    values: &[ecrt_core::Result<Vec<ecrt_core::Result<f64>>>],
    k: usize,
    level: f64,
) -> Result<IntervalEstimate> {
    let column: Vec<ecrt_core::Result<f64>> = values
        .iter()
        .map(|r| match r {
            Ok(v) => v[k].clone(),
            Err(e) => Err(e.clone()),
        })
        .collect();
    Ok(summarize_bootstrap(point, &column, level)?)
}
