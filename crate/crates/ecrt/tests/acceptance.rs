//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use ecrt::{run_simulation, RunConfig, SimulationReport};
use ecrt_core::{ArmLabel, EstimatorKind, Scenario};
use support::criteria;

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

struct Tally {
    failed: usize,
}

impl Tally {
    fn report(&mut self, n: usize, name: &str, started: Instant, outcome: Result<String, String>) {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} PASS [{name}] ({secs:.1}s): {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("criterion {n} FAIL [{name}] ({secs:.1}s): {detail}");
            }
        }
    }
}

fn cell<'a>(
    report: &'a SimulationReport,
    scenario: Scenario,
    estimator: EstimatorKind,
    arm: &ArmLabel,
) -> Result<&'a ecrt_core::simulation::EstimatorSummary, String> {
    report
        .scenarios
        .iter()
        .find(|s| s.scenario == scenario)
        .and_then(|s| s.summary(estimator, arm))
        .ok_or_else(|| format!("no {estimator:?} result for {arm} in {scenario}"))
}

fn double_robustness(report: &SimulationReport) -> Result<String, String> {
    let mut notes = Vec::new();
    let mut problems = Vec::new();
    let worst_mc = report.oracle.arms.iter().map(|a| a.psi_mc_se.max(a.phi_mc_se)).fold(0.0, f64::max);
    if worst_mc >= 1e-3 {
        problems.push(format!("oracle MC SE {worst_mc:.2e} is not below 1e-3"));
    }
    if report.replications < 500 || report.scenarios.iter().any(|s| s.replications < 490) {
        problems.push("fewer than 500 replications".to_string());
    }
    for arm in report.oracle.arms.iter().map(|a| &a.arm) {
        for scenario in [Scenario::OutcomeMisspecified, Scenario::ParticipationMisspecified] {
            let s = cell(report, scenario, EstimatorKind::Aipw, arm)?;
            let bound = f64::max(0.005, 2.0 * s.mc_se);
            notes.push(format!("AIPW {scenario}/{arm} bias {:+.4} (bound {bound:.4})", s.mean_bias));
            if s.mean_bias.abs() >= bound {
                problems.push(format!("AIPW bias {:+.4} in {scenario}/{arm} exceeds {bound:.4}", s.mean_bias));
            }
        }
        for (scenario, kind) in [
            (Scenario::OutcomeMisspecified, EstimatorKind::GFormula),
            (Scenario::ParticipationMisspecified, EstimatorKind::Ipw),
            (Scenario::ParticipationMisspecified, EstimatorKind::Hajek),
        ] {
            let s = cell(report, scenario, kind, arm)?;
            let z = s.mean_bias / s.mc_se;
            notes.push(format!("{kind:?} {scenario}/{arm} bias {:+.4} ({z:+.1} MC SE)", s.mean_bias));
            if z.abs() <= 3.0 {
                problems.push(format!("{kind:?} bias in {scenario}/{arm} is only {z:+.1} MC SE"));
            }
        }
        if let Ok(s) = cell(report, Scenario::BothMisspecified, EstimatorKind::Aipw, arm) {
            notes.push(format!(
                "AIPW both_misspecified/{arm} bias {:+.4} ({:+.1} MC SE, informational)",
                s.mean_bias,
                s.mean_bias / s.mc_se
            ));
        }
    }
    if problems.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{} | {}", problems.join("; "), notes.join("; ")))
    }
}

fn coverage(report: &SimulationReport, kind: EstimatorKind, check_se_ratio: bool) -> Result<String, String> {
    let mut notes = Vec::new();
    let mut problems = Vec::new();
    for arm in report.oracle.arms.iter().map(|a| &a.arm) {
        let s = cell(report, Scenario::BothCorrect, kind, arm)?;
        let ratio = s.mean_estimated_se / s.empirical_se;
        notes.push(format!("{arm}: coverage {:.3}, SE ratio {ratio:.3}", s.coverage));
        if !(0.92..=0.98).contains(&s.coverage) {
            problems.push(format!("{arm} coverage {:.3} outside [0.92, 0.98]", s.coverage));
        }
        if check_se_ratio && !(0.85..=1.15).contains(&ratio) {
            problems.push(format!("{arm} SE ratio {ratio:.3} outside [0.85, 1.15]"));
        }
    }
    if problems.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{} | {}", problems.join("; "), notes.join("; ")))
    }
}

fn determinism() -> Result<String, String> {
    let fixtures = manifest("tests/fixtures");
    let runs = [
        ("estimate", "estimate.toml", "estimate.json"),
        ("estimate", "estimate_bootstrap.toml", "estimate_bootstrap.json"),
        ("simulate", "simulate.toml", "simulate.json"),
    ];
    let mut count = 0;
    for (command, config, golden) in runs {
        let expected = std::fs::read(fixtures.join("golden").join(golden)).map_err(|e| format!("{golden}: {e}"))?;
        for threads in ["1", "4", "1", "4"] {
            let out = Command::new(env!("CARGO_BIN_EXE_ecrt"))
                .args([command, "--config"])
                .arg(fixtures.join(config))
                .args(["--threads", threads])
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("{command} {config}: {}", String::from_utf8_lossy(&out.stderr).trim()));
            }
            if out.stdout != expected {
                return Err(format!("{command} {config} with {threads} threads differs from {golden}"));
            }
            count += 1;
        }
    }
    Ok(format!("{count} runs byte-identical to the golden outputs at 1 and 4 threads"))
}

fn main() -> ExitCode {
    let mut tally = Tally { failed: 0 };

    let t = Instant::now();
    tally.report(1, "algebraic identities", t, criteria::identities());
    let t = Instant::now();
    tally.report(2, "oracle equivalence", t, criteria::oracle_equivalence());
    let t = Instant::now();
    tally.report(3, "working models", t, criteria::working_models());

    let t = Instant::now();
    let simulation =
        RunConfig::from_path(&manifest("configs/acceptance.toml")).map_err(|e| e.to_string()).and_then(|cfg| {
            let pool = ecrt::parallel::thread_pool(None).map_err(|e| e.to_string())?;
            run_simulation(&cfg, &pool).map_err(|e| e.to_string())
        });
    let elapsed = t.elapsed().as_secs_f64();
    match &simulation {
        Ok(report) => {
            println!("acceptance simulation finished in {elapsed:.1}s");
            for w in &report.warnings {
                println!("  warning: {w}");
            }
            tally.report(4, "double robustness", t, double_robustness(report));
            tally.report(5, "AIPW coverage", t, coverage(report, EstimatorKind::Aipw, true));
            tally.report(6, "transport coverage", t, coverage(report, EstimatorKind::Transport, false));
        }
        Err(e) => {
            for (n, name) in [(4, "double robustness"), (5, "AIPW coverage"), (6, "transport coverage")] {
                tally.report(n, name, t, Err(format!("simulation failed: {e}")));
            }
        }
    }

    let t = Instant::now();
    tally.report(7, "determinism", t, determinism());

    if tally.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
