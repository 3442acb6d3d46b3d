//! Reports and their text, JSON and CSV renderings. Every rendering is
//! produced from the same in-memory report.

use std::fmt::Write as _;

use ecrt_core::simulation::{DgpConfig, OracleTruth, ScenarioResult};
use ecrt_core::{ArmLabel, DatasetSummary, EstimatorKind, IntervalMethod, TreatmentModel, WeightDiagnostics};
use serde::Serialize;

use crate::config::OutputFormat;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub method: String,
    pub features: Vec<String>,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_change: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeModelReport {
    pub arm: ArmLabel,
    pub model: ModelReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuisanceReport {
    pub working_model: String,
    pub participation: ModelReport,
    pub treatment: TreatmentModel,
    pub outcome: Vec<OutcomeModelReport>,
    pub clipped_participation: usize,
    pub clipped_treatment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub estimator: EstimatorKind,
    pub label: String,
    pub working_model: String,
    pub target: String,
    pub arm: Option<ArmLabel>,
    pub contrast: Option<(ArmLabel, ArmLabel)>,
    pub point: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
    pub replicates: Option<usize>,
    pub failed_replicates: Option<usize>,
    pub weights: Option<WeightDiagnostics>,
    pub folds: Option<usize>,
    pub warnings: Vec<String>,
}

impl EstimateRow {
    /// Row heading of the text table, e.g. `AIPW / LR (MLE)`.
    pub fn heading(&self) -> String {
        format!("{} / {}", self.label, self.working_model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub level: f64,
    pub inference: IntervalMethod,
    pub trial_inference: IntervalMethod,
    pub folds: Option<usize>,
    pub dataset: DatasetSummary,
    pub nuisance: Option<NuisanceReport>,
    pub estimates: Vec<EstimateRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub dgp: DgpConfig,
    pub oracle: OracleTruth,
    pub replications: usize,
    /// Set when the replication count is below the acceptance floor.
    pub exploratory: bool,
    pub scenarios: Vec<ScenarioResult>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub summary: DatasetSummary,
    pub warnings: Vec<String>,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

/// Left-aligned fixed-width table with two spaces between columns.
fn fixed_width(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c + 1 == row.len() {
                line.push_str(cell);
            } else {
                let _ = write!(line, "{cell:<width$}  ", width = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn csv_text(rows: &[Vec<String>]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.write_record(row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// `pt (lo, hi)`, in percent with 2 decimals or as probabilities with 4.
pub fn format_cell(point: f64, lower: f64, upper: f64, percent: bool) -> String {
    if percent {
        format!("{:.2} ({:.2}, {:.2})", 100.0 * point, 100.0 * lower, 100.0 * upper)
    } else {
        format!("{point:.4} ({lower:.4}, {upper:.4})")
    }
}

fn warning_lines(warnings: &[String]) -> String {
    warnings.iter().map(|w| format!("warning: {w}\n")).collect()
}

impl EstimateReport {
    pub fn render(&self, format: OutputFormat, percent: bool) -> String {
        match format {
            OutputFormat::Json => to_json(self),
            OutputFormat::Csv => self.csv(),
            OutputFormat::Table => self.table(percent),
        }
    }

    fn targets(&self) -> Vec<String> {
        let mut targets: Vec<String> = Vec::new();
        for row in self.estimates.iter().filter(|r| r.contrast.is_none()) {
            if !targets.contains(&row.target) {
                targets.push(row.target.clone());
            }
        }
        for row in self.estimates.iter().filter(|r| r.contrast.is_some()) {
            if !targets.contains(&row.target) {
                targets.push(row.target.clone());
            }
        }
        targets
    }

    fn table(&self, percent: bool) -> String {
        let targets = self.targets();
        let mut headings: Vec<String> = Vec::new();
        for row in &self.estimates {
            if !headings.contains(&row.heading()) {
                headings.push(row.heading());
            }
        }
        let mut rows = vec![std::iter::once("Estimator / working model".to_string())
            .chain(targets.iter().cloned())
            .collect::<Vec<_>>()];
        for heading in &headings {
            let mut line = vec![heading.clone()];
            for target in &targets {
                let cell = self
                    .estimates
                    .iter()
                    .find(|r| &r.heading() == heading && &r.target == target)
                    .map_or("-".to_string(), |r| format_cell(r.point, r.lower, r.upper, percent));
                line.push(cell);
            }
            rows.push(line);
        }
        let mut out = fixed_width(&rows);
        let scale = if percent { "percent" } else { "probability" };
        let _ = writeln!(
            out,
            "\n{}% confidence intervals ({}; trial-only: {}), {scale} scale.",
            100.0 * self.level,
            self.inference,
            self.trial_inference
        );
        if let Some(k) = self.folds {
            let _ = writeln!(out, "Nuisance models cross-fit over {k} folds.");
        }
        out.push_str(&warning_lines(&self.warnings));
        out
    }

    fn csv(&self) -> String {
        let mut rows = vec![[
            "estimator",
            "working_model",
            "target",
            "point",
            "se",
            "lower",
            "upper",
            "level",
            "method",
            "replicates",
            "failed_replicates",
            "folds",
        ]
        .map(String::from)
        .to_vec()];
        for r in &self.estimates {
            rows.push(vec![
                r.estimator.key().to_string(),
                r.working_model.clone(),
                r.target.clone(),
                r.point.to_string(),
                r.se.to_string(),
                r.lower.to_string(),
                r.upper.to_string(),
                r.level.to_string(),
                r.method.key().to_string(),
                opt(r.replicates),
                opt(r.failed_replicates),
                opt(r.folds),
            ]);
        }
        csv_text(&rows)
    }
}

impl SimulationReport {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => to_json(self),
            OutputFormat::Csv => csv_text(&self.rows(false)),
            OutputFormat::Table => self.table(),
        }
    }

    fn rows(&self, display: bool) -> Vec<Vec<String>> {
        let num = |v: f64| if display { format!("{v:.5}") } else { v.to_string() };
        let mut rows = vec![[
            "scenario",
            "estimator",
            "arm",
            "truth",
            "mean_bias",
            "mc_se",
            "empirical_se",
            "mean_estimated_se",
            "coverage",
            "replications",
        ]
        .map(String::from)
        .to_vec()];
        for sc in &self.scenarios {
            for s in &sc.summaries {
                let name = if display { s.estimator.name() } else { s.estimator.key() };
                rows.push(vec![
                    sc.scenario.key().to_string(),
                    format!("{name}{}", if display && s.exploratory { "*" } else { "" }),
                    s.arm.to_string(),
                    num(s.truth),
                    num(s.mean_bias),
                    num(s.mc_se),
                    num(s.empirical_se),
                    num(s.mean_estimated_se),
                    if display { format!("{:.3}", s.coverage) } else { s.coverage.to_string() },
                    s.replications.to_string(),
                ]);
            }
        }
        rows
    }

    fn table(&self) -> String {
        let mut out = String::new();
        for t in &self.oracle.arms {
            let _ = writeln!(
                out,
                "oracle {}: psi {:.5} (MC SE {:.5}), phi {:.5} (MC SE {:.5})",
                t.arm, t.psi, t.psi_mc_se, t.phi, t.phi_mc_se
            );
        }
        let _ = writeln!(out, "oracle draws: {}\n", self.oracle.draws);
        out.push_str(&fixed_width(&self.rows(true)));
        out.push_str("\n* interval ignores nuisance estimation; coverage is descriptive only.\n");
        if self.exploratory {
            out.push_str("EXPLORATORY: replication count below the acceptance floor.\n");
        }
        out.push_str(&warning_lines(&self.warnings));
        out
    }
}

impl SummaryReport {
    pub fn render(&self, format: OutputFormat) -> String {
        let s = &self.summary;
        let mut rows = vec![vec!["quantity".to_string(), "value".to_string()]];
        rows.push(vec!["clusters".into(), s.clusters.to_string()]);
        rows.push(vec!["trial_clusters".into(), s.trial_clusters.to_string()]);
        rows.push(vec!["individuals".into(), s.individuals.to_string()]);
        rows.push(vec!["trial_individuals".into(), s.trial_individuals.to_string()]);
        for (arm, n) in &s.clusters_per_arm {
            rows.push(vec![format!("clusters_in_arm[{arm}]"), n.to_string()]);
        }
        rows.push(vec!["trial_fraction".into(), s.trial_fraction.to_string()]);
        rows.push(vec!["trial_individual_fraction".into(), s.trial_individual_fraction.to_string()]);
        match format {
            OutputFormat::Json => to_json(self),
            OutputFormat::Csv => csv_text(&rows),
            OutputFormat::Table => {
                let mut out = fixed_width(&rows[1..]);
                out.push_str(&warning_lines(&self.warnings));
                out
            }
        }
    }
}
