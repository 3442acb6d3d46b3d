//! CSV input and output.
//!
//! Clusters file: `cluster_id, s, arm, x1..xq`. Individuals file:
//! `cluster_id, y, w1..wp`. Both need a header row, are comma separated and
//! use `.` as the decimal point. Individuals keep their file order within a
//! cluster.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ecrt_core::{validate_dataset, ArmLabel, ClusterRecord, Error, StudyDataset};

use crate::error::{CliError, Result};

/// A validated dataset and the warnings raised while reading it.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: StudyDataset,
    pub warnings: Vec<String>,
}

struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let handle = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(handle);
        let headers = reader
            .headers()
            .map_err(|e| CliError::Schema { file: file.clone(), message: e.to_string() })?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| CliError::Schema { file: file.clone(), message: e.to_string() })?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push((line, record));
        }
        Ok(Self { file, headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema { file: self.file.clone(), message: format!("missing column `{name}`") })
    }

    /// Indices of the numbered columns `{prefix}1..{prefix}k`, in order.
    fn numbered(&self, prefix: &str, fixed: &[&str]) -> Result<Vec<usize>> {
        let mut found = Vec::new();
        for (i, h) in self.headers.iter().enumerate() {
            if fixed.contains(&h.as_str()) {
                continue;
            }
            match h.strip_prefix(prefix).and_then(|n| n.parse::<usize>().ok()) {
                Some(n) if n >= 1 => found.push((n, i)),
                _ => {
                    return Err(CliError::Schema {
                        file: self.file.clone(),
                        message: format!("unexpected column `{h}`"),
                    })
                }
            }
        }
        found.sort_unstable();
        for (k, (n, _)) in found.iter().enumerate() {
            if *n != k + 1 {
                return Err(CliError::Schema {
                    file: self.file.clone(),
                    message: format!("covariate columns must be {prefix}1..{prefix}{}", found.len()),
                });
            }
        }
        Ok(found.into_iter().map(|(_, i)| i).collect())
    }

    fn number(&self, line: u64, column: usize, raw: &str) -> Result<f64> {
        raw.trim().parse::<f64>().map_err(|_| CliError::UnparseableCell {
            file: self.file.clone(),
            line,
            column: self.headers[column].clone(),
            value: raw.to_string(),
        })
    }
}

/// Read, join and validate the two CSV files.
pub fn load_csv(clusters_path: &Path, individuals_path: &Path) -> Result<LoadedData> {
    let clusters = Table::read(clusters_path)?;
    let id_col = clusters.column("cluster_id")?;
    let s_col = clusters.column("s")?;
    let arm_col = clusters.column("arm")?;
    let x_cols = clusters.numbered("x", &["cluster_id", "s", "arm"])?;

    let mut warnings = Vec::new();
    let mut records: Vec<ClusterRecord> = Vec::with_capacity(clusters.rows.len());
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, row) in &clusters.rows {
        let id = row.get(id_col).unwrap_or("").trim().to_string();
        let s = match row.get(s_col).unwrap_or("").trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(CliError::UnparseableCell {
                    file: clusters.file.clone(),
                    line: *line,
                    column: "s".to_string(),
                    value: other.to_string(),
                })
            }
        };
        let arm_raw = row.get(arm_col).unwrap_or("").trim();
        let arm = if s {
            if arm_raw.is_empty() {
                return Err(Error::IncompleteTrialCluster(id).into());
            }
            Some(ArmLabel::new(arm_raw)?)
        } else {
            if !arm_raw.is_empty() {
                warnings.push(format!(
                    "{}:{line}: arm `{arm_raw}` on non-randomized cluster `{id}` ignored",
                    clusters.file
                ));
            }
            None
        };
        let x = x_cols
            .iter()
            .map(|&c| clusters.number(*line, c, row.get(c).unwrap_or("")))
            .collect::<Result<Vec<f64>>>()?;
        if index.insert(id.clone(), records.len()).is_some() {
            return Err(Error::DuplicateId(id).into());
        }
        records.push(ClusterRecord { cluster_id: id, s, arm, x, w: Vec::new(), y: s.then(Vec::new) });
    }

    let individuals = Table::read(individuals_path)?;
    let id_col = individuals.column("cluster_id")?;
    let y_col = individuals.column("y")?;
    let w_cols = individuals.numbered("w", &["cluster_id", "y"])?;
    let mut ignored_outcomes = 0usize;
    for (line, row) in &individuals.rows {
        let id = row.get(id_col).unwrap_or("").trim();
        let &j = index.get(id).ok_or_else(|| CliError::OrphanIndividual {
            file: individuals.file.clone(),
            line: *line,
            cluster: id.to_string(),
        })?;
        let w = w_cols
            .iter()
            .map(|&c| individuals.number(*line, c, row.get(c).unwrap_or("")))
            .collect::<Result<Vec<f64>>>()?;
        let y_raw = row.get(y_col).unwrap_or("").trim();
        let record = &mut records[j];
        match record.y.as_mut() {
            Some(ys) => {
                if y_raw.is_empty() {
                    return Err(Error::IncompleteTrialCluster(record.cluster_id.clone()).into());
                }
                ys.push(individuals.number(*line, y_col, y_raw)?);
            }
            None => ignored_outcomes += usize::from(!y_raw.is_empty()),
        }
        record.w.push(w);
    }
    if ignored_outcomes > 0 {
        warnings.push(format!("{}: {ignored_outcomes} outcomes of non-randomized clusters ignored", individuals.file));
    }
    Ok(LoadedData { dataset: validate_dataset(records)?, warnings })
}

/// Write a dataset in the two-file CSV layout read by [`load_csv`].
pub fn write_csv(ds: &StudyDataset, clusters_path: &Path, individuals_path: &Path) -> Result<()> {
    let mut header = vec!["cluster_id".to_string(), "s".to_string(), "arm".to_string()];
    header.extend((1..=ds.q()).map(|k| format!("x{k}")));
    let mut rows = vec![header];
    for c in ds.clusters() {
        let mut row = vec![
            c.cluster_id.clone(),
            u8::from(c.s).to_string(),
            c.arm.as_ref().map_or(String::new(), |a| a.to_string()),
        ];
        row.extend(c.x.iter().map(f64::to_string));
        rows.push(row);
    }
    write_records(clusters_path, &rows)?;

    let mut header = vec!["cluster_id".to_string(), "y".to_string()];
    header.extend((1..=ds.p()).map(|k| format!("w{k}")));
    let mut rows = vec![header];
    for c in ds.clusters() {
        for (i, w) in c.w.iter().enumerate() {
            let mut row = vec![c.cluster_id.clone(), c.y.as_ref().map_or(String::new(), |y| y[i].to_string())];
            row.extend(w.iter().map(f64::to_string));
            rows.push(row);
        }
    }
    write_records(individuals_path, &rows)
}

fn write_records(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        writer.write_record(row).map_err(|e| CliError::io(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))
}
