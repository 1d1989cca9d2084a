//! Datasets, CSV ingestion, train/test splitting, target noise and metrics.

mod metrics;
mod split;

pub use metrics::{
    accuracy_solution, auprc, balanced_accuracy, log_loss, mse, r2, threshold_labels,
};
pub use split::{kfold, split, SplitSpec};
pub(crate) use metrics::row_log_loss;

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Classification,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regression" | "reg" => Ok(Self::Regression),
            "classification" | "clf" | "binary" => Ok(Self::Classification),
            other => Err(Error::Config(format!("unknown task kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Regression => f.write_str("regression"),
            Self::Classification => f.write_str("classification"),
        }
    }
}

/// Column-major feature matrix: `columns[j][i]` is feature `j` of row `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    columns: Vec<Vec<f64>>,
    rows: usize,
}

impl FeatureMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != rows) {
            return Err(Error::InvalidData(format!(
                "column {j} has {} rows, expected {rows}",
                c.len()
            )));
        }
        Ok(Self { columns, rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} values, expected {n}",
                    row.len()
                )));
            }
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(*v);
            }
        }
        Ok(Self {
            columns,
            rows: rows.len(),
        })
    }

    /// A matrix with `rows` rows and no feature columns.
    pub fn empty(rows: usize) -> Self {
        Self {
            columns: Vec::new(),
            rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            rows: idx.len(),
        }
    }

    /// Returns a matrix whose column `k` is column `order[k]` of `self`.
    pub fn reorder_columns(&self, order: &[usize]) -> Self {
        Self {
            columns: order.iter().map(|&j| self.columns[j].clone()).collect(),
            rows: self.rows,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub task: TaskKind,
}

impl Dataset {
    pub fn new(
        x: FeatureMatrix,
        y: Vec<f64>,
        feature_names: Vec<String>,
        task: TaskKind,
    ) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::InvalidData(format!(
                "feature matrix has {} rows but target has {}",
                x.n_rows(),
                y.len()
            )));
        }
        if feature_names.len() != x.n_features() {
            return Err(Error::InvalidData(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                x.n_features()
            )));
        }
        if y.len() < 2 {
            return Err(Error::InvalidData(format!(
                "a dataset needs at least 2 rows, got {}",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite())
            || x.columns().iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidData("non-finite values present".into()));
        }
        if task == TaskKind::Classification && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData(
                "classification targets must be 0 or 1".into(),
            ));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            task,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_features()
    }

    /// Row subset. Skips the size check of [`Dataset::new`] so that small
    /// folds and partitions stay representable.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            task: self.task,
        }
    }

    /// Removes the named feature columns; every name must exist.
    pub fn without_features(&self, names: &[String]) -> Result<Self> {
        if let Some(missing) = names.iter().find(|n| !self.feature_names.contains(n)) {
            return Err(Error::MissingColumn(missing.clone()));
        }
        let keep: Vec<usize> = (0..self.n_features())
            .filter(|&j| !names.contains(&self.feature_names[j]))
            .collect();
        let columns: Vec<Vec<f64>> = keep.iter().map(|&j| self.x.column(j).to_vec()).collect();
        let x = if columns.is_empty() {
            FeatureMatrix::empty(self.n_rows())
        } else {
            FeatureMatrix::from_columns(columns)?
        };
        Ok(Self {
            x,
            y: self.y.clone(),
            feature_names: keep.iter().map(|&j| self.feature_names[j].clone()).collect(),
            task: self.task,
        })
    }

    pub fn prevalence(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "none" | "?"
    )
}

pub fn load_csv(
    path: impl AsRef<Path>,
    target: &str,
    task: TaskKind,
) -> Result<(Dataset, LoadReport)> {
    let file = std::fs::File::open(path)?;
    read_csv(file, target, task)
}

/// Parses a headed CSV. Every non-target column becomes a feature. Rows
/// with a missing or non-finite cell are dropped and counted.
pub fn read_csv<R: Read>(reader: R, target: &str, task: TaskKind) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() {
        return Err(Error::EmptyInput("CSV has no header".into()));
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::MissingColumn(target.to_string()))?;

    let mut report = LoadReport::default();
    let n_feat = headers.len() - 1;
    let mut columns = vec![Vec::new(); n_feat];
    let mut y = Vec::new();
    let mut row_buf = vec![0.0; headers.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        let mut missing = false;
        for (j, cell) in record.iter().enumerate().take(headers.len()) {
            if is_missing(cell) {
                missing = true;
                continue;
            }
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row_buf[j] = v,
                Ok(_) => missing = true,
                Err(_) => {
                    return Err(Error::NonNumeric {
                        column: headers[j].clone(),
                        row: row + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
        if record.len() < headers.len() {
            missing = true;
        }
        if missing {
            report.dropped_rows += 1;
            continue;
        }
        let mut k = 0;
        for (j, v) in row_buf.iter().enumerate() {
            if j == target_idx {
                y.push(*v);
            } else {
                columns[k].push(*v);
                k += 1;
            }
        }
    }
    if report.rows_read == 0 {
        return Err(Error::EmptyInput("CSV has no data rows".into()));
    }
    let names = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let x = if n_feat == 0 {
        FeatureMatrix::empty(y.len())
    } else {
        FeatureMatrix::from_columns(columns)?
    };
    Ok((Dataset::new(x, y, names, task)?, report))
}

/// Writes `dataset` as CSV with the target as the last column.
pub fn write_csv<W: std::io::Write>(dataset: &Dataset, target: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(target);
    w.write_record(&header)?;
    for i in 0..dataset.n_rows() {
        let mut rec: Vec<String> = (0..dataset.n_features())
            .map(|j| dataset.x.column(j)[i].to_string())
            .collect();
        rec.push(dataset.y[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn rms(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt()
}

/// Adds Gaussian noise with standard deviation `level * rms(y)`.
pub fn add_target_noise<R: Rng + ?Sized>(y: &[f64], level: f64, rng: &mut R) -> Vec<f64> {
    assert!(level >= 0.0, "noise level must be non-negative");
    if level == 0.0 {
        return y.to_vec();
    }
    let sigma = level * rms(y);
    if sigma == 0.0 {
        return y.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    y.iter().map(|v| v + normal.sample(rng)).collect()
}
