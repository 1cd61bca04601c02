//! File formats: target summaries (JSON), individual patient data (CSV),
//! weight files (CSV) and scenario files (TOML or JSON).

mod scenario;

pub use scenario::{read_scenario_file, ComparisonSpec, ScenarioFile};

use crate::calibration::{CovariateMatrix, TargetSummary};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Name of the outcome column in IPD files.
pub const OUTCOME_COLUMN: &str = "y";
/// Name of the optional arm-label column.
pub const ARM_COLUMN: &str = "arm";
/// Accepted names of the optional row-identifier column.
pub const ID_COLUMNS: [&str; 2] = ["row_id", "id"];

/// On-disk form of a [`TargetSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    pub means: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ybar0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu02: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl TargetFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TargetFile =
            serde_json::from_str(text).map_err(|e| Error::parse(Some(e.line()), format!("target summary: {e}")))?;
        if file.means.is_empty() {
            return Err(Error::parse(None, "target summary has no means"));
        }
        if let Some(names) = &file.names {
            if names.len() != file.means.len() {
                return Err(Error::parse(
                    None,
                    format!("{} names for {} means", names.len(), file.means.len()),
                ));
            }
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn summary(&self) -> TargetSummary {
        TargetSummary {
            xbar0: DVector::from_vec(self.means.clone()),
            n0: self.n0,
            ybar0: self.ybar0,
            sigma0_sq: self.sigma0_sq,
            mu02: self.mu02,
        }
    }
}

/// Parsed IPD with the covariates ordered to match the target summary.
#[derive(Debug, Clone)]
pub struct IpdData {
    pub data: CovariateMatrix,
    pub row_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Whether the file carried an outcome column.
    pub has_outcome: bool,
}

/// Read an IPD CSV. Covariates are matched to `names` by exact header when
/// given; otherwise every column other than the outcome, arm and id columns is
/// a covariate, in file order, and there must be exactly `p` of them.
pub fn read_ipd<R: Read>(input: R, names: Option<&[String]>, p: usize) -> Result<IpdData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_parse(&e))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let y_col = find(OUTCOME_COLUMN);
    let arm_col = find(ARM_COLUMN);
    let id_col = ID_COLUMNS.iter().find_map(|n| find(n));

    let covariate_cols: Vec<usize> = match names {
        Some(names) => names
            .iter()
            .map(|n| find(n).ok_or_else(|| Error::parse(Some(1), format!("IPD has no column named '{n}'"))))
            .collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&c| Some(c) != y_col && Some(c) != arm_col && Some(c) != id_col)
            .collect(),
    };
    if covariate_cols.len() != p {
        return Err(Error::parse(
            Some(1),
            format!("IPD has {} covariate columns but the target has {p} means", covariate_cols.len()),
        ));
    }

    let mut values = Vec::new();
    let mut ys = Vec::new();
    let mut arms = Vec::new();
    let mut row_ids = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_parse(&e))?;
        let line = record.position().map(|pos| pos.line() as usize);
        let number = |c: usize| -> Result<f64> {
            let cell = record.get(c).unwrap_or("");
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("column '{}': '{cell}' is not a finite number", headers[c])))
        };
        for &c in &covariate_cols {
            values.push(number(c)?);
        }
        if let Some(c) = y_col {
            ys.push(number(c)?);
        }
        if let Some(c) = arm_col {
            let cell = record.get(c).unwrap_or("");
            arms.push(
                cell.parse::<i64>()
                    .map_err(|_| Error::parse(line, format!("arm label '{cell}' is not an integer")))?,
            );
        }
        row_ids.push(match id_col {
            Some(c) => record.get(c).unwrap_or("").to_string(),
            None => (row_ids.len() + 1).to_string(),
        });
    }
    let n = row_ids.len();
    if n == 0 {
        return Err(Error::parse(None, "IPD has no data rows"));
    }
    let x = DMatrix::from_row_iterator(n, p, values);
    let has_outcome = y_col.is_some();
    let y = if has_outcome {
        DVector::from_vec(ys)
    } else {
        DVector::zeros(n)
    };
    let data = CovariateMatrix::new(x, y, arm_col.map(|_| arms))?;
    Ok(IpdData {
        data,
        row_ids,
        covariate_names: covariate_cols.iter().map(|&c| headers[c].clone()).collect(),
        has_outcome,
    })
}

pub fn read_ipd_path(path: &Path, names: Option<&[String]>, p: usize) -> Result<IpdData> {
    read_ipd(std::fs::File::open(path)?, names, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeightRecord {
    row_id: String,
    weight: f64,
}

/// Write a `row_id,weight` CSV.
pub fn write_weights<W: Write>(out: W, row_ids: &[String], weights: &DVector<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for (row_id, &weight) in row_ids.iter().zip(weights.iter()) {
        writer
            .serialize(WeightRecord {
                row_id: row_id.clone(),
                weight,
            })
            .map_err(|e| csv_parse(&e))?;
    }
    writer.flush()?;
    Ok(())
}

/// Read a `row_id,weight` CSV back.
pub fn read_weights<R: Read>(input: R) -> Result<(Vec<String>, DVector<f64>)> {
    let mut reader = csv::Reader::from_reader(input);
    let mut ids = Vec::new();
    let mut weights = Vec::new();
    for record in reader.deserialize::<WeightRecord>() {
        let record = record.map_err(|e| csv_parse(&e))?;
        ids.push(record.row_id);
        weights.push(record.weight);
    }
    Ok((ids, DVector::from_vec(weights)))
}

fn csv_parse(e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    Error::parse(line, e.to_string())
}
