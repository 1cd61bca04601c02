use super::{ComparisonRow, SimRow};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One line of the coverage table CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub n1: usize,
    pub beta: f64,
    pub b: f64,
    pub p: usize,
    pub bias_unadj: f64,
    pub bias_maic: f64,
    pub cov_2s: f64,
    pub cov_boot: Option<f64>,
    pub se_2s: f64,
    pub se_boot: Option<f64>,
    pub se_maic: f64,
    pub se_emp: f64,
}

impl From<&SimRow> for SimRecord {
    fn from(row: &SimRow) -> Self {
        let present = |v: f64| (!v.is_nan()).then_some(v);
        SimRecord {
            n1: row.config.n1,
            beta: row.config.beta,
            b: row.config.b(),
            p: row.config.p(),
            bias_unadj: row.bias_unadjusted,
            bias_maic: row.bias_method,
            cov_2s: row.coverage_2s,
            cov_boot: present(row.coverage_boot),
            se_2s: row.se_2s,
            se_boot: present(row.se_boot),
            se_maic: row.se_maic,
            se_emp: row.se_empirical,
        }
    }
}

/// One line of the long method-comparison CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub run: usize,
    pub method: String,
    pub scenario: String,
    pub error: f64,
}

impl From<&ComparisonRow> for ComparisonRecord {
    fn from(row: &ComparisonRow) -> Self {
        ComparisonRecord {
            run: row.run,
            method: row.method.as_str().to_string(),
            scenario: row.scenario.clone(),
            error: row.error,
        }
    }
}

/// Write rows with header `n1,beta,b,p,bias_unadj,...,se_emp`; a skipped
/// bootstrap leaves its two cells empty.
pub fn write_sim_rows_csv<W: Write>(rows: &[SimRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(SimRecord::from(row)).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(ComparisonRecord::from(row)).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Domain(format!("csv: {other:?}")),
    }
}
