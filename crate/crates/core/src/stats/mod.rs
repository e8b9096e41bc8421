//! Parameter screening: significance, linear and order-2 correlation of each
//! configuration parameter against the residual-energy response.

pub mod special;

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::catalog::Param;
use crate::dataset::{Dataset, RESPONSE};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 samples, got {0}")]
    InsufficientData(usize),
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("series `{0}` has zero variance")]
    ZeroVariance(&'static str),
    #[error("correlation {0} outside [-1, 1]")]
    CorrelationOutOfRange(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("malformed report: {0}")]
    Format(String),
}

fn check_pair(p: &[f64], e: &[f64]) -> Result<(), StatsError> {
    if p.len() != e.len() {
        return Err(StatsError::LengthMismatch(p.len(), e.len()));
    }
    if p.len() < 3 {
        return Err(StatsError::InsufficientData(p.len()));
    }
    if p.iter().chain(e).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn centered_sums(p: &[f64], e: &[f64]) -> (f64, f64, f64) {
    let m = p.len() as f64;
    let mp = p.iter().sum::<f64>() / m;
    let me = e.iter().sum::<f64>() / m;
    let mut cross = 0.0;
    let mut sp = 0.0;
    let mut se = 0.0;
    for (&x, &y) in p.iter().zip(e) {
        let dx = x - mp;
        let dy = y - me;
        cross += dx * dy;
        sp += dx * dx;
        se += dy * dy;
    }
    (cross, sp, se)
}

/// Normalized cross-correlation (Pearson coefficient) of two series.
pub fn linear_corr(p: &[f64], e: &[f64]) -> Result<f64, StatsError> {
    check_pair(p, e)?;
    let (cross, sp, se) = centered_sums(p, e);
    if sp == 0.0 {
        return Err(StatsError::ZeroVariance("parameter"));
    }
    if se == 0.0 {
        return Err(StatsError::ZeroVariance("response"));
    }
    Ok((cross / (sp * se).sqrt()).clamp(-1.0, 1.0))
}

/// Normalized higher-order correlation: the linear correlation of the
/// element-wise `order`-th powers. Order 1 is [`linear_corr`].
pub fn higher_order_corr(p: &[f64], e: &[f64], order: i32) -> Result<f64, StatsError> {
    check_pair(p, e)?;
    let pp: Vec<f64> = p.iter().map(|v| v.powi(order)).collect();
    let ee: Vec<f64> = e.iter().map(|v| v.powi(order)).collect();
    linear_corr(&pp, &ee)
}

/// Order-2 nonlinear correlation.
pub fn nonlinear_corr(p: &[f64], e: &[f64]) -> Result<f64, StatsError> {
    higher_order_corr(p, e, 2)
}

/// Two-tailed p-value of the t-test for "no linear correlation".
pub fn p_value(r: f64, m: usize) -> Result<f64, StatsError> {
    if m < 3 {
        return Err(StatsError::InsufficientData(m));
    }
    if r.is_nan() || r.abs() > 1.0 {
        return Err(StatsError::CorrelationOutOfRange(r));
    }
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    let dof = (m - 2) as f64;
    let t = r * (dof / (1.0 - r * r)).sqrt();
    Ok(special::student_t_two_tailed(t, dof))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub parameter: String,
    pub symbol: String,
    pub p_value: Option<f64>,
    pub linear_corr: Option<f64>,
    pub nonlinear_corr: Option<f64>,
    /// Set when a statistic could not be computed (zero variance).
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub response: String,
    pub samples: usize,
    pub rows: Vec<ReportRow>,
}

const REPORT_HEADER: [&str; 4] = ["parameter", "p_value", "linear_corr", "nonlinear_corr"];

/// Screens every sampled parameter of the dataset against the response.
pub fn analyze(dataset: &Dataset) -> Result<CorrelationReport, StatsError> {
    if dataset.len() < 3 {
        return Err(StatsError::InsufficientData(dataset.len()));
    }
    let response = dataset.response();
    let rows = Param::ALL
        .iter()
        .map(|&param| {
            let values = dataset.column(param.symbol()).expect("parameter column");
            let linear = linear_corr(&values, &response);
            let nonlinear = nonlinear_corr(&values, &response);
            let mut flags = Vec::new();
            if let Err(e) = &linear {
                flags.push(format!("linear: {e}"));
            }
            if let Err(e) = &nonlinear {
                flags.push(format!("nonlinear: {e}"));
            }
            let linear = linear.ok();
            ReportRow {
                parameter: param.name().to_string(),
                symbol: param.symbol().to_string(),
                p_value: linear.map(|r| p_value(r, values.len()).expect("validated r and M")),
                linear_corr: linear,
                nonlinear_corr: nonlinear.ok(),
                flag: (!flags.is_empty()).then(|| flags.join("; ")),
            }
        })
        .collect();
    Ok(CorrelationReport {
        response: RESPONSE.to_string(),
        samples: dataset.len(),
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

impl CorrelationReport {
    /// Table layout: parameter, p_value, linear_corr, nonlinear_corr. Missing
    /// statistics are empty cells.
    pub fn write_csv_to<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.parameter.clone(),
                fmt_opt(r.p_value),
                fmt_opt(r.linear_corr),
                fmt_opt(r.nonlinear_corr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf).expect("in-memory csv write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads the table layout back. Sample count and flags are not part of
    /// the CSV and come back as `samples` = 0 and no flags.
    pub fn read_csv_from<R: Read>(input: R) -> Result<CorrelationReport, StatsError> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers().map_err(|e| StatsError::Format(e.to_string()))?.clone();
        if headers.iter().ne(REPORT_HEADER) {
            return Err(StatsError::Format("unexpected header".into()));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| StatsError::Format(e.to_string()))?;
            let cell = |i: usize| -> Result<Option<f64>, StatsError> {
                match record.get(i).unwrap_or_default() {
                    "" => Ok(None),
                    s => s
                        .parse()
                        .map(Some)
                        .map_err(|_| StatsError::Format(format!("`{s}` is not a number"))),
                }
            };
            let parameter = record.get(0).unwrap_or_default().to_string();
            let symbol = Param::lookup(&parameter)
                .map(|p| p.symbol().to_string())
                .unwrap_or_else(|| parameter.clone());
            rows.push(ReportRow {
                parameter,
                symbol,
                p_value: cell(1)?,
                linear_corr: cell(2)?,
                nonlinear_corr: cell(3)?,
                flag: None,
            });
        }
        Ok(CorrelationReport {
            response: RESPONSE.to_string(),
            samples: 0,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedParameter {
    pub parameter: String,
    pub symbol: String,
    pub p_value: f64,
    pub linear_corr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionResult {
    /// Ascending p-value.
    pub selected: Vec<SelectedParameter>,
    pub alpha: f64,
    pub corr_threshold: Option<f64>,
    pub rule: String,
}

impl ReductionResult {
    pub fn symbols(&self) -> Vec<String> {
        self.selected.iter().map(|s| s.symbol.clone()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.selected.iter().map(|s| s.parameter.clone()).collect()
    }
}

/// Keeps parameters with p < alpha (and, when given, |linear corr| ≥ the
/// threshold), most significant first. Ties break on the parameter name so
/// the result does not depend on report row order.
pub fn reduce(
    report: &CorrelationReport,
    alpha: f64,
    corr_threshold: Option<f64>,
) -> Result<ReductionResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Alpha(alpha));
    }
    let mut selected: Vec<SelectedParameter> = report
        .rows
        .iter()
        .filter_map(|row| {
            let p = row.p_value?;
            if p >= alpha {
                return None;
            }
            if let Some(thr) = corr_threshold {
                if !row.linear_corr.is_some_and(|r| r.abs() >= thr) {
                    return None;
                }
            }
            Some(SelectedParameter {
                parameter: row.parameter.clone(),
                symbol: row.symbol.clone(),
                p_value: p,
                linear_corr: row.linear_corr,
            })
        })
        .collect();
    selected.sort_by(|a, b| {
        a.p_value
            .partial_cmp(&b.p_value)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.parameter.cmp(&b.parameter))
    });
    let rule = match corr_threshold {
        Some(thr) => format!("p_value < {alpha} and |linear_corr| >= {thr}"),
        None => format!("p_value < {alpha}"),
    };
    Ok(ReductionResult {
        selected,
        alpha,
        corr_threshold,
        rule,
    })
}
