//! Least-squares linear model of residual energy on the selected parameters.
//!
//! The fit solves the normal equations PᵀP·A = PᵀE through a Householder QR
//! factorization of the design matrix P, which yields the same A as the
//! closed form (PᵀP)⁻¹PᵀE without forming the inverse.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catalog::Param;
use crate::dataset::{Dataset, DatasetError};

/// Largest accepted condition estimate of PᵀP.
pub const MAX_CONDITION: f64 = 1e12;
/// Residual orthogonality contract: ‖Pᵀr‖∞ ≤ this · ‖PᵀE‖∞.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;
/// Responses smaller than this (joules) are excluded from relative errors.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum RegressionError {
    #[error("under-determined fit: {rows} rows for {params} parameters plus intercept")]
    UnderDetermined { rows: usize, params: usize },
    #[error("rank-deficient design (condition estimate {condition:e}); offending columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String>, condition: f64 },
    #[error("least-squares residual is not orthogonal to the design: {ratio:e}")]
    NotOrthogonal { ratio: f64 },
    #[error("row supplies {got} values, model has {expected} parameters")]
    Arity { expected: usize, got: usize },
    #[error("evaluation set is empty")]
    EmptyHoldout,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// P (M × (N+1), leading ones column) and the response vector E.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub response: DVector<f64>,
    /// Parameter symbols of columns 1..=N.
    pub names: Vec<String>,
}

pub fn design_matrix<S: AsRef<str>>(dataset: &Dataset, selected: &[S]) -> Result<Design, RegressionError> {
    let m = dataset.len();
    let n = selected.len();
    if m < n + 1 {
        return Err(RegressionError::UnderDetermined { rows: m, params: n });
    }
    let mut names = Vec::with_capacity(n);
    let mut matrix = DMatrix::from_element(m, n + 1, 1.0);
    for (j, key) in selected.iter().enumerate() {
        let key = key.as_ref();
        let column = dataset.column(key)?;
        if Param::lookup(key).is_none() {
            return Err(DatasetError::UnknownColumn(key.to_string()).into());
        }
        matrix.set_column(j + 1, &DVector::from_vec(column));
        names.push(Param::lookup(key).map_or(key, |p| p.symbol()).to_string());
    }
    Ok(Design {
        matrix,
        response: DVector::from_vec(dataset.response()),
        names,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub parameters: Vec<String>,
    /// α₀
    pub intercept: f64,
    /// α₁..α_N, in `parameters` order.
    pub coefficients: Vec<f64>,
    /// √Σ(Ê − E)² on the training rows.
    pub lse: f64,
    /// Condition estimate of PᵀP.
    pub condition: f64,
    pub training_rows: usize,
    pub training_hash: Option<String>,
}

fn column_label(design: &Design, j: usize) -> String {
    if j == 0 {
        "intercept".to_string()
    } else {
        design.names[j - 1].clone()
    }
}

/// Householder QR of P applied to E: returns (R, Qᵀ E restricted to the first n rows).
fn householder(p: &DMatrix<f64>, e: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (m, n) = p.shape();
    let mut a = p.clone();
    let mut b = e.clone();
    for k in 0..n {
        let norm = a.view((k, k), (m - k, 1)).norm();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[(k, k)] > 0.0 { -norm } else { norm };
        let mut v = a.view((k, k), (m - k, 1)).clone_owned();
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dot = v.dot(&a.view((k, j), (m - k, 1)));
            let scale = 2.0 * dot / vnorm2;
            for i in k..m {
                a[(i, j)] -= scale * v[i - k];
            }
        }
        let dot = v.dot(&b.rows(k, m - k));
        let scale = 2.0 * dot / vnorm2;
        for i in k..m {
            b[i] -= scale * v[i - k];
        }
    }
    let r = a.view((0, 0), (n, n)).upper_triangle();
    (r, b.rows(0, n).clone_owned())
}

fn back_substitute(r: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = rhs.len();
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Relative diagonal below which a column counts as dependent on earlier ones.
const DEPENDENT_COLUMN: f64 = 1e-8;

pub fn fit(design: &Design) -> Result<LinearModel, RegressionError> {
    let p = &design.matrix;
    let e = &design.response;
    let (m, cols) = p.shape();
    if m < cols {
        return Err(RegressionError::UnderDetermined {
            rows: m,
            params: cols - 1,
        });
    }
    let (r, qte) = householder(p, e);

    let singular = r.singular_values();
    let smax = singular.max();
    let smin = singular.min();
    let condition = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    let relative_diag: Vec<f64> = (0..cols)
        .map(|j| {
            let norm = p.column(j).norm();
            if norm == 0.0 {
                0.0
            } else {
                r[(j, j)].abs() / norm
            }
        })
        .collect();
    if condition.is_nan() || condition >= MAX_CONDITION || relative_diag.iter().any(|&d| d < DEPENDENT_COLUMN) {
        let mut columns: Vec<String> = relative_diag
            .iter()
            .enumerate()
            .filter(|(_, &d)| d < DEPENDENT_COLUMN)
            .map(|(j, _)| column_label(design, j))
            .collect();
        if columns.is_empty() {
            let worst = relative_diag
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j)
                .unwrap_or(0);
            columns.push(column_label(design, worst));
        }
        return Err(RegressionError::RankDeficient { columns, condition });
    }

    let alpha = back_substitute(&r, &qte);
    let residual = e - p * &alpha;
    let gradient = p.transpose() * &residual;
    let scale = (p.transpose() * e).amax();
    let ratio = if scale > 0.0 {
        gradient.amax() / scale
    } else {
        gradient.amax()
    };
    if ratio > ORTHOGONALITY_TOLERANCE {
        return Err(RegressionError::NotOrthogonal { ratio });
    }
    Ok(LinearModel {
        parameters: design.names.clone(),
        intercept: alpha[0],
        coefficients: alpha.iter().skip(1).copied().collect(),
        lse: residual.norm(),
        condition,
        training_rows: m,
        training_hash: None,
    })
}

impl LinearModel {
    /// Ê = α₀ + Σ αᵢ·pᵢ with `values` in `parameters` order.
    pub fn predict(&self, values: &[f64]) -> Result<f64, RegressionError> {
        if values.len() != self.coefficients.len() {
            return Err(RegressionError::Arity {
                expected: self.coefficients.len(),
                got: values.len(),
            });
        }
        Ok(self.intercept + self.coefficients.iter().zip(values).map(|(a, p)| a * p).sum::<f64>())
    }

    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<f64>, RegressionError> {
        let columns = self
            .parameters
            .iter()
            .map(|k| dataset.column(k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((0..dataset.len())
            .map(|i| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .zip(&columns)
                        .map(|(a, c)| a * c[i])
                        .sum::<f64>()
            })
            .collect())
    }

    /// √Σ(Ê − E)² over the design's rows.
    pub fn lse_on(&self, design: &Design) -> f64 {
        let mut coef = Vec::with_capacity(self.coefficients.len() + 1);
        coef.push(self.intercept);
        coef.extend(&self.coefficients);
        (&design.response - &design.matrix * DVector::from_vec(coef)).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub row: usize,
    pub seed: u64,
    pub actual: f64,
    pub predicted: f64,
    pub abs_error: f64,
    /// None when |actual| is below the floor.
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<EvaluationRow>,
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
    pub lse: f64,
    pub excluded_rows: usize,
}

pub fn evaluate(model: &LinearModel, holdout: &Dataset) -> Result<EvaluationReport, RegressionError> {
    if holdout.is_empty() {
        return Err(RegressionError::EmptyHoldout);
    }
    let predicted = model.predict_dataset(holdout)?;
    let rows: Vec<EvaluationRow> = holdout
        .rows
        .iter()
        .zip(&predicted)
        .enumerate()
        .map(|(i, (r, &yhat))| {
            let actual = r.avg_residual_energy;
            let abs_error = (yhat - actual).abs();
            EvaluationRow {
                row: i,
                seed: r.seed,
                actual,
                predicted: yhat,
                abs_error,
                rel_error: (actual.abs() >= RELATIVE_ERROR_FLOOR).then(|| abs_error / actual.abs()),
            }
        })
        .collect();
    let rel: Vec<f64> = rows.iter().filter_map(|r| r.rel_error).collect();
    let excluded_rows = rows.len() - rel.len();
    let mean_relative_error = if rel.is_empty() {
        f64::NAN
    } else {
        rel.iter().sum::<f64>() / rel.len() as f64
    };
    let max_relative_error = rel.iter().copied().fold(f64::NAN, f64::max);
    let lse = rows.iter().map(|r| r.abs_error * r.abs_error).sum::<f64>().sqrt();
    Ok(EvaluationReport {
        rows,
        mean_relative_error,
        max_relative_error,
        lse,
        excluded_rows,
    })
}

impl EvaluationReport {
    /// Columns: row, true, predicted, relative_error (empty when excluded).
    pub fn write_csv_to<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "true", "predicted", "relative_error"])?;
        for r in &self.rows {
            w.write_record([
                r.row.to_string(),
                format!("{:e}", r.actual),
                format!("{:e}", r.predicted),
                r.rel_error.map(|v| format!("{v:e}")).unwrap_or_default(),
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
}
