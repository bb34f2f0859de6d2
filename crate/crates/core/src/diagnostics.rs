//! Area-ignorability diagnostic: regress the outcome on area indicators and
//! covariates, with and without the survey-only block.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::SurveyDataset;
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaCoefficient {
    pub area: usize,
    pub coef: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub include_z: bool,
    /// Areas `2..=J`; area 1 is the reference.
    pub rows: Vec<AreaCoefficient>,
    pub share_significant: f64,
}

impl DiagnosticReport {
    pub fn variant(&self) -> &'static str {
        if self.include_z {
            "with_z"
        } else {
            "without_z"
        }
    }
}

/// Columns: intercept, `area_2..area_J`, `x_k`, then `z_k` when requested.
pub fn diagnostic_design(data: &SurveyDataset, include_z: bool) -> (DMatrix<f64>, Vec<String>) {
    let j = data.j_count();
    let (dx, dz) = (data.dim_x(), if include_z { data.dim_z() } else { 0 });
    let mut names = vec!["intercept".to_string()];
    names.extend((2..=j).map(|a| format!("area_{a}")));
    names.extend((1..=dx).map(|k| format!("x_{k}")));
    names.extend((1..=dz).map(|k| format!("z_{k}")));
    let recs = data.records();
    let m = DMatrix::from_fn(data.n(), names.len(), |i, c| {
        let r = &recs[i];
        if c == 0 {
            1.0
        } else if c < j {
            (r.area == c + 1) as u8 as f64
        } else if c < j + dx {
            r.x[c - j]
        } else {
            r.z[c - j - dx]
        }
    });
    (m, names)
}

/// Columns lying in the span of the columns before them.
fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let r = x.clone().qr().r();
    (0..x.ncols())
        .filter(|&c| {
            let norm = x.column(c).norm();
            norm == 0.0 || r[(c, c)].abs() <= 1e-10 * norm
        })
        .collect()
}

/// OLS of `y` on the diagnostic design with HC1 sandwich standard errors.
pub fn area_ignorability_check(data: &SurveyDataset, include_z: bool) -> Result<DiagnosticReport> {
    let j = data.j_count();
    let n = data.n();
    let (x, names) = diagnostic_design(data, include_z);
    let p = x.ncols();
    if n <= j + data.dim_x() + data.dim_z() + 1 {
        return Err(Error::InvalidInput(format!("{n} records are too few for {p} regression columns")));
    }
    let bad = collinear_columns(&x);
    if !bad.is_empty() {
        let cols: Vec<&str> = bad.iter().map(|&c| names[c].as_str()).collect();
        return Err(Error::Singular(format!("collinear design columns: {}", cols.join(", "))));
    }
    let y = DVector::from_iterator(n, data.records().iter().map(|r| r.y));
    let xtx_inv = (x.transpose() * &x)
        .try_inverse()
        .ok_or_else(|| Error::Singular("X'X is not invertible".into()))?;
    let beta = &xtx_inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let row = x.row(i);
        meat += row.transpose() * row * resid[i].powi(2);
    }
    let cov = &xtx_inv * meat * &xtx_inv * (n as f64 / (n - p) as f64);
    let rows: Vec<AreaCoefficient> = (2..=j)
        .map(|a| {
            let c = a - 1;
            let (coef, se) = (beta[c], cov[(c, c)].max(0.0).sqrt());
            let (lo, hi) = (coef - Z_95 * se, coef + Z_95 * se);
            AreaCoefficient { area: a, coef, se, ci_lo: lo, ci_hi: hi, significant: lo > 0.0 || hi < 0.0 }
        })
        .collect();
    let share = if rows.is_empty() {
        0.0
    } else {
        rows.iter().filter(|r| r.significant).count() as f64 / rows.len() as f64
    };
    Ok(DiagnosticReport { include_z, rows, share_significant: share })
}

/// `area,variant,coef,se,ci_lo,ci_hi,significant`
pub fn write_diagnostics_csv(path: &Path, reports: &[DiagnosticReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let err = |e| Error::csv(path, e);
    w.write_record(["area", "variant", "coef", "se", "ci_lo", "ci_hi", "significant"]).map_err(err)?;
    for rep in reports {
        for r in &rep.rows {
            w.write_record([
                r.area.to_string(),
                rep.variant().to_string(),
                r.coef.to_string(),
                r.se.to_string(),
                r.ci_lo.to_string(),
                r.ci_hi.to_string(),
                r.significant.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
