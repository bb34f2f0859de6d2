//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::data::{SurveyDataset, SurveyRecord};
use crate::error::{Error, Result};

/// Regression row `(1, x, z)` for one record.
pub fn covariate_row(r: &SurveyRecord) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + r.x.len() + r.z.len());
    row.push(1.0);
    row.extend_from_slice(&r.x);
    row.extend_from_slice(&r.z);
    row
}

/// Design matrix with an intercept column for the selected records.
pub fn design_matrix(data: &SurveyDataset, idx: &[usize]) -> DMatrix<f64> {
    let p = data.design_width();
    let recs = data.records();
    DMatrix::from_fn(idx.len(), p, |i, c| match c {
        0 => 1.0,
        c if c <= data.dim_x() => recs[idx[i]].x[c - 1],
        c => recs[idx[i]].z[c - 1 - data.dim_x()],
    })
}

/// Column names matching [`design_matrix`].
pub fn design_terms(dim_x: usize, dim_z: usize) -> Vec<String> {
    let mut terms = vec!["intercept".to_string()];
    terms.extend((1..=dim_x).map(|k| format!("x_{k}")));
    terms.extend((1..=dim_z).map(|k| format!("z_{k}")));
    terms
}

/// Solves `h * s = g` for symmetric positive definite `h`. When the Cholesky
/// factorization fails, `jitter` is added to the diagonal and the solve is
/// retried; the flag reports whether that happened.
pub fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>, jitter: f64) -> Result<(DVector<f64>, bool)> {
    if let Some(ch) = h.clone().cholesky() {
        return Ok((ch.solve(g), false));
    }
    let mut hj = h.clone();
    for d in 0..hj.nrows() {
        hj[(d, d)] += jitter;
    }
    match hj.cholesky() {
        Some(ch) => Ok((ch.solve(g), true)),
        None => Err(Error::Singular("Hessian is not positive definite even after jitter".into())),
    }
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
