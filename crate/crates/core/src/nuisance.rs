//! Parametric working models and K-fold cross-fitting.
//!
//! Outcome regressions are least squares on `(1, X, Z)`; the propensity score
//! is a logistic regression and area membership a multinomial logit with area
//! 1 as reference. Both likelihoods are maximized by damped Newton steps.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::SurveyDataset;
use crate::error::{Error, Result};
use crate::linalg::{design_matrix, design_terms, max_abs, solve_spd};

pub const MAX_ITERATIONS: usize = 100;
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Ridge penalty used when a likelihood has no finite maximizer.
pub const SEPARATION_RIDGE: f64 = 1e-2;
/// Diagonal jitter added to a Hessian that fails Cholesky.
pub const HESSIAN_JITTER: f64 = 1e-6;
/// Fitted probabilities beyond this distance from {0, 1} signal quasi-separation.
const SEPARATION_PROB: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coef: DVector<f64>,
    /// Penalty used, if the unpenalized fit was singular.
    pub ridge: Option<f64>,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coef.iter().zip(row).map(|(b, x)| b * x).sum()
    }
}

/// Least squares through a thin QR factorization.
pub fn ols_fit(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearModel> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < p {
        return Err(Error::Singular(format!("{n} rows for {p} coefficients")));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..p).fold(0.0_f64, |m, d| m.max(r[(d, d)].abs()));
    let weak: Vec<usize> = (0..p).filter(|&d| r[(d, d)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)).collect();
    if !weak.is_empty() || scale == 0.0 {
        return Err(Error::Singular(format!("design is rank deficient at columns {weak:?}")));
    }
    let qty = qr.q().tr_mul(y);
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    Ok(LinearModel { coef, ridge: None })
}

/// Ridge least squares; the intercept (column 0) is not penalized.
pub fn ols_fit_ridge(design: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LinearModel> {
    let n = design.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let mut xtx = design.tr_mul(design);
    for d in 1..xtx.nrows() {
        xtx[(d, d)] += lambda;
    }
    let xty = design.tr_mul(y);
    let ch = xtx
        .cholesky()
        .ok_or_else(|| Error::Singular("penalized normal equations are singular".into()))?;
    Ok(LinearModel { coef: ch.solve(&xty), ridge: Some(lambda) })
}

/// OLS with a ridge fallback for rank-deficient designs.
pub fn ols_fit_or_ridge(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearModel> {
    match ols_fit(design, y) {
        Err(Error::Singular(_)) => ols_fit_ridge(design, y, SEPARATION_RIDGE),
        other => other,
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

struct NewtonFit {
    beta: DVector<f64>,
    iterations: usize,
    jittered: bool,
    trace: Vec<f64>,
}

/// Maximizes a concave objective. `eval` returns the objective, `derivs` the
/// gradient and the negated Hessian. Iteration stops when the gradient falls
/// below `target`, or a step is shorter than [`STEP_TOLERANCE`]; a stalled line
/// search or the iteration cap is accepted only below `accept`.
fn newton_maximize(
    mut beta: DVector<f64>,
    eval: impl Fn(&DVector<f64>) -> f64,
    derivs: impl Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
    target: f64,
    accept: f64,
    what: &str,
) -> Result<NewtonFit> {
    let mut f = eval(&beta);
    let mut trace = vec![f];
    let mut jittered = false;
    for it in 0..MAX_ITERATIONS {
        let (g, h) = derivs(&beta);
        let grad_norm = max_abs(&g);
        if !grad_norm.is_finite() {
            break;
        }
        if grad_norm <= target {
            return Ok(NewtonFit { beta, iterations: it, jittered, trace });
        }
        let (step, jit) = solve_spd(&h, &g, HESSIAN_JITTER)?;
        jittered |= jit;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let fc = eval(&cand);
            if fc.is_finite() && fc >= f {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            if grad_norm <= accept {
                return Ok(NewtonFit { beta, iterations: it, jittered, trace });
            }
            break;
        };
        let moved = max_abs(&(&step * t));
        beta = cand;
        f = fc;
        trace.push(f);
        if moved < STEP_TOLERANCE {
            return Ok(NewtonFit { beta, iterations: it + 1, jittered, trace });
        }
    }
    let (g, _) = derivs(&beta);
    if max_abs(&g) <= accept {
        return Ok(NewtonFit { beta, iterations: MAX_ITERATIONS, jittered, trace });
    }
    Err(Error::NoConvergence { what: what.to_string(), iterations: MAX_ITERATIONS })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitModel {
    pub coef: DVector<f64>,
    pub ridge: Option<f64>,
    pub iterations: usize,
    pub jittered: bool,
    /// Penalized log-likelihood after each accepted Newton step.
    pub objective_trace: Vec<f64>,
}

impl LogitModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(self.coef.iter().zip(row).map(|(b, x)| b * x).sum())
    }
}

/// `sum_i [y_i eta_i - log(1 + exp(eta_i))] - lambda/2 |beta|^2`.
pub fn logistic_objective(design: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, lambda: f64) -> f64 {
    let eta = design * beta;
    let ll: f64 = eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum();
    ll - 0.5 * lambda * beta.norm_squared()
}

pub fn logistic_gradient(design: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let eta = design * beta;
    let resid = DVector::from_iterator(y.len(), eta.iter().zip(y).map(|(&e, &yi)| yi - sigmoid(e)));
    design.tr_mul(&resid) - beta * lambda
}

fn logistic_neg_hessian(design: &DMatrix<f64>, beta: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    let eta = design * beta;
    let mut weighted = design.clone();
    for (i, &e) in eta.iter().enumerate() {
        let p = sigmoid(e);
        let w = p * (1.0 - p);
        weighted.row_mut(i).scale_mut(w);
    }
    let mut h = design.tr_mul(&weighted);
    for d in 0..h.nrows() {
        h[(d, d)] += lambda;
    }
    h
}

/// Penalized logistic regression at a fixed `lambda` (0 for plain maximum likelihood).
pub fn logistic_fit_penalized(design: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LogitModel> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("logistic response {bad} is not 0 or 1")));
    }
    let ones: f64 = y.iter().sum();
    if lambda == 0.0 && (ones == 0.0 || ones == n as f64) {
        return Err(Error::Infeasible("logistic response has a single class".into()));
    }
    let mut beta0 = DVector::zeros(p);
    let rate = (ones + 0.5) / (n as f64 + 1.0);
    beta0[0] = (rate / (1.0 - rate)).ln();
    let nf = n.max(1) as f64;
    let fit = newton_maximize(
        beta0,
        |b| logistic_objective(design, y, b, lambda),
        |b| (logistic_gradient(design, y, b, lambda), logistic_neg_hessian(design, b, lambda)),
        1e-10 * nf,
        1e-8 * nf,
        "logistic regression",
    )?;
    Ok(LogitModel {
        coef: fit.beta,
        ridge: (lambda > 0.0).then_some(lambda),
        iterations: fit.iterations,
        jittered: fit.jittered,
        objective_trace: fit.trace,
    })
}

/// Maximum-likelihood logistic regression; refits with [`SEPARATION_RIDGE`]
/// when the maximizer does not exist or is not reached.
pub fn logistic_fit(design: &DMatrix<f64>, y: &[f64]) -> Result<LogitModel> {
    match logistic_fit_penalized(design, y, 0.0) {
        Ok(m) => {
            let separated = (0..design.nrows()).any(|i| {
                let p = m.predict(design.row(i).transpose().as_slice());
                !(SEPARATION_PROB..=1.0 - SEPARATION_PROB).contains(&p)
            });
            if separated {
                logistic_fit_penalized(design, y, SEPARATION_RIDGE)
            } else {
                Ok(m)
            }
        }
        Err(Error::NoConvergence { .. }) | Err(Error::Singular(_)) => {
            logistic_fit_penalized(design, y, SEPARATION_RIDGE)
        }
        Err(e) => Err(e),
    }
}

/// Multinomial logit. Row `k - 2` of `coef` holds the coefficients of area
/// `k >= 2`; area 1 is the reference with coefficients fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialModel {
    pub coef: DMatrix<f64>,
    pub j_count: usize,
    pub ridge: Option<f64>,
    pub iterations: usize,
    pub jittered: bool,
    pub objective_trace: Vec<f64>,
}

impl MultinomialModel {
    /// Probabilities of areas `1..=J` for one design row.
    pub fn predict(&self, row: &[f64]) -> Vec<f64> {
        let mut eta = Vec::with_capacity(self.j_count);
        eta.push(0.0);
        for k in 0..self.j_count - 1 {
            eta.push(self.coef.row(k).iter().zip(row).map(|(b, x)| b * x).sum());
        }
        softmax(&eta)
    }
}

pub fn softmax(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let ex: Vec<f64> = eta.iter().map(|&e| (e - m).exp()).collect();
    let s: f64 = ex.iter().sum();
    ex.into_iter().map(|e| e / s).collect()
}

// Parameter layout: theta[(k - 2) * p + r] for area k >= 2 and column r.
fn unpack(theta: &DVector<f64>, classes: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(classes, p, |k, r| theta[k * p + r])
}

// Probabilities of non-reference areas (n x (J-1)) and the log-likelihood.
fn multinomial_probs(design: &DMatrix<f64>, labels: &[usize], coef: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = design.nrows();
    let classes = coef.nrows();
    let eta = design * coef.transpose();
    let mut probs = DMatrix::zeros(n, classes);
    let mut ll = 0.0;
    for i in 0..n {
        let m = (0..classes).fold(0.0_f64, |a, k| a.max(eta[(i, k)]));
        let mut denom = (-m).exp();
        for k in 0..classes {
            denom += (eta[(i, k)] - m).exp();
        }
        for k in 0..classes {
            probs[(i, k)] = (eta[(i, k)] - m).exp() / denom;
        }
        let own = if labels[i] == 1 { 0.0 } else { eta[(i, labels[i] - 2)] };
        ll += own - m - denom.ln();
    }
    (probs, ll)
}

/// Penalized multinomial log-likelihood at flattened coefficients `theta`.
pub fn multinomial_objective(
    design: &DMatrix<f64>,
    labels: &[usize],
    j_count: usize,
    theta: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let coef = unpack(theta, j_count - 1, design.ncols());
    let (_, ll) = multinomial_probs(design, labels, &coef);
    ll - 0.5 * lambda * theta.norm_squared()
}

pub fn multinomial_gradient(
    design: &DMatrix<f64>,
    labels: &[usize],
    j_count: usize,
    theta: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let p = design.ncols();
    let classes = j_count - 1;
    let coef = unpack(theta, classes, p);
    let (mut resid, _) = multinomial_probs(design, labels, &coef);
    resid.neg_mut();
    for (i, &a) in labels.iter().enumerate() {
        if a >= 2 {
            resid[(i, a - 2)] += 1.0;
        }
    }
    let g = resid.tr_mul(design);
    DVector::from_fn(classes * p, |idx, _| g[(idx / p, idx % p)] - lambda * theta[idx])
}

fn multinomial_neg_hessian(design: &DMatrix<f64>, probs: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (n, p) = design.shape();
    let classes = probs.ncols();
    let dim = classes * p;
    let mut h = DMatrix::zeros(dim, dim);
    let mut scaled = probs.clone();
    for r in 0..p {
        for s in r..p {
            let v: Vec<f64> = (0..n).map(|i| design[(i, r)] * design[(i, s)]).collect();
            for k in 0..classes {
                for i in 0..n {
                    scaled[(i, k)] = probs[(i, k)] * v[i];
                }
            }
            let m = probs.tr_mul(&scaled);
            for k in 0..classes {
                let diag: f64 = scaled.column(k).sum();
                for l in 0..classes {
                    let val = if k == l { diag - m[(k, l)] } else { -m[(k, l)] };
                    h[(k * p + r, l * p + s)] = val;
                    h[(l * p + s, k * p + r)] = val;
                }
            }
        }
    }
    for d in 0..dim {
        h[(d, d)] += lambda;
    }
    h
}

/// Multinomial logit at a fixed penalty.
pub fn multinomial_fit_penalized(
    design: &DMatrix<f64>,
    labels: &[usize],
    j_count: usize,
    lambda: f64,
) -> Result<MultinomialModel> {
    let (n, p) = design.shape();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if j_count == 0 {
        return Err(Error::InvalidInput("area count must be positive".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&a| a == 0 || a > j_count) {
        return Err(Error::InvalidInput(format!("area label {bad} outside 1..={j_count}")));
    }
    let classes = j_count - 1;
    if classes == 0 {
        return Ok(MultinomialModel {
            coef: DMatrix::zeros(0, p),
            j_count,
            ridge: None,
            iterations: 0,
            jittered: false,
            objective_trace: vec![0.0],
        });
    }
    let mut counts = vec![0.0_f64; j_count];
    for &a in labels {
        counts[a - 1] += 1.0;
    }
    let mut theta0 = DVector::zeros(classes * p);
    for k in 0..classes {
        theta0[k * p] = ((counts[k + 1] + 0.5) / (counts[0] + 0.5)).ln();
    }
    let nf = n.max(1) as f64;
    let fit = newton_maximize(
        theta0,
        |t| multinomial_objective(design, labels, j_count, t, lambda),
        |t| {
            let coef = unpack(t, classes, p);
            let (probs, _) = multinomial_probs(design, labels, &coef);
            let g = multinomial_gradient(design, labels, j_count, t, lambda);
            (g, multinomial_neg_hessian(design, &probs, lambda))
        },
        1e-10 * nf,
        1e-6 * nf,
        "multinomial logit",
    )?;
    Ok(MultinomialModel {
        coef: unpack(&fit.beta, classes, p),
        j_count,
        ridge: (lambda > 0.0).then_some(lambda),
        iterations: fit.iterations,
        jittered: fit.jittered,
        objective_trace: fit.trace,
    })
}

/// Multinomial logit by maximum likelihood. An area missing from `labels`, or
/// a likelihood without finite maximizer, switches to the
/// [`SEPARATION_RIDGE`] penalty.
pub fn multinomial_fit(design: &DMatrix<f64>, labels: &[usize], j_count: usize) -> Result<MultinomialModel> {
    let absent = (1..=j_count).any(|j| !labels.contains(&j));
    if absent {
        return multinomial_fit_penalized(design, labels, j_count, SEPARATION_RIDGE);
    }
    match multinomial_fit_penalized(design, labels, j_count, 0.0) {
        Ok(m) => {
            let separated = (0..design.nrows()).any(|i| {
                m.predict(design.row(i).transpose().as_slice())
                    .iter()
                    .any(|&q| q < SEPARATION_PROB)
            });
            if separated {
                multinomial_fit_penalized(design, labels, j_count, SEPARATION_RIDGE)
            } else {
                Ok(m)
            }
        }
        Err(Error::NoConvergence { .. }) | Err(Error::Singular(_)) => {
            multinomial_fit_penalized(design, labels, j_count, SEPARATION_RIDGE)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    /// Fold of each record, in `1..=k`.
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f - 1] += 1;
        }
        s
    }
}

/// Random balanced split of `0..n` into `k` folds.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidInput(format!("{k} folds exceed {n} records")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k + 1;
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossFitOptions {
    /// Bounds for the propensity score: `[clip, 1 - clip]`.
    pub clip: f64,
    /// Bounds for area probabilities before renormalization. Defaults to
    /// `clip / J`, since `clip` itself can exceed typical area shares.
    pub area_clip: Option<f64>,
}

impl Default for CrossFitOptions {
    fn default() -> Self {
        CrossFitOptions { clip: 0.01, area_clip: None }
    }
}

impl CrossFitOptions {
    pub fn area_clip_for(&self, j_count: usize) -> f64 {
        self.area_clip.unwrap_or(self.clip / j_count as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::InvalidInput(format!("clip {} not in (0, 0.5)", self.clip)));
        }
        if let Some(a) = self.area_clip {
            if !(a > 0.0 && a < 0.5) {
                return Err(Error::InvalidInput(format!("area clip {a} not in (0, 0.5)")));
            }
        }
        Ok(())
    }
}

/// Clamps each probability into `[eps, 1 - eps]` and renormalizes.
pub fn clip_and_normalize(probs: &mut [f64], eps: f64) {
    for q in probs.iter_mut() {
        *q = q.clamp(eps, 1.0 - eps);
    }
    let s: f64 = probs.iter().sum();
    for q in probs.iter_mut() {
        *q /= s;
    }
}

#[derive(Debug, Clone)]
pub struct FoldModels {
    pub m0: LinearModel,
    pub m1: LinearModel,
    pub e: LogitModel,
    pub area: MultinomialModel,
}

/// Out-of-fold nuisance predictions for every record.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub folds: Option<FoldAssignment>,
    /// Models trained without fold `k`, index `k - 1`.
    pub models: Vec<FoldModels>,
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
    pub e: Vec<f64>,
    j_count: usize,
    pi_a: Vec<f64>,
    /// Human-readable notes about fallbacks taken while fitting.
    pub notes: Vec<String>,
}

impl NuisanceSet {
    /// Wraps externally supplied predictions (for instance the true functions
    /// of a simulated world). `pi_a[i]` lists areas `1..=J`.
    pub fn from_predictions(m0: Vec<f64>, m1: Vec<f64>, e: Vec<f64>, pi_a: Vec<Vec<f64>>) -> Result<Self> {
        let n = m0.len();
        for len in [m1.len(), e.len(), pi_a.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        let j_count = pi_a.first().map(|r| r.len()).unwrap_or(0);
        if pi_a.iter().any(|r| r.len() != j_count) {
            return Err(Error::InvalidInput("ragged area probability rows".into()));
        }
        Ok(NuisanceSet {
            folds: None,
            models: Vec::new(),
            m0,
            m1,
            e,
            j_count,
            pi_a: pi_a.into_iter().flatten().collect(),
            notes: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.m0.len()
    }

    pub fn j_count(&self) -> usize {
        self.j_count
    }

    /// `pi_A(j | X_i, Z_i)` for 1-based `j`.
    pub fn pi_a(&self, i: usize, j: usize) -> f64 {
        self.pi_a[i * self.j_count + j - 1]
    }

    pub fn pi_a_row(&self, i: usize) -> &[f64] {
        &self.pi_a[i * self.j_count..(i + 1) * self.j_count]
    }

    /// Writes all fold models as `model,term,value` rows.
    pub fn write_coefficients(&self, path: &Path, dim_x: usize, dim_z: usize) -> Result<()> {
        let terms = design_terms(dim_x, dim_z);
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["model", "term", "value"]).map_err(|e| Error::csv(path, e))?;
        let mut put = |model: String, term: String, v: f64| {
            wtr.write_record([model, term, v.to_string()]).map_err(|e| Error::csv(path, e))
        };
        for (k, fm) in self.models.iter().enumerate() {
            let f = k + 1;
            for (name, coef) in [("m0", &fm.m0.coef), ("m1", &fm.m1.coef), ("e", &fm.e.coef)] {
                for (t, v) in terms.iter().zip(coef.iter()) {
                    put(format!("fold{f}.{name}"), t.clone(), *v)?;
                }
            }
            for row in 0..fm.area.coef.nrows() {
                for (t, v) in terms.iter().zip(fm.area.coef.row(row).iter()) {
                    put(format!("fold{f}.area"), format!("area{}:{t}", row + 2), *v)?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

fn fit_fold(data: &SurveyDataset, train: &[usize]) -> Result<FoldModels> {
    let recs = data.records();
    let treated: Vec<usize> = train.iter().copied().filter(|&i| recs[i].t == 1).collect();
    let control: Vec<usize> = train.iter().copied().filter(|&i| recs[i].t == 0).collect();
    if treated.is_empty() || control.is_empty() {
        return Err(Error::Infeasible(
            "a training complement contains a single treatment arm; use fewer folds".into(),
        ));
    }
    let response = |idx: &[usize]| DVector::from_iterator(idx.len(), idx.iter().map(|&i| recs[i].y));
    let m1 = ols_fit_or_ridge(&design_matrix(data, &treated), &response(&treated))?;
    let m0 = ols_fit_or_ridge(&design_matrix(data, &control), &response(&control))?;
    let x = design_matrix(data, train);
    let t: Vec<f64> = train.iter().map(|&i| recs[i].t as f64).collect();
    let e = logistic_fit(&x, &t)?;
    let labels: Vec<usize> = train.iter().map(|&i| recs[i].area).collect();
    let area = multinomial_fit(&x, &labels, data.j_count())?;
    Ok(FoldModels { m0, m1, e, area })
}

/// Fits every fold complement and predicts each record from the model that
/// excluded its own fold. Propensities are clipped to `[clip, 1 - clip]`;
/// area probabilities are clipped and renormalized.
pub fn cross_fit(data: &SurveyDataset, folds: &FoldAssignment, opts: &CrossFitOptions) -> Result<NuisanceSet> {
    opts.validate()?;
    if folds.fold_of.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: folds.fold_of.len() });
    }
    let models = (1..=folds.k)
        .into_par_iter()
        .map(|k| fit_fold(data, &folds.complement(k)))
        .collect::<Result<Vec<_>>>()?;

    let n = data.n();
    let j = data.j_count();
    let area_eps = opts.area_clip_for(j);
    let mut m0 = vec![0.0; n];
    let mut m1 = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut pi_a = vec![0.0; n * j];
    for (i, r) in data.records().iter().enumerate() {
        let fm = &models[folds.fold_of[i] - 1];
        let row = crate::linalg::covariate_row(r);
        m0[i] = fm.m0.predict(&row);
        m1[i] = fm.m1.predict(&row);
        e[i] = fm.e.predict(&row).clamp(opts.clip, 1.0 - opts.clip);
        let mut probs = fm.area.predict(&row);
        clip_and_normalize(&mut probs, area_eps);
        pi_a[i * j..(i + 1) * j].copy_from_slice(&probs);
    }
    let mut notes = Vec::new();
    for (k, fm) in models.iter().enumerate() {
        let f = k + 1;
        if fm.m0.ridge.is_some() || fm.m1.ridge.is_some() {
            notes.push(format!("fold {f}: outcome regression used ridge fallback"));
        }
        if fm.e.ridge.is_some() {
            notes.push(format!("fold {f}: propensity model used ridge fallback"));
        }
        if fm.area.ridge.is_some() {
            notes.push(format!("fold {f}: area model used ridge fallback"));
        }
    }
    Ok(NuisanceSet { folds: Some(folds.clone()), models, m0, m1, e, j_count: j, pi_a, notes })
}
