//! Doubly robust area scores and the estimators built from them.
//!
//! For a target area `j`, each sampled unit contributes
//!
//! ```text
//! phi1 = T (Y - m1) / e - (1 - T)(Y - m0) / (1 - e) + m1 - m0
//! phi2 = m1 - m0
//! w1   = pi_A(j|X,Z) / (pi_S(X, j) p(j))
//! w2   = (1{A = j} - pi_A(j|X,Z)) / (pi_S(X, j) p(j))
//! phi  = w1 phi1 + w2 phi2
//! ```
//!
//! The Horvitz-Thompson form averages `phi` over the units the scores
//! represent; the Hajek form divides `sum phi` by `sum w1`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auxiliary::AuxiliaryProbabilities;
use crate::data::SurveyDataset;
use crate::error::{Error, Result};
use crate::linalg::{covariate_row, design_matrix};
use crate::nuisance::{logistic_fit, make_folds, ols_fit_or_ridge, NuisanceSet};

/// Arms smaller than this make the direct estimator fit in-sample.
pub const DIRECT_MIN_ARM_FOR_CROSS_FIT: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Direct,
    #[serde(rename = "HT")]
    Ht,
    Hajek,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::Ht, Method::Hajek];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Direct => "Direct",
            Method::Ht => "HT",
            Method::Hajek => "Hajek",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Method::Direct),
            "ht" => Ok(Method::Ht),
            "hajek" => Ok(Method::Hajek),
            _ => Err(Error::InvalidInput(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub unit: usize,
    pub area: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub w1: f64,
    pub w2: f64,
    pub phi: f64,
    pub trimmed: bool,
}

/// Inputs for one unit's score toward one target area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreInputs {
    pub y: f64,
    pub t: u8,
    pub m0: f64,
    pub m1: f64,
    pub e: f64,
    pub pi_a: f64,
    pub pi_s: f64,
    pub p_area: f64,
    pub in_area: bool,
}

/// Returns `(phi1, phi2, w1, w2, phi)`.
pub fn score(u: &ScoreInputs) -> (f64, f64, f64, f64, f64) {
    let treated = if u.t == 1 { 1.0 } else { 0.0 };
    let phi1 = treated * (u.y - u.m1) / u.e - (1.0 - treated) * (u.y - u.m0) / (1.0 - u.e) + u.m1 - u.m0;
    let phi2 = u.m1 - u.m0;
    let denom = u.pi_s * u.p_area;
    let w1 = u.pi_a / denom;
    let w2 = (if u.in_area { 1.0 } else { 0.0 } - u.pi_a) / denom;
    (phi1, phi2, w1, w2, w1 * phi1 + w2 * phi2)
}

/// Score rows of every sampled unit toward area `j`.
pub fn score_rows(
    data: &SurveyDataset,
    nuis: &NuisanceSet,
    aux: &AuxiliaryProbabilities,
    j: usize,
) -> Result<Vec<ScoreRow>> {
    if nuis.n() != data.n() || aux.n() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: nuis.n().min(aux.n()) });
    }
    if j == 0 || j > data.j_count() || nuis.j_count() != data.j_count() || aux.j_count() != data.j_count() {
        return Err(Error::InvalidInput(format!("area {j} inconsistent with {} areas", data.j_count())));
    }
    data.records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (phi1, phi2, w1, w2, phi) = score(&ScoreInputs {
                y: r.y,
                t: r.t,
                m0: nuis.m0[i],
                m1: nuis.m1[i],
                e: nuis.e[i],
                pi_a: nuis.pi_a(i, j),
                pi_s: aux.pi_s(i, j),
                p_area: aux.p_area(j),
                in_area: r.area == j,
            });
            for (v, name) in [(phi1, "phi1"), (phi2, "phi2"), (w1, "w1"), (w2, "w2"), (phi, "phi")] {
                if !v.is_finite() {
                    return Err(Error::NonFinite { record: i, component: name });
                }
            }
            Ok(ScoreRow { unit: i, area: j, phi1, phi2, w1, w2, phi, trimmed: false })
        })
        .collect()
}

/// Flags rows with `|phi| > threshold`; flagged rows drop out of every sum.
pub fn trim_scores(rows: &[ScoreRow], threshold: f64) -> Result<Vec<ScoreRow>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidInput(format!("trim threshold {threshold} must be positive")));
    }
    Ok(rows
        .iter()
        .map(|r| ScoreRow { trimmed: r.trimmed || r.phi.abs() > threshold, ..*r })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaEstimate {
    pub area: usize,
    pub method: Method,
    pub tau_hat: f64,
    pub var_hat: f64,
    pub n_used: usize,
    pub n_trimmed: usize,
    /// Mean of `w1` over used rows (Hajek only).
    pub mean_w1: Option<f64>,
}

impl AreaEstimate {
    pub fn se(&self) -> f64 {
        self.var_hat.sqrt()
    }
}

fn used(rows: &[ScoreRow]) -> impl Iterator<Item = &ScoreRow> {
    rows.iter().filter(|r| !r.trimmed)
}

/// `sum phi / n`. Scores of units outside the sample (or trimmed) are zero, so
/// `n` counts every unit the sampled scores stand for; it equals the row count
/// only when the rows are the whole set of i.i.d. units.
pub fn ht_estimate(rows: &[ScoreRow], n: f64) -> Result<AreaEstimate> {
    let first = rows.first().ok_or_else(|| Error::EmptyInput("no score rows".into()))?;
    if !(n > 0.0) {
        return Err(Error::InvalidInput(format!("divisor {n} must be positive")));
    }
    let n_used = used(rows).count();
    let tau = used(rows).map(|r| r.phi).sum::<f64>() / n;
    Ok(AreaEstimate {
        area: first.area,
        method: Method::Ht,
        tau_hat: tau,
        var_hat: variance_ht(rows, n, tau),
        n_used,
        n_trimmed: rows.len() - n_used,
        mean_w1: None,
    })
}

/// `(1/n^2) sum (phi - tau)^2` over all `n` units, where the `n - n_used`
/// units without a row have score zero.
pub fn variance_ht(rows: &[ScoreRow], n: f64, tau: f64) -> f64 {
    let n_used = used(rows).count() as f64;
    let ss: f64 = used(rows).map(|r| (r.phi - tau).powi(2)).sum();
    let absent = (n - n_used).max(0.0);
    (ss + absent * tau * tau) / (n * n)
}

/// `sum phi / sum w1`.
pub fn hajek_estimate(rows: &[ScoreRow]) -> Result<AreaEstimate> {
    let first = rows.first().ok_or_else(|| Error::EmptyInput("no score rows".into()))?;
    let n_used = used(rows).count();
    let sw: f64 = used(rows).map(|r| r.w1).sum();
    if !(sw > 0.0) {
        return Err(Error::Infeasible(format!("area {}: sum of w1 is {sw}", first.area)));
    }
    let tau = used(rows).map(|r| r.phi).sum::<f64>() / sw;
    let n = n_used as f64;
    let mean_w1 = sw / n;
    Ok(AreaEstimate {
        area: first.area,
        method: Method::Hajek,
        tau_hat: tau,
        var_hat: variance_hajek(rows, n, tau, mean_w1)?,
        n_used,
        n_trimmed: rows.len() - n_used,
        mean_w1: Some(mean_w1),
    })
}

/// `(1/(n^2 wbar^2)) sum (phi - tau w1)^2`.
pub fn variance_hajek(rows: &[ScoreRow], n: f64, tau: f64, mean_w1: f64) -> Result<f64> {
    if !(mean_w1 > 0.0) {
        return Err(Error::Infeasible(format!("mean w1 is {mean_w1}")));
    }
    let ss: f64 = used(rows).map(|r| (r.phi - tau * r.w1).powi(2)).sum();
    Ok(ss / (n * n * mean_w1 * mean_w1))
}

/// Area-only AIPW scores weighted by `d_i = 1 / (pi_S(X_i, j) p(j))` and
/// Hajek-normalized. All slices index the area's own units.
pub fn direct_from_predictions(
    area: usize,
    y: &[f64],
    t: &[u8],
    m0: &[f64],
    m1: &[f64],
    e: &[f64],
    d: &[f64],
) -> Result<AreaEstimate> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Infeasible(format!("area {area} has no sampled units")));
    }
    let phi1: Vec<f64> = (0..n)
        .map(|i| {
            let tr = if t[i] == 1 { 1.0 } else { 0.0 };
            tr * (y[i] - m1[i]) / e[i] - (1.0 - tr) * (y[i] - m0[i]) / (1.0 - e[i]) + m1[i] - m0[i]
        })
        .collect();
    let sd: f64 = d.iter().sum();
    let tau = phi1.iter().zip(d).map(|(p, w)| p * w).sum::<f64>() / sd;
    let var = phi1.iter().zip(d).map(|(p, w)| (w * (p - tau)).powi(2)).sum::<f64>() / (sd * sd);
    Ok(AreaEstimate { area, method: Method::Direct, tau_hat: tau, var_hat: var, n_used: n, n_trimmed: 0, mean_w1: None })
}

struct AreaFits {
    m0: Vec<f64>,
    m1: Vec<f64>,
    e: Vec<f64>,
}

// Fits m0, m1, e on `train` (area-local indices) and predicts `target`.
fn fit_area_models(data: &SurveyDataset, idx: &[usize], train: &[usize], target: &[usize], clip: f64) -> Result<AreaFits> {
    let recs = data.records();
    let pick = |sel: &[usize], arm: Option<u8>| -> Vec<usize> {
        sel.iter().map(|&k| idx[k]).filter(|&i| arm.is_none_or(|a| recs[i].t == a)).collect()
    };
    let treated = pick(train, Some(1));
    let control = pick(train, Some(0));
    if treated.is_empty() || control.is_empty() {
        return Err(Error::Infeasible("single treatment arm in training rows".into()));
    }
    let resp = |sel: &[usize]| DVector::from_iterator(sel.len(), sel.iter().map(|&i| recs[i].y));
    let m1 = ols_fit_or_ridge(&design_matrix(data, &treated), &resp(&treated))?;
    let m0 = ols_fit_or_ridge(&design_matrix(data, &control), &resp(&control))?;
    let all = pick(train, None);
    let tvec: Vec<f64> = all.iter().map(|&i| recs[i].t as f64).collect();
    let e = logistic_fit(&design_matrix(data, &all), &tvec)?;
    let mut out = AreaFits { m0: Vec::new(), m1: Vec::new(), e: Vec::new() };
    for &k in target {
        let row = covariate_row(&recs[idx[k]]);
        out.m0.push(m0.predict(&row));
        out.m1.push(m1.predict(&row));
        out.e.push(e.predict(&row).clamp(clip, 1.0 - clip));
    }
    Ok(out)
}

/// Direct estimator from area-`j` units only. Nuisances are fit within the
/// area, cross-fitted over two folds when both arms have at least
/// [`DIRECT_MIN_ARM_FOR_CROSS_FIT`] units and in-sample otherwise.
pub fn direct_estimate(
    data: &SurveyDataset,
    aux: &AuxiliaryProbabilities,
    j: usize,
    seed: u64,
    clip: f64,
) -> Result<AreaEstimate> {
    let recs = data.records();
    let idx: Vec<usize> = (0..data.n()).filter(|&i| recs[i].area == j).collect();
    let n_t = idx.iter().filter(|&&i| recs[i].t == 1).count();
    let n_c = idx.len() - n_t;
    if n_t == 0 || n_c == 0 {
        return Err(Error::Infeasible(format!("area {j} has {n_t} treated and {n_c} control units")));
    }
    let local: Vec<usize> = (0..idx.len()).collect();
    let in_sample = || fit_area_models(data, &idx, &local, &local, clip);
    let fits = if n_t.min(n_c) < DIRECT_MIN_ARM_FOR_CROSS_FIT {
        in_sample()?
    } else {
        let folds = make_folds(idx.len(), 2, seed)?;
        let mut fits = AreaFits { m0: vec![0.0; idx.len()], m1: vec![0.0; idx.len()], e: vec![0.0; idx.len()] };
        let mut ok = true;
        for k in 1..=2 {
            match fit_area_models(data, &idx, &folds.complement(k), &folds.members(k), clip) {
                Ok(f) => {
                    for (pos, &m) in folds.members(k).iter().enumerate() {
                        fits.m0[m] = f.m0[pos];
                        fits.m1[m] = f.m1[pos];
                        fits.e[m] = f.e[pos];
                    }
                }
                Err(Error::Infeasible(_)) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            fits
        } else {
            in_sample()?
        }
    };
    let y: Vec<f64> = idx.iter().map(|&i| recs[i].y).collect();
    let t: Vec<u8> = idx.iter().map(|&i| recs[i].t).collect();
    let d: Vec<f64> = idx.iter().map(|&i| 1.0 / (aux.pi_s(i, j) * aux.p_area(j))).collect();
    direct_from_predictions(j, &y, &t, &fits.m0, &fits.m1, &fits.e, &d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationOptions {
    pub methods: Vec<Method>,
    /// Units represented by the HT average; see [`ht_estimate`].
    pub ht_divisor: f64,
    pub trim: Option<f64>,
    pub clip: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct AreaResults {
    pub estimates: Vec<AreaEstimate>,
    /// `(area, method, reason)` for estimates that could not be formed.
    pub infeasible: Vec<(usize, Method, String)>,
}

impl AreaResults {
    pub fn get(&self, area: usize, method: Method) -> Option<&AreaEstimate> {
        self.estimates.iter().find(|e| e.area == area && e.method == method)
    }
}

/// All requested estimators for every area. Areas are processed in parallel;
/// results are ordered by area, then method.
pub fn estimate_areas(
    data: &SurveyDataset,
    nuis: &NuisanceSet,
    aux: &AuxiliaryProbabilities,
    opts: &EstimationOptions,
) -> Result<AreaResults> {
    let per_area = (1..=data.j_count())
        .into_par_iter()
        .map(|j| -> Result<Vec<(Method, Result<AreaEstimate>)>> {
            let mut out = Vec::new();
            let needs_scores = opts.methods.iter().any(|&m| m != Method::Direct);
            let rows = if needs_scores {
                let rows = score_rows(data, nuis, aux, j)?;
                match opts.trim {
                    Some(th) => trim_scores(&rows, th)?,
                    None => rows,
                }
            } else {
                Vec::new()
            };
            for &m in &opts.methods {
                let est = match m {
                    Method::Ht => ht_estimate(&rows, opts.ht_divisor),
                    Method::Hajek => hajek_estimate(&rows),
                    Method::Direct => direct_estimate(data, aux, j, opts.seed.wrapping_add(j as u64), opts.clip),
                };
                out.push((m, est));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut res = AreaResults::default();
    for (j, list) in per_area.into_iter().enumerate() {
        for (m, est) in list {
            match est {
                Ok(e) => res.estimates.push(e),
                Err(Error::Infeasible(msg)) => res.infeasible.push((j + 1, m, msg)),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(res)
}

pub fn write_estimates_csv(path: &Path, estimates: &[AreaEstimate]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    wtr.write_record(["area", "method", "tau_hat", "var_hat", "se", "n_used", "n_trimmed"])
        .map_err(|e| Error::csv(path, e))?;
    for e in estimates {
        wtr.write_record([
            e.area.to_string(),
            e.method.to_string(),
            e.tau_hat.to_string(),
            e.var_hat.to_string(),
            e.se().to_string(),
            e.n_used.to_string(),
            e.n_trimmed.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurveyRecord;
    use crate::nuisance::{cross_fit, CrossFitOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(phi: f64, w1: f64) -> ScoreRow {
        ScoreRow { unit: 0, area: 1, phi1: 0.0, phi2: 0.0, w1, w2: 0.0, phi, trimmed: false }
    }

    #[test]
    fn hand_evaluated_score() {
        let (phi1, phi2, w1, w2, phi) = score(&ScoreInputs {
            y: 10.0,
            t: 1,
            m0: 3.0,
            m1: 8.0,
            e: 0.5,
            pi_a: 0.4,
            pi_s: 0.5,
            p_area: 0.2,
            in_area: true,
        });
        assert!((w1 - 4.0).abs() < 1e-12);
        assert!((phi1 - 9.0).abs() < 1e-12);
        assert!((w2 - 6.0).abs() < 1e-12);
        assert!((phi2 - 5.0).abs() < 1e-12);
        assert!((phi - 66.0).abs() < 1e-12);
    }

    #[test]
    fn zero_effect_zero_residual() {
        let (.., phi) = score(&ScoreInputs {
            y: 2.0, t: 0, m0: 2.0, m1: 2.0, e: 0.3, pi_a: 0.2, pi_s: 0.1, p_area: 0.3, in_area: false,
        });
        assert_eq!(phi, 0.0);
    }

    #[test]
    fn ht_arithmetic() {
        let est = ht_estimate(&[row(2.0, 1.0), row(4.0, 1.0)], 2.0).unwrap();
        assert_eq!(est.tau_hat, 3.0);
        let c = ht_estimate(&[row(1.5, 1.0); 5], 5.0).unwrap();
        assert_eq!(c.tau_hat, 1.5);
        assert_eq!(c.var_hat, 0.0);
        assert!(ht_estimate(&[], 1.0).is_err());
    }

    #[test]
    fn ht_variance_arithmetic() {
        assert_eq!(variance_ht(&[row(0.0, 1.0), row(2.0, 1.0)], 2.0, 1.0), 0.5);
        // two sampled rows standing for four units: the two absent units score zero
        let v = variance_ht(&[row(2.0, 1.0), row(2.0, 1.0)], 4.0, 1.0);
        let explicit = variance_ht(&[row(2.0, 1.0), row(2.0, 1.0), row(0.0, 0.0), row(0.0, 0.0)], 4.0, 1.0);
        assert!((v - explicit).abs() < 1e-15);
    }

    #[test]
    fn hajek_arithmetic() {
        let est = hajek_estimate(&[row(6.0, 2.0), row(2.0, 2.0)]).unwrap();
        assert_eq!(est.tau_hat, 2.0);
        let rows = [row(1.0, 1.0), row(3.0, 1.0), row(-2.0, 1.0)];
        let h = hajek_estimate(&rows).unwrap();
        let t = ht_estimate(&rows, 3.0).unwrap();
        assert!((h.tau_hat - t.tau_hat).abs() < 1e-15);
        assert!((h.var_hat - variance_ht(&rows, 3.0, h.tau_hat)).abs() < 1e-15);
        assert!(hajek_estimate(&[row(1.0, 0.0)]).is_err());
    }

    #[test]
    fn hajek_variance_arithmetic() {
        let rows = [row(2.0, 1.0), row(0.0, 1.0)];
        assert_eq!(variance_hajek(&rows, 2.0, 1.0, 1.0).unwrap(), 0.5);
        let exact = [row(2.0, 1.0), row(6.0, 3.0)];
        assert_eq!(variance_hajek(&exact, 2.0, 2.0, 2.0).unwrap(), 0.0);
        assert!(variance_hajek(&rows, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn trimming_boundaries() {
        let rows = [row(900.0, 1.0), row(800.0, 1.0), row(-801.0, 1.0)];
        let t = trim_scores(&rows, 800.0).unwrap();
        assert_eq!(t.iter().map(|r| r.trimmed).collect::<Vec<_>>(), vec![true, false, true]);
        assert!(trim_scores(&rows, f64::INFINITY).unwrap().iter().all(|r| !r.trimmed));
        let est = ht_estimate(&t, 3.0).unwrap();
        assert_eq!((est.n_used, est.n_trimmed), (1, 2));
        assert!(trim_scores(&rows, 0.0).is_err());
    }

    fn aipw(y: f64, t: u8, m0: f64, m1: f64, e: f64) -> f64 {
        if t == 1 {
            m1 - m0 + (y - m1) / e
        } else {
            m1 - m0 - (y - m0) / (1.0 - e)
        }
    }

    #[test]
    fn direct_matches_hajek_for_one_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 30;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let t: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let m0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
        let ps: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.9)).collect();
        let d: Vec<f64> = ps.iter().map(|p| 1.0 / p).collect();
        let direct = direct_from_predictions(1, &y, &t, &m0, &m1, &e, &d).unwrap();

        let recs = (0..n)
            .map(|i| SurveyRecord { y: y[i], t: t[i], x: vec![], z: vec![], area: 1, weight: None })
            .collect();
        let data = SurveyDataset::new(recs, 1).unwrap();
        let nuis = NuisanceSet::from_predictions(m0, m1, e, vec![vec![1.0]; n]).unwrap();
        let aux = AuxiliaryProbabilities::from_matrix(ps.iter().map(|&p| vec![p]).collect(), vec![1.0]).unwrap();
        let h = hajek_estimate(&score_rows(&data, &nuis, &aux, 1).unwrap()).unwrap();
        assert!((h.tau_hat - direct.tau_hat).abs() < 1e-12 * direct.tau_hat.abs().max(1.0));
        assert!((h.var_hat - direct.var_hat).abs() < 1e-12 * direct.var_hat.max(1.0));
    }

    fn synthetic(n: usize, j: usize, seed: u64) -> SurveyDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs = (0..n)
            .map(|i| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let z: f64 = rng.random_range(-1.0..1.0);
                let t = (rng.random::<f64>() < 0.4 + 0.2 * x) as u8;
                SurveyRecord {
                    y: 1.0 + x + 0.5 * z + t as f64 * (2.0 + z) + rng.random_range(-1.0..1.0),
                    t,
                    x: vec![x],
                    z: vec![z],
                    area: 1 + i % j,
                    weight: None,
                }
            })
            .collect();
        SurveyDataset::new(recs, j).unwrap()
    }

    #[test]
    fn direct_requires_both_arms() {
        let mut data = synthetic(60, 2, 1);
        let recs: Vec<SurveyRecord> = data
            .records()
            .iter()
            .cloned()
            .map(|mut r| {
                if r.area == 2 {
                    r.t = 0;
                }
                r
            })
            .collect();
        data = SurveyDataset::new(recs, 2).unwrap();
        let aux = AuxiliaryProbabilities::known(&vec![0.1; 60], vec![0.5, 0.5]).unwrap();
        assert!(matches!(direct_estimate(&data, &aux, 2, 0, 0.01), Err(Error::Infeasible(_))));
        assert!(direct_estimate(&data, &aux, 1, 0, 0.01).is_ok());
    }

    #[test]
    fn pipeline_shapes_and_decomposition() {
        let data = synthetic(400, 3, 2);
        let folds = make_folds(400, 5, 3).unwrap();
        let nuis = cross_fit(&data, &folds, &CrossFitOptions::default()).unwrap();
        let aux = AuxiliaryProbabilities::known(&vec![0.2; 400], vec![0.3, 0.3, 0.4]).unwrap();
        let opts = EstimationOptions { methods: Method::ALL.to_vec(), ht_divisor: 2000.0, trim: None, clip: 0.01, seed: 1 };
        let res = estimate_areas(&data, &nuis, &aux, &opts).unwrap();
        assert_eq!(res.estimates.len(), 9);
        assert!(res.infeasible.is_empty());
        for j in 1..=3 {
            let rows = score_rows(&data, &nuis, &aux, j).unwrap();
            let pooled: f64 = rows.iter().map(|r| r.phi).sum();
            let inside: f64 = rows.iter().filter(|r| data.records()[r.unit].area == j).map(|r| r.phi).sum();
            let outside: f64 = rows.iter().filter(|r| data.records()[r.unit].area != j).map(|r| r.phi).sum();
            assert!((inside + outside - pooled).abs() < 1e-12 * pooled.abs().max(1.0));
            let h = res.get(j, Method::Hajek).unwrap();
            assert!((h.tau_hat - 2.0).abs() < 1.0, "{}", h.tau_hat);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn single_area_is_aipw(y in -50.0f64..50.0, t in 0u8..2, m0 in -10.0f64..10.0, m1 in -10.0f64..10.0, e in 0.01f64..0.99) {
                let (phi1, _, w1, w2, phi) = score(&ScoreInputs { y, t, m0, m1, e, pi_a: 1.0, pi_s: 1.0, p_area: 1.0, in_area: true });
                prop_assert_eq!(w2, 0.0);
                prop_assert_eq!(w1, 1.0);
                let reference = aipw(y, t, m0, m1, e);
                prop_assert!((phi - reference).abs() <= 1e-12 * reference.abs().max(1.0));
                prop_assert!((phi1 - reference).abs() <= 1e-12 * reference.abs().max(1.0));
            }

            #[test]
            fn hajek_ignores_sampling_scale(seed in 0u64..500, c in 0.01f64..100.0) {
                let data = synthetic(120, 2, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = data.n();
                let nuis = NuisanceSet::from_predictions(
                    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (0..n).map(|_| rng.random_range(1.0..3.0)).collect(),
                    (0..n).map(|_| rng.random_range(0.2..0.8)).collect(),
                    (0..n).map(|_| { let a: f64 = rng.random_range(0.1..0.9); vec![a, 1.0 - a] }).collect(),
                ).unwrap();
                let aux = AuxiliaryProbabilities::from_matrix(
                    (0..n).map(|_| vec![rng.random_range(0.01..0.5), rng.random_range(0.01..0.5)]).collect(),
                    vec![0.4, 0.6],
                ).unwrap();
                for j in 1..=2 {
                    let a = hajek_estimate(&score_rows(&data, &nuis, &aux, j).unwrap()).unwrap();
                    let b = hajek_estimate(&score_rows(&data, &nuis, &aux.scaled(c), j).unwrap()).unwrap();
                    prop_assert!((a.tau_hat - b.tau_hat).abs() <= 1e-12 * a.tau_hat.abs().max(1e-300));
                }
            }

            #[test]
            fn trimming_is_monotone(phis in proptest::collection::vec(-2000.0f64..2000.0, 1..40), a in 1.0f64..2000.0, b in 1.0f64..2000.0) {
                let rows: Vec<ScoreRow> = phis.iter().map(|&p| row(p, 1.0)).collect();
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let count = |th: f64| trim_scores(&rows, th).unwrap().iter().filter(|r| r.trimmed).count();
                prop_assert!(count(hi) <= count(lo));
            }

            #[test]
            fn variances_nonnegative(phis in proptest::collection::vec(-100.0f64..100.0, 2..30)) {
                let rows: Vec<ScoreRow> = phis.iter().enumerate().map(|(i, &p)| row(p, 0.5 + i as f64 * 0.1)).collect();
                let h = ht_estimate(&rows, rows.len() as f64).unwrap();
                let k = hajek_estimate(&rows).unwrap();
                prop_assert!(h.var_hat >= 0.0 && k.var_hat >= 0.0);
            }
        }
    }
}
