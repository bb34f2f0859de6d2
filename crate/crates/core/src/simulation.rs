//! Monte Carlo study over eight synthetic populations.
//!
//! Each design differs only in whether the outcome, treatment and area
//! components use `(X, Z)` or `(X^2, Z^2)`. The working nuisance models are
//! always linear in `(X, Z)`, so squared components are misspecified.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auxiliary::AuxiliaryProbabilities;
use crate::data::{SurveyDataset, SurveyRecord};
use crate::error::{Error, Result};
use crate::estimator::{estimate_areas, EstimationOptions, Method};
use crate::nuisance::{cross_fit, make_folds, sigmoid, CrossFitOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// `(X, Z)`
    Linear,
    /// `(X^2, Z^2)`
    Squared,
}

impl Transform {
    pub fn apply(self, x: f64, z: f64) -> (f64, f64) {
        match self {
            Transform::Linear => (x, z),
            Transform::Squared => (x * x, z * z),
        }
    }
}

/// Covariate transforms of `(outcome, propensity, area)` for designs 1..=8.
pub fn design_transforms(dgp: u8) -> Result<[Transform; 3]> {
    use Transform::{Linear as L, Squared as S};
    Ok(match dgp {
        1 => [L, L, L],
        2 => [L, S, L],
        3 => [L, L, S],
        4 => [L, S, S],
        5 => [S, L, L],
        6 => [S, L, S],
        7 => [S, S, L],
        8 => [S, S, S],
        _ => return Err(Error::InvalidInput(format!("design {dgp} outside 1..=8"))),
    })
}

/// Whether areas and their coefficients are drawn anew for every replication
/// or once for the whole study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PopulationMode {
    #[default]
    Redraw,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub dgp: u8,
    pub n_pop: usize,
    pub j_count: usize,
    pub reps: usize,
    pub seed: u64,
    pub outcome: Transform,
    pub propensity: Transform,
    pub area: Transform,
    pub noise_sd: f64,
    pub alpha_sd: f64,
    pub sampling_intercept: f64,
    pub sampling_slope: f64,
    pub folds: usize,
    pub clip: f64,
    pub population: PopulationMode,
}

impl DgpConfig {
    /// Desk-scale defaults for design `dgp`.
    pub fn new(dgp: u8) -> Result<Self> {
        let [outcome, propensity, area] = design_transforms(dgp)?;
        Ok(DgpConfig {
            dgp,
            n_pop: 100_000,
            j_count: 50,
            reps: 200,
            seed: 7,
            outcome,
            propensity,
            area,
            noise_sd: 10.0,
            alpha_sd: 0.15,
            sampling_intercept: 4.0,
            sampling_slope: 0.3,
            folds: 5,
            clip: 0.01,
            population: PopulationMode::Redraw,
        })
    }

    /// The study size of the original experiment.
    pub fn full_scale(mut self) -> Self {
        self.n_pop = 400_000;
        self.reps = 2000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = design_transforms(self.dgp)?;
        if t != [self.outcome, self.propensity, self.area] {
            return Err(Error::InvalidInput(format!("transforms do not match design {}", self.dgp)));
        }
        if self.n_pop == 0 || self.j_count == 0 || self.reps == 0 {
            return Err(Error::InvalidInput("population size, area count and replications must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidInput("cross-fitting needs at least two folds".into()));
        }
        if !(self.noise_sd >= 0.0 && self.alpha_sd >= 0.0) {
            return Err(Error::InvalidInput("standard deviations must be nonnegative".into()));
        }
        CrossFitOptions { clip: self.clip, area_clip: None }.validate()
    }

    /// `P(S = 1 | X = x)`.
    pub fn sampling_prob(&self, x: f64) -> f64 {
        1.0 / (1.0 + (self.sampling_intercept - self.sampling_slope * x).exp())
    }

    /// Random stream for replication `rep`. Stream `u64::MAX` is reserved for
    /// the shared population in fixed mode.
    pub fn rep_rng(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        rng
    }
}

pub fn control_mean(d1: f64, d2: f64) -> f64 {
    1.0 + 0.5 * d1 + 0.7 * d2
}

pub fn treated_mean(d1: f64, d2: f64) -> f64 {
    2.0 + d1 + 1.4 * d2
}

pub fn treatment_prob(d1: f64, d2: f64) -> f64 {
    sigmoid(-0.2 + 0.4 * d1 + 0.4 * d2)
}

/// Area probabilities from per-area `(intercept, slope_1, slope_2)`.
pub fn area_probs(alpha: &[[f64; 3]], d1: f64, d2: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(alpha.iter().map(|a| a[0] + a[1] * d1 + a[2] * d2));
    let mx = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in out.iter_mut() {
        *v = (*v - mx).exp();
        s += *v;
    }
    for v in out.iter_mut() {
        *v /= s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationUnit {
    pub x: f64,
    pub z: f64,
    /// 1-based.
    pub area: usize,
    pub y0: f64,
    pub y1: f64,
    pub propensity: f64,
    pub sampling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPopulation {
    pub units: Vec<PopulationUnit>,
    pub j_count: usize,
    pub alpha: Vec<[f64; 3]>,
    /// Finite-population mean of `Y(1) - Y(0)` per area, index `j - 1`.
    pub tau: Vec<f64>,
    pub area_sizes: Vec<usize>,
    pub notes: Vec<String>,
}

impl GeneratedPopulation {
    pub fn p_area(&self) -> Vec<f64> {
        let n = self.units.len() as f64;
        self.area_sizes.iter().map(|&c| c as f64 / n).collect()
    }
}

fn draw_units(cfg: &DgpConfig, alpha: &[[f64; 3]], rng: &mut ChaCha8Rng) -> Result<Vec<PopulationUnit>> {
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut probs = Vec::with_capacity(cfg.j_count);
    let mut units = Vec::with_capacity(cfg.n_pop);
    for _ in 0..cfg.n_pop {
        let x: f64 = rng.sample(StandardNormal);
        let mu = rng.random_range(1..=50) as f64 / 10.0;
        let z = mu + rng.sample::<f64, _>(StandardNormal);
        let (a1, a2) = cfg.area.apply(x, z);
        area_probs(alpha, a1, a2, &mut probs);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut area = cfg.j_count;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                area = k + 1;
                break;
            }
        }
        let (y1d, y2d) = cfg.outcome.apply(x, z);
        let y0 = control_mean(y1d, y2d) + noise.sample(rng);
        let y1 = treated_mean(y1d, y2d) + noise.sample(rng);
        let (t1, t2) = cfg.propensity.apply(x, z);
        units.push(PopulationUnit {
            x,
            z,
            area,
            y0,
            y1,
            propensity: treatment_prob(t1, t2),
            sampling: cfg.sampling_prob(x),
        });
    }
    Ok(units)
}

/// Draws area coefficients and a full population. An empty area triggers one
/// redraw of everything; a second empty area is an error.
pub fn generate_population(cfg: &DgpConfig, rng: &mut ChaCha8Rng) -> Result<GeneratedPopulation> {
    cfg.validate()?;
    let alpha_law = Normal::new(0.0, cfg.alpha_sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut notes = Vec::new();
    for attempt in 0..2 {
        let alpha: Vec<[f64; 3]> = (0..cfg.j_count)
            .map(|_| [alpha_law.sample(rng), alpha_law.sample(rng), alpha_law.sample(rng)])
            .collect();
        let units = draw_units(cfg, &alpha, rng)?;
        let mut sizes = vec![0usize; cfg.j_count];
        let mut effect = vec![0.0; cfg.j_count];
        for u in &units {
            sizes[u.area - 1] += 1;
            effect[u.area - 1] += u.y1 - u.y0;
        }
        if let Some(empty) = sizes.iter().position(|&c| c == 0) {
            notes.push(format!("area {} empty on attempt {}; regenerating", empty + 1, attempt + 1));
            continue;
        }
        let tau = effect.iter().zip(&sizes).map(|(s, &c)| s / c as f64).collect();
        return Ok(GeneratedPopulation { units, j_count: cfg.j_count, alpha, tau, area_sizes: sizes, notes });
    }
    Err(Error::InvalidInput("population has an empty area after regeneration".into()))
}

/// Bernoulli inclusion at each unit's sampling probability, then treatment
/// at its propensity. Returns the sample and the inclusion probabilities of
/// the sampled units.
pub fn draw_sample(pop: &GeneratedPopulation, rng: &mut ChaCha8Rng) -> Result<(SurveyDataset, Vec<f64>)> {
    let mut recs = Vec::new();
    let mut ps = Vec::new();
    for u in &pop.units {
        let s: f64 = rng.random();
        let t: f64 = rng.random();
        if s < u.sampling {
            let treated = t < u.propensity;
            recs.push(SurveyRecord {
                y: if treated { u.y1 } else { u.y0 },
                t: treated as u8,
                x: vec![u.x],
                z: vec![u.z],
                area: u.area,
                weight: Some(1.0 / u.sampling),
            });
            ps.push(u.sampling);
        }
    }
    if recs.is_empty() {
        return Err(Error::EmptyInput("sample drew no units".into()));
    }
    Ok((SurveyDataset::new(recs, pop.j_count)?, ps))
}

/// One estimate of one method in one area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEstimate {
    pub tau_hat: f64,
    pub var_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep: usize,
    pub n_sample: usize,
    pub tau: Vec<f64>,
    /// Indexed `[method][area - 1]` in [`Method::ALL`] order; `None` when
    /// infeasible.
    pub estimates: Vec<Vec<Option<CellEstimate>>>,
    pub notes: Vec<String>,
}

fn method_index(m: Method) -> usize {
    Method::ALL.iter().position(|&k| k == m).expect("listed method")
}

/// Fits and estimates on one sample drawn from `pop`.
pub fn estimate_on_population(
    cfg: &DgpConfig,
    pop: &GeneratedPopulation,
    rep: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ReplicationResult> {
    let (data, ps) = draw_sample(pop, rng)?;
    let fold_seed: u64 = rng.random();
    let folds = make_folds(data.n(), cfg.folds, fold_seed)?;
    let nuis = cross_fit(&data, &folds, &CrossFitOptions { clip: cfg.clip, area_clip: None })?;
    let aux = AuxiliaryProbabilities::known(&ps, pop.p_area())?;
    let opts = EstimationOptions {
        methods: Method::ALL.to_vec(),
        ht_divisor: pop.units.len() as f64,
        trim: None,
        clip: cfg.clip,
        seed: fold_seed,
    };
    let res = estimate_areas(&data, &nuis, &aux, &opts)?;
    let mut estimates = vec![vec![None; cfg.j_count]; Method::ALL.len()];
    for e in &res.estimates {
        estimates[method_index(e.method)][e.area - 1] = Some(CellEstimate { tau_hat: e.tau_hat, var_hat: e.var_hat });
    }
    let mut notes = pop.notes.clone();
    notes.extend(nuis.notes.iter().cloned());
    Ok(ReplicationResult { rep, n_sample: data.n(), tau: pop.tau.clone(), estimates, notes })
}

/// One full replication: population (unless `fixed` is given), sample,
/// cross-fit and all estimators.
pub fn run_replication(cfg: &DgpConfig, rep: usize, fixed: Option<&GeneratedPopulation>) -> Result<ReplicationResult> {
    let mut rng = cfg.rep_rng(rep as u64);
    match fixed {
        Some(pop) => estimate_on_population(cfg, pop, rep, &mut rng),
        None => {
            let pop = generate_population(cfg, &mut rng)?;
            estimate_on_population(cfg, &pop, rep, &mut rng)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaMetrics {
    pub area: usize,
    pub method: Method,
    pub reps_used: usize,
    pub bias: f64,
    pub rmse: f64,
    /// Against Direct over replications where both are feasible; `None` for
    /// Direct itself or when no pair exists.
    pub prial: Option<f64>,
    pub var_ratio: f64,
    /// `(1/R) sum (est - tau)^2`, the denominator of `var_ratio`.
    pub var_mc: f64,
    /// `(1/R) sum (est - tau - bias)^2`.
    pub var_mc_centered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub stat: &'static str,
    pub bias: f64,
    pub rmse: f64,
    pub prial: Option<f64>,
    pub var_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub dgp: u8,
    pub rows: Vec<AreaMetrics>,
    pub summary: Vec<SummaryRow>,
    /// `(area, method, infeasible replications)`.
    pub infeasible: Vec<(usize, Method, usize)>,
}

impl MetricsTable {
    pub fn get(&self, area: usize, method: Method) -> Option<&AreaMetrics> {
        self.rows.iter().find(|r| r.area == area && r.method == method)
    }

    pub fn summary_for(&self, method: Method, stat: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method && r.stat == stat)
    }
}

/// Errors `est - tau` of the stored replicates for one cell.
pub fn cell_errors(reps: &[ReplicationResult], method: Method, area: usize) -> Vec<(f64, f64)> {
    let m = method_index(method);
    reps.iter()
        .filter_map(|r| r.estimates[m][area - 1].map(|c| (c.tau_hat - r.tau[area - 1], c.var_hat)))
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

/// Bias, RMSE, PRIAL and variance ratio per area and method, plus cross-area
/// mean and standard deviation rows.
pub fn compute_metrics(dgp: u8, j_count: usize, reps: &[ReplicationResult]) -> MetricsTable {
    let mut rows = Vec::new();
    let mut infeasible = Vec::new();
    let direct = method_index(Method::Direct);
    for area in 1..=j_count {
        for &method in &Method::ALL {
            let errs = cell_errors(reps, method, area);
            let missing = reps.len() - errs.len();
            if missing > 0 {
                infeasible.push((area, method, missing));
            }
            if errs.is_empty() {
                continue;
            }
            let r = errs.len() as f64;
            let bias = errs.iter().map(|e| e.0).sum::<f64>() / r;
            let mse = errs.iter().map(|e| e.0 * e.0).sum::<f64>() / r;
            let centered = errs.iter().map(|e| (e.0 - bias).powi(2)).sum::<f64>() / r;
            let var_ratio = errs.iter().map(|e| e.1 / mse).sum::<f64>() / r;
            let prial = if method == Method::Direct {
                None
            } else {
                let m = method_index(method);
                let pairs: Vec<(f64, f64)> = reps
                    .iter()
                    .filter_map(|rr| match (rr.estimates[m][area - 1], rr.estimates[direct][area - 1]) {
                        (Some(a), Some(d)) => Some((a.tau_hat - rr.tau[area - 1], d.tau_hat - rr.tau[area - 1])),
                        _ => None,
                    })
                    .collect();
                let own = mean(pairs.iter().map(|p| p.0 * p.0)).map(f64::sqrt);
                let base = mean(pairs.iter().map(|p| p.1 * p.1)).map(f64::sqrt);
                match (own, base) {
                    (Some(o), Some(b)) if b > 0.0 => Some(100.0 * (1.0 - o / b)),
                    _ => None,
                }
            };
            rows.push(AreaMetrics {
                area,
                method,
                reps_used: errs.len(),
                bias,
                rmse: mse.sqrt(),
                prial,
                var_ratio,
                var_mc: mse,
                var_mc_centered: centered,
            });
        }
    }
    let mut summary = Vec::new();
    for &method in &Method::ALL {
        let sel: Vec<&AreaMetrics> = rows.iter().filter(|r| r.method == method).collect();
        let col = |f: &dyn Fn(&AreaMetrics) -> Option<f64>| -> Vec<f64> { sel.iter().filter_map(|r| f(r)).collect() };
        let (bm, bs) = mean_sd(&col(&|r| Some(r.bias)));
        let (rm, rs) = mean_sd(&col(&|r| Some(r.rmse)));
        let prials = col(&|r| r.prial);
        let (pm, ps) = mean_sd(&prials);
        let (vm, vs) = mean_sd(&col(&|r| Some(r.var_ratio)));
        let has_prial = !prials.is_empty();
        summary.push(SummaryRow { method, stat: "mean", bias: bm, rmse: rm, prial: has_prial.then_some(pm), var_ratio: vm });
        summary.push(SummaryRow { method, stat: "sd", bias: bs, rmse: rs, prial: has_prial.then_some(ps), var_ratio: vs });
    }
    MetricsTable { dgp, rows, summary, infeasible }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub config: DgpConfig,
    pub replications: Vec<ReplicationResult>,
    /// Replications that failed outright, with the reason.
    pub failures: Vec<(usize, String)>,
    pub metrics: MetricsTable,
}

/// Runs all replications in parallel and reduces them in replication order.
pub fn monte_carlo(cfg: &DgpConfig) -> Result<MonteCarloResult> {
    cfg.validate()?;
    if cfg.reps < 2 {
        return Err(Error::InvalidInput("need at least two replications".into()));
    }
    let fixed = match cfg.population {
        PopulationMode::Fixed => Some(generate_population(cfg, &mut cfg.rep_rng(u64::MAX))?),
        PopulationMode::Redraw => None,
    };
    let outcomes: Vec<Result<ReplicationResult>> =
        (0..cfg.reps).into_par_iter().map(|r| run_replication(cfg, r, fixed.as_ref())).collect();
    let mut replications = Vec::with_capacity(cfg.reps);
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(res) => replications.push(res),
            Err(e) if e.is_input_error() => return Err(e),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if replications.len() < 2 {
        return Err(Error::NoConvergence { what: "monte carlo replications".into(), iterations: replications.len() });
    }
    let metrics = compute_metrics(cfg.dgp, cfg.j_count, &replications);
    Ok(MonteCarloResult { config: cfg.clone(), replications, failures, metrics })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

/// `dgp,area,method,bias,rmse,prial,var_ratio`
pub fn write_metrics_csv(path: &Path, t: &MetricsTable) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["dgp", "area", "method", "bias", "rmse", "prial", "var_ratio"]).map_err(err)?;
    for r in &t.rows {
        w.write_record([
            t.dgp.to_string(),
            r.area.to_string(),
            r.method.to_string(),
            r.bias.to_string(),
            r.rmse.to_string(),
            opt(r.prial),
            r.var_ratio.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `dgp,method,stat,bias,rmse,prial,var_ratio` with `stat` in `{mean, sd}`.
pub fn write_summary_csv(path: &Path, t: &MetricsTable) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["dgp", "method", "stat", "bias", "rmse", "prial", "var_ratio"]).map_err(err)?;
    for r in &t.summary {
        w.write_record([
            t.dgp.to_string(),
            r.method.to_string(),
            r.stat.to_string(),
            r.bias.to_string(),
            r.rmse.to_string(),
            opt(r.prial),
            r.var_ratio.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `dgp,area,method,reps_used,infeasible,var_mc,var_mc_centered`
pub fn write_feasibility_csv(path: &Path, t: &MetricsTable, reps: usize) -> Result<()> {
    let mut missing: BTreeMap<(usize, String), usize> = BTreeMap::new();
    for (a, m, c) in &t.infeasible {
        missing.insert((*a, m.to_string()), *c);
    }
    let mut w = writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["dgp", "area", "method", "reps_used", "infeasible", "var_mc", "var_mc_centered"]).map_err(err)?;
    for area in t.rows.iter().map(|r| r.area).chain(t.infeasible.iter().map(|i| i.0)).collect::<std::collections::BTreeSet<_>>() {
        for &m in &Method::ALL {
            let miss = missing.get(&(area, m.to_string())).copied().unwrap_or(0);
            let (vm, vc) = t.get(area, m).map_or((String::new(), String::new()), |r| {
                (r.var_mc.to_string(), r.var_mc_centered.to_string())
            });
            w.write_record([
                t.dgp.to_string(),
                area.to_string(),
                m.to_string(),
                (reps - miss).to_string(),
                miss.to_string(),
                vm,
                vc,
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `dgp,rep,area,method,tau,tau_hat,var_hat` for every feasible estimate.
pub fn write_replicates_csv(path: &Path, dgp: u8, reps: &[ReplicationResult]) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["dgp", "rep", "area", "method", "tau", "tau_hat", "var_hat"]).map_err(err)?;
    for r in reps {
        for (mi, m) in Method::ALL.iter().enumerate() {
            for (a, c) in r.estimates[mi].iter().enumerate() {
                if let Some(c) = c {
                    w.write_record([
                        dgp.to_string(),
                        r.rep.to_string(),
                        (a + 1).to_string(),
                        m.to_string(),
                        r.tau[a].to_string(),
                        c.tau_hat.to_string(),
                        c.var_hat.to_string(),
                    ])
                    .map_err(err)?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Linear => "(X,Z)",
            Transform::Squared => "(X^2,Z^2)",
        })
    }
}
