//! Exact-enumeration checks on a small discrete world.
//!
//! Every expectation below is a finite sum over the atoms of a factorized joint
//! law, so the identities can be checked to rounding error rather than to
//! Monte Carlo noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible conditional probability.
pub const MIN_PROB: f64 = 0.05;
pub const MAX_AREAS: usize = 4;
pub const MAX_POINTS: usize = 64;

/// Joint law
/// `P(x, a) P(z | x, a) P(S | x, a) P(T | x, z) P(Y(0) | x, z, a) P(Y(1) | x, z, a)`.
///
/// Sampling depends on `(x, a)` only and treatment on `(x, z)` only. When the
/// outcome pmfs do not vary with `a`, area ignorability holds as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWorld {
    pub x_levels: Vec<f64>,
    pub z_levels: Vec<f64>,
    pub outcome_support: Vec<f64>,
    /// `P(X = x, A = a)`, indexed `[x][a]`.
    pub joint_xa: Vec<Vec<f64>>,
    /// `P(Z = z | X = x, A = a)`, indexed `[x][a][z]`.
    pub z_given_xa: Vec<Vec<Vec<f64>>>,
    /// `P(S = 1 | X = x, A = a)`, indexed `[x][a]`.
    pub sampling: Vec<Vec<f64>>,
    /// `P(T = 1 | X = x, Z = z)`, indexed `[x][z]`.
    pub propensity: Vec<Vec<f64>>,
    /// `P(Y(t) = support[k] | x, z, a)`, indexed `[t][x][z][a][k]`.
    pub outcome_pmf: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

/// One observed atom of a sampled unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAtom {
    pub x: usize,
    pub z: usize,
    /// 0-based area.
    pub a: usize,
    pub t: u8,
    pub y: f64,
    /// Population probability of `(x, z, a, S = 1, t, y)`.
    pub prob: f64,
}

/// Nuisance values on the `(x, z)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridNuisance {
    pub m0: Vec<Vec<f64>>,
    pub m1: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    /// Indexed `[x][z][a]`.
    pub pi_a: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturb {
    Outcome,
    Weights,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaSplit {
    pub in_area: f64,
    pub other_areas: f64,
    pub discrepancy: f64,
}

/// Second moments related to the efficiency bound for one area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyReport {
    /// Two-term closed form averaged over the population law of `(X, Z)`.
    pub closed_form: f64,
    /// Same two terms averaged with the design weight `1{S=1} / pi_S(X, j)`.
    pub closed_form_design_weighted: f64,
    /// `E[(phi - tau)^2]`.
    pub phi_moment: f64,
    /// `E[psi^2]` with `psi = phi - tau 1{S=1, A=j} / (pi_S(X, j) p(j))`.
    pub eif_moment: f64,
}

fn pmf_mean(support: &[f64], pmf: &[f64]) -> f64 {
    support.iter().zip(pmf).map(|(y, p)| y * p).sum()
}

fn pmf_second(support: &[f64], pmf: &[f64]) -> f64 {
    support.iter().zip(pmf).map(|(y, p)| y * y * p).sum()
}

fn check_prob(v: f64, what: &str) -> Result<()> {
    if !(v >= MIN_PROB && v <= 1.0 - MIN_PROB) {
        return Err(Error::InvalidInput(format!("{what} = {v} outside [{MIN_PROB}, {}]", 1.0 - MIN_PROB)));
    }
    Ok(())
}

fn check_pmf(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("{what} is not a probability vector")));
    }
    Ok(())
}

fn shape_err(what: &str) -> Error {
    Error::InvalidInput(format!("{what} has the wrong shape"))
}

impl DiscreteWorld {
    /// Two binary covariates, three areas, outcomes on `{0, 1, 2, 5}`.
    pub fn reference() -> Self {
        let t0 = [[[0.4, 0.3, 0.2, 0.1], [0.3, 0.3, 0.3, 0.1]], [[0.2, 0.4, 0.3, 0.1], [0.1, 0.3, 0.4, 0.2]]];
        let t1 = [[[0.2, 0.3, 0.3, 0.2], [0.1, 0.2, 0.4, 0.3]], [[0.3, 0.2, 0.2, 0.3], [0.1, 0.1, 0.3, 0.5]]];
        let j = 3;
        let outcome_pmf = [t0, t1]
            .iter()
            .map(|tab| {
                tab.iter()
                    .map(|zs| zs.iter().map(|pmf| vec![pmf.to_vec(); j]).collect())
                    .collect()
            })
            .collect();
        DiscreteWorld {
            x_levels: vec![0.0, 1.0],
            z_levels: vec![0.0, 1.0],
            outcome_support: vec![0.0, 1.0, 2.0, 5.0],
            joint_xa: vec![vec![0.20, 0.15, 0.10], vec![0.15, 0.15, 0.25]],
            z_given_xa: vec![
                vec![vec![0.7, 0.3], vec![0.4, 0.6], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.3, 0.7], vec![0.6, 0.4]],
            ],
            sampling: vec![vec![0.3, 0.6, 0.2], vec![0.5, 0.25, 0.8]],
            propensity: vec![vec![0.3, 0.5], vec![0.6, 0.8]],
            outcome_pmf,
        }
    }

    /// The reference world with outcome laws that shift with the area, so
    /// area ignorability fails.
    pub fn broken() -> Self {
        let mut w = Self::reference();
        let shift = [0.0, 0.3, 0.6];
        let k_count = w.outcome_support.len();
        for (t, tab) in w.outcome_pmf.iter_mut().enumerate() {
            for zs in tab.iter_mut() {
                for areas in zs.iter_mut() {
                    for (a, pmf) in areas.iter_mut().enumerate() {
                        let target = (a + 2 * t + 1) % k_count;
                        for (k, p) in pmf.iter_mut().enumerate() {
                            *p = (1.0 - shift[a]) * *p + if k == target { shift[a] } else { 0.0 };
                        }
                    }
                }
            }
        }
        w
    }

    pub fn j_count(&self) -> usize {
        self.joint_xa.first().map_or(0, |r| r.len())
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nz, nk, j) = (self.x_levels.len(), self.z_levels.len(), self.outcome_support.len(), self.j_count());
        if nx == 0 || nz == 0 || nk == 0 || j == 0 {
            return Err(Error::InvalidInput("world has an empty dimension".into()));
        }
        if j > MAX_AREAS || nx * nz > MAX_POINTS {
            return Err(Error::InvalidInput(format!(
                "world too large: {j} areas, {} covariate points",
                nx * nz
            )));
        }
        if self.joint_xa.len() != nx || self.joint_xa.iter().any(|r| r.len() != j) {
            return Err(shape_err("joint_xa"));
        }
        let flat: Vec<f64> = self.joint_xa.iter().flatten().copied().collect();
        check_pmf(&flat, "joint_xa")?;
        for (x, row) in self.joint_xa.iter().enumerate().filter(|_| j > 1) {
            let px: f64 = row.iter().sum();
            for (a, v) in row.iter().enumerate() {
                check_prob(v / px, &format!("P(A={} | x={x})", a + 1))?;
            }
        }
        if self.z_given_xa.len() != nx || self.sampling.len() != nx || self.propensity.len() != nx {
            return Err(shape_err("covariate tables"));
        }
        for x in 0..nx {
            if self.z_given_xa[x].len() != j || self.sampling[x].len() != j || self.propensity[x].len() != nz {
                return Err(shape_err("covariate tables"));
            }
            for a in 0..j {
                if self.z_given_xa[x][a].len() != nz {
                    return Err(shape_err("z_given_xa"));
                }
                check_pmf(&self.z_given_xa[x][a], "z_given_xa")?;
                for &p in &self.z_given_xa[x][a] {
                    check_prob(p, "P(z | x, a)")?;
                }
                check_prob(self.sampling[x][a], "sampling probability")?;
            }
            for &p in &self.propensity[x] {
                check_prob(p, "propensity")?;
            }
        }
        if self.outcome_pmf.len() != 2 {
            return Err(shape_err("outcome_pmf"));
        }
        for tab in &self.outcome_pmf {
            if tab.len() != nx {
                return Err(shape_err("outcome_pmf"));
            }
            for zs in tab {
                if zs.len() != nz {
                    return Err(shape_err("outcome_pmf"));
                }
                for areas in zs {
                    if areas.len() != j || areas.iter().any(|p| p.len() != nk) {
                        return Err(shape_err("outcome_pmf"));
                    }
                    for p in areas {
                        check_pmf(p, "outcome pmf")?;
                    }
                }
            }
        }
        Ok(())
    }

    /// True when no outcome pmf varies with the area.
    pub fn area_ignorable(&self) -> bool {
        self.outcome_pmf
            .iter()
            .flatten()
            .flatten()
            .all(|areas| areas.iter().all(|p| p == &areas[0]))
    }

    fn check_area(&self, j: usize) -> Result<usize> {
        if j == 0 || j > self.j_count() {
            return Err(Error::InvalidInput(format!("area {j} outside 1..={}", self.j_count())));
        }
        let a = j - 1;
        if !(self.p_area(j) > 0.0) {
            return Err(Error::Overlap(format!("area {j} has zero population share")));
        }
        Ok(a)
    }

    /// `P(A = j)`.
    pub fn p_area(&self, j: usize) -> f64 {
        self.joint_xa.iter().map(|r| r[j - 1]).sum()
    }

    /// `P(X = x, A = a, Z = z)`.
    fn cell_mass(&self, x: usize, a: usize, z: usize) -> f64 {
        self.joint_xa[x][a] * self.z_given_xa[x][a][z]
    }

    fn mu(&self, t: usize, x: usize, z: usize, a: usize) -> f64 {
        pmf_mean(&self.outcome_support, &self.outcome_pmf[t][x][z][a])
    }

    /// `P(A = . | x, z, S = 1)`.
    pub fn pi_a(&self, x: usize, z: usize) -> Vec<f64> {
        let m: Vec<f64> = (0..self.j_count()).map(|a| self.cell_mass(x, a, z) * self.sampling[x][a]).collect();
        let s: f64 = m.iter().sum();
        m.into_iter().map(|v| v / s).collect()
    }

    /// True nuisances: pooled outcome means, propensity and area probabilities
    /// among sampled units.
    pub fn true_nuisance(&self) -> GridNuisance {
        let (nx, nz) = (self.x_levels.len(), self.z_levels.len());
        let mut g = GridNuisance {
            m0: vec![vec![0.0; nz]; nx],
            m1: vec![vec![0.0; nz]; nx],
            e: self.propensity.clone(),
            pi_a: vec![vec![Vec::new(); nz]; nx],
        };
        for x in 0..nx {
            for z in 0..nz {
                let pa = self.pi_a(x, z);
                g.m0[x][z] = pa.iter().enumerate().map(|(a, p)| p * self.mu(0, x, z, a)).sum();
                g.m1[x][z] = pa.iter().enumerate().map(|(a, p)| p * self.mu(1, x, z, a)).sum();
                g.pi_a[x][z] = pa;
            }
        }
        g
    }

    /// Pooled `Var(Y | x, z, T = t, S = 1)`.
    fn pooled_variance(&self, t: usize, x: usize, z: usize, mean: f64) -> f64 {
        let pa = self.pi_a(x, z);
        let second: f64 = pa
            .iter()
            .enumerate()
            .map(|(a, p)| p * pmf_second(&self.outcome_support, &self.outcome_pmf[t][x][z][a]))
            .sum();
        second - mean * mean
    }

    /// Every observed atom of a sampled unit with positive probability.
    pub fn sampled_atoms(&self) -> Vec<SampledAtom> {
        let mut out = Vec::new();
        for x in 0..self.x_levels.len() {
            for a in 0..self.j_count() {
                for z in 0..self.z_levels.len() {
                    let base = self.cell_mass(x, a, z) * self.sampling[x][a];
                    for t in 0..2u8 {
                        let pt = if t == 1 { self.propensity[x][z] } else { 1.0 - self.propensity[x][z] };
                        for (k, &y) in self.outcome_support.iter().enumerate() {
                            let prob = base * pt * self.outcome_pmf[t as usize][x][z][a][k];
                            if prob > 0.0 {
                                out.push(SampledAtom { x, z, a, t, y, prob });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `P(S = 1)`.
    pub fn sampled_mass(&self) -> f64 {
        (0..self.x_levels.len())
            .map(|x| self.joint_xa[x].iter().zip(&self.sampling[x]).map(|(p, s)| p * s).sum::<f64>())
            .sum()
    }

    /// `E[Y(1) - Y(0) | A = j]` from the area-specific outcome means.
    pub fn exact_tau(&self, j: usize) -> Result<f64> {
        let a = self.check_area(j)?;
        let mut acc = 0.0;
        for x in 0..self.x_levels.len() {
            for z in 0..self.z_levels.len() {
                acc += self.cell_mass(x, a, z) * (self.mu(1, x, z, a) - self.mu(0, x, z, a));
            }
        }
        Ok(acc / self.p_area(j))
    }

    /// The same estimand summed over every joint atom
    /// `(x, a, z, s, t, y0, y1)`, normalizing by the mass of `A = j` found
    /// along the way.
    pub fn exact_tau_brute_force(&self, j: usize) -> Result<f64> {
        let target = self.check_area(j)?;
        let ys = &self.outcome_support;
        let (mut num, mut den) = (0.0, 0.0);
        for x in 0..self.x_levels.len() {
            for a in 0..self.j_count() {
                for z in 0..self.z_levels.len() {
                    for s in 0..2 {
                        let ps = if s == 1 { self.sampling[x][a] } else { 1.0 - self.sampling[x][a] };
                        for t in 0..2 {
                            let pt = if t == 1 { self.propensity[x][z] } else { 1.0 - self.propensity[x][z] };
                            for (k0, y0) in ys.iter().enumerate() {
                                for (k1, y1) in ys.iter().enumerate() {
                                    let p = self.joint_xa[x][a]
                                        * self.z_given_xa[x][a][z]
                                        * ps
                                        * pt
                                        * self.outcome_pmf[0][x][z][a][k0]
                                        * self.outcome_pmf[1][x][z][a][k1];
                                    if a == target {
                                        num += p * (y1 - y0);
                                        den += p;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(num / den)
    }

    fn ipw_contrast(atom: &SampledAtom, e: f64) -> f64 {
        if atom.t == 1 {
            atom.y / e
        } else {
            -atom.y / (1.0 - e)
        }
    }

    /// Right-hand sides of the transported weighting identity split by
    /// whether the unit lies in the target area.
    pub fn check_area_split(&self, j: usize) -> Result<AreaSplit> {
        let a_target = self.check_area(j)?;
        let tau = self.exact_tau(j)?;
        let g = self.true_nuisance();
        let pj = self.p_area(j);
        let (mut in_area, mut other) = (0.0, 0.0);
        for at in self.sampled_atoms() {
            let w = g.pi_a[at.x][at.z][a_target] / (self.sampling[at.x][a_target] * pj);
            let v = at.prob * w * Self::ipw_contrast(&at, g.e[at.x][at.z]);
            if at.a == a_target {
                in_area += v;
            } else {
                other += v;
            }
        }
        Ok(AreaSplit { in_area, other_areas: other, discrepancy: (in_area + other - tau).abs() })
    }

    /// `|E[1{S=1} pi_A(j|X,Z) / (pi_S(X,j) p(j)) * IPW contrast] - tau_j|`.
    pub fn check_transported_identity(&self, j: usize) -> Result<f64> {
        let a_target = self.check_area(j)?;
        let g = self.true_nuisance();
        let pj = self.p_area(j);
        let rhs: f64 = self
            .sampled_atoms()
            .iter()
            .map(|at| {
                let w = g.pi_a[at.x][at.z][a_target] / (self.sampling[at.x][a_target] * pj);
                at.prob * w * Self::ipw_contrast(at, g.e[at.x][at.z])
            })
            .sum();
        Ok((rhs - self.exact_tau(j)?).abs())
    }

    /// `|direct in-area IPW expectation - tau_j|` with the area-specific
    /// propensity `P(T=1 | x, z, A=j, S=1)`.
    pub fn check_direct_formula(&self, j: usize) -> Result<f64> {
        let a_target = self.check_area(j)?;
        let pj = self.p_area(j);
        // Treatment does not depend on the area here, so the area-specific
        // propensity coincides with the pooled one.
        let rhs: f64 = self
            .sampled_atoms()
            .iter()
            .filter(|at| at.a == a_target)
            .map(|at| {
                at.prob / (self.sampling[at.x][a_target] * pj) * Self::ipw_contrast(at, self.propensity[at.x][at.z])
            })
            .sum();
        Ok((rhs - self.exact_tau(j)?).abs())
    }

    /// Score of one sampled atom toward area `j` under nuisances `g`.
    pub fn score(&self, at: &SampledAtom, g: &GridNuisance, j: usize) -> f64 {
        let a_target = j - 1;
        let (m0, m1, e) = (g.m0[at.x][at.z], g.m1[at.x][at.z], g.e[at.x][at.z]);
        let phi1 = if at.t == 1 { (at.y - m1) / e } else { -(at.y - m0) / (1.0 - e) } + m1 - m0;
        let phi2 = m1 - m0;
        let denom = self.sampling[at.x][a_target] * self.p_area(j);
        let pa = g.pi_a[at.x][at.z][a_target];
        let ind = if at.a == a_target { 1.0 } else { 0.0 };
        pa / denom * phi1 + (ind - pa) / denom * phi2
    }

    /// `E[phi(W, g)]`; unsampled units contribute zero.
    pub fn expected_score(&self, g: &GridNuisance, j: usize) -> Result<f64> {
        self.check_area(j)?;
        Ok(self.sampled_atoms().iter().map(|at| at.prob * self.score(at, g, j)).sum())
    }

    /// Fixed wrong nuisances. Outcome means shift by `+1.7` (treated) and by
    /// `-1.1 + 0.6 x` (control); the propensity moves up by 0.15 and the area
    /// probabilities are tilted toward higher areas.
    pub fn perturbed_nuisance(&self, which: Perturb) -> GridNuisance {
        let mut g = self.true_nuisance();
        if matches!(which, Perturb::Outcome | Perturb::Both) {
            for x in 0..self.x_levels.len() {
                for z in 0..self.z_levels.len() {
                    g.m1[x][z] += 1.7;
                    g.m0[x][z] += -1.1 + 0.6 * self.x_levels[x];
                }
            }
        }
        if matches!(which, Perturb::Weights | Perturb::Both) {
            for x in 0..self.x_levels.len() {
                for z in 0..self.z_levels.len() {
                    g.e[x][z] = (g.e[x][z] + 0.15).clamp(MIN_PROB, 1.0 - MIN_PROB);
                    let tilt = 0.5 + 0.4 * self.x_levels[x] - 0.3 * self.z_levels[z];
                    let row = &mut g.pi_a[x][z];
                    for (a, p) in row.iter_mut().enumerate() {
                        *p *= (tilt * a as f64).exp();
                    }
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= s);
                }
            }
        }
        g
    }

    /// `|E[phi(W, perturbed)] - tau_j|`.
    pub fn check_double_robustness(&self, j: usize, which: Perturb) -> Result<f64> {
        let g = self.perturbed_nuisance(which);
        Ok((self.expected_score(&g, j)? - self.exact_tau(j)?).abs())
    }

    /// Efficiency-bound quantities at the true nuisances.
    pub fn efficiency_bound(&self, j: usize) -> Result<EfficiencyReport> {
        let a_target = self.check_area(j)?;
        let tau = self.exact_tau(j)?;
        let g = self.true_nuisance();
        let pj = self.p_area(j);
        let (mut closed, mut weighted) = (0.0, 0.0);
        for x in 0..self.x_levels.len() {
            let ps = self.sampling[x][a_target];
            for z in 0..self.z_levels.len() {
                let pa = g.pi_a[x][z][a_target];
                let e = g.e[x][z];
                let v = self.pooled_variance(1, x, z, g.m1[x][z]) / e
                    + self.pooled_variance(0, x, z, g.m0[x][z]) / (1.0 - e);
                let dev = g.m1[x][z] - g.m0[x][z] - tau;
                let inner = pa * pa / (ps * pj * pj) * v + pa / (ps * pj * pj) * dev * dev;
                let pop: f64 = (0..self.j_count()).map(|a| self.cell_mass(x, a, z)).sum();
                let sampled: f64 = (0..self.j_count()).map(|a| self.cell_mass(x, a, z) * self.sampling[x][a]).sum();
                closed += pop * inner;
                weighted += sampled / ps * inner;
            }
        }
        let unsampled = 1.0 - self.sampled_mass();
        let (mut phi_moment, mut eif_moment) = (unsampled * tau * tau, 0.0);
        for at in self.sampled_atoms() {
            let phi = self.score(&at, &g, j);
            let h = if at.a == a_target { 1.0 / (self.sampling[at.x][a_target] * pj) } else { 0.0 };
            phi_moment += at.prob * (phi - tau).powi(2);
            eif_moment += at.prob * (phi - tau * h).powi(2);
        }
        Ok(EfficiencyReport { closed_form: closed, closed_form_design_weighted: weighted, phi_moment, eif_moment })
    }

    /// `n * Var(ht)` over `reps` Monte Carlo samples of `n` i.i.d. population
    /// units, where `ht = sum phi / n` at the true nuisances.
    pub fn monte_carlo_ht_variance(&self, j: usize, n: u64, reps: usize, seed: u64) -> Result<f64> {
        self.check_area(j)?;
        if reps < 2 || n == 0 {
            return Err(Error::InvalidInput("need n > 0 and at least two replications".into()));
        }
        let g = self.true_nuisance();
        let atoms = self.sampled_atoms();
        let scores: Vec<f64> = atoms.iter().map(|at| self.score(at, &g, j)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draws = Vec::with_capacity(reps);
        for _ in 0..reps {
            let (mut left_n, mut left_p, mut sum) = (n, 1.0_f64, 0.0);
            for (at, s) in atoms.iter().zip(&scores) {
                if left_n == 0 {
                    break;
                }
                let p = (at.prob / left_p).clamp(0.0, 1.0);
                let c = Binomial::new(left_n, p).map_err(|e| Error::InvalidInput(e.to_string()))?.sample(&mut rng);
                sum += c as f64 * s;
                left_n -= c;
                left_p -= at.prob;
            }
            draws.push(sum / n as f64);
        }
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        Ok(var * n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_area_world() -> DiscreteWorld {
        let mut w = DiscreteWorld::reference();
        w.joint_xa = vec![vec![0.45], vec![0.55]];
        w.z_given_xa = vec![vec![vec![0.7, 0.3]], vec![vec![0.5, 0.5]]];
        w.sampling = vec![vec![0.3], vec![0.5]];
        for tab in w.outcome_pmf.iter_mut() {
            for zs in tab.iter_mut() {
                for areas in zs.iter_mut() {
                    areas.truncate(1);
                }
            }
        }
        w
    }

    #[test]
    fn shipped_worlds_are_valid() {
        let r = DiscreteWorld::reference();
        r.validate().unwrap();
        assert!(r.area_ignorable());
        let b = DiscreteWorld::broken();
        b.validate().unwrap();
        assert!(!b.area_ignorable());
    }

    #[test]
    fn tau_two_summation_orders_agree() {
        for w in [DiscreteWorld::reference(), DiscreteWorld::broken()] {
            for j in 1..=3 {
                let a = w.exact_tau(j).unwrap();
                let b = w.exact_tau_brute_force(j).unwrap();
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_and_null_effects() {
        let mut w = DiscreteWorld::reference();
        // Y(0) at 1 and Y(1) at 2 almost surely: effect 1 everywhere.
        for (t, tab) in w.outcome_pmf.iter_mut().enumerate() {
            for zs in tab.iter_mut() {
                for areas in zs.iter_mut() {
                    for p in areas.iter_mut() {
                        *p = vec![0.0; 4];
                        p[t + 1] = 1.0;
                    }
                }
            }
        }
        for j in 1..=3 {
            assert!((w.exact_tau(j).unwrap() - 1.0).abs() < 1e-14);
        }
        let mut n = DiscreteWorld::reference();
        n.outcome_pmf[1] = n.outcome_pmf[0].clone();
        for j in 1..=3 {
            assert!(n.exact_tau(j).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn transported_identity_holds_and_breaks_without_ignorability() {
        let w = DiscreteWorld::reference();
        for j in 1..=3 {
            assert!(w.check_transported_identity(j).unwrap() < 1e-10);
            let c = w.check_area_split(j).unwrap();
            assert!(c.discrepancy < 1e-10);
            assert!(c.other_areas.abs() > 0.01);
        }
        let b = DiscreteWorld::broken();
        let worst = (1..=3).map(|j| b.check_transported_identity(j).unwrap()).fold(0.0, f64::max);
        assert!(worst > 0.01, "{worst}");
        for j in 1..=3 {
            assert!(b.check_direct_formula(j).unwrap() < 1e-10);
        }
    }

    #[test]
    fn single_area_reduces_to_plain_ipw() {
        let w = single_area_world();
        w.validate().unwrap();
        let c = w.check_area_split(1).unwrap();
        assert_eq!(c.other_areas, 0.0);
        assert!(w.check_transported_identity(1).unwrap() < 1e-12);
        // Plain IPW ATE over the population.
        let ipw: f64 = w
            .sampled_atoms()
            .iter()
            .map(|at| at.prob / w.sampling[at.x][0] * DiscreteWorld::ipw_contrast(at, w.propensity[at.x][at.z]))
            .sum();
        assert!((ipw - c.in_area).abs() < 1e-12);
    }

    #[test]
    fn area_split_sum_matches_transported_identity() {
        let w = DiscreteWorld::reference();
        for j in 1..=3 {
            let c = w.check_area_split(j).unwrap();
            let tau = w.exact_tau(j).unwrap();
            assert!((c.in_area + c.other_areas - tau).abs() - w.check_transported_identity(j).unwrap() < 1e-14);
        }
    }

    #[test]
    fn double_robustness() {
        let w = DiscreteWorld::reference();
        for j in 1..=3 {
            assert!(w.check_double_robustness(j, Perturb::Outcome).unwrap() < 1e-10);
            assert!(w.check_double_robustness(j, Perturb::Weights).unwrap() < 1e-10);
            let both = w.check_double_robustness(j, Perturb::Both).unwrap();
            assert!(both > 0.01, "area {j}: {both}");
        }
    }

    #[test]
    fn score_is_unbiased_at_truth() {
        for w in [DiscreteWorld::reference(), single_area_world()] {
            let g = w.true_nuisance();
            for j in 1..=w.j_count() {
                assert!((w.expected_score(&g, j).unwrap() - w.exact_tau(j).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eif_moment_matches_design_weighted_closed_form() {
        for w in [DiscreteWorld::reference(), single_area_world()] {
            for j in 1..=w.j_count() {
                let r = w.efficiency_bound(j).unwrap();
                assert!((r.eif_moment - r.closed_form_design_weighted).abs() < 1e-10, "{r:?}");
            }
        }
    }

    #[test]
    fn closed_form_hand_summed_in_homoskedastic_world() {
        // Outcome laws identical across (x, z, a): V(Y(t)|x,z) is a constant.
        let mut w = DiscreteWorld::reference();
        let p0 = vec![0.4, 0.3, 0.2, 0.1];
        let p1 = vec![0.1, 0.2, 0.3, 0.4];
        for (t, tab) in w.outcome_pmf.iter_mut().enumerate() {
            for zs in tab.iter_mut() {
                for areas in zs.iter_mut() {
                    for p in areas.iter_mut() {
                        *p = if t == 0 { p0.clone() } else { p1.clone() };
                    }
                }
            }
        }
        let ys = [0.0, 1.0, 2.0, 5.0];
        let var = |p: &[f64]| {
            let m: f64 = ys.iter().zip(p).map(|(y, q)| y * q).sum();
            ys.iter().zip(p).map(|(y, q)| (y - m).powi(2) * q).sum::<f64>()
        };
        let (v0, v1) = (var(&p0), var(&p1));
        let j = 2;
        let pj = 0.15 + 0.15;
        // Constant effect, so the heterogeneity term vanishes.
        let mut hand = 0.0;
        for x in 0..2 {
            for z in 0..2 {
                let masses: Vec<f64> = (0..3).map(|a| w.joint_xa[x][a] * w.z_given_xa[x][a][z]).collect();
                let sampled: Vec<f64> = (0..3).map(|a| masses[a] * w.sampling[x][a]).collect();
                let pa = sampled[1] / sampled.iter().sum::<f64>();
                let e = w.propensity[x][z];
                hand += masses.iter().sum::<f64>() * pa * pa / (w.sampling[x][1] * pj * pj) * (v1 / e + v0 / (1.0 - e));
            }
        }
        let r = w.efficiency_bound(j).unwrap();
        assert!((r.closed_form - hand).abs() < 1e-12, "{} vs {hand}", r.closed_form);
    }

    #[test]
    fn degenerate_world_has_zero_closed_form() {
        let mut w = DiscreteWorld::reference();
        for (t, tab) in w.outcome_pmf.iter_mut().enumerate() {
            for zs in tab.iter_mut() {
                for areas in zs.iter_mut() {
                    for p in areas.iter_mut() {
                        *p = vec![0.0; 4];
                        p[t + 1] = 1.0;
                    }
                }
            }
        }
        for j in 1..=3 {
            let r = w.efficiency_bound(j).unwrap();
            assert!(r.closed_form.abs() < 1e-12);
            assert!(r.eif_moment.abs() < 1e-12);
            // phi itself still carries the design noise of 1{A=j}/(pi_S p).
            assert!(r.phi_moment > 0.1);
        }
    }

    #[test]
    fn literal_identity_holds_when_sampling_ignores_area_and_effects_vanish() {
        // With pi_S free of the area, the two closed forms coincide; with
        // tau_j = 0 the centered and efficient moments coincide.
        let mut w = DiscreteWorld::reference();
        w.sampling = vec![vec![0.4; 3], vec![0.7; 3]];
        w.outcome_pmf[1] = w.outcome_pmf[0].clone();
        for j in 1..=3 {
            let r = w.efficiency_bound(j).unwrap();
            assert!((r.closed_form - r.closed_form_design_weighted).abs() < 1e-12);
            assert!((r.phi_moment - r.closed_form).abs() < 1e-10, "{r:?}");
        }
    }

    #[test]
    fn monte_carlo_tracks_centered_moment() {
        let w = DiscreteWorld::reference();
        let r = w.efficiency_bound(1).unwrap();
        let mc = w.monte_carlo_ht_variance(1, 20_000, 600, 11).unwrap();
        assert!((mc / r.phi_moment - 1.0).abs() < 0.2, "{mc} vs {}", r.phi_moment);
    }

    #[test]
    fn world_json_round_trip_and_rejects_bad_probabilities() {
        let w = DiscreteWorld::reference();
        let s = serde_json::to_string(&w).unwrap();
        let back: DiscreteWorld = serde_json::from_str(&s).unwrap();
        assert_eq!(w, back);
        let mut bad = w.clone();
        bad.sampling[0][0] = 0.01;
        assert!(bad.validate().is_err());
        let mut bad = w;
        bad.outcome_pmf[0][0][0][0][0] += 0.1;
        assert!(bad.validate().is_err());
    }
}
