//! Estimators fed the exact nuisances of the discrete world.

use causal_sae::auxiliary::AuxiliaryProbabilities;
use causal_sae::data::{SurveyDataset, SurveyRecord};
use causal_sae::estimator::{hajek_estimate, ht_estimate, score_rows};
use causal_sae::nuisance::NuisanceSet;
use causal_sae::oracle::DiscreteWorld;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Draw {
    data: SurveyDataset,
    nuis: NuisanceSet,
    aux: AuxiliaryProbabilities,
}

/// `n` i.i.d. population units; only sampled ones become records.
fn draw(w: &DiscreteWorld, n: usize, seed: u64) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = w.j_count();
    let g = w.true_nuisance();
    let mut cells = Vec::new();
    for x in 0..w.x_levels.len() {
        for a in 0..j {
            cells.push((x, a, w.joint_xa[x][a]));
        }
    }
    let pick = |rng: &mut ChaCha8Rng, probs: &[f64]| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        probs.len() - 1
    };
    let cell_probs: Vec<f64> = cells.iter().map(|c| c.2).collect();
    let (mut recs, mut m0, mut m1, mut e, mut pa, mut ps) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let (x, a, _) = cells[pick(&mut rng, &cell_probs)];
        let z = pick(&mut rng, &w.z_given_xa[x][a]);
        let s: f64 = rng.random();
        let t = (rng.random::<f64>() < w.propensity[x][z]) as u8;
        let k = pick(&mut rng, &w.outcome_pmf[t as usize][x][z][a]);
        if s >= w.sampling[x][a] {
            continue;
        }
        recs.push(SurveyRecord {
            y: w.outcome_support[k],
            t,
            x: vec![w.x_levels[x]],
            z: vec![w.z_levels[z]],
            area: a + 1,
            weight: None,
        });
        m0.push(g.m0[x][z]);
        m1.push(g.m1[x][z]);
        e.push(g.e[x][z]);
        pa.push(g.pi_a[x][z].clone());
        ps.push(w.sampling[x].clone());
    }
    let p_area = (1..=j).map(|k| w.p_area(k)).collect();
    Draw {
        data: SurveyDataset::new(recs, j).unwrap(),
        nuis: NuisanceSet::from_predictions(m0, m1, e, pa).unwrap(),
        aux: AuxiliaryProbabilities::from_matrix(ps, p_area).unwrap(),
    }
}

#[test]
fn ht_with_exact_nuisances_covers_truth() {
    let w = DiscreteWorld::reference();
    let n = 100_000;
    let d = draw(&w, n, 2024);
    for j in 1..=3 {
        let rows = score_rows(&d.data, &d.nuis, &d.aux, j).unwrap();
        let ht = ht_estimate(&rows, n as f64).unwrap();
        let tau = w.exact_tau(j).unwrap();
        assert!((ht.tau_hat - tau).abs() < 3.0 * ht.se(), "area {j}: {} vs {tau} (se {})", ht.tau_hat, ht.se());
        let hj = hajek_estimate(&rows).unwrap();
        assert!((hj.tau_hat - tau).abs() < 3.0 * hj.se(), "area {j}: {} vs {tau}", hj.tau_hat);
    }
}

#[test]
fn score_sum_splits_by_area_membership() {
    let w = DiscreteWorld::reference();
    let d = draw(&w, 5_000, 9);
    for j in 1..=3 {
        let rows = score_rows(&d.data, &d.nuis, &d.aux, j).unwrap();
        let pooled: f64 = rows.iter().map(|r| r.phi).sum();
        let inside: f64 = rows.iter().filter(|r| d.data.records()[r.unit].area == j).map(|r| r.phi).sum();
        let outside: f64 = rows.iter().filter(|r| d.data.records()[r.unit].area != j).map(|r| r.phi).sum();
        assert!((inside + outside - pooled).abs() <= 1e-12 * pooled.abs().max(1.0));
    }
}

#[test]
fn ht_variance_estimate_tracks_spread() {
    // The HT variance estimate times n estimates E[(phi - tau)^2].
    let w = DiscreteWorld::reference();
    let n = 100_000;
    let d = draw(&w, n, 77);
    for j in 1..=3 {
        let rows = score_rows(&d.data, &d.nuis, &d.aux, j).unwrap();
        let ht = ht_estimate(&rows, n as f64).unwrap();
        let exact = w.efficiency_bound(j).unwrap().phi_moment;
        assert!((ht.var_hat * n as f64 / exact - 1.0).abs() < 0.1, "area {j}");
    }
}
