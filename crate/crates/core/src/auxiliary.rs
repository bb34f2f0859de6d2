//! Design probabilities: area shares `p(j)` and the area-specific sampling
//! probability `pi_S(X, A=j) = P(S=1|X) P(A=j|X,S=1) / P(A=j|X)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::data::{CellKey, CovariateCellScheme, PopulationTable, SurveyDataset, SurveyRecord};
use crate::error::{Error, Result};

/// Additive count added to every (cell, area) when estimating `P(A=j|X,S=1)`.
pub const AREA_SMOOTHING: f64 = 0.5;

/// Where a probability component came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    KnownFunction,
    SurveyWeights,
    PopulationTable,
    SampleCells,
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub p_area: Source,
    pub pa_given_x: Source,
    pub ps_given_x: Source,
    pub pa_given_x_sampled: Source,
}

/// `P(S=1|X) P(A=j|X,S=1) / P(A=j|X)`, clipped to `[clip, 1]`.
pub fn sampling_prob(ps_given_x: f64, pa_given_x_sampled: f64, pa_given_x: f64, clip: f64) -> Result<f64> {
    if !(pa_given_x > 0.0) {
        return Err(Error::Overlap(format!(
            "P(A=j|X) = {pa_given_x}; area probabilities must be bounded away from zero"
        )));
    }
    let v = ps_given_x * pa_given_x_sampled / pa_given_x;
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite sampling probability from {ps_given_x}")));
    }
    Ok(v.clamp(clip, 1.0))
}

/// `1 / weight`, clipped to `[clip, 1]`.
pub fn sampling_prob_from_weights(record: &SurveyRecord, clip: f64) -> Result<f64> {
    match record.weight {
        Some(w) if w >= 1.0 => Ok((1.0 / w).clamp(clip, 1.0)),
        Some(w) => Err(Error::InvalidInput(format!("design weight {w} is below 1"))),
        None => Err(Error::InvalidInput("record has no design weight".into())),
    }
}

/// Cell-wise area frequencies among sampled units with additive smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAreaTable {
    pub j_count: usize,
    pub rows: BTreeMap<CellKey, Vec<f64>>,
}

impl CellAreaTable {
    /// Probabilities for `cell`; uniform for a cell never seen in the sample.
    pub fn row(&self, cell: &CellKey) -> Vec<f64> {
        self.rows
            .get(cell)
            .cloned()
            .unwrap_or_else(|| vec![1.0 / self.j_count as f64; self.j_count])
    }
}

pub fn estimate_pa_sample(data: &SurveyDataset, scheme: &CovariateCellScheme) -> Result<CellAreaTable> {
    let j = data.j_count();
    let mut counts: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in data.records() {
        let cell = scheme.cell_of(&r.x)?;
        counts.entry(cell).or_insert_with(|| vec![0.0; j])[r.area - 1] += 1.0;
    }
    let rows = counts
        .into_iter()
        .map(|(cell, c)| {
            let tot: f64 = c.iter().sum::<f64>() + AREA_SMOOTHING * j as f64;
            (cell, c.into_iter().map(|v| (v + AREA_SMOOTHING) / tot).collect())
        })
        .collect();
    Ok(CellAreaTable { j_count: j, rows })
}

/// One exported row of the assembled probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProbabilityRow {
    pub cell: CellKey,
    pub area: usize,
    pub p_area: f64,
    pub pa_given_x: f64,
    pub ps_given_x: Option<f64>,
    pub pi_s: Option<f64>,
}

/// Per-record sampling probabilities for every target area, plus `p(j)`.
#[derive(Debug, Clone)]
pub struct AuxiliaryProbabilities {
    p_area: Vec<f64>,
    /// Row-major `n x J`: `pi_S(X_i, A=j)`.
    pi_s: Vec<f64>,
    j_count: usize,
    pub provenance: Provenance,
    pub cell_rows: Vec<CellProbabilityRow>,
}

impl AuxiliaryProbabilities {
    /// Directly supplied `pi_S` rows (one per record, areas `1..=J`) and `p(j)`.
    pub fn from_matrix(pi_s: Vec<Vec<f64>>, p_area: Vec<f64>) -> Result<Self> {
        let j = p_area.len();
        validate_p_area(&p_area)?;
        for (i, row) in pi_s.iter().enumerate() {
            if row.len() != j {
                return Err(Error::DimensionMismatch { expected: j, got: row.len() });
            }
            if row.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Overlap(format!("record {i} has a non-positive sampling probability")));
            }
        }
        Ok(AuxiliaryProbabilities {
            p_area,
            pi_s: pi_s.into_iter().flatten().collect(),
            j_count: j,
            provenance: Provenance {
                p_area: Source::Supplied,
                pa_given_x: Source::Supplied,
                ps_given_x: Source::Supplied,
                pa_given_x_sampled: Source::Supplied,
            },
            cell_rows: Vec::new(),
        })
    }

    /// Sampling that ignores area given X: `pi_S(X_i, A=j) = P(S=1|X_i)` for
    /// every `j`, with the probabilities known exactly.
    pub fn known(ps_given_x: &[f64], p_area: Vec<f64>) -> Result<Self> {
        let j = p_area.len();
        let rows = ps_given_x.iter().map(|&p| vec![p; j]).collect();
        let mut aux = AuxiliaryProbabilities::from_matrix(rows, p_area)?;
        aux.provenance = Provenance {
            p_area: Source::PopulationTable,
            pa_given_x: Source::KnownFunction,
            ps_given_x: Source::KnownFunction,
            pa_given_x_sampled: Source::KnownFunction,
        };
        Ok(aux)
    }

    /// Assembles `pi_S` from a population table. `P(S=1|X)` comes from the
    /// table when it has `p_sample`, otherwise from record weights;
    /// `P(A=j|X,S=1)` is estimated from sample cells.
    pub fn from_population(
        data: &SurveyDataset,
        pop: &PopulationTable,
        scheme: &CovariateCellScheme,
        clip: f64,
    ) -> Result<Self> {
        let j = data.j_count();
        if pop.j_count() != j {
            return Err(Error::Overlap(format!(
                "survey has {j} areas but the population table has {}",
                pop.j_count()
            )));
        }
        let p_area = pop.p_area();
        let pa_sample = estimate_pa_sample(data, scheme)?;
        let ps_source = if pop.has_sampling_prob() { Source::PopulationTable } else { Source::SurveyWeights };
        let mut pi_s = Vec::with_capacity(data.n() * j);
        let mut cells: BTreeMap<CellKey, (Vec<f64>, Vec<f64>, Option<f64>)> = BTreeMap::new();
        for (i, r) in data.records().iter().enumerate() {
            let cell = scheme.cell_of(&r.x)?;
            let pa_x = pop
                .pa_given_x(&cell)
                .ok_or_else(|| Error::Overlap(format!("record {i}: covariate cell {cell} is absent from the population table")))?;
            let ps_cell = pop.ps_given_x(&cell);
            let ps_x = match ps_cell {
                Some(p) => p,
                None if pop.has_sampling_prob() => {
                    return Err(Error::InvalidInput(format!("record {i}: no p_sample for cell {cell}")));
                }
                None => sampling_prob_from_weights(r, clip)
                    .map_err(|e| Error::InvalidInput(format!("record {i}: {e}; supply p_sample or weights")))?,
            };
            let pa_s = pa_sample.row(&cell);
            for a in 0..j {
                let v = sampling_prob(ps_x, pa_s[a], pa_x[a], clip)
                    .map_err(|e| Error::Overlap(format!("record {i}, area {}: {e}", a + 1)))?;
                pi_s.push(v);
            }
            cells.entry(cell).or_insert((pa_x, pa_s, ps_cell));
        }
        let mut cell_rows = Vec::new();
        for (cell, (pa_x, pa_s, ps)) in cells {
            for a in 0..j {
                let pi = match ps {
                    Some(p) => Some(sampling_prob(p, pa_s[a], pa_x[a], clip)?),
                    None => None,
                };
                cell_rows.push(CellProbabilityRow {
                    cell: cell.clone(),
                    area: a + 1,
                    p_area: p_area[a],
                    pa_given_x: pa_x[a],
                    ps_given_x: ps,
                    pi_s: pi,
                });
            }
        }
        Ok(AuxiliaryProbabilities {
            p_area,
            pi_s,
            j_count: j,
            provenance: Provenance {
                p_area: Source::PopulationTable,
                pa_given_x: Source::PopulationTable,
                ps_given_x: ps_source,
                pa_given_x_sampled: Source::SampleCells,
            },
            cell_rows,
        })
    }

    pub fn j_count(&self) -> usize {
        self.j_count
    }

    pub fn n(&self) -> usize {
        self.pi_s.len() / self.j_count.max(1)
    }

    /// `p(j)` for 1-based `j`.
    pub fn p_area(&self, j: usize) -> f64 {
        self.p_area[j - 1]
    }

    pub fn p_areas(&self) -> &[f64] {
        &self.p_area
    }

    /// `pi_S(X_i, A=j)` for 1-based `j`.
    pub fn pi_s(&self, i: usize, j: usize) -> f64 {
        self.pi_s[i * self.j_count + j - 1]
    }

    /// Copy with every `pi_S` multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.pi_s.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `sum_i 1 / pi_S(X_i, A_i)`: the weighted population size of the sample.
    pub fn estimated_population(&self, data: &SurveyDataset) -> f64 {
        data.records().iter().enumerate().map(|(i, r)| 1.0 / self.pi_s(i, r.area)).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["cell_id", "area", "p_area", "pA_given_x", "pS_given_x", "pi_S"])
            .map_err(|e| Error::csv(path, e))?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.cell_rows {
            wtr.write_record([
                row.cell.to_string(),
                row.area.to_string(),
                row.p_area.to_string(),
                row.pa_given_x.to_string(),
                opt(row.ps_given_x),
                opt(row.pi_s),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

fn validate_p_area(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::EmptyInput("no areas".into()));
    }
    if let Some(j) = p.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Overlap(format!("p({}) is not positive", j + 1)));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("area shares sum to {s}, not 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Binning, PopulationCell};

    fn rec(x: f64, area: usize, weight: Option<f64>) -> SurveyRecord {
        SurveyRecord { y: 0.0, t: 0, x: vec![x], z: vec![], area, weight }
    }

    #[test]
    fn decomposition_arithmetic() {
        assert!((sampling_prob(0.1, 0.5, 0.25, 1e-6).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(sampling_prob(0.3, 0.4, 0.4, 1e-6).unwrap(), 0.3);
        assert_eq!(sampling_prob(0.3, 1.0, 1.0, 1e-6).unwrap(), 0.3);
        assert!(matches!(sampling_prob(0.3, 0.4, 0.0, 1e-6), Err(Error::Overlap(_))));
        assert_eq!(sampling_prob(0.9, 0.9, 0.1, 0.01).unwrap(), 1.0);
        assert_eq!(sampling_prob(1e-5, 0.5, 0.5, 0.01).unwrap(), 0.01);
    }

    #[test]
    fn weights_invert() {
        assert!((sampling_prob_from_weights(&rec(0.0, 1, Some(50.0)), 1e-3).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(sampling_prob_from_weights(&rec(0.0, 1, Some(1.0)), 1e-3).unwrap(), 1.0);
        assert!(sampling_prob_from_weights(&rec(0.0, 1, Some(0.5)), 1e-3).is_err());
        assert!(sampling_prob_from_weights(&rec(0.0, 1, None), 1e-3).is_err());
    }

    fn one_cell() -> CovariateCellScheme {
        CovariateCellScheme::new(vec![Binning::Cuts { cuts: vec![] }]).unwrap()
    }

    #[test]
    fn smoothed_cell_frequencies() {
        let data = SurveyDataset::new(vec![rec(0.0, 1, None), rec(0.0, 1, None), rec(0.0, 2, None)], 2).unwrap();
        let t = estimate_pa_sample(&data, &one_cell()).unwrap();
        let row = t.row(&CellKey(vec![0]));
        assert!((row[0] - 0.625).abs() < 1e-15);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_sample_frequencies_converge() {
        let recs: Vec<_> = (0..10_000).map(|i| rec(0.0, 1 + i % 2, None)).collect();
        let data = SurveyDataset::new(recs, 2).unwrap();
        let row = estimate_pa_sample(&data, &one_cell()).unwrap().row(&CellKey(vec![0]));
        assert!((row[0] - 0.5).abs() < 0.02);
    }

    #[test]
    fn assembles_from_population() {
        let scheme = CovariateCellScheme::new(vec![Binning::Cuts { cuts: vec![0.0] }]).unwrap();
        let cell = |k: i64, area: usize, count: u64| PopulationCell { cell: CellKey(vec![k]), area, count };
        let mut ps = BTreeMap::new();
        ps.insert(CellKey(vec![0]), 0.1);
        ps.insert(CellKey(vec![1]), 0.2);
        let pop = PopulationTable::from_cells(
            vec![cell(0, 1, 10), cell(0, 2, 30), cell(1, 1, 20), cell(1, 2, 40)],
            Some(ps),
            None,
        )
        .unwrap();
        let data = SurveyDataset::new(vec![rec(-1.0, 1, None), rec(-0.5, 2, None), rec(1.0, 2, None)], 2).unwrap();
        let aux = AuxiliaryProbabilities::from_population(&data, &pop, &scheme, 0.01).unwrap();
        // cell 0: sample areas {1, 2} -> smoothed (0.5, 0.5); population (0.25, 0.75)
        assert!((aux.pi_s(0, 1) - 0.1 * 0.5 / 0.25).abs() < 1e-15);
        assert!((aux.pi_s(0, 2) - 0.1 * 0.5 / 0.75).abs() < 1e-15);
        assert!((aux.p_area(1) - 0.3).abs() < 1e-15);
        assert_eq!(aux.cell_rows.len(), 4);
        assert_eq!(aux.provenance.ps_given_x, Source::PopulationTable);

        let outside = SurveyDataset::new(vec![rec(-1.0, 1, None)], 3).unwrap();
        assert!(matches!(
            AuxiliaryProbabilities::from_population(&outside, &pop, &scheme, 0.01),
            Err(Error::Overlap(_))
        ));
    }

    #[test]
    fn single_area_reduces_to_selection_probability() {
        let pop = PopulationTable::from_cells(
            vec![PopulationCell { cell: CellKey(vec![0]), area: 1, count: 9 }],
            None,
            None,
        )
        .unwrap();
        let data = SurveyDataset::new(vec![rec(0.0, 1, Some(4.0)), rec(0.0, 1, Some(8.0))], 1).unwrap();
        let aux = AuxiliaryProbabilities::from_population(&data, &pop, &one_cell(), 0.01).unwrap();
        assert_eq!(aux.pi_s(0, 1), 0.25);
        assert_eq!(aux.pi_s(1, 1), 0.125);
        assert_eq!(aux.provenance.ps_given_x, Source::SurveyWeights);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn increasing_in_selection_probability(a in 0.0f64..0.5, b in 0.0f64..0.5, pas in 0.01f64..1.0, pax in 0.01f64..1.0) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(sampling_prob(lo, pas, pax, 1e-9).unwrap() <= sampling_prob(hi, pas, pax, 1e-9).unwrap());
            }
        }
    }
}
