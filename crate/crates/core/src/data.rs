//! Survey records, population tables, and covariate cells.
//!
//! Every stored [`SurveyRecord`] is a sampled unit, so the sampling indicator
//! is implicit. Areas are 1-based dense integers; string labels found in a CSV
//! are translated through an [`AreaLabels`] dictionary at load time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sampled unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRecord {
    pub y: f64,
    pub t: u8,
    /// Covariates shared with the population source.
    pub x: Vec<f64>,
    /// Covariates observed only in the survey.
    pub z: Vec<f64>,
    /// 1-based area label.
    pub area: usize,
    /// Design weight, the reciprocal of an inclusion-probability proxy.
    pub weight: Option<f64>,
}

impl SurveyRecord {
    pub fn treated(&self) -> bool {
        self.t == 1
    }
}

#[derive(Debug, Clone)]
pub struct SurveyDataset {
    records: Vec<SurveyRecord>,
    j_count: usize,
    dim_x: usize,
    dim_z: usize,
}

impl SurveyDataset {
    /// Validates and wraps `records`. Areas must lie in `1..=j_count`.
    pub fn new(records: Vec<SurveyRecord>, j_count: usize) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::EmptyInput("survey dataset has no records".into()))?;
        if j_count == 0 {
            return Err(Error::InvalidInput("area count must be positive".into()));
        }
        let dim_x = first.x.len();
        let dim_z = first.z.len();
        for (i, r) in records.iter().enumerate() {
            if r.x.len() != dim_x {
                return Err(Error::DimensionMismatch { expected: dim_x, got: r.x.len() });
            }
            if r.z.len() != dim_z {
                return Err(Error::DimensionMismatch { expected: dim_z, got: r.z.len() });
            }
            if r.t > 1 {
                return Err(Error::InvalidInput(format!("record {i}: treatment {} not in {{0,1}}", r.t)));
            }
            if r.area == 0 || r.area > j_count {
                return Err(Error::InvalidInput(format!(
                    "record {i}: area {} outside 1..={j_count}",
                    r.area
                )));
            }
            if !r.y.is_finite() {
                return Err(Error::NonFinite { record: i, component: "y" });
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { record: i, component: "x" });
            }
            if r.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { record: i, component: "z" });
            }
            if let Some(w) = r.weight {
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::InvalidInput(format!("record {i}: weight {w} is not positive")));
                }
            }
        }
        Ok(SurveyDataset { records, j_count, dim_x, dim_z })
    }

    pub fn records(&self) -> &[SurveyRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn j_count(&self) -> usize {
        self.j_count
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_z(&self) -> usize {
        self.dim_z
    }

    /// Number of regression columns including the intercept.
    pub fn design_width(&self) -> usize {
        1 + self.dim_x + self.dim_z
    }

    /// Sampled-unit counts per area, index `j - 1`.
    pub fn area_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.j_count];
        for r in &self.records {
            counts[r.area - 1] += 1;
        }
        counts
    }

    /// A new dataset restricted to the given record indices, keeping `j_count`.
    pub fn subset(&self, idx: &[usize]) -> Result<SurveyDataset> {
        let records = idx.iter().map(|&i| self.records[i].clone()).collect();
        SurveyDataset::new(records, self.j_count)
    }
}

/// Dictionary from external area labels to dense 1-based integers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AreaLabels(pub BTreeMap<String, usize>);

impl AreaLabels {
    /// Assigns 1..=J to `labels` in the given order.
    pub fn from_ordered<S: AsRef<str>>(labels: &[S]) -> Self {
        AreaLabels(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.as_ref().to_string(), i + 1))
                .collect(),
        )
    }

    pub fn lookup(&self, label: &str) -> Option<usize> {
        self.0.get(label).copied()
    }

    pub fn j_count(&self) -> usize {
        self.0.values().copied().max().unwrap_or(0)
    }
}

/// Column names for survey ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySchema {
    pub y: String,
    pub t: String,
    pub area: String,
    pub x: Vec<String>,
    pub z: Vec<String>,
    #[serde(default)]
    pub weight: Option<String>,
    /// Declared area count; inferred from the largest label when absent.
    #[serde(default)]
    pub j_count: Option<usize>,
    #[serde(default)]
    pub area_labels: Option<AreaLabels>,
}

impl SurveySchema {
    /// The default naming convention: `y`, `t`, `area`, `x_1..x_p`, `z_1..z_q`,
    /// and an optional `weight` column.
    pub fn from_header<S: AsRef<str>>(header: &[S]) -> Result<Self> {
        let names: Vec<&str> = header.iter().map(|s| s.as_ref()).collect();
        for required in ["y", "t", "area"] {
            if !names.contains(&required) {
                return Err(Error::Schema(format!("missing column `{required}`")));
            }
        }
        let numbered = |prefix: &str| -> Vec<String> {
            let mut cols: Vec<(usize, String)> = names
                .iter()
                .filter_map(|n| {
                    n.strip_prefix(prefix)
                        .and_then(|k| k.parse::<usize>().ok())
                        .map(|k| (k, n.to_string()))
                })
                .collect();
            cols.sort();
            cols.into_iter().map(|(_, n)| n).collect()
        };
        Ok(SurveySchema {
            y: "y".into(),
            t: "t".into(),
            area: "area".into(),
            x: numbered("x_"),
            z: numbered("z_"),
            weight: names.contains(&"weight").then(|| "weight".to_string()),
            j_count: None,
            area_labels: None,
        })
    }

    /// Reads only the header of `path` and applies [`SurveySchema::from_header`].
    pub fn detect(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        let cols: Vec<&str> = header.iter().collect();
        SurveySchema::from_header(&cols)
    }
}

fn column_index(header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

fn parse_finite(field: &str, what: &str) -> std::result::Result<f64, String> {
    let field = field.trim();
    if field.is_empty() {
        return Err(format!("missing value for `{what}`"));
    }
    let v = f64::from_str(field).map_err(|_| format!("cannot parse `{field}` as a number for `{what}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value `{field}` for `{what}`"));
    }
    Ok(v)
}

/// Loads and validates a survey CSV. Row order is preserved.
pub fn load_survey_csv(path: &Path, schema: &SurveySchema) -> Result<SurveyDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let iy = column_index(&header, &schema.y)?;
    let it = column_index(&header, &schema.t)?;
    let ia = column_index(&header, &schema.area)?;
    let ix = schema.x.iter().map(|c| column_index(&header, c)).collect::<Result<Vec<_>>>()?;
    let iz = schema.z.iter().map(|c| column_index(&header, c)).collect::<Result<Vec<_>>>()?;
    let iw = schema.weight.as_ref().map(|c| column_index(&header, c)).transpose()?;

    let mut records = Vec::new();
    let mut max_area = 0;
    for row in rdr.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row { path: path.to_path_buf(), line, message };
        let get = |i: usize| row.get(i).unwrap_or("");

        let y = parse_finite(get(iy), &schema.y).map_err(row_err)?;
        let t = match get(it).trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(row_err(format!("treatment `{other}` is not 0 or 1"))),
        };
        let area_field = get(ia).trim();
        let area = match &schema.area_labels {
            Some(labels) => labels
                .lookup(area_field)
                .ok_or_else(|| row_err(format!("unknown area label `{area_field}`")))?,
            None => area_field
                .parse::<usize>()
                .ok()
                .filter(|&a| a >= 1)
                .ok_or_else(|| row_err(format!("area `{area_field}` is not a positive integer")))?,
        };
        if let Some(j) = schema.j_count {
            if area > j {
                return Err(row_err(format!("area {area} exceeds declared area count {j}")));
            }
        }
        max_area = max_area.max(area);
        let x = ix
            .iter()
            .zip(&schema.x)
            .map(|(&i, name)| parse_finite(get(i), name))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(row_err)?;
        let z = iz
            .iter()
            .zip(&schema.z)
            .map(|(&i, name)| parse_finite(get(i), name))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(row_err)?;
        let weight = match iw {
            Some(i) => {
                let w = parse_finite(get(i), "weight").map_err(row_err)?;
                if w <= 0.0 {
                    return Err(row_err(format!("weight {w} is not positive")));
                }
                Some(w)
            }
            None => None,
        };
        records.push(SurveyRecord { y, t, x, z, area, weight });
    }
    if records.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }
    let j_count = schema
        .j_count
        .or_else(|| schema.area_labels.as_ref().map(|l| l.j_count()))
        .unwrap_or(max_area);
    SurveyDataset::new(records, j_count)
}

/// Writes `data` with the default column naming. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_survey_csv(path: &Path, data: &SurveyDataset) -> Result<()> {
    let with_weight = data.records().iter().all(|r| r.weight.is_some());
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["y".to_string(), "t".to_string(), "area".to_string()];
    header.extend((1..=data.dim_x()).map(|k| format!("x_{k}")));
    header.extend((1..=data.dim_z()).map(|k| format!("z_{k}")));
    if with_weight {
        header.push("weight".into());
    }
    wtr.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in data.records() {
        let mut row = vec![r.y.to_string(), r.t.to_string(), r.area.to_string()];
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.extend(r.z.iter().map(|v| v.to_string()));
        if with_weight {
            row.push(r.weight.unwrap_or(1.0).to_string());
        }
        wtr.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Identifier of a covariate cell: one bin index per X dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey(pub Vec<i64>);

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        write!(f, "{}", parts.join(":"))
    }
}

impl FromStr for CellKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .split(':')
            .map(|p| {
                p.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::InvalidInput(format!("malformed cell id `{s}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(CellKey)
    }
}

/// How one X dimension is mapped to a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binning {
    /// Right-closed bins `(-inf, c1], (c1, c2], ..., (ck, inf)`; `k + 1` bins.
    Cuts { cuts: Vec<f64> },
    /// Integer-valued covariate used as its own bin.
    Discrete,
}

impl Binning {
    fn bin(&self, v: f64) -> Result<i64> {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("cannot bin non-finite value {v}")));
        }
        match self {
            Binning::Cuts { cuts } => Ok(cuts.partition_point(|&c| c < v) as i64),
            Binning::Discrete => {
                if v.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!("discrete covariate has non-integer value {v}")));
                }
                Ok(v as i64)
            }
        }
    }

    fn admits(&self, bin: i64) -> bool {
        match self {
            Binning::Cuts { cuts } => (0..=cuts.len() as i64).contains(&bin),
            Binning::Discrete => true,
        }
    }
}

/// Discretization of X used to match survey units to population cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateCellScheme {
    pub dims: Vec<Binning>,
}

impl CovariateCellScheme {
    pub fn new(dims: Vec<Binning>) -> Result<Self> {
        let scheme = CovariateCellScheme { dims };
        scheme.validate()?;
        Ok(scheme)
    }

    /// Cut points must be finite and strictly increasing.
    pub fn validate(&self) -> Result<()> {
        for (d, b) in self.dims.iter().enumerate() {
            if let Binning::Cuts { cuts } = b {
                if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidInput(format!(
                        "cut points for dimension {d} must be finite and strictly increasing"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Quantile cut points per dimension from unit-level X (`bins = 10` gives deciles).
    pub fn quantile_bins(xs: &[Vec<f64>], bins: usize) -> Result<Self> {
        let dim = xs
            .first()
            .ok_or_else(|| Error::EmptyInput("no covariate rows to bin".into()))?
            .len();
        let mut dims = Vec::with_capacity(dim);
        for d in 0..dim {
            let mut col: Vec<f64> = xs.iter().map(|x| x[d]).collect();
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite covariate value".into()));
            }
            col.sort_by(|a, b| a.total_cmp(b));
            let mut cuts: Vec<f64> = (1..bins)
                .map(|k| quantile_sorted(&col, k as f64 / bins as f64))
                .collect();
            cuts.dedup();
            dims.push(Binning::Cuts { cuts });
        }
        CovariateCellScheme::new(dims)
    }

    pub fn cell_of(&self, x: &[f64]) -> Result<CellKey> {
        if x.len() != self.dims.len() {
            return Err(Error::DimensionMismatch { expected: self.dims.len(), got: x.len() });
        }
        self.dims
            .iter()
            .zip(x)
            .map(|(b, &v)| b.bin(v))
            .collect::<Result<Vec<_>>>()
            .map(CellKey)
    }

    fn admits(&self, key: &CellKey) -> bool {
        key.0.len() == self.dims.len() && self.dims.iter().zip(&key.0).all(|(b, &k)| b.admits(k))
    }
}

// Linear interpolation between order statistics (type 7).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationCell {
    pub cell: CellKey,
    pub area: usize,
    pub count: u64,
}

/// Population counts by covariate cell and area.
#[derive(Debug, Clone)]
pub struct PopulationTable {
    j_count: usize,
    cells: Vec<PopulationCell>,
    sampling_prob: Option<BTreeMap<CellKey, f64>>,
    area_totals: Vec<u64>,
    cell_counts: BTreeMap<CellKey, Vec<u64>>,
    total: u64,
}

impl PopulationTable {
    /// Builds the table. Every area in `1..=J` needs a positive total count.
    pub fn from_cells(
        cells: Vec<PopulationCell>,
        sampling_prob: Option<BTreeMap<CellKey, f64>>,
        j_count: Option<usize>,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyInput("population table has no cells".into()));
        }
        let max_area = cells.iter().map(|c| c.area).max().unwrap_or(0);
        let j_count = j_count.unwrap_or(max_area);
        let mut area_totals = vec![0u64; j_count];
        let mut cell_counts: BTreeMap<CellKey, Vec<u64>> = BTreeMap::new();
        for c in &cells {
            if c.area == 0 || c.area > j_count {
                return Err(Error::InvalidInput(format!("population area {} outside 1..={j_count}", c.area)));
            }
            area_totals[c.area - 1] += c.count;
            cell_counts.entry(c.cell.clone()).or_insert_with(|| vec![0; j_count])[c.area - 1] += c.count;
        }
        if let Some(j) = area_totals.iter().position(|&t| t == 0) {
            return Err(Error::Overlap(format!("area {} has zero population count, so P(A={})=0", j + 1, j + 1)));
        }
        if let Some(ps) = &sampling_prob {
            for (cell, &p) in ps {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidInput(format!("sampling probability {p} for cell {cell} not in (0,1]")));
                }
            }
        }
        let total = area_totals.iter().sum();
        Ok(PopulationTable { j_count, cells, sampling_prob, area_totals, cell_counts, total })
    }

    pub fn j_count(&self) -> usize {
        self.j_count
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cells(&self) -> &[PopulationCell] {
        &self.cells
    }

    /// Marginal area shares `P(A=j)`, index `j - 1`.
    pub fn p_area(&self) -> Vec<f64> {
        self.area_totals.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    /// `P(A=j | X in cell)` for all `j`; `None` for unknown or empty cells.
    pub fn pa_given_x(&self, cell: &CellKey) -> Option<Vec<f64>> {
        let counts = self.cell_counts.get(cell)?;
        let tot: u64 = counts.iter().sum();
        if tot == 0 {
            return None;
        }
        Some(counts.iter().map(|&c| c as f64 / tot as f64).collect())
    }

    /// Known `P(S=1 | X in cell)`, when the table carries it.
    pub fn ps_given_x(&self, cell: &CellKey) -> Option<f64> {
        self.sampling_prob.as_ref()?.get(cell).copied()
    }

    pub fn has_sampling_prob(&self) -> bool {
        self.sampling_prob.is_some()
    }

    pub fn cell_keys(&self) -> impl Iterator<Item = &CellKey> {
        self.cell_counts.keys()
    }
}

/// Loads a population table with columns `cell_id`, `area`, `count` and an
/// optional `p_sample`. Cell ids are colon-separated bin indices under `scheme`.
pub fn load_population_csv(
    path: &Path,
    scheme: &CovariateCellScheme,
    labels: Option<&AreaLabels>,
) -> Result<PopulationTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let ic = column_index(&header, "cell_id")?;
    let ia = column_index(&header, "area")?;
    let in_ = column_index(&header, "count")?;
    let ip = header.iter().position(|h| h == "p_sample");

    let mut cells = Vec::new();
    let mut probs: BTreeMap<CellKey, f64> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row { path: path.to_path_buf(), line, message };
        let get = |i: usize| row.get(i).unwrap_or("").trim();

        let cell: CellKey = get(ic).parse().map_err(|e: Error| row_err(e.to_string()))?;
        if !scheme.admits(&cell) {
            return Err(row_err(format!("cell id `{cell}` does not match the covariate cell scheme")));
        }
        let area_field = get(ia);
        let area = match labels {
            Some(l) => l
                .lookup(area_field)
                .ok_or_else(|| row_err(format!("unknown area label `{area_field}`")))?,
            None => area_field
                .parse::<usize>()
                .ok()
                .filter(|&a| a >= 1)
                .ok_or_else(|| row_err(format!("area `{area_field}` is not a positive integer")))?,
        };
        let count = get(in_)
            .parse::<u64>()
            .map_err(|_| row_err(format!("count `{}` is not a nonnegative integer", get(in_))))?;
        if let Some(ip) = ip {
            let p = parse_finite(get(ip), "p_sample").map_err(row_err)?;
            if let Some(&prev) = probs.get(&cell) {
                if prev != p {
                    return Err(row_err(format!("conflicting p_sample values for cell {cell}")));
                }
            }
            probs.insert(cell.clone(), p);
        }
        cells.push(PopulationCell { cell, area, count });
    }
    let j_count = labels.map(|l| l.j_count());
    PopulationTable::from_cells(cells, ip.map(|_| probs), j_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema_yta() -> SurveySchema {
        SurveySchema {
            y: "y".into(),
            t: "t".into(),
            area: "a".into(),
            x: vec!["x1".into()],
            z: vec!["z1".into()],
            weight: None,
            j_count: None,
            area_labels: None,
        }
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp("y,t,a,x1,z1\n1.5,1,1,0.2,3\n-2,0,2,0.1,4\n0,1,2,1e-3,5\n");
        let d = load_survey_csv(f.path(), &schema_yta()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.dim_x(), 1);
        assert_eq!(d.dim_z(), 1);
        assert_eq!(d.j_count(), 2);
        assert_eq!(d.records()[1].y, -2.0);
        assert_eq!(d.records()[2].x, vec![1e-3]);
    }

    #[test]
    fn bad_treatment_names_row() {
        let f = write_tmp("y,t,a,x1,z1\n1.5,1,1,0.2,3\n-2,2,2,0.1,4\n");
        let err = load_survey_csv(f.path(), &schema_yta()).unwrap_err();
        match err {
            Error::Row { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("treatment"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn area_beyond_declared_count() {
        let f = write_tmp("y,t,a,x1,z1\n1,1,51,0,0\n");
        let mut schema = schema_yta();
        schema.j_count = Some(50);
        assert!(matches!(load_survey_csv(f.path(), &schema), Err(Error::Row { .. })));
    }

    #[test]
    fn missing_column_and_values() {
        let f = write_tmp("y,t,x1,z1\n1,1,0,0\n");
        assert!(matches!(load_survey_csv(f.path(), &schema_yta()), Err(Error::Schema(_))));
        let f = write_tmp("y,t,a,x1,z1\n1,1,1,,0\n");
        assert!(matches!(load_survey_csv(f.path(), &schema_yta()), Err(Error::Row { .. })));
        let f = write_tmp("y,t,a,x1,z1\nNaN,1,1,0,0\n");
        assert!(matches!(load_survey_csv(f.path(), &schema_yta()), Err(Error::Row { .. })));
        let f = write_tmp("y,t,a,x1,z1\n");
        assert!(matches!(load_survey_csv(f.path(), &schema_yta()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn string_area_labels() {
        let f = write_tmp("y,t,area,x_1,z_1\n1,1,OR,0,0\n2,0,WV,1,1\n");
        let mut schema = SurveySchema::detect(f.path()).unwrap();
        schema.area_labels = Some(AreaLabels::from_ordered(&["OR", "WV", "CA"]));
        let d = load_survey_csv(f.path(), &schema).unwrap();
        assert_eq!(d.j_count(), 3);
        assert_eq!(d.records()[1].area, 2);
    }

    #[test]
    fn detects_default_schema() {
        let s = SurveySchema::from_header(&["y", "t", "area", "x_2", "x_1", "z_1", "weight"]).unwrap();
        assert_eq!(s.x, vec!["x_1", "x_2"]);
        assert_eq!(s.z, vec!["z_1"]);
        assert_eq!(s.weight.as_deref(), Some("weight"));
    }

    #[test]
    fn round_trip_preserves_values() {
        let recs = vec![
            SurveyRecord { y: 0.1 + 0.2, t: 1, x: vec![1.0 / 3.0], z: vec![-2.5e-7], area: 1, weight: Some(48.123456789012345) },
            SurveyRecord { y: -1e300, t: 0, x: vec![std::f64::consts::PI], z: vec![7.0], area: 2, weight: Some(1.0) },
        ];
        let d = SurveyDataset::new(recs, 2).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_survey_csv(f.path(), &d).unwrap();
        let schema = SurveySchema::detect(f.path()).unwrap();
        let back = load_survey_csv(f.path(), &schema).unwrap();
        assert_eq!(back.records(), d.records());
    }

    #[test]
    fn cell_of_right_closed_bins() {
        let scheme = CovariateCellScheme::new(vec![Binning::Cuts { cuts: vec![-1.0, 0.0, 1.0] }]).unwrap();
        // 0-based index 1 is the second of four bins
        assert_eq!(scheme.cell_of(&[0.0]).unwrap(), CellKey(vec![1]));
        assert_eq!(scheme.cell_of(&[0.0]).unwrap(), scheme.cell_of(&[0.0]).unwrap());
        assert_eq!(scheme.cell_of(&[-5.0]).unwrap(), CellKey(vec![0]));
        assert_eq!(scheme.cell_of(&[1.0]).unwrap(), CellKey(vec![2]));
        assert_eq!(scheme.cell_of(&[1.0001]).unwrap(), CellKey(vec![3]));
        assert!(scheme.cell_of(&[f64::NAN]).is_err());
        assert!(matches!(scheme.cell_of(&[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_unsorted_cuts() {
        assert!(CovariateCellScheme::new(vec![Binning::Cuts { cuts: vec![1.0, 0.0] }]).is_err());
    }

    #[test]
    fn decile_scheme_has_nine_cuts() {
        let xs: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64]).collect();
        let s = CovariateCellScheme::quantile_bins(&xs, 10).unwrap();
        match &s.dims[0] {
            Binning::Cuts { cuts } => {
                assert_eq!(cuts.len(), 9);
                assert!((cuts[4] - 499.5).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }

    fn cell(k: i64, area: usize, count: u64) -> PopulationCell {
        PopulationCell { cell: CellKey(vec![k]), area, count }
    }

    #[test]
    fn population_shares() {
        let t = PopulationTable::from_cells(
            vec![cell(0, 1, 10), cell(0, 2, 30), cell(1, 1, 20), cell(1, 2, 40)],
            None,
            None,
        )
        .unwrap();
        let p = t.p_area();
        assert!((p[0] - 0.3).abs() < 1e-15);
        assert!((p[1] - 0.7).abs() < 1e-15);
        let c0 = t.pa_given_x(&CellKey(vec![0])).unwrap();
        assert!((c0[0] - 0.25).abs() < 1e-15);
        assert!((c0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_single_cell() {
        let t = PopulationTable::from_cells(vec![cell(0, 1, 5)], None, None).unwrap();
        assert_eq!(t.p_area(), vec![1.0]);
        assert_eq!(t.pa_given_x(&CellKey(vec![0])).unwrap(), vec![1.0]);
    }

    #[test]
    fn zero_area_is_overlap_error() {
        let r = PopulationTable::from_cells(vec![cell(0, 1, 5), cell(0, 2, 0)], None, None);
        assert!(matches!(r, Err(Error::Overlap(_))));
        let r = PopulationTable::from_cells(vec![cell(0, 1, 5)], None, Some(2));
        assert!(matches!(r, Err(Error::Overlap(_))));
    }

    #[test]
    fn loads_population_csv() {
        let scheme = CovariateCellScheme::new(vec![Binning::Cuts { cuts: vec![0.0] }]).unwrap();
        let f = write_tmp("cell_id,area,count,p_sample\n0,1,10,0.1\n0,2,30,0.1\n1,1,20,0.2\n1,2,40,0.2\n");
        let t = load_population_csv(f.path(), &scheme, None).unwrap();
        assert_eq!(t.total(), 100);
        assert_eq!(t.ps_given_x(&CellKey(vec![1])), Some(0.2));
        let f = write_tmp("cell_id,area,count\n7,1,10\n");
        assert!(matches!(load_population_csv(f.path(), &scheme, None), Err(Error::Row { .. })));
        let f = write_tmp("cell_id,area,count\n0,1,-3\n");
        assert!(matches!(load_population_csv(f.path(), &scheme, None), Err(Error::Row { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shares_normalize(counts in proptest::collection::vec(1u64..1000, 1..6), cells in 1usize..4) {
                let j = counts.len();
                let mut v = Vec::new();
                for c in 0..cells {
                    for (a, &n) in counts.iter().enumerate() {
                        v.push(PopulationCell { cell: CellKey(vec![c as i64]), area: a + 1, count: n * (c as u64 + 1) });
                    }
                }
                let t = PopulationTable::from_cells(v, None, Some(j)).unwrap();
                prop_assert!((t.p_area().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for key in t.cell_keys() {
                    let row = t.pa_given_x(key).unwrap();
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn bins_partition_the_line(mut cuts in proptest::collection::vec(-100.0f64..100.0, 1..8), x in -200.0f64..200.0) {
                cuts.sort_by(|a, b| a.total_cmp(b));
                cuts.dedup();
                let scheme = CovariateCellScheme::new(vec![Binning::Cuts { cuts: cuts.clone() }]).unwrap();
                let b = scheme.cell_of(&[x]).unwrap().0[0] as usize;
                // exactly one bin: lower edge < x <= upper edge
                let lo = if b == 0 { f64::NEG_INFINITY } else { cuts[b - 1] };
                let hi = if b == cuts.len() { f64::INFINITY } else { cuts[b] };
                prop_assert!(lo < x && x <= hi);
            }
        }
    }
}
