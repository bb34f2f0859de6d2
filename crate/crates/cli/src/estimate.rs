use std::path::{Path, PathBuf};

use causal_sae::auxiliary::AuxiliaryProbabilities;
use causal_sae::data::{load_population_csv, load_survey_csv, CovariateCellScheme, SurveyDataset, SurveySchema};
use causal_sae::estimator::{estimate_areas, write_estimates_csv, EstimationOptions, Method};
use causal_sae::nuisance::{cross_fit, make_folds, CrossFitOptions};
use serde_json::json;

use crate::input_error;
use crate::manifest::Manifest;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Survey CSV with `y`, `t`, `area`, `x_k`, `z_k` and optional `weight`.
    #[arg(long)]
    survey: PathBuf,
    /// JSON column mapping; detected from the header when absent.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Population CSV with `cell_id`, `area`, `count` and optional `p_sample`.
    #[arg(long, requires = "cells", conflicts_with = "known_sampling")]
    population: Option<PathBuf>,
    /// JSON cell scheme mapping X to population cells.
    #[arg(long)]
    cells: Option<PathBuf>,
    /// Treat `1 / weight` as the known inclusion probability, free of area.
    /// Area shares are then weighted sample shares.
    #[arg(long)]
    known_sampling: bool,
    /// `ht`, `hajek`, `direct` or `all`; repeatable or comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    method: Vec<String>,
    /// Drop scores with absolute value above this threshold.
    #[arg(long)]
    trim: Option<f64>,
    /// Propensity clipping bound.
    #[arg(long, default_value_t = 0.01)]
    clip: f64,
    /// Area-probability clipping bound; defaults to clip / J.
    #[arg(long)]
    area_clip: Option<f64>,
    /// Cross-fitting folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Units the HT average stands for; defaults to the sum of 1 / pi_S.
    #[arg(long)]
    ht_divisor: Option<f64>,
}

fn parse_methods(list: &[String]) -> anyhow::Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in list {
        if m.eq_ignore_ascii_case("all") {
            return Ok(Method::ALL.to_vec());
        }
        let m: Method = m.parse().map_err(|e: causal_sae::Error| input_error(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn known_sampling(data: &SurveyDataset) -> anyhow::Result<AuxiliaryProbabilities> {
    let mut ps = Vec::with_capacity(data.n());
    let mut shares = vec![0.0; data.j_count()];
    for (i, r) in data.records().iter().enumerate() {
        let w = r
            .weight
            .ok_or_else(|| input_error(format!("record {i} has no weight; --known-sampling needs a weight column")))?;
        if !(w >= 1.0) {
            return Err(input_error(format!("record {i}: weight {w} is below 1")));
        }
        ps.push(1.0 / w);
        shares[r.area - 1] += w;
    }
    let total: f64 = shares.iter().sum();
    shares.iter_mut().for_each(|s| *s /= total);
    Ok(AuxiliaryProbabilities::known(&ps, shares)?)
}

pub fn run(a: Args, out: &Path) -> anyhow::Result<bool> {
    let methods = parse_methods(&a.method)?;
    let schema: SurveySchema = match &a.schema {
        Some(p) => read_json(p)?,
        None => SurveySchema::detect(&a.survey)?,
    };
    let data = load_survey_csv(&a.survey, &schema)?;
    let aux = match (&a.population, a.known_sampling) {
        (Some(pop_path), _) => {
            let scheme: CovariateCellScheme = read_json(a.cells.as_ref().expect("clap enforces --cells"))?;
            scheme.validate()?;
            let pop = load_population_csv(pop_path, &scheme, schema.area_labels.as_ref())?;
            AuxiliaryProbabilities::from_population(&data, &pop, &scheme, a.clip)?
        }
        (None, true) => known_sampling(&data)?,
        (None, false) => return Err(input_error("supply --population with --cells, or --known-sampling")),
    };
    let mut manifest = Manifest::start("estimate");
    let folds = make_folds(data.n(), a.folds, a.seed)?;
    let nuis = cross_fit(&data, &folds, &CrossFitOptions { clip: a.clip, area_clip: a.area_clip })?;
    for note in &nuis.notes {
        eprintln!("note: {note}");
    }
    let divisor = a.ht_divisor.unwrap_or_else(|| aux.estimated_population(&data));
    let opts = EstimationOptions { methods, ht_divisor: divisor, trim: a.trim, clip: a.clip, seed: a.seed };
    let res = estimate_areas(&data, &nuis, &aux, &opts)?;
    for (area, m, why) in &res.infeasible {
        eprintln!("warning: area {area} {m}: {why}");
    }

    let est = out.join("estimates.csv");
    write_estimates_csv(&est, &res.estimates)?;
    manifest.add(&est);
    let coef = out.join("nuisance_coefficients.csv");
    nuis.write_coefficients(&coef, data.dim_x(), data.dim_z())?;
    manifest.add(&coef);
    if !aux.cell_rows.is_empty() {
        let cells = out.join("auxiliary_probabilities.csv");
        aux.write_csv(&cells)?;
        manifest.add(&cells);
    }
    println!(
        "{} records, {} areas, {} estimates, {} infeasible",
        data.n(),
        data.j_count(),
        res.estimates.len(),
        res.infeasible.len()
    );
    let config = json!({
        "survey": a.survey,
        "schema": schema,
        "population": a.population,
        "cells": a.cells,
        "known_sampling": a.known_sampling,
        "methods": opts.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "trim": a.trim,
        "clip": a.clip,
        "area_clip": a.area_clip,
        "folds": a.folds,
        "ht_divisor": divisor,
        "provenance": format!("{:?}", aux.provenance),
    });
    manifest.finish(out, config, Some(a.seed))?;
    Ok(true)
}
