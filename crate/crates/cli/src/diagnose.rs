use std::path::{Path, PathBuf};

use causal_sae::data::{load_survey_csv, SurveySchema};
use causal_sae::diagnostics::{area_ignorability_check, write_diagnostics_csv};
use serde_json::json;

use crate::input_error;
use crate::manifest::Manifest;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Survey CSV.
    #[arg(long)]
    survey: PathBuf,
    /// JSON column mapping; detected from the header when absent.
    #[arg(long)]
    schema: Option<PathBuf>,
}

pub fn run(a: Args, out: &Path) -> anyhow::Result<bool> {
    let schema: SurveySchema = match &a.schema {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| input_error(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", p.display())))?
        }
        None => SurveySchema::detect(&a.survey)?,
    };
    let data = load_survey_csv(&a.survey, &schema)?;
    let mut manifest = Manifest::start("diagnose");
    let reports = vec![area_ignorability_check(&data, false)?, area_ignorability_check(&data, true)?];
    let path = out.join("diagnostics.csv");
    write_diagnostics_csv(&path, &reports)?;
    manifest.add(&path);
    for r in &reports {
        println!(
            "{:<10} {:>3} of {:>3} area coefficients significant ({:.1}%)",
            r.variant(),
            r.rows.iter().filter(|c| c.significant).count(),
            r.rows.len(),
            100.0 * r.share_significant
        );
    }
    manifest.finish(out, json!({ "survey": a.survey, "schema": schema }), None)?;
    Ok(true)
}
