use std::path::{Path, PathBuf};

use causal_sae::estimator::Method;
use causal_sae::simulation::{
    monte_carlo, write_feasibility_csv, write_metrics_csv, write_replicates_csv, write_summary_csv, DgpConfig,
    PopulationMode, Transform,
};
use serde::Deserialize;

use crate::input_error;
use crate::manifest::Manifest;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// TOML or JSON file with any subset of the study settings; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Design number from 1 to 8.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    dgp: Option<u8>,
    /// Population size.
    #[arg(long)]
    n_pop: Option<usize>,
    /// Number of areas.
    #[arg(long)]
    areas: Option<usize>,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-fitting folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Propensity clipping bound.
    #[arg(long)]
    clip: Option<f64>,
    /// `redraw` a population every replication or keep one `fixed`.
    #[arg(long, value_parser = parse_mode)]
    population: Option<PopulationMode>,
    /// Population of 400,000 and 2,000 replications unless set explicitly.
    #[arg(long)]
    full_scale: bool,
    /// Skip the per-replication estimates file.
    #[arg(long)]
    no_replicates: bool,
}

fn parse_mode(s: &str) -> Result<PopulationMode, String> {
    match s {
        "redraw" => Ok(PopulationMode::Redraw),
        "fixed" => Ok(PopulationMode::Fixed),
        _ => Err(format!("expected `redraw` or `fixed`, got `{s}`")),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dgp: Option<u8>,
    n_pop: Option<usize>,
    j_count: Option<usize>,
    reps: Option<usize>,
    seed: Option<u64>,
    outcome: Option<Transform>,
    propensity: Option<Transform>,
    area: Option<Transform>,
    noise_sd: Option<f64>,
    alpha_sd: Option<f64>,
    sampling_intercept: Option<f64>,
    sampling_slope: Option<f64>,
    folds: Option<usize>,
    clip: Option<f64>,
    population: Option<PopulationMode>,
}

fn read_config(path: &Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| input_error(format!("{}: {e}", path.display())))
}

pub fn build_config(a: &Args) -> anyhow::Result<DgpConfig> {
    let file = match &a.config {
        Some(p) => read_config(p)?,
        None => ConfigFile::default(),
    };
    let dgp = a.dgp.or(file.dgp).unwrap_or(1);
    let mut cfg = DgpConfig::new(dgp).map_err(|e| input_error(e.to_string()))?;
    if a.full_scale {
        cfg = cfg.full_scale();
    }
    macro_rules! set {
        ($field:ident, $flag:expr) => {
            if let Some(v) = $flag.or(file.$field) {
                cfg.$field = v;
            }
        };
    }
    set!(n_pop, a.n_pop);
    set!(j_count, a.areas);
    set!(reps, a.reps);
    set!(seed, a.seed);
    set!(folds, a.folds);
    set!(clip, a.clip);
    set!(population, a.population);
    set!(outcome, None);
    set!(propensity, None);
    set!(area, None);
    set!(noise_sd, None);
    set!(alpha_sd, None);
    set!(sampling_intercept, None);
    set!(sampling_slope, None);
    cfg.validate().map_err(|e| input_error(e.to_string()))?;
    if cfg.reps < 2 {
        return Err(input_error("--reps must be at least 2"));
    }
    Ok(cfg)
}

pub fn run(a: Args, out: &Path) -> anyhow::Result<bool> {
    let cfg = build_config(&a)?;
    let mut manifest = Manifest::start("simulate");
    let res = monte_carlo(&cfg)?;
    let d = cfg.dgp;
    let t = &res.metrics;
    let metrics = out.join(format!("metrics_dgp{d}.csv"));
    write_metrics_csv(&metrics, t)?;
    manifest.add(&metrics);
    let summary = out.join(format!("summary_dgp{d}.csv"));
    write_summary_csv(&summary, t)?;
    manifest.add(&summary);
    let feas = out.join(format!("feasibility_dgp{d}.csv"));
    write_feasibility_csv(&feas, t, res.replications.len())?;
    manifest.add(&feas);
    if !a.no_replicates {
        let reps = out.join(format!("replicates_dgp{d}.csv"));
        write_replicates_csv(&reps, d, &res.replications)?;
        manifest.add(&reps);
    }

    println!("design {d}: N={} J={} R={} seed={}", cfg.n_pop, cfg.j_count, cfg.reps, cfg.seed);
    println!("{:<8}{:>12}{:>12}{:>12}{:>12}", "method", "bias", "rmse", "prial", "var_ratio");
    for m in Method::ALL {
        if let Some(s) = t.summary_for(m, "mean") {
            let prial = s.prial.map_or("-".to_string(), |p| format!("{p:.1}"));
            println!("{:<8}{:>12.4}{:>12.4}{:>12}{:>12.3}", m.to_string(), s.bias, s.rmse, prial, s.var_ratio);
        }
    }
    let infeasible: usize = t.infeasible.iter().map(|i| i.2).sum();
    if infeasible > 0 {
        eprintln!("note: {infeasible} infeasible area estimates excluded (see {})", feas.display());
    }
    for (r, why) in &res.failures {
        eprintln!("warning: replication {r} failed: {why}");
    }
    let config = serde_json::to_value(&cfg)?;
    manifest.finish(out, config, Some(cfg.seed))?;
    Ok(true)
}
