//! The `sensitivity` subcommand: full-factorial design, parallel
//! response evaluation, exact ANOVA indices.

use std::time::Instant;

use clap::Args;
use hivage_core::sensitivity::{anova_decompose, apply_factors, build_design, evaluate_response};
use rayon::prelude::*;

use super::{finish_manifest, with_pool, Common};
use crate::{emit, invalid, RunError};

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: Common,
    /// Levels per factor (full factorial: levels^4 runs).
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Initial disease prevalence, percent of the population.
    #[arg(long, default_value_t = 0.05)]
    pub prevalence: f64,
}

pub fn run(args: &SensitivityArgs, started: Instant) -> Result<(), RunError> {
    let loaded = args.common.load()?;
    let dir = args.common.require_out()?;

    let design = build_design(args.levels).map_err(RunError::from)?;
    let params = loaded.params.clone();
    let grid = loaded.grid;
    let prevalence = args.prevalence;

    // Responses evaluate independently; the decomposition needs the
    // complete table, so the first failure aborts.
    let responses: Result<Vec<f64>, RunError> = with_pool(args.common.jobs, || {
        design
            .runs
            .par_iter()
            .map(|run| {
                let p = apply_factors(&params, &design.values(run));
                evaluate_response(&p, &grid, prevalence).map_err(RunError::from)
            })
            .collect()
    })?;
    let responses = responses?;
    let indices = anova_decompose(&design, &responses).map_err(RunError::from)?;

    let factor_names: Vec<&str> = design.factors.iter().map(|f| f.name).collect();
    let mut header = factor_names.clone();
    header.push("I3_tot");
    let mut csv = emit::Csv::create(&dir.join("runs.csv"), &header).map_err(invalid)?;
    for (run, y) in design.runs.iter().zip(&responses) {
        let mut fields: Vec<String> = design.values(run).iter().map(|v| emit::fmt(*v)).collect();
        fields.push(emit::fmt(*y));
        csv.raw_row(fields).map_err(invalid)?;
    }
    csv.finish().map_err(invalid)?;

    let mut csv =
        emit::Csv::create(&dir.join("indices.csv"), &["factor", "main", "total"]).map_err(invalid)?;
    for f in &indices.factors {
        csv.raw_row([f.name.to_string(), emit::fmt(f.main), emit::fmt(f.total)])
            .map_err(invalid)?;
    }
    csv.finish().map_err(invalid)?;
    finish_manifest(dir, "sensitivity", &loaded, started)?;

    let ranking = indices.ranking();
    println!(
        "{} runs decomposed: explained variance {:.4}; ranking: {}",
        responses.len(),
        indices.explained,
        ranking
            .iter()
            .map(|f| format!("{} ({:.3})", indices.factors[*f].name, indices.factors[*f].total))
            .collect::<Vec<_>>()
            .join(" > ")
    );
    Ok(())
}
