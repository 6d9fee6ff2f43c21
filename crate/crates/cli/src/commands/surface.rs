//! The `sweep-performance` subcommand: optimal-control performance over
//! drop-out probability grids, one sweep per cell, cells in parallel.

use std::time::Instant;

use anyhow::anyhow;
use clap::Args;
use hivage_core::control::ControlledSimulator;
use hivage_core::optimizer::{performance_cell, SurfaceCell, SweepOptions};
use rayon::prelude::*;

use super::{finish_manifest, with_pool, Common};
use crate::{emit, invalid, RunError};

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scenario: h1-only, h2-only, h1+h2 or h1+h2TF.
    #[arg(long)]
    pub scenario: String,
    /// Drop-out probabilities: a comma list (`0,0.2,0.4`) or a range
    /// (`start:stop:count`).
    #[arg(long = "p-grid")]
    pub p_grid: String,
    /// Initial disease prevalence, percent of the population.
    #[arg(long, default_value_t = 0.05)]
    pub prevalence: f64,
}

pub(crate) fn parse_p_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(anyhow!("range form is start:stop:count, got `{text}`"));
        }
        let start: f64 = parts[0].trim().parse()?;
        let stop: f64 = parts[1].trim().parse()?;
        let count: usize = parts[2].trim().parse()?;
        if count < 2 {
            return Err(anyhow!("range needs at least 2 points"));
        }
        (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(anyhow!("empty probability grid"));
    }
    if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(anyhow!("drop-out probabilities must lie in [0, 1]"));
    }
    Ok(values)
}

pub fn run(args: &SurfaceArgs, started: Instant) -> Result<(), RunError> {
    let loaded = args.common.load()?;
    let dir = args.common.require_out()?;
    let scenario = super::optimize::parse_scenario(&args.scenario)?;
    let p_grid = parse_p_grid(&args.p_grid).map_err(invalid)?;

    let sim = ControlledSimulator::new(&loaded.params, &loaded.grid)?;
    let initial = sim.initial_state(args.prevalence)?;
    // The no-control run ignores the drop-out probabilities, so one
    // denominator serves every cell.
    let denominator = sim.uncontrolled_aids_burden(&initial)?;

    let opts = SweepOptions {
        active: scenario.active(),
        ..loaded.config.sweep_options()
    };
    let tuples = scenario.dropout_tuples(loaded.params.p_dropout, &p_grid);
    let params = loaded.params.clone();
    let grid = loaded.grid;
    let prevalence = args.prevalence;

    let cells: Vec<SurfaceCell> = with_pool(args.common.jobs, || {
        tuples
            .par_iter()
            .map(|p| {
                performance_cell(&params, &grid, scenario, *p, prevalence, denominator, &opts)
                    .unwrap_or(SurfaceCell {
                        p_dropout: *p,
                        delta: None,
                        converged: false,
                        iterations: 0,
                        j_star: f64::NAN,
                    })
            })
            .collect()
    })?;

    let mut csv = emit::Csv::create(
        &dir.join("surface.csv"),
        &["p1", "p2", "p2TF", "delta", "converged"],
    )
    .map_err(invalid)?;
    for cell in &cells {
        csv.raw_row([
            emit::fmt(cell.p_dropout[0]),
            emit::fmt(cell.p_dropout[1]),
            emit::fmt(cell.p_dropout[2]),
            cell.delta.map_or(String::new(), emit::fmt),
            cell.converged.to_string(),
        ])
        .map_err(invalid)?;
    }
    csv.finish().map_err(invalid)?;
    finish_manifest(dir, "sweep-performance", &loaded, started)?;

    let failed = cells.iter().filter(|c| c.delta.is_none()).count();
    println!(
        "swept {} {} cells ({} failed); uncontrolled AIDS person-time = {:.4}",
        cells.len(),
        scenario.name(),
        failed,
        denominator
    );
    Ok(())
}
