//! The `optimize` subcommand: forward-backward sweep for the ART
//! problem, with the objective history and performance summary.

use std::time::Instant;

use clap::Args;
use hivage_core::control::{ControlTrajectory, ControlledSimulator};
use hivage_core::optimizer::{interior_start, Scenario, SweepOptions};
use serde_json::json;

use super::{finish_manifest, Common};
use crate::{emit, invalid, RunError};

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial disease prevalence, percent of the population.
    #[arg(long, default_value_t = 0.05)]
    pub prevalence: f64,
    /// Which controls to optimize; the rest stay at zero.
    #[arg(long, default_value = "all")]
    pub scenario: String,
}

pub(crate) fn parse_scenario(name: &str) -> Result<Scenario, RunError> {
    match name.to_ascii_lowercase().as_str() {
        "all" => Ok(Scenario::All),
        "h1-only" | "h1" => Ok(Scenario::H1Only),
        "h2-only" | "h2" => Ok(Scenario::H2Only),
        "h1+h2" => Ok(Scenario::H1H2),
        "h1+h2tf" => Ok(Scenario::H1H2Tf),
        other => Err(invalid(anyhow::anyhow!(
            "unknown scenario `{other}`; use all, h1-only, h2-only, h1+h2 or h1+h2TF"
        ))),
    }
}

pub fn run(args: &OptimizeArgs, started: Instant) -> Result<(), RunError> {
    let loaded = args.common.load()?;
    let dir = args.common.require_out()?;
    let scenario = parse_scenario(&args.scenario)?;

    let sim = ControlledSimulator::new(&loaded.params, &loaded.grid)?;
    let initial = sim.initial_state(args.prevalence)?;
    let opts = SweepOptions {
        active: scenario.active(),
        ..loaded.config.sweep_options()
    };
    let h0 = interior_start(&loaded.params, &loaded.grid, opts.active);
    let result = sim.sweep(&initial, &h0, &opts)?;

    let zero = ControlTrajectory::zero(loaded.grid.time_nodes());
    let zero_traj = sim.run(&initial, &zero)?;
    let j_zero = sim.objective(&zero_traj, &zero)?;
    let burden_zero = zero_traj.i3_time_integral();
    let delta = if burden_zero > 0.0 {
        Some(result.final_forward.i3_time_integral() / burden_zero)
    } else {
        None
    };

    let mut csv = emit::Csv::create(&dir.join("controls.csv"), &["t", "h1", "h2", "h2TF"])
        .map_err(invalid)?;
    for n in 0..loaded.grid.time_nodes() {
        let h = result.h_star.at(n);
        csv.row(&[loaded.grid.time(n), h[0], h[1], h[2]])
            .map_err(invalid)?;
    }
    csv.finish().map_err(invalid)?;

    let mut csv =
        emit::Csv::create(&dir.join("objective.csv"), &["iter", "J"]).map_err(invalid)?;
    for (iter, j) in result.j_history.iter().enumerate() {
        csv.raw_row([iter.to_string(), emit::fmt(*j)]).map_err(invalid)?;
    }
    csv.finish().map_err(invalid)?;

    let summary = json!({
        "J_star": result.j_star,
        "J_zero": j_zero,
        "delta": delta,
        "iterations": result.iterations,
        "converged": result.converged,
        "scenario": scenario.name(),
    });
    emit::write_json(&dir.join("summary.json"), &summary).map_err(invalid)?;
    finish_manifest(dir, "optimize", &loaded, started)?;
    println!(
        "optimized {}: J* = {:.6}, J(0) = {:.6}, delta = {}, {} iterations, converged = {}",
        scenario.name(),
        result.j_star,
        j_zero,
        delta.map_or("undefined".to_string(), |d| format!("{d:.6}")),
        result.iterations,
        result.converged
    );
    Ok(())
}
