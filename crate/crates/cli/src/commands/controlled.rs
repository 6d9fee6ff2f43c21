//! The `simulate-controlled` subcommand: eight-compartment run under a
//! control schedule read from CSV.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::Args;
use hivage_core::control::{ControlTrajectory, ControlledSimulator};
use hivage_core::AgeGrid;

use super::{finish_manifest, Common};
use crate::{emit, invalid, RunError};

#[derive(Debug, Args)]
pub struct ControlledArgs {
    #[command(flatten)]
    pub common: Common,
    /// Control schedule CSV with columns t,h1,h2,h2TF; values hold from
    /// their time until the next row (piecewise constant).
    #[arg(long)]
    pub controls: PathBuf,
    /// Initial disease prevalence, percent of the population.
    #[arg(long, default_value_t = 0.05)]
    pub prevalence: f64,
    /// Emit every Nth time node (the final node is always written).
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

pub fn run(args: &ControlledArgs, started: Instant) -> Result<(), RunError> {
    let loaded = args.common.load()?;
    let dir = args.common.require_out()?;
    if args.stride == 0 {
        return Err(invalid(anyhow!("--stride must be at least 1")));
    }

    let sim = ControlledSimulator::new(&loaded.params, &loaded.grid)?;
    let h = read_controls(&args.controls, &loaded.grid).map_err(invalid)?;
    let initial = sim.initial_state(args.prevalence)?;
    let traj = sim.run(&initial, &h)?;

    let path = dir.join("controlled_trajectory.csv");
    let mut csv = emit::Csv::create(
        &path,
        &[
            "t", "S", "I1", "I1TF", "I1TS", "I2", "I2TF", "I2TS", "I3", "P", "E1", "E2", "E2TF",
            "E3",
        ],
    )
    .map_err(invalid)?;
    let last = traj.points.len() - 1;
    for (n, pt) in traj.points.iter().enumerate() {
        if n % args.stride != 0 && n != last {
            continue;
        }
        csv.row(&[
            pt.t, pt.s, pt.m[0], pt.m[1], pt.m[2], pt.m[3], pt.m[4], pt.m[5], pt.m[6], pt.p,
            pt.e1, pt.e2, pt.e2tf, pt.e3,
        ])
        .map_err(invalid)?;
    }
    csv.finish().map_err(invalid)?;
    finish_manifest(dir, "simulate-controlled", &loaded, started)?;
    println!(
        "simulated {} months under {}: AIDS person-time = {:.4}",
        loaded.grid.t_final,
        args.controls.display(),
        traj.i3_time_integral()
    );
    Ok(())
}

/// Reads a t,h1,h2,h2TF schedule and samples it left-constant onto the
/// time grid.
pub fn read_controls(path: &Path, grid: &AgeGrid) -> anyhow::Result<ControlTrajectory> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading controls {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| anyhow!("controls file is empty"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != ["t", "h1", "h2", "h2TF"] {
        return Err(anyhow!(
            "controls header must be `t,h1,h2,h2TF`, got `{header}`"
        ));
    }
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("controls row {}", idx + 2))?;
        if fields.len() != 4 {
            return Err(anyhow!("controls row {} needs 4 columns", idx + 2));
        }
        rows.push([fields[0], fields[1], fields[2], fields[3]]);
    }
    if rows.is_empty() {
        return Err(anyhow!("controls file has no data rows"));
    }
    if rows.windows(2).any(|w| w[1][0] <= w[0][0]) {
        return Err(anyhow!("controls times must increase strictly"));
    }
    if rows[0][0] > 1e-9 {
        return Err(anyhow!("controls must start at t = 0"));
    }

    let nodes = grid.time_nodes();
    let mut h = ControlTrajectory::zero(nodes);
    let mut row = 0usize;
    for n in 0..nodes {
        let t = grid.time(n);
        while row + 1 < rows.len() && rows[row + 1][0] <= t + 1e-9 {
            row += 1;
        }
        for k in 0..3 {
            h.h[k][n] = rows[row][k + 1];
        }
    }
    Ok(h)
}
