//! The `simulate` subcommand: base-model trajectory and density dumps.

use std::time::Instant;

use clap::Args;
use hivage_core::simulator::{Simulator, Trajectory};

use super::{finish_manifest, Common};
use crate::{emit, invalid, RunError};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial disease prevalence, percent of the population.
    #[arg(long, default_value_t = 0.05)]
    pub prevalence: f64,
    /// Emit every Nth time node (the final node is always written).
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Times at which to dump the full stage densities.
    #[arg(long, value_delimiter = ',', value_name = "T1,T2,...")]
    pub snapshots: Vec<f64>,
}

pub fn run(args: &SimulateArgs, started: Instant) -> Result<(), RunError> {
    let loaded = args.common.load()?;
    let dir = args.common.require_out()?;
    if args.stride == 0 {
        return Err(invalid(anyhow::anyhow!("--stride must be at least 1")));
    }

    let sim = Simulator::new(&loaded.params, &loaded.grid)?;
    let initial = sim.initial_state(args.prevalence)?;
    let traj = sim.run(&initial, &args.snapshots)?;

    write_trajectory(&traj, dir, args.stride)?;
    if !traj.snapshots.is_empty() {
        write_snapshots(&sim, &traj, dir)?;
    }
    finish_manifest(dir, "simulate", &loaded, started)?;
    let last = traj.last();
    println!(
        "simulated {} months: S = {:.4}, I = [{:.4}, {:.4}, {:.4}], P = {:.4}",
        loaded.grid.t_final, last.s, last.i[0], last.i[1], last.i[2], last.p
    );
    Ok(())
}

fn write_trajectory(traj: &Trajectory, dir: &std::path::Path, stride: usize) -> Result<(), RunError> {
    let path = dir.join("trajectory.csv");
    let mut csv = emit::Csv::create(&path, &["t", "S", "I1", "I2", "I3", "P", "E1", "E2", "E3"])
        .map_err(invalid)?;
    let last = traj.points.len() - 1;
    for (n, pt) in traj.points.iter().enumerate() {
        if n % stride != 0 && n != last {
            continue;
        }
        csv.row(&[
            pt.t, pt.s, pt.i[0], pt.i[1], pt.i[2], pt.p, pt.e[0], pt.e[1], pt.e[2],
        ])
        .map_err(invalid)?;
    }
    csv.finish().map_err(invalid)
}

fn write_snapshots(sim: &Simulator, traj: &Trajectory, dir: &std::path::Path) -> Result<(), RunError> {
    let grid = sim.grid();
    for (stage, name) in ["i1", "i2", "i3"].iter().enumerate() {
        let path = dir.join(format!("density_{name}.csv"));
        let mut header = vec!["a".to_string()];
        header.extend(traj.snapshots.iter().map(|s| format!("{}", s.t)));
        let mut csv = emit::Csv::create(&path, &header.iter().map(|s| s.as_str()).collect::<Vec<_>>())
            .map_err(invalid)?;
        for node in 0..grid.age_nodes() {
            let mut fields = vec![emit::fmt(grid.age(node))];
            for snap in &traj.snapshots {
                let value = snap.densities()[stage][node];
                fields.push(emit::fmt(value));
            }
            csv.raw_row(fields).map_err(invalid)?;
        }
        csv.finish().map_err(invalid)?;
    }
    Ok(())
}
