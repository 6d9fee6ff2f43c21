//! The `r0` and `equilibrium` subcommands: closed-form kernel report.

use std::time::Instant;

use clap::Args;
use hivage_core::kernels;
use serde_json::json;

use super::{finish_manifest, Common};
use crate::{emit, invalid, RunError};

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: &ReportArgs, subcommand: &str, started: Instant) -> Result<(), RunError> {
    let loaded = args.common.load()?;
    let table = kernels::build_kernels(&loaded.params, &loaded.grid);
    let basic = kernels::r0(&table, &loaded.params);
    let eq = kernels::equilibria(&table, &loaded.params, &loaded.grid);

    let mut value = json!({
        "r0": basic,
        "omega": table.omega,
        "gamma": table.gamma,
        "dbar": table.dbar,
        "dfe": { "s": eq.dfe_s },
    });
    if let Some(endemic) = &eq.endemic {
        value["endemic"] = json!({
            "s": endemic.s,
            "i0": endemic.i0,
            "dbar": endemic.dbar,
            "boundary": endemic.boundary,
            "totals": endemic.totals,
        });
    }

    println!("{}", serde_json::to_string_pretty(&value).expect("JSON serializes"));

    if args.common.out.is_some() {
        let dir = args.common.require_out()?;
        emit::write_json(&dir.join("summary.json"), &value).map_err(invalid)?;
        finish_manifest(dir, subcommand, &loaded, started)?;
    }
    Ok(())
}
