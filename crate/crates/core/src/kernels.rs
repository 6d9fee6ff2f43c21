//! Stage survival kernels, the basic reproduction number and equilibria.
//!
//! The kernels `D_j` are evaluated exactly on each piecewise-constant
//! rate segment (closed-form exponentials between breakpoints). Scalar
//! integrals use the same exponential-cell quadrature as the transport
//! solver, with an analytic tail beyond the truncation age where all
//! rates are constant, so the reproduction number is effectively
//! truncation-free and the equilibria are consistent with the solver's
//! own mass accounting.

use alloc::string::String;
use alloc::vec::Vec;

use crate::cells::{weighted_sum, CellScheme};
use crate::params::{AgeGrid, ModelParams, ParamError, Stage, StepRate};

/// Survival kernels and their integrals for the three stages.
///
/// `survival[j]` samples `D_j` on the age nodes; `dbar`, `omega` and
/// `gamma` are the integrals of `D_j`, `beta D_j` and `gamma_j D_j`
/// over all durations.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub survival: [Vec<f64>; 3],
    pub dbar: [f64; 3],
    pub omega: [f64; 3],
    pub gamma: [f64; 2],
}

/// Disease-free and (when present) endemic equilibrium.
#[derive(Debug, Clone)]
pub struct EquilibriumSet {
    /// Susceptibles at the disease-free equilibrium (densities are zero).
    pub dfe_s: f64,
    /// Endemic equilibrium, present exactly when `R0 > 1`.
    pub endemic: Option<Endemic>,
}

/// Endemic equilibrium in boundary-inflow form: each stage density is
/// its boundary value times the stage survival kernel.
#[derive(Debug, Clone)]
pub struct Endemic {
    pub s: f64,
    /// Stage-1 boundary inflow `I0*`.
    pub i0: f64,
    /// Combined mean residence across stages.
    pub dbar: f64,
    /// Boundary values of the three stage densities.
    pub boundary: [f64; 3],
    /// Stage densities sampled on the age grid.
    pub density: [Vec<f64>; 3],
    /// Stage totals including the analytic tail beyond truncation.
    pub totals: [f64; 3],
}

fn stage_progression(params: &ModelParams, stage: Stage) -> Option<StepRate> {
    match stage {
        Stage::Primary | Stage::Latent => Some(
            params
                .gamma_rate(stage, false)
                .expect("progressing stage has a rate"),
        ),
        Stage::Aids => None,
    }
}

/// Integral of `weight(a) * D(a)` over `[a_max, inf)` where every rate is
/// constant past truncation.
fn analytic_tail(weight_at_tail: f64, survival_at_tail: f64, decay_rate: f64) -> f64 {
    weight_at_tail * survival_at_tail / decay_rate
}

/// Builds the survival kernels and their integrals for `params`.
pub fn build_kernels(params: &ModelParams, grid: &AgeGrid) -> KernelTable {
    let beta = params.beta_rate();
    let mut survival: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut dbar = [0.0; 3];
    let mut omega = [0.0; 3];
    let mut gamma = [0.0; 2];

    for stage in Stage::ALL {
        let j = stage.slot();
        let progression = stage_progression(params, stage);
        let d = params.d[j];
        let scheme = CellScheme::new(grid, progression.as_ref(), d);

        let mut d_vals = Vec::with_capacity(grid.age_nodes());
        d_vals.push(1.0);
        for c in 0..grid.age_cells() {
            d_vals.push(d_vals[c] * scheme.decay[c]);
        }

        let gamma_rate = progression.unwrap_or(StepRate::constant(0.0));
        let tail_rate = gamma_rate.at(grid.a_max) + d;
        let d_tail = *d_vals.last().expect("grid has nodes");

        dbar[j] = scheme.mass_of(&d_vals) + analytic_tail(1.0, d_tail, tail_rate);
        omega[j] = weighted_sum(&scheme.flux_weights(grid, &beta), &d_vals)
            + analytic_tail(beta.at(grid.a_max), d_tail, tail_rate);
        if j < 2 {
            gamma[j] = weighted_sum(&scheme.flux_weights(grid, &gamma_rate), &d_vals)
                + analytic_tail(gamma_rate.at(grid.a_max), d_tail, tail_rate);
        }
        survival[j] = d_vals;
    }

    KernelTable {
        survival,
        dbar,
        omega,
        gamma,
    }
}

/// Basic reproduction number
/// `R0 = Omega_1 + eps Omega_2 Gamma_1 + delta Omega_3 Gamma_1 Gamma_2`.
pub fn r0(kernels: &KernelTable, params: &ModelParams) -> f64 {
    kernels.omega[0]
        + params.epsilon_eff() * kernels.omega[1] * kernels.gamma[0]
        + params.delta_eff() * kernels.omega[2] * kernels.gamma[0] * kernels.gamma[1]
}

/// Infectiousness scaling that hits `target_r0` exactly.
///
/// `R0` is linear in `rho0` (every `Omega_j` carries one factor), so the
/// calibration is a single division against the unit-scaling kernels.
pub fn calibrate_rho0(
    params: &ModelParams,
    grid: &AgeGrid,
    target_r0: f64,
) -> Result<f64, ParamError> {
    let mut unit = params.clone();
    unit.rho0 = 1.0;
    let per_unit = r0(&build_kernels(&unit, grid), &unit);
    if per_unit <= 0.0 {
        return Err(ParamError::new(
            "beta_hazard",
            String::from("cannot calibrate rho0: transmission is identically zero"),
        ));
    }
    Ok(target_r0 / per_unit)
}

/// Both equilibria of the model; the endemic branch exists iff `R0 > 1`.
pub fn equilibria(kernels: &KernelTable, params: &ModelParams, grid: &AgeGrid) -> EquilibriumSet {
    let dfe_s = params.lambda_in / params.mu;
    let basic = r0(kernels, params);
    if basic <= 1.0 {
        return EquilibriumSet {
            dfe_s,
            endemic: None,
        };
    }

    let g1 = kernels.gamma[0];
    let g2 = kernels.gamma[1];
    let dbar = kernels.dbar[0] + g1 * kernels.dbar[1] + g1 * g2 * kernels.dbar[2];
    let i0 = params.lambda_in * (basic - 1.0) / (params.mu * dbar + basic - 1.0);
    let s = i0 * dbar / (basic - 1.0);
    let boundary = [i0, i0 * g1, i0 * g1 * g2];
    let density = core::array::from_fn(|j| {
        kernels.survival[j]
            .iter()
            .map(|dv| boundary[j] * dv)
            .collect::<Vec<f64>>()
    });
    let totals = core::array::from_fn(|j| boundary[j] * kernels.dbar[j]);
    let _ = grid;

    EquilibriumSet {
        dfe_s,
        endemic: Some(Endemic {
            s,
            i0,
            dbar,
            boundary,
            density,
            totals,
        }),
    }
}
