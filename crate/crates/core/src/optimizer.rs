//! Objective, adjoint solve, control characterization and the
//! forward-backward sweep.
//!
//! The adjoint is the exact transpose of the discrete forward step:
//! backward transport with the same per-cell decay factors, boundary
//! traces assembled into the zeta combinations, and the quotient
//! nonlinearity `S E1 / P` differentiated through both its numerator
//! and the population denominator (every compartment dilutes the force
//! of infection). The resulting gradient matches finite differences of
//! the discrete objective to rounding, which is what makes the sweep's
//! stationarity check meaningful.

use alloc::vec;
use alloc::vec::Vec;

use crate::control::{
    Compartment, ControlState, ControlTrajectory, ControlledSimulator, ControlledTrajectory,
    COMPARTMENTS,
};
use crate::math;
use crate::params::{AgeGrid, ModelParams, ParamError};
use crate::simulator::SimError;
use Compartment::*;

/// Costate slice at one time: the susceptible multiplier, one density
/// multiplier per infected compartment and the four boundary-trace
/// combinations.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub t: f64,
    pub lambda_s: f64,
    pub lambda: [Vec<f64>; COMPARTMENTS],
    pub zeta: [f64; 4],
}

/// Boundary traces of the costate at one time node.
#[derive(Debug, Clone, Copy)]
pub struct AdjointNode {
    pub t: f64,
    pub lambda_s: f64,
    /// `lambda_c(t, 0)` for each infected compartment.
    pub lambda0: [f64; COMPARTMENTS],
    /// `zeta_1, zeta_2, zeta_2TF, zeta_3` assembled from the traces and
    /// the control active at this node.
    pub zeta: [f64; 4],
}

/// Backward solve output: traces per node, the objective gradient per
/// control and node, and the unprojected stationary controls.
#[derive(Debug, Clone)]
pub struct AdjointHistory {
    pub nodes: Vec<AdjointNode>,
    /// `dJ/dh_k` at each time node (time-cell scaled).
    pub gradient: [Vec<f64>; 3],
    /// Stationary (pre-projection) control values per node.
    pub stationary: [Vec<f64>; 3],
    /// Full costate slice at t = 0.
    pub initial: AdjointState,
}

/// Sweep configuration. Inactive controls are pinned at zero, which is
/// how the single- and two-control scenarios reuse the full solver.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub relax: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub active: [bool; 3],
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            relax: 0.5,
            tol: 1e-3,
            max_iter: 600,
            active: [true; 3],
        }
    }
}

/// Sweep outcome: the best-objective iterate and its forward run.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub h_star: ControlTrajectory,
    pub j_star: f64,
    pub j_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_forward: ControlledTrajectory,
}

/// Control scenarios для the performance surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    All,
    H1Only,
    H2Only,
    H1H2,
    H1H2Tf,
}

impl Scenario {
    pub fn active(self) -> [bool; 3] {
        match self {
            Scenario::All => [true, true, true],
            Scenario::H1Only => [true, false, false],
            Scenario::H2Only => [false, true, false],
            Scenario::H1H2 => [true, true, false],
            Scenario::H1H2Tf => [true, false, true],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::All => "all",
            Scenario::H1Only => "h1-only",
            Scenario::H2Only => "h2-only",
            Scenario::H1H2 => "h1+h2",
            Scenario::H1H2Tf => "h1+h2TF",
        }
    }

    /// Drop-out tuples spanned by a scenario over the given grid of
    /// probabilities: one axis per active intervention stage, other
    /// entries keep the base value.
    pub fn dropout_tuples(self, base: [f64; 3], p_grid: &[f64]) -> Vec<[f64; 3]> {
        let mut tuples = Vec::new();
        match self {
            Scenario::All => tuples.push(base),
            Scenario::H1Only => {
                for &p1 in p_grid {
                    tuples.push([p1, base[1], base[2]]);
                }
            }
            Scenario::H2Only => {
                for &p2 in p_grid {
                    tuples.push([base[0], p2, base[2]]);
                }
            }
            Scenario::H1H2 => {
                for &p1 in p_grid {
                    for &p2 in p_grid {
                        tuples.push([p1, p2, base[2]]);
                    }
                }
            }
            Scenario::H1H2Tf => {
                for &p1 in p_grid {
                    for &p2tf in p_grid {
                        tuples.push([p1, base[1], p2tf]);
                    }
                }
            }
        }
        tuples
    }
}

/// One evaluated point of a performance surface.
#[derive(Debug, Clone)]
pub struct SurfaceCell {
    pub p_dropout: [f64; 3],
    /// AIDS burden ratio against the uncontrolled run; absent if the
    /// cell's sweep failed outright.
    pub delta: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub j_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimError {
    Sim(SimError),
    /// Trajectory, control and grid node counts disagree.
    Mismatch(&'static str),
    /// No AIDS person-time without control: the ratio is undefined.
    UndefinedPerformance,
}

impl core::fmt::Display for OptimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OptimError::Sim(e) => write!(f, "{e}"),
            OptimError::Mismatch(what) => write!(f, "{what} does not match the time grid"),
            OptimError::UndefinedPerformance => {
                write!(f, "no AIDS person-time accrues without control")
            }
        }
    }
}

impl core::error::Error for OptimError {}

impl From<SimError> for OptimError {
    fn from(e: SimError) -> Self {
        OptimError::Sim(e)
    }
}

impl From<ParamError> for OptimError {
    fn from(e: ParamError) -> Self {
        OptimError::Sim(SimError::Params(e))
    }
}

fn time_weight(node: usize, steps: usize) -> f64 {
    if node == 0 || node == steps {
        0.5
    } else {
        1.0
    }
}

/// Default sweep start: active controls at half their bound.
pub fn interior_start(params: &ModelParams, grid: &AgeGrid, active: [bool; 3]) -> ControlTrajectory {
    let h0 = core::array::from_fn(|k| if active[k] { params.h_max[k] / 2.0 } else { 0.0 });
    ControlTrajectory::constant(h0, grid.time_nodes())
}

/// Projects values onto the admissible box, zeroing inactive controls.
pub fn project(values: &[Vec<f64>; 3], h_max: &[f64; 3], active: [bool; 3]) -> ControlTrajectory {
    let h = core::array::from_fn(|k| {
        values[k]
            .iter()
            .map(|v| if active[k] { v.max(0.0).min(h_max[k]) } else { 0.0 })
            .collect()
    });
    ControlTrajectory { h }
}

impl ControlledSimulator {
    fn check_lengths(
        &self,
        traj: &ControlledTrajectory,
        h: &ControlTrajectory,
    ) -> Result<usize, OptimError> {
        let steps = self.grid().time_steps();
        if traj.points.len() != steps + 1 {
            return Err(OptimError::Mismatch("trajectory"));
        }
        if h.nodes() != steps + 1 {
            return Err(OptimError::Mismatch("control sampling"));
        }
        Ok(steps)
    }

    /// Objective functional: the balanced AIDS inflow plus quadratic
    /// control costs, trapezoid in time (the inner age integral is the
    /// recorded stage-3 inflow).
    pub fn objective(
        &self,
        traj: &ControlledTrajectory,
        h: &ControlTrajectory,
    ) -> Result<f64, OptimError> {
        self.check_lengths(traj, h)?;
        let dt = self.grid().da;
        let params = self.params();
        let e3: Vec<f64> = traj.points.iter().map(|pt| pt.e3).collect();
        let mut j = params.cost_b * math::trapezoid(&e3, dt);
        for k in 0..3 {
            let sq: Vec<f64> = h.h[k].iter().map(|v| v * v).collect();
            j += params.cost_c[k] * math::trapezoid(&sq, dt);
        }
        Ok(j)
    }

    /// Integrates the costate backward from the zero terminal condition,
    /// assembling the boundary traces, the objective gradient and the
    /// stationary controls on the way.
    pub fn solve_adjoint(
        &self,
        traj: &ControlledTrajectory,
        h: &ControlTrajectory,
    ) -> Result<AdjointHistory, OptimError> {
        let steps = self.check_lengths(traj, h)?;
        let grid = *self.grid();
        let params = self.params().clone();
        let dt = grid.da;
        let age_nodes = grid.age_nodes();
        let cells = grid.age_cells();
        let cost_b = params.cost_b;
        let cost_c = params.cost_c;
        let [p1, p2, p2tf] = params.p_dropout;
        let beta = self.beta_value();
        let (eps, dlt) = self.relative_infectiousness();
        // dE1/dm per compartment.
        let e1_coef: [f64; COMPARTMENTS] = [beta, beta, 0.0, eps * beta, eps * beta, 0.0, dlt * beta];

        // Raw adjoint arrays hold dJ/d(node value); traces are reported
        // per unit density, i.e. divided by the cell width.
        let mut lam: [Vec<f64>; COMPARTMENTS] = core::array::from_fn(|_| vec![0.0; age_nodes]);
        let mut scratch: [Vec<f64>; COMPARTMENTS] = core::array::from_fn(|_| vec![0.0; age_nodes]);
        let mut lam_s = 0.0_f64;

        // Terminal stage cost: J's integrand at the final node depends
        // on the final state.
        let wt_final = time_weight(steps, steps);
        for (c, gw) in [(I2, 2), (I2Tf, 3)] {
            let weights = self.gamma_weights(gw);
            for i in 0..cells {
                lam[c.index()][i] += dt * wt_final * cost_b * weights[i];
            }
        }

        let mut nodes_out: Vec<AdjointNode> = vec![
            AdjointNode {
                t: 0.0,
                lambda_s: 0.0,
                lambda0: [0.0; COMPARTMENTS],
                zeta: [0.0; 4],
            };
            steps + 1
        ];
        let mut gradient: [Vec<f64>; 3] = core::array::from_fn(|_| vec![0.0; steps + 1]);
        let mut stationary: [Vec<f64>; 3] = core::array::from_fn(|_| vec![0.0; steps + 1]);

        let snapshot = |lam: &[Vec<f64>; COMPARTMENTS],
                        lambda_s: f64,
                        node: usize,
                        s_now: f64,
                        h_now: [f64; 3]| {
            let lambda0: [f64; COMPARTMENTS] = core::array::from_fn(|c| lam[c][0] / dt);
            let [h1, h2, h2tf] = h_now;
            let zeta = [
                s_now
                    * ((1.0 - h1) * lambda0[I1.index()]
                        + p1 * h1 * lambda0[I1Tf.index()]
                        + (1.0 - p1) * h1 * lambda0[I1Ts.index()]),
                (1.0 - h2) * lambda0[I2.index()]
                    + p2 * h2 * lambda0[I2Tf.index()]
                    + (1.0 - p2) * h2 * lambda0[I2Ts.index()],
                (1.0 - h2tf) * lambda0[I2.index()]
                    + p2tf * h2tf * lambda0[I2Tf.index()]
                    + (1.0 - p2tf) * h2tf * lambda0[I2Ts.index()],
                lambda0[I3.index()],
            ];
            AdjointNode {
                t: grid.time(node),
                lambda_s,
                lambda0,
                zeta,
            }
        };

        nodes_out[steps] = snapshot(&lam, lam_s, steps, traj.points[steps].s, h.at(steps));
        for k in 0..3 {
            gradient[k][steps] = dt * wt_final * 2.0 * cost_c[k] * h.h[k][steps];
            stationary[k][steps] = 0.0;
        }

        for n in (0..steps).rev() {
            let pt = &traj.points[n];
            let [h1, h2, h2tf] = h.at(n);
            let wt = time_weight(n, steps);
            let flux = pt.s * pt.e1 / pt.p;

            // Gradient and stationarity use the downstream traces.
            let kappa1 = (lam[I1.index()][0]
                - p1 * lam[I1Tf.index()][0]
                - (1.0 - p1) * lam[I1Ts.index()][0])
                / dt;
            let kappa2 = (lam[I2.index()][0]
                - p2 * lam[I2Tf.index()][0]
                - (1.0 - p2) * lam[I2Ts.index()][0])
                / dt;
            let kappa2tf = (lam[I2.index()][0]
                - p2tf * lam[I2Tf.index()][0]
                - (1.0 - p2tf) * lam[I2Ts.index()][0])
                / dt;
            let pairs = [(flux, kappa1, h1), (pt.e2, kappa2, h2), (pt.e2tf, kappa2tf, h2tf)];
            for (k, (force, kappa, hk)) in pairs.into_iter().enumerate() {
                gradient[k][n] = dt * (wt * 2.0 * cost_c[k] * hk - force * kappa);
                stationary[k][n] = force * kappa / (2.0 * cost_c[k] * wt);
            }

            // Transpose the boundary fills and the susceptible update.
            let fbar = -dt * lam_s
                + (1.0 - h1) * lam[I1.index()][0]
                + p1 * h1 * lam[I1Tf.index()][0]
                + (1.0 - p1) * h1 * lam[I1Ts.index()][0];
            let e2bar = (1.0 - h2) * lam[I2.index()][0]
                + p2 * h2 * lam[I2Tf.index()][0]
                + (1.0 - p2) * h2 * lam[I2Ts.index()][0];
            let e2tfbar = (1.0 - h2tf) * lam[I2.index()][0]
                + p2tf * h2tf * lam[I2Tf.index()][0]
                + (1.0 - p2tf) * h2tf * lam[I2Ts.index()][0];
            // Dynamics plus the stage cost share one E3 functional.
            let e3bar = lam[I3.index()][0] + dt * wt * cost_b;
            let e1bar = fbar * pt.s / pt.p;
            let pbar = -fbar * flux / pt.p;
            let next_lam_s = lam_s * (1.0 - params.mu * dt) + fbar * pt.e1 / pt.p + pbar;

            for c in Compartment::ALL {
                let ci = c.index();
                let decay = &self.scheme(c).decay;
                let mass_w = &self.scheme(c).mass;
                let gamma_src: Option<(&[f64], f64)> = match c {
                    I1 => Some((self.gamma_weights(0), e2bar)),
                    I1Tf => Some((self.gamma_weights(1), e2tfbar)),
                    I2 => Some((self.gamma_weights(2), e3bar)),
                    I2Tf => Some((self.gamma_weights(3), e3bar)),
                    _ => None,
                };
                let out = &mut scratch[ci];
                let src_coef = pbar + e1_coef[ci] * e1bar;
                for i in 0..cells {
                    let mut v = decay[i] * lam[ci][i + 1] + mass_w[i] * src_coef;
                    if let Some((gw, acc)) = gamma_src {
                        v += gw[i] * acc;
                    }
                    out[i] = v;
                }
                // The oldest node is absorbed and measured by nothing.
                out[cells] = 0.0;
            }
            core::mem::swap(&mut lam, &mut scratch);
            lam_s = next_lam_s;
            nodes_out[n] = snapshot(&lam, lam_s, n, pt.s, [h1, h2, h2tf]);
        }

        let initial = AdjointState {
            t: 0.0,
            lambda_s: lam_s,
            lambda: core::array::from_fn(|c| lam[c].iter().map(|v| v / dt).collect()),
            zeta: nodes_out[0].zeta,
        };

        Ok(AdjointHistory {
            nodes: nodes_out,
            gradient,
            stationary,
            initial,
        })
    }

    /// Projected characterization of the stationary control.
    pub fn characterize(&self, adjoint: &AdjointHistory, active: [bool; 3]) -> ControlTrajectory {
        project(&adjoint.stationary, &self.params().h_max, active)
    }

    /// Forward-backward sweep, returning the best-objective iterate.
    /// Non-convergence is reported, not raised.
    ///
    /// The relaxed update `(1 - a) h + a P(h_hat)` moves along the
    /// projected negative gradient (the characterization is the exact
    /// stationary point of the quadratic control cost against the
    /// transposed dynamics), so each iterate backtracks `a` from
    /// `opts.relax` until the objective decreases. Convergence is the
    /// step-size-free fixed-point residual `|P(h_hat(h)) - h|` dropping
    /// below `tol`, which a plain fixed-relaxation sweep only reaches
    /// when its own update stops moving.
    pub fn sweep(
        &self,
        initial: &ControlState,
        h0: &ControlTrajectory,
        opts: &SweepOptions,
    ) -> Result<SweepResult, OptimError> {
        assert!(opts.relax > 0.0 && opts.relax <= 1.0, "relax must lie in (0, 1]");
        assert!(opts.tol > 0.0, "tol must be positive");
        let mut h = project(&h0.h, &self.params().h_max, opts.active);
        let mut traj = self.run(initial, &h)?;
        let mut j = self.objective(&traj, &h)?;
        let mut j_history = vec![j];
        let mut converged = false;
        let mut iterations = 0;

        for iter in 1..=opts.max_iter {
            iterations = iter;
            let adjoint = self.solve_adjoint(&traj, &h)?;
            let candidate = self.characterize(&adjoint, opts.active);
            let residual = candidate.max_change(&h) / candidate.max_norm().max(1e-12);
            if residual < opts.tol {
                converged = true;
                break;
            }

            let mut alpha = opts.relax;
            let mut accepted = false;
            while alpha > opts.relax * 1e-12 {
                let mut trial = h.clone();
                for k in 0..3 {
                    for n in 0..trial.h[k].len() {
                        trial.h[k][n] = alpha * candidate.h[k][n] + (1.0 - alpha) * h.h[k][n];
                    }
                }
                let trial_traj = self.run(initial, &trial)?;
                let trial_j = self.objective(&trial_traj, &trial)?;
                if trial_j <= j {
                    h = trial;
                    traj = trial_traj;
                    j = trial_j;
                    j_history.push(j);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // No descent along the sweep direction at any step size:
                // numerically stationary.
                converged = residual < opts.tol;
                break;
            }
        }

        let final_forward = traj;
        Ok(SweepResult {
            h_star: h,
            j_star: j,
            j_history,
            iterations,
            converged,
            final_forward,
        })
    }

    /// AIDS person-time under `h` relative to the uncontrolled run.
    pub fn performance(
        &self,
        initial: &ControlState,
        h: &ControlTrajectory,
    ) -> Result<f64, OptimError> {
        let numerator = self.run(initial, h)?.i3_time_integral();
        let denominator = self.uncontrolled_aids_burden(initial)?;
        Ok(numerator / denominator)
    }

    /// AIDS person-time of the no-control run (the performance
    /// denominator; it does not depend on the drop-out probabilities).
    pub fn uncontrolled_aids_burden(&self, initial: &ControlState) -> Result<f64, OptimError> {
        let zero = ControlTrajectory::zero(self.grid().time_nodes());
        let burden = self.run(initial, &zero)?.i3_time_integral();
        if burden <= 0.0 {
            return Err(OptimError::UndefinedPerformance);
        }
        Ok(burden)
    }
}

/// Optimizes one drop-out tuple of a scenario and reports its
/// performance against the shared uncontrolled burden.
pub fn performance_cell(
    params: &ModelParams,
    grid: &AgeGrid,
    scenario: Scenario,
    p_dropout: [f64; 3],
    prevalence_pct: f64,
    denominator: f64,
    opts: &SweepOptions,
) -> Result<SurfaceCell, OptimError> {
    let mut cell_params = params.clone();
    cell_params.p_dropout = p_dropout;
    let sim = ControlledSimulator::new(&cell_params, grid)?;
    let initial = sim.initial_state(prevalence_pct)?;
    let options = SweepOptions {
        active: scenario.active(),
        ..*opts
    };
    let h0 = interior_start(&cell_params, grid, options.active);
    let sweep = sim.sweep(&initial, &h0, &options)?;
    let delta = sweep.final_forward.i3_time_integral() / denominator;
    Ok(SurfaceCell {
        p_dropout,
        delta: Some(delta),
        converged: sweep.converged,
        iterations: sweep.iterations,
        j_star: sweep.j_star,
    })
}

/// Sequential surface over the scenario's drop-out grid; failed cells
/// are marked rather than aborting the sweep. The CLI distributes cells
/// across workers with the same per-cell entry point.
pub fn performance_surface(
    params: &ModelParams,
    grid: &AgeGrid,
    scenario: Scenario,
    p_grid: &[f64],
    prevalence_pct: f64,
    opts: &SweepOptions,
) -> Result<Vec<SurfaceCell>, OptimError> {
    let sim = ControlledSimulator::new(params, grid)?;
    let initial = sim.initial_state(prevalence_pct)?;
    let denominator = sim.uncontrolled_aids_burden(&initial)?;
    let tuples = scenario.dropout_tuples(params.p_dropout, p_grid);
    let mut cells = Vec::with_capacity(tuples.len());
    for p in tuples {
        match performance_cell(params, grid, scenario, p, prevalence_pct, denominator, opts) {
            Ok(cell) => cells.push(cell),
            Err(_) => cells.push(SurfaceCell {
                p_dropout: p,
                delta: None,
                converged: false,
                iterations: 0,
                j_star: f64::NAN,
            }),
        }
    }
    Ok(cells)
}
