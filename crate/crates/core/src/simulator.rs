//! Forward solver for the base three-stage model.
//!
//! Method of characteristics with equal age and time steps: each step the
//! densities shift one cell with exact exponential decay, the boundary
//! cells are refilled from the renewal fluxes evaluated at the step
//! start, and the susceptible pool advances by explicit Euler. Mass
//! leaving past the truncation age is absorbed.

use alloc::vec;
use alloc::vec::Vec;

use crate::cells::{weighted_sum, CellScheme};
use crate::math;
use crate::params::{AgeGrid, ModelParams, ParamError, Stage};

/// Susceptibles plus the three stage densities at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicState {
    pub t: f64,
    pub s: f64,
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
    pub i3: Vec<f64>,
}

impl EpidemicState {
    pub fn densities(&self) -> [&[f64]; 3] {
        [&self.i1, &self.i2, &self.i3]
    }
}

/// Renewal fluxes: force of infection and the two progression inflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forces {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

/// One recorded time node: susceptibles, stage totals, population and
/// forces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub s: f64,
    pub i: [f64; 3],
    pub p: f64,
    pub e: [f64; 3],
}

/// Full recorded run, with optional density snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub snapshots: Vec<EpidemicState>,
}

impl Trajectory {
    /// Time integral of the AIDS stage total over the recorded horizon.
    pub fn i3_time_integral(&self) -> f64 {
        let series: Vec<f64> = self.points.iter().map(|pt| pt.i[2]).collect();
        let dt = if self.points.len() > 1 {
            self.points[1].t - self.points[0].t
        } else {
            0.0
        };
        math::trapezoid(&series, dt)
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least one node")
    }
}

/// Solver failure: the state left the physical region, which signals a
/// step too large for the current rates rather than a recoverable
/// condition.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Params(ParamError),
    /// Prevalence must lie in [0, 100).
    BadPrevalence(f64),
    /// State arrays do not match the grid node count.
    GridMismatch { expected: usize, got: usize },
    /// A state component became non-finite or non-positive.
    Degenerate { what: &'static str, t: f64, value: f64 },
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::Params(e) => write!(f, "{e}"),
            SimError::BadPrevalence(v) => {
                write!(f, "prevalence must lie in [0, 100) percent, got {v}")
            }
            SimError::GridMismatch { expected, got } => {
                write!(f, "state has {got} age nodes, grid needs {expected}")
            }
            SimError::Degenerate { what, t, value } => write!(
                f,
                "{what} became {value} at t = {t}; reduce da or check parameters"
            ),
        }
    }
}

impl core::error::Error for SimError {}

impl From<ParamError> for SimError {
    fn from(e: ParamError) -> Self {
        SimError::Params(e)
    }
}

/// Precomputed transport factors and quadrature weights for one run
/// configuration. Immutable once built; a single instance can drive any
/// number of independent runs.
pub struct Simulator {
    params: ModelParams,
    grid: AgeGrid,
    epsilon: f64,
    delta: f64,
    beta: f64,
    schemes: [CellScheme; 3],
    gamma_flux: [Vec<f64>; 2],
}

impl Simulator {
    pub fn new(params: &ModelParams, grid: &AgeGrid) -> Result<Self, SimError> {
        params.validate()?;
        grid.check_covers(params)?;
        let schemes = [
            CellScheme::new(grid, Some(&params.gamma_rate(Stage::Primary, false)?), params.d[0]),
            CellScheme::new(grid, Some(&params.gamma_rate(Stage::Latent, false)?), params.d[1]),
            CellScheme::new(grid, None, params.d[2]),
        ];
        let gamma_flux = [
            schemes[0].flux_weights(grid, &params.gamma_rate(Stage::Primary, false)?),
            schemes[1].flux_weights(grid, &params.gamma_rate(Stage::Latent, false)?),
        ];
        Ok(Self {
            epsilon: params.epsilon_eff(),
            delta: params.delta_eff(),
            beta: params.beta_of_age(Stage::Primary, 0.0),
            params: params.clone(),
            grid: *grid,
            schemes,
            gamma_flux,
        })
    }

    pub fn grid(&self) -> &AgeGrid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Initial data: susceptibles at the inflow balance and the two
    /// seeded stage densities shaped as piecewise exponentials that break
    /// at the stage durations (slope `mu` before, `2 mu` after, shifted
    /// to stay continuous). The AIDS stage starts empty. The scaling
    /// constants split the requested prevalence equally between the two
    /// seeded stages in the solver's own mass quadrature.
    pub fn initial_state(&self, prevalence_pct: f64) -> Result<EpidemicState, SimError> {
        if !(0.0..100.0).contains(&prevalence_pct) {
            return Err(SimError::BadPrevalence(prevalence_pct));
        }
        let nodes = self.grid.age_nodes();
        let mu = self.params.mu;
        let shape = |break_at: f64| -> Vec<f64> {
            (0..nodes)
                .map(|i| {
                    let a = self.grid.age(i);
                    if a <= break_at {
                        math::exp(-mu * a)
                    } else {
                        math::exp(-mu * (2.0 * a - break_at))
                    }
                })
                .collect()
        };
        let s0 = self.params.lambda_in / mu;
        let l10 = shape(self.params.stage_duration[0]);
        let l20 = shape(self.params.stage_duration[1]);
        // Total infected mass = (prev/100) N0 with N0 = S0 + that mass.
        let n0 = s0 / (1.0 - prevalence_pct / 100.0);
        let per_stage = 0.5 * prevalence_pct / 100.0 * n0;
        let scale = |profile: Vec<f64>, norm: f64| -> Vec<f64> {
            if per_stage == 0.0 {
                vec![0.0; nodes]
            } else {
                profile.into_iter().map(|v| v * per_stage / norm).collect()
            }
        };
        let norm1 = self.schemes[0].mass_of(&l10);
        let norm2 = self.schemes[1].mass_of(&l20);
        Ok(EpidemicState {
            t: 0.0,
            s: s0,
            i1: scale(l10, norm1),
            i2: scale(l20, norm2),
            i3: vec![0.0; nodes],
        })
    }

    /// Stage-1-only seeding with support below the stage duration: every
    /// initial infection is recent. No seeded mass sits past a
    /// progression threshold, so the stage-2 and AIDS arrival delays are
    /// structural (exactly zero inflow before the durations elapse) and
    /// the discrete population bound holds without a seeding transient.
    pub fn initial_state_recent(&self, prevalence_pct: f64) -> Result<EpidemicState, SimError> {
        if !(0.0..100.0).contains(&prevalence_pct) {
            return Err(SimError::BadPrevalence(prevalence_pct));
        }
        let nodes = self.grid.age_nodes();
        let mu = self.params.mu;
        let t1 = self.params.stage_duration[0];
        let profile: Vec<f64> = (0..nodes)
            .map(|i| {
                let a = self.grid.age(i);
                if a < t1 {
                    math::exp(-mu * a)
                } else {
                    0.0
                }
            })
            .collect();
        let s0 = self.params.lambda_in / mu;
        let n0 = s0 / (1.0 - prevalence_pct / 100.0);
        let target = prevalence_pct / 100.0 * n0;
        let norm = self.schemes[0].mass_of(&profile);
        let i1 = if target == 0.0 {
            vec![0.0; nodes]
        } else {
            profile.into_iter().map(|v| v * target / norm).collect()
        };
        Ok(EpidemicState {
            t: 0.0,
            s: s0,
            i1,
            i2: vec![0.0; nodes],
            i3: vec![0.0; nodes],
        })
    }

    pub fn stage_masses(&self, state: &EpidemicState) -> [f64; 3] {
        [
            self.schemes[0].mass_of(&state.i1),
            self.schemes[1].mass_of(&state.i2),
            self.schemes[2].mass_of(&state.i3),
        ]
    }

    pub fn population(&self, state: &EpidemicState) -> f64 {
        let m = self.stage_masses(state);
        state.s + m[0] + m[1] + m[2]
    }

    /// Renewal fluxes of the current state.
    pub fn forces(&self, state: &EpidemicState) -> Forces {
        let m = self.stage_masses(state);
        Forces {
            e1: self.beta * (m[0] + self.epsilon * m[1] + self.delta * m[2]),
            e2: weighted_sum(&self.gamma_flux[0], &state.i1),
            e3: weighted_sum(&self.gamma_flux[1], &state.i2),
        }
    }

    fn observe(&self, state: &EpidemicState) -> TrajectoryPoint {
        let m = self.stage_masses(state);
        let f = self.forces(state);
        TrajectoryPoint {
            t: state.t,
            s: state.s,
            i: m,
            p: state.s + m[0] + m[1] + m[2],
            e: [f.e1, f.e2, f.e3],
        }
    }

    fn check_state(&self, state: &EpidemicState) -> Result<(), SimError> {
        let expected = self.grid.age_nodes();
        for d in state.densities() {
            if d.len() != expected {
                return Err(SimError::GridMismatch {
                    expected,
                    got: d.len(),
                });
            }
        }
        Ok(())
    }

    /// One step of size `da`: boundary values and the susceptible update
    /// use the fluxes at the step start (explicit scheme), densities
    /// shift one cell with exact decay. Returns the observation of the
    /// pre-step node.
    pub fn step(&self, state: &mut EpidemicState) -> Result<TrajectoryPoint, SimError> {
        self.check_state(state)?;
        let point = self.observe(state);
        let guard = |what: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SimError::Degenerate {
                    what,
                    t: point.t,
                    value: v,
                })
            }
        };
        guard("force of infection", point.e[0])?;
        guard("stage-2 inflow", point.e[1])?;
        guard("stage-3 inflow", point.e[2])?;
        if !(point.p.is_finite() && point.p > 0.0) {
            return Err(SimError::Degenerate {
                what: "population",
                t: point.t,
                value: point.p,
            });
        }

        let dt = self.grid.da;
        let flux = state.s * point.e[0] / point.p;
        let s_next = state.s + dt * (self.params.lambda_in - self.params.mu * state.s - flux);
        if !(s_next.is_finite() && s_next > 0.0) {
            return Err(SimError::Degenerate {
                what: "susceptibles",
                t: point.t,
                value: s_next,
            });
        }

        shift(&mut state.i1, &self.schemes[0].decay, flux);
        shift(&mut state.i2, &self.schemes[1].decay, point.e[1]);
        shift(&mut state.i3, &self.schemes[2].decay, point.e[2]);
        state.s = s_next;
        state.t += dt;
        Ok(point)
    }

    /// Integrates from `initial` to the grid horizon, recording every
    /// node; clones the full state at the requested snapshot times.
    pub fn run(
        &self,
        initial: &EpidemicState,
        snapshot_times: &[f64],
    ) -> Result<Trajectory, SimError> {
        let mut state = initial.clone();
        let steps = self.grid.time_steps();
        let snap_nodes: Vec<usize> = snapshot_times
            .iter()
            .map(|t| (t / self.grid.da + 0.5) as usize)
            .collect();
        let mut points = Vec::with_capacity(steps + 1);
        let mut snapshots = Vec::with_capacity(snap_nodes.len());
        for n in 0..steps {
            if snap_nodes.contains(&n) {
                snapshots.push(state.clone());
            }
            points.push(self.step(&mut state)?);
        }
        if snap_nodes.contains(&steps) {
            snapshots.push(state.clone());
        }
        points.push(self.observe(&state));
        Ok(Trajectory { points, snapshots })
    }
}

/// Shift a density one cell towards older ages with exact per-cell decay
/// and refill the boundary node. The oldest cell's content leaves the
/// domain (absorbing truncation).
pub(crate) fn shift(density: &mut [f64], decay: &[f64], boundary: f64) {
    for i in (1..density.len()).rev() {
        density[i] = density[i - 1] * decay[i - 1];
    }
    density[0] = boundary;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels;

    fn reference() -> (ModelParams, AgeGrid) {
        (
            ModelParams::reference(),
            AgeGrid::new(0.5, 600.0, 420.0).unwrap(),
        )
    }

    #[test]
    fn initial_state_prevalence_split() {
        let (p, g) = reference();
        let sim = Simulator::new(&p, &g).unwrap();

        let zero = sim.initial_state(0.0).unwrap();
        assert_eq!(zero.s, 900.0);
        assert!(zero.i1.iter().chain(&zero.i2).chain(&zero.i3).all(|v| *v == 0.0));

        let seeded = sim.initial_state(0.05).unwrap();
        let m = sim.stage_masses(&seeded);
        let n0 = sim.population(&seeded);
        assert!((m[0] - m[1]).abs() < 1e-12 * m[0]);
        assert!((m[0] - 0.00025 * n0).abs() < 1e-12 * n0);
        assert_eq!(m[2], 0.0);
        // Realized prevalence is exact in the solver's own quadrature.
        assert!(((m[0] + m[1]) / n0 * 100.0 - 0.05).abs() < 1e-12);

        assert!(sim.initial_state(-1.0).is_err());
        assert!(sim.initial_state(100.0).is_err());
    }

    #[test]
    fn seed_profile_continuous_at_break() {
        let (p, _) = reference();
        // Both branch formulas agree at the breakpoint.
        let t1 = p.stage_duration[0];
        let left = (-p.mu * t1).exp();
        let right = (-p.mu * (2.0 * t1 - t1)).exp();
        assert!((left - right).abs() < 1e-15);

        // And the sampled profile has no jump across it.
        let g = AgeGrid::new(0.1, 600.0, 420.0).unwrap();
        let sim = Simulator::new(&p, &g).unwrap();
        let state = sim.initial_state(0.05).unwrap();
        let node = (t1 / g.da) as usize;
        let ratio = state.i1[node + 1] / state.i1[node];
        assert!(ratio < 1.0 && ratio > (-2.0 * p.mu * g.da).exp() - 1e-9);
    }

    #[test]
    fn disease_free_step_is_euler_exact() {
        let (p, g) = reference();
        let sim = Simulator::new(&p, &g).unwrap();
        let mut state = sim.initial_state(0.0).unwrap();
        state.s = 500.0;
        let expected = 500.0 + g.da * (p.lambda_in - p.mu * 500.0);
        sim.step(&mut state).unwrap();
        assert_eq!(state.s, expected);
        assert!(state.i1.iter().all(|v| *v == 0.0));
        assert!(state.i2.iter().all(|v| *v == 0.0));
        assert!(state.i3.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_infection_subspace_invariant() {
        let (p, mut g) = reference();
        g.t_final = 60.0;
        let sim = Simulator::new(&p, &g).unwrap();
        let initial = sim.initial_state(0.0).unwrap();
        let traj = sim.run(&initial, &[]).unwrap();
        for pt in &traj.points {
            assert_eq!(pt.i, [0.0; 3]);
            assert!(pt.s <= 900.0 + 1e-9);
        }
        assert!(traj.last().s <= 900.0);
    }

    #[test]
    fn endemic_equilibrium_is_a_fixed_point() {
        let p = ModelParams::reference();
        let g = AgeGrid::new(0.1, 600.0, 420.0).unwrap();
        let sim = Simulator::new(&p, &g).unwrap();
        let k = kernels::build_kernels(&p, &g);
        let endemic = kernels::equilibria(&k, &p, &g).endemic.unwrap();

        let mut state = EpidemicState {
            t: 0.0,
            s: endemic.s,
            i1: endemic.density[0].clone(),
            i2: endemic.density[1].clone(),
            i3: endemic.density[2].clone(),
        };
        let before = sim.observe(&state);
        sim.step(&mut state).unwrap();
        let after = sim.observe(&state);

        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        assert!(rel(after.s, before.s) < 1e-8);
        for j in 0..3 {
            assert!(rel(after.i[j], before.i[j]) < 1e-8, "stage {j} drifted");
        }
        // Boundary inflows reproduce the equilibrium boundary values.
        assert!(rel(state.i1[0], endemic.boundary[0]) < 1e-8);
        assert!(rel(state.i2[0], endemic.boundary[1]) < 1e-8);
        assert!(rel(state.i3[0], endemic.boundary[2]) < 1e-8);
    }

    #[test]
    fn aids_stays_empty_for_a_full_stage_duration() {
        let (p, mut g) = reference();
        g.t_final = 140.0;
        let sim = Simulator::new(&p, &g).unwrap();
        let initial = sim.initial_state_recent(0.05).unwrap();
        let traj = sim.run(&initial, &[]).unwrap();
        for pt in &traj.points {
            if pt.t <= p.stage_duration[1] {
                assert!(
                    pt.i[2] <= 1e-12,
                    "I3 = {} at t = {} before the stage-2 duration",
                    pt.i[2],
                    pt.t
                );
            }
        }
        assert!(traj.last().i[2] > 0.0, "AIDS inflow never arrived");
    }

    #[test]
    fn population_decays_without_recruitment() {
        let (mut p, _) = reference();
        // Vanishing inflow and no transmission: pure outflow cascade.
        p.lambda_in = 1e-9;
        p.rho0 = 0.0;
        let g = AgeGrid::new(0.1, 600.0, 120.0).unwrap();
        let sim = Simulator::new(&p, &g).unwrap();
        let initial = sim.initial_state(0.05).unwrap();
        let traj = sim.run(&initial, &[]).unwrap();
        for w in traj.points.windows(2) {
            assert!(w[1].p < w[0].p);
        }
    }

    #[test]
    fn nonnegative_and_bounded_population() {
        let (p, _) = reference();
        let g = AgeGrid::new(0.1, 600.0, 300.0).unwrap();
        let sim = Simulator::new(&p, &g).unwrap();
        let initial = sim.initial_state(0.05).unwrap();
        let bound = sim.population(&initial).max(p.lambda_in / p.mu);
        let traj = sim.run(&initial, &[]).unwrap();
        for pt in &traj.points {
            assert!(pt.s > 0.0);
            assert!(pt.i.iter().all(|m| *m >= 0.0));
            assert!(pt.p <= bound * (1.0 + 1e-10), "P = {} at t = {}", pt.p, pt.t);
        }
    }

    #[test]
    fn volterra_consistency_along_characteristics() {
        let (p, mut g) = reference();
        g.t_final = 90.0;
        let sim = Simulator::new(&p, &g).unwrap();
        let k = kernels::build_kernels(&p, &g);
        let initial = sim.initial_state(0.05).unwrap();
        let horizon = (90.0 / g.da + 0.5) as usize;
        let snapshot_t = g.time(horizon);
        let traj = sim.run(&initial, &[snapshot_t]).unwrap();
        let state = &traj.snapshots[0];

        for &age_node in &[1usize, 37, 90, 140] {
            // The boundary at age 0, time n holds the flux of node n - 1
            // (explicit fill), so age k at the horizon was injected at
            // node horizon - k - 1.
            let born = horizon - age_node - 1;
            let pt = &traj.points[born];
            let flux = pt.s * pt.e[0] / pt.p;
            let expected = flux * k.survival[0][age_node];
            let got = state.i1[age_node];
            assert!(
                (got - expected).abs() <= 1e-12 * expected.abs().max(1e-300),
                "Volterra mismatch at age node {age_node}"
            );
        }
    }

    #[test]
    fn first_order_in_step_size() {
        let mut p = ModelParams::reference();
        // Keep the stage break on every grid used here.
        p.stage_duration[0] = 3.0;
        let run = |da: f64| -> f64 {
            let g = AgeGrid::new(da, 600.0, 150.0).unwrap();
            let sim = Simulator::new(&p, &g).unwrap();
            let initial = sim.initial_state_recent(0.05).unwrap();
            sim.run(&initial, &[]).unwrap().last().i[0]
        };
        let coarse = run(0.2);
        let fine = run(0.1);
        assert!(
            (coarse - fine).abs() <= 1.0 * 0.2,
            "halving the step moved I1 by {}",
            coarse - fine
        );
    }
}
