//! Eight-compartment extension with stage-specific ART routing.
//!
//! Treatment splits each stage entry three ways: untreated, treatment
//! drop-out (TF, progressing twice as fast through a halved stage
//! duration) and treatment success (TS, never progressing). Success
//! compartments do not transmit; drop-outs transmit like their stage.

use alloc::vec;
use alloc::vec::Vec;

use crate::cells::{weighted_sum, CellScheme};
use crate::params::{AgeGrid, ModelParams, ParamError, Stage, StepRate};
use crate::simulator::{shift, EpidemicState, SimError};

/// Infected compartments of the controlled system, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compartment {
    I1,
    I1Tf,
    I1Ts,
    I2,
    I2Tf,
    I2Ts,
    I3,
}

pub const COMPARTMENTS: usize = 7;

pub use Compartment::*;

impl Compartment {
    pub const ALL: [Compartment; COMPARTMENTS] = [I1, I1Tf, I1Ts, I2, I2Tf, I2Ts, I3];

    pub const fn index(self) -> usize {
        self as usize
    }
}

/// Susceptibles plus the seven infected densities at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    pub t: f64,
    pub s: f64,
    pub dens: [Vec<f64>; COMPARTMENTS],
}

impl ControlState {
    /// Embeds a base-model state with empty treatment compartments.
    pub fn from_base(state: &EpidemicState) -> Self {
        let nodes = state.i1.len();
        let zero = vec![0.0; nodes];
        Self {
            t: state.t,
            s: state.s,
            dens: [
                state.i1.clone(),
                zero.clone(),
                zero.clone(),
                state.i2.clone(),
                zero.clone(),
                zero,
                state.i3.clone(),
            ],
        }
    }
}

/// Force of infection and the three progression inflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlForces {
    pub e1: f64,
    pub e2: f64,
    pub e2tf: f64,
    pub e3: f64,
}

/// The three controls sampled on the time nodes.
///
/// The value at node `n` applies on `[t_n, t_{n+1})` (piecewise-constant,
/// left-evaluated); the terminal node's value never drives the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    pub h: [Vec<f64>; 3],
}

impl ControlTrajectory {
    pub fn constant(values: [f64; 3], nodes: usize) -> Self {
        Self {
            h: [
                vec![values[0]; nodes],
                vec![values[1]; nodes],
                vec![values[2]; nodes],
            ],
        }
    }

    pub fn zero(nodes: usize) -> Self {
        Self::constant([0.0; 3], nodes)
    }

    pub fn nodes(&self) -> usize {
        self.h[0].len()
    }

    pub fn at(&self, node: usize) -> [f64; 3] {
        [self.h[0][node], self.h[1][node], self.h[2][node]]
    }

    /// Checks membership in the admissible set for the given bounds.
    pub fn validate(&self, h_max: &[f64; 3], nodes: usize) -> Result<(), ParamError> {
        use alloc::format;
        for (k, (series, cap)) in self.h.iter().zip(h_max).enumerate() {
            if series.len() != nodes {
                return Err(ParamError::new(
                    "controls",
                    format!(
                        "control {k} has {} samples, the grid has {nodes} time nodes",
                        series.len()
                    ),
                ));
            }
            for (n, v) in series.iter().enumerate() {
                if !(v.is_finite() && (0.0..=*cap).contains(v)) {
                    return Err(ParamError::new(
                        "controls",
                        format!("control {k} at node {n} is {v}, outside [0, {cap}]"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Largest absolute nodewise difference against another trajectory.
    pub fn max_change(&self, other: &Self) -> f64 {
        let mut worst = 0.0_f64;
        for k in 0..3 {
            for (a, b) in self.h[k].iter().zip(&other.h[k]) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn max_norm(&self) -> f64 {
        let mut worst = 0.0_f64;
        for k in 0..3 {
            for v in &self.h[k] {
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}

/// One recorded node of a controlled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlledPoint {
    pub t: f64,
    pub s: f64,
    pub p: f64,
    pub m: [f64; COMPARTMENTS],
    pub e1: f64,
    pub e2: f64,
    pub e2tf: f64,
    pub e3: f64,
}

/// Recorded controlled run; carries everything the adjoint solver needs.
#[derive(Debug, Clone)]
pub struct ControlledTrajectory {
    pub points: Vec<ControlledPoint>,
}

impl ControlledTrajectory {
    /// Time integral of the AIDS stage total.
    pub fn i3_time_integral(&self) -> f64 {
        let series: Vec<f64> = self.points.iter().map(|pt| pt.m[I3.index()]).collect();
        let dt = if self.points.len() > 1 {
            self.points[1].t - self.points[0].t
        } else {
            0.0
        };
        crate::math::trapezoid(&series, dt)
    }

    pub fn last(&self) -> &ControlledPoint {
        self.points.last().expect("trajectory has at least one node")
    }
}

/// Transport factors and flux weights for the controlled system.
pub struct ControlledSimulator {
    params: ModelParams,
    grid: AgeGrid,
    epsilon: f64,
    delta: f64,
    beta: f64,
    schemes: [CellScheme; COMPARTMENTS],
    /// Progression flux weights for I1, I1Tf, I2, I2Tf.
    gamma_w: [Vec<f64>; 4],
}

impl ControlledSimulator {
    pub fn new(params: &ModelParams, grid: &AgeGrid) -> Result<Self, SimError> {
        params.validate()?;
        grid.check_covers(params)?;
        let g1 = params.gamma_rate(Stage::Primary, false)?;
        let g1tf = params.gamma_rate(Stage::Primary, true)?;
        let g2 = params.gamma_rate(Stage::Latent, false)?;
        let g2tf = params.gamma_rate(Stage::Latent, true)?;
        let rates: [(Option<&StepRate>, f64); COMPARTMENTS] = [
            (Some(&g1), params.d[0]),
            (Some(&g1tf), params.d[0]),
            (None, params.d[0]),
            (Some(&g2), params.d[1]),
            (Some(&g2tf), params.d[1]),
            (None, params.d[1]),
            (None, params.d[2]),
        ];
        let schemes = rates.map(|(gamma, d)| CellScheme::new(grid, gamma, d));
        let gamma_w = [
            schemes[I1.index()].flux_weights(grid, &g1),
            schemes[I1Tf.index()].flux_weights(grid, &g1tf),
            schemes[I2.index()].flux_weights(grid, &g2),
            schemes[I2Tf.index()].flux_weights(grid, &g2tf),
        ];
        Ok(Self {
            epsilon: params.epsilon_eff(),
            delta: params.delta_eff(),
            beta: params.beta_of_age(Stage::Primary, 0.0),
            params: params.clone(),
            grid: *grid,
            schemes,
            gamma_w,
        })
    }

    pub fn grid(&self) -> &AgeGrid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub(crate) fn scheme(&self, c: Compartment) -> &CellScheme {
        &self.schemes[c.index()]
    }

    pub(crate) fn gamma_weights(&self, k: usize) -> &[f64] {
        &self.gamma_w[k]
    }

    pub(crate) fn beta_value(&self) -> f64 {
        self.beta
    }

    pub(crate) fn relative_infectiousness(&self) -> (f64, f64) {
        (self.epsilon, self.delta)
    }

    /// Seeded initial data with empty treatment and AIDS compartments.
    pub fn initial_state(&self, prevalence_pct: f64) -> Result<ControlState, SimError> {
        let base = crate::simulator::Simulator::new(&self.params, &self.grid)?
            .initial_state(prevalence_pct)?;
        Ok(ControlState::from_base(&base))
    }

    pub fn masses(&self, state: &ControlState) -> [f64; COMPARTMENTS] {
        core::array::from_fn(|c| self.schemes[c].mass_of(&state.dens[c]))
    }

    pub fn population(&self, state: &ControlState) -> f64 {
        state.s + self.masses(state).iter().sum::<f64>()
    }

    /// Renewal fluxes of the controlled system: drop-outs transmit and
    /// progress (twice as fast), successes do neither.
    pub fn forces(&self, state: &ControlState) -> ControlForces {
        let m = self.masses(state);
        ControlForces {
            e1: self.beta
                * (m[I1.index()]
                    + m[I1Tf.index()]
                    + self.epsilon * (m[I2.index()] + m[I2Tf.index()])
                    + self.delta * m[I3.index()]),
            e2: weighted_sum(&self.gamma_w[0], &state.dens[I1.index()]),
            e2tf: weighted_sum(&self.gamma_w[1], &state.dens[I1Tf.index()]),
            e3: weighted_sum(&self.gamma_w[2], &state.dens[I2.index()])
                + weighted_sum(&self.gamma_w[3], &state.dens[I2Tf.index()]),
        }
    }

    fn observe(&self, state: &ControlState) -> ControlledPoint {
        let m = self.masses(state);
        let f = self.forces(state);
        ControlledPoint {
            t: state.t,
            s: state.s,
            p: state.s + m.iter().sum::<f64>(),
            m,
            e1: f.e1,
            e2: f.e2,
            e2tf: f.e2tf,
            e3: f.e3,
        }
    }

    /// One step under the control values active on this interval.
    pub fn step(
        &self,
        state: &mut ControlState,
        h_now: [f64; 3],
    ) -> Result<ControlledPoint, SimError> {
        let nodes = self.grid.age_nodes();
        for d in &state.dens {
            if d.len() != nodes {
                return Err(SimError::GridMismatch {
                    expected: nodes,
                    got: d.len(),
                });
            }
        }
        let point = self.observe(state);
        for (what, v) in [
            ("force of infection", point.e1),
            ("stage-2 inflow", point.e2),
            ("stage-2 drop-out inflow", point.e2tf),
            ("stage-3 inflow", point.e3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Degenerate {
                    what,
                    t: point.t,
                    value: v,
                });
            }
        }
        if !(point.p.is_finite() && point.p > 0.0) {
            return Err(SimError::Degenerate {
                what: "population",
                t: point.t,
                value: point.p,
            });
        }

        let dt = self.grid.da;
        let flux = state.s * point.e1 / point.p;
        let s_next = state.s + dt * (self.params.lambda_in - self.params.mu * state.s - flux);
        if !(s_next.is_finite() && s_next > 0.0) {
            return Err(SimError::Degenerate {
                what: "susceptibles",
                t: point.t,
                value: s_next,
            });
        }

        let [h1, h2, h2tf] = h_now;
        let p = &self.params.p_dropout;
        let boundary = [
            (1.0 - h1) * flux,
            p[0] * h1 * flux,
            (1.0 - p[0]) * h1 * flux,
            (1.0 - h2) * point.e2 + (1.0 - h2tf) * point.e2tf,
            p[1] * h2 * point.e2 + p[2] * h2tf * point.e2tf,
            (1.0 - p[1]) * h2 * point.e2 + (1.0 - p[2]) * h2tf * point.e2tf,
            point.e3,
        ];
        for (c, dens) in state.dens.iter_mut().enumerate() {
            shift(dens, &self.schemes[c].decay, boundary[c]);
        }
        state.s = s_next;
        state.t += dt;
        Ok(point)
    }

    /// Integrates under `h`, which must be admissible and sampled on the
    /// full time grid.
    pub fn run(
        &self,
        initial: &ControlState,
        h: &ControlTrajectory,
    ) -> Result<ControlledTrajectory, SimError> {
        let steps = self.grid.time_steps();
        h.validate(&self.params.h_max, steps + 1)?;
        let mut state = initial.clone();
        let mut points = Vec::with_capacity(steps + 1);
        for n in 0..steps {
            points.push(self.step(&mut state, h.at(n))?);
        }
        points.push(self.observe(&state));
        Ok(ControlledTrajectory { points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::Simulator;

    fn setup(da: f64, t_final: f64) -> (ModelParams, AgeGrid) {
        (
            ModelParams::reference(),
            AgeGrid::new(da, 600.0, t_final).unwrap(),
        )
    }

    #[test]
    fn forces_reduce_to_base_model() {
        let (p, g) = setup(0.5, 420.0);
        let base = Simulator::new(&p, &g).unwrap();
        let ctrl = ControlledSimulator::new(&p, &g).unwrap();
        let seeded = base.initial_state(0.05).unwrap();
        let state = ControlState::from_base(&seeded);

        let fb = base.forces(&seeded);
        let fc = ctrl.forces(&state);
        assert_eq!(fc.e1, fb.e1);
        assert_eq!(fc.e2, fb.e2);
        assert_eq!(fc.e3, fb.e3);
        assert_eq!(fc.e2tf, 0.0);
        // Identical values; summation order may differ by an ulp.
        let (pa, pb) = (ctrl.population(&state), base.population(&seeded));
        assert!((pa - pb).abs() <= 1e-15 * pb);
    }

    #[test]
    fn dropout_progression_rate_on_point_mass() {
        let (p, g) = setup(0.5, 420.0);
        let ctrl = ControlledSimulator::new(&p, &g).unwrap();
        let mut state = ctrl.initial_state(0.0).unwrap();
        // A point mass in I1Tf past the halved duration progresses at
        // the full post-duration rate.
        let node = (2.0 / g.da) as usize; // age 2.0 > 2.9 / 2
        state.dens[I1Tf.index()][node] = 3.0;
        let f = ctrl.forces(&state);
        let mass = ctrl.masses(&state)[I1Tf.index()];
        assert!(mass > 0.0);
        assert!((f.e2tf - p.gamma_bar[0] * mass).abs() < 1e-12 * f.e2tf);
        // Zero state has zero forces.
        let empty = ctrl.initial_state(0.0).unwrap();
        let f0 = ctrl.forces(&empty);
        assert_eq!((f0.e1, f0.e2, f0.e2tf, f0.e3), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn uncontrolled_run_matches_base_simulator() {
        let (p, g) = setup(0.5, 120.0);
        let base = Simulator::new(&p, &g).unwrap();
        let ctrl = ControlledSimulator::new(&p, &g).unwrap();
        let initial = base.initial_state(0.05).unwrap();
        let base_traj = base.run(&initial, &[]).unwrap();
        let ctrl_traj = ctrl
            .run(
                &ControlState::from_base(&initial),
                &ControlTrajectory::zero(g.time_nodes()),
            )
            .unwrap();

        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        for (cp, bp) in ctrl_traj.points.iter().zip(&base_traj.points) {
            assert!(rel(cp.s, bp.s) < 1e-12);
            assert!(rel(cp.m[I1.index()], bp.i[0]) < 1e-12);
            assert!(rel(cp.m[I2.index()], bp.i[1]) < 1e-12);
            assert!(rel(cp.m[I3.index()], bp.i[2]) < 1e-12);
            assert_eq!(cp.m[I1Tf.index()], 0.0);
            assert_eq!(cp.m[I2Ts.index()], 0.0);
        }
    }

    #[test]
    fn full_treatment_routes_to_success() {
        let (mut p, g) = setup(0.5, 420.0);
        p.p_dropout = [0.0, 0.1, 0.1];
        let ctrl = ControlledSimulator::new(&p, &g).unwrap();
        let mut state = ctrl.initial_state(0.05).unwrap();
        let before = ctrl.observe(&state);
        let flux = before.s * before.e1 / before.p;
        ctrl.step(&mut state, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(state.dens[I1.index()][0], 0.0);
        assert_eq!(state.dens[I1Tf.index()][0], 0.0);
        assert!((state.dens[I1Ts.index()][0] - flux).abs() < 1e-15 * flux);
    }

    #[test]
    fn boundary_splits_conserve_parent_fluxes() {
        let (mut p, g) = setup(0.5, 420.0);
        let mut rng_state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            p.p_dropout = [next(), next(), next()];
            let ctrl = ControlledSimulator::new(&p, &g).unwrap();
            let mut state = ctrl.initial_state(0.05).unwrap();
            // Populate drop-out compartments so E2TF is active too.
            let src = state.dens[I1.index()].clone();
            state.dens[I1Tf.index()].copy_from_slice(&src);
            state.dens[I2Tf.index()].copy_from_slice(&src);
            let h = [next(), next(), next()];
            let before = ctrl.observe(&state);
            let flux = before.s * before.e1 / before.p;
            ctrl.step(&mut state, h).unwrap();
            let stage1 = state.dens[I1.index()][0]
                + state.dens[I1Tf.index()][0]
                + state.dens[I1Ts.index()][0];
            let stage2 = state.dens[I2.index()][0]
                + state.dens[I2Tf.index()][0]
                + state.dens[I2Ts.index()][0];
            assert!((stage1 - flux).abs() <= 1e-12 * flux.max(1e-300));
            let parent = before.e2 + before.e2tf;
            assert!((stage2 - parent).abs() <= 1e-12 * parent.max(1e-300));
            assert_eq!(state.dens[I3.index()][0], before.e3);
        }
    }

    #[test]
    fn controlled_population_stays_bounded() {
        let (p, _) = setup(0.5, 420.0);
        let g = AgeGrid::new(0.1, 600.0, 200.0).unwrap();
        let ctrl = ControlledSimulator::new(&p, &g).unwrap();
        let initial = ctrl.initial_state(0.05).unwrap();
        let bound = ctrl.population(&initial).max(p.lambda_in / p.mu);
        let h = ControlTrajectory::constant([0.5, 0.5, 0.5], g.time_nodes());
        let traj = ctrl.run(&initial, &h).unwrap();
        for pt in &traj.points {
            assert!(pt.s > 0.0);
            assert!(pt.m.iter().all(|m| *m >= 0.0));
            assert!(pt.p <= bound * (1.0 + 1e-10), "P = {} at t = {}", pt.p, pt.t);
        }
    }

    #[test]
    fn sampled_controls_do_not_worsen_reference_burden() {
        // Regression expectation, not a theorem: at the reference
        // drop-out probabilities every sampled admissible policy leaves
        // the AIDS person-time at or below the uncontrolled run.
        let (p, g) = setup(0.5, 420.0);
        let ctrl = ControlledSimulator::new(&p, &g).unwrap();
        let initial = ctrl.initial_state(0.05).unwrap();
        let baseline = ctrl
            .run(&initial, &ControlTrajectory::zero(g.time_nodes()))
            .unwrap()
            .i3_time_integral();
        for h in [
            [0.25; 3],
            [0.5; 3],
            [1.0, 0.0, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 1.0, 0.0],
            [1.0; 3],
        ] {
            let burden = ctrl
                .run(&initial, &ControlTrajectory::constant(h, g.time_nodes()))
                .unwrap()
                .i3_time_integral();
            assert!(
                burden <= baseline * (1.0 + 1e-12),
                "policy {h:?} increased the burden: {burden} vs {baseline}"
            );
        }
    }

    #[test]
    fn rejects_inadmissible_controls() {
        let (p, g) = setup(0.5, 60.0);
        let ctrl = ControlledSimulator::new(&p, &g).unwrap();
        let initial = ctrl.initial_state(0.05).unwrap();
        let mut h = ControlTrajectory::zero(g.time_nodes());
        h.h[1][3] = 1.5;
        assert!(ctrl.run(&initial, &h).is_err());
        let short = ControlTrajectory::zero(g.time_nodes() - 1);
        assert!(ctrl.run(&initial, &short).is_err());
    }
}
