//! Model constants, duration-dependent rates and the shared grid.
//!
//! All rates are stored per person-month. Transmission hazards quoted per
//! 100 person-years are divided by 1200 on evaluation; excess death rates
//! quoted per 1000 person-years are divided by 12000 when defaults are
//! built. Stage progression is a step in the stage duration: zero before
//! the nominal stage length, a constant rate after it.

use alloc::format;
use alloc::string::String;

use crate::math;

/// Hazards per 100 person-years to rates per person-month.
pub const PER_100_PERSON_YEARS: f64 = 1.0 / 1200.0;

/// Rates per 1000 person-years to rates per person-month.
pub const PER_1000_PERSON_YEARS: f64 = 1.0 / 12000.0;

/// Infection stage: primary infection, asymptomatic latency, AIDS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Primary,
    Latent,
    Aids,
}

impl Stage {
    /// All stages, in progression order.
    pub const ALL: [Stage; 3] = [Stage::Primary, Stage::Latent, Stage::Aids];

    /// 1-based stage index used in reports.
    pub fn index(self) -> usize {
        match self {
            Stage::Primary => 1,
            Stage::Latent => 2,
            Stage::Aids => 3,
        }
    }

    /// 0-based position into per-stage arrays.
    pub fn slot(self) -> usize {
        self.index() - 1
    }

    pub fn from_index(index: usize) -> Result<Stage, ParamError> {
        match index {
            1 => Ok(Stage::Primary),
            2 => Ok(Stage::Latent),
            3 => Ok(Stage::Aids),
            other => Err(ParamError::new(
                "stage",
                format!("stage index must be 1, 2 or 3, got {other}"),
            )),
        }
    }
}

/// Validation failure for a parameter or grid field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamError {
    pub field: &'static str,
    pub message: String,
}

impl ParamError {
    pub fn new(field: &'static str, message: String) -> Self {
        Self { field, message }
    }
}

impl core::fmt::Display for ParamError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.message)
    }
}

impl core::error::Error for ParamError {}

/// Piecewise-constant rate with a single threshold in stage duration.
///
/// Evaluates to `before` on `[0, threshold)` and `after` on
/// `[threshold, ∞)`. The integral between two ages is exact, which keeps
/// survival kernels and per-cell transport decay free of quadrature error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRate {
    pub before: f64,
    pub after: f64,
    pub threshold: f64,
}

impl StepRate {
    pub const fn constant(value: f64) -> Self {
        Self {
            before: value,
            after: value,
            threshold: 0.0,
        }
    }

    pub const fn step(threshold: f64, after: f64) -> Self {
        Self {
            before: 0.0,
            after,
            threshold,
        }
    }

    #[inline]
    pub fn at(&self, age: f64) -> f64 {
        if age < self.threshold {
            self.before
        } else {
            self.after
        }
    }

    /// Exact integral over `[from, to]` (requires `from <= to`).
    pub fn integral(&self, from: f64, to: f64) -> f64 {
        let below = (to.min(self.threshold) - from.min(self.threshold)).max(0.0);
        let above = (to.max(self.threshold) - from.max(self.threshold)).max(0.0);
        self.before * below + self.after * above
    }
}

/// All model constants, in person-month units after conversion.
///
/// `epsilon` and `delta` default to the hazard ratios `b2/b1` and `b3/b1`
/// when left as `None`; an explicit value overrides the ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Recruitment into the susceptible class, persons/month.
    pub lambda_in: f64,
    /// Exit rate of susceptibles, 1/month.
    pub mu: f64,
    /// Infectiousness scaling applied to all stage hazards.
    pub rho0: f64,
    /// Stage transmission hazards `[b1, b2, b3]`, per 100 person-years.
    pub beta_hazard: [f64; 3],
    /// Stage-2 relative infectiousness; `None` derives `b2/b1`.
    pub epsilon: Option<f64>,
    /// Stage-3 relative infectiousness; `None` derives `b3/b1`.
    pub delta: Option<f64>,
    /// Nominal stage durations `[T1, T2]`, months.
    pub stage_duration: [f64; 2],
    /// Post-duration progression rates, 1/month.
    pub gamma_bar: [f64; 2],
    /// Stage death rates `[d1, d2, d3]`, 1/month.
    pub d: [f64; 3],
    /// ART drop-out probabilities `[p1, p2, p2TF]`.
    pub p_dropout: [f64; 3],
    /// Balancing coefficient on the AIDS inflow term of the objective.
    pub cost_b: f64,
    /// Quadratic control cost coefficients `[C1, C2, C3]`.
    pub cost_c: [f64; 3],
    /// Control upper bounds `[h1max, h2max, h2TFmax]`, each in (0, 1].
    pub h_max: [f64; 3],
}

impl ModelParams {
    /// Reference parameterization.
    ///
    /// Death rates in stages 1 and 2 equal the background exit rate; the
    /// late stage adds an excess of 0.14 per 1000 person-years. Control
    /// cost coefficients default to 65, the midpoint of the quoted 50-80
    /// range; the AIDS balancing coefficient weights the *inflow* into
    /// the late stage, so the per-person-month midpoint is multiplied by
    /// the mean AIDS residence (about 30 months, giving 1950) to price a
    /// progression event. At 65 the inflow term could never outweigh the
    /// quadratic control costs and the optimal ART effort would stay
    /// marginal. Drop-out probabilities default to 10%.
    pub fn reference() -> Self {
        let mu = 1.0 / 30.0;
        Self {
            lambda_in: 30.0,
            mu,
            rho0: 2.48,
            beta_hazard: [276.0, 10.6, 0.0],
            epsilon: None,
            delta: None,
            stage_duration: [2.9, 120.0],
            gamma_bar: [1.0, 1.0],
            d: [mu, mu, mu + 0.14 * PER_1000_PERSON_YEARS],
            p_dropout: [0.1, 0.1, 0.1],
            cost_b: 1950.0,
            cost_c: [65.0, 65.0, 65.0],
            h_max: [1.0, 1.0, 1.0],
        }
    }

    /// Effective stage-2 relative infectiousness.
    pub fn epsilon_eff(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| self.hazard_ratio(1))
    }

    /// Effective stage-3 relative infectiousness.
    pub fn delta_eff(&self) -> f64 {
        self.delta.unwrap_or_else(|| self.hazard_ratio(2))
    }

    fn hazard_ratio(&self, slot: usize) -> f64 {
        if self.beta_hazard[0] == 0.0 {
            0.0
        } else {
            self.beta_hazard[slot] / self.beta_hazard[0]
        }
    }

    /// Transmission rate of `stage` in 1/month: `rho0 * b_j / 1200`,
    /// constant in the stage duration `a`.
    pub fn beta_of_age(&self, stage: Stage, _a: f64) -> f64 {
        self.rho0 * self.beta_hazard[stage.slot()] * PER_100_PERSON_YEARS
    }

    /// Progression rate out of `stage` at duration `a`: zero before the
    /// stage length, the constant post-duration rate after it. With
    /// `fast_track` the stage length is halved (ART drop-out progression).
    ///
    /// Only the two progressing stages have a rate; `Stage::Aids` is an
    /// error.
    pub fn gamma_of_age(&self, stage: Stage, a: f64, fast_track: bool) -> Result<f64, ParamError> {
        Ok(self.gamma_rate(stage, fast_track)?.at(a))
    }

    /// Step-rate form of the progression rate, for exact integrals.
    pub fn gamma_rate(&self, stage: Stage, fast_track: bool) -> Result<StepRate, ParamError> {
        let slot = match stage {
            Stage::Primary | Stage::Latent => stage.slot(),
            Stage::Aids => {
                return Err(ParamError::new(
                    "stage",
                    String::from("no progression rate out of the AIDS stage"),
                ))
            }
        };
        let mut threshold = self.stage_duration[slot];
        if fast_track {
            threshold *= 0.5;
        }
        Ok(StepRate::step(threshold, self.gamma_bar[slot]))
    }

    /// Model transmission rate `beta(a)` (the stage-1 rate); other stages
    /// enter the force of infection through `epsilon` and `delta`.
    pub(crate) fn beta_rate(&self) -> StepRate {
        StepRate::constant(self.beta_of_age(Stage::Primary, 0.0))
    }

    /// Checks every invariant, reporting the offending field.
    pub fn validate(&self) -> Result<(), ParamError> {
        let finite = |field: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ParamError::new(field, format!("must be finite, got {v}")))
            }
        };
        finite("lambda_in", self.lambda_in)?;
        finite("mu", self.mu)?;
        finite("rho0", self.rho0)?;
        if self.lambda_in <= 0.0 {
            return Err(ParamError::new(
                "lambda_in",
                format!("must be positive, got {}", self.lambda_in),
            ));
        }
        if self.mu <= 0.0 {
            return Err(ParamError::new(
                "mu",
                format!("must be positive, got {}", self.mu),
            ));
        }
        if self.rho0 < 0.0 {
            return Err(ParamError::new(
                "rho0",
                format!("must be nonnegative, got {}", self.rho0),
            ));
        }
        for (k, b) in self.beta_hazard.iter().enumerate() {
            finite("beta_hazard", *b)?;
            if *b < 0.0 {
                return Err(ParamError::new(
                    "beta_hazard",
                    format!("entry {k} must be nonnegative, got {b}"),
                ));
            }
        }
        if self.beta_hazard[0] == 0.0
            && (self.beta_hazard[1] > 0.0 || self.beta_hazard[2] > 0.0)
            && (self.epsilon.is_none() || self.delta.is_none())
        {
            return Err(ParamError::new(
                "beta_hazard",
                String::from("relative infectiousness cannot be derived with b1 = 0"),
            ));
        }
        for (field, value) in [("epsilon", self.epsilon_eff()), ("delta", self.delta_eff())] {
            finite(field, value)?;
            if !(0.0..=1.0).contains(&value) {
                return Err(ParamError::new(
                    field,
                    format!("must lie in [0, 1], got {value}"),
                ));
            }
        }
        for (k, t) in self.stage_duration.iter().enumerate() {
            finite("stage_duration", *t)?;
            if *t <= 0.0 {
                return Err(ParamError::new(
                    "stage_duration",
                    format!("entry {k} must be positive, got {t}"),
                ));
            }
        }
        for (k, g) in self.gamma_bar.iter().enumerate() {
            finite("gamma_bar", *g)?;
            if *g <= 0.0 {
                return Err(ParamError::new(
                    "gamma_bar",
                    format!("entry {k} must be positive, got {g}"),
                ));
            }
        }
        for (k, dj) in self.d.iter().enumerate() {
            finite("d", *dj)?;
            if *dj < self.mu {
                return Err(ParamError::new(
                    "d",
                    format!("entry {k} must be at least mu = {}, got {dj}", self.mu),
                ));
            }
        }
        for (k, p) in self.p_dropout.iter().enumerate() {
            finite("p_dropout", *p)?;
            if !(0.0..=1.0).contains(p) {
                return Err(ParamError::new(
                    "p_dropout",
                    format!("entry {k} must lie in [0, 1], got {p}"),
                ));
            }
        }
        finite("cost_B", self.cost_b)?;
        if self.cost_b < 0.0 {
            return Err(ParamError::new(
                "cost_B",
                format!("must be nonnegative, got {}", self.cost_b),
            ));
        }
        for (k, c) in self.cost_c.iter().enumerate() {
            finite("cost_C", *c)?;
            if *c <= 0.0 {
                return Err(ParamError::new(
                    "cost_C",
                    format!("entry {k} must be positive, got {c}"),
                ));
            }
        }
        for (k, h) in self.h_max.iter().enumerate() {
            finite("h_max", *h)?;
            if !(*h > 0.0 && *h <= 1.0) {
                return Err(ParamError::new(
                    "h_max",
                    format!("entry {k} must lie in (0, 1], got {h}"),
                ));
            }
        }
        Ok(())
    }
}

/// Shared duration/time discretization with equal steps in both.
///
/// Ages live on nodes `0, da, ..., a_max`; time advances in the same
/// increment so densities shift exactly one cell per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeGrid {
    pub da: f64,
    pub a_max: f64,
    pub t_final: f64,
}

fn multiple_of(field: &'static str, value: f64, step: f64) -> Result<usize, ParamError> {
    let count = (value / step + 0.5) as usize;
    if count == 0 || (count as f64 * step - value).abs() > 1e-9 * value.max(1.0) {
        return Err(ParamError::new(
            field,
            format!("{value} is not a positive integer multiple of da = {step}"),
        ));
    }
    Ok(count)
}

impl AgeGrid {
    pub fn new(da: f64, a_max: f64, t_final: f64) -> Result<Self, ParamError> {
        if !(da.is_finite() && da > 0.0) {
            return Err(ParamError::new(
                "da",
                format!("must be positive and finite, got {da}"),
            ));
        }
        let grid = Self { da, a_max, t_final };
        multiple_of("a_max", a_max, da)?;
        if t_final != 0.0 {
            multiple_of("t_final", t_final, da)?;
        }
        Ok(grid)
    }

    /// Default discretization: 0.1-month cells, ages truncated at 600
    /// months (survival past truncation is below 1e-8 of totals).
    pub fn default_for(t_final: f64) -> Result<Self, ParamError> {
        Self::new(0.1, 600.0, t_final)
    }

    /// Number of age cells `M = a_max / da`.
    pub fn age_cells(&self) -> usize {
        (self.a_max / self.da + 0.5) as usize
    }

    /// Number of age nodes `M + 1`.
    pub fn age_nodes(&self) -> usize {
        self.age_cells() + 1
    }

    /// Number of time steps `N = t_final / da`.
    pub fn time_steps(&self) -> usize {
        (self.t_final / self.da + 0.5) as usize
    }

    /// Number of time nodes `N + 1`.
    pub fn time_nodes(&self) -> usize {
        self.time_steps() + 1
    }

    #[inline]
    pub fn age(&self, node: usize) -> f64 {
        node as f64 * self.da
    }

    #[inline]
    pub fn time(&self, node: usize) -> f64 {
        node as f64 * self.da
    }

    /// Composite trapezoid over age nodes (time series and reporting
    /// integrals; compartment masses use the exponential-cell quadrature
    /// from [`crate::cells`]).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        math::trapezoid(values, self.da)
    }

    /// The truncation must dominate the slowest kernel decay: past the
    /// stage-2 duration every kernel dies at least like `e^(-mu a)`, so
    /// ten e-foldings beyond `T2` keeps truncated mass negligible.
    pub fn check_covers(&self, params: &ModelParams) -> Result<(), ParamError> {
        let needed = params.stage_duration[1] + 10.0 / params.mu;
        if self.a_max < needed {
            return Err(ParamError::new(
                "a_max",
                format!(
                    "{} is below stage_duration[1] + 10/mu = {needed}",
                    self.a_max
                ),
            ));
        }
        Ok(())
    }
}
