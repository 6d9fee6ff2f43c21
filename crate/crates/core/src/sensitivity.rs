//! Full-factorial sensitivity of the cumulative AIDS burden.
//!
//! The four drivers are the two stage durations and the two stage
//! transmission hazards; progression varies through the durations while
//! the post-duration rate stays fixed. On a full factorial the ANOVA
//! decomposition through third-order interactions is an exact orthogonal
//! partition of variance, so no regression solve is involved and the
//! only unexplained share is the single four-way term.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::params::{AgeGrid, ModelParams, ParamError};
use crate::simulator::{SimError, Simulator};

/// Highest interaction order entering the decomposition.
const MAX_ORDER: u32 = 3;

/// One varied factor: its name and the level values.
#[derive(Debug, Clone)]
pub struct FactorDef {
    pub name: &'static str,
    pub levels: Vec<f64>,
}

/// Factor names and their biological ranges, in design order.
pub const FACTOR_RANGES: [(&str, f64, f64); 4] = [
    ("T0_1", 1.23, 6.0),
    ("T0_2", 108.0, 180.0),
    ("beta1", 131.0, 509.0),
    ("beta2", 7.61, 13.3),
];

/// Full-factorial design: every combination of levels exactly once.
#[derive(Debug, Clone)]
pub struct Design {
    pub factors: Vec<FactorDef>,
    /// Level index per factor, one row per run.
    pub runs: Vec<Vec<usize>>,
}

impl Design {
    /// Parameter values of one run.
    pub fn values(&self, run: &[usize]) -> Vec<f64> {
        run.iter()
            .zip(&self.factors)
            .map(|(l, f)| f.levels[*l])
            .collect()
    }
}

/// Equally spaced levels across each factor range, crossed fully.
pub fn build_design(levels_per_factor: usize) -> Result<Design, ParamError> {
    if levels_per_factor < 2 {
        return Err(ParamError::new(
            "levels",
            format!("need at least 2 levels per factor, got {levels_per_factor}"),
        ));
    }
    let factors: Vec<FactorDef> = FACTOR_RANGES
        .iter()
        .map(|(name, lo, hi)| FactorDef {
            name,
            levels: (0..levels_per_factor)
                .map(|i| lo + (hi - lo) * i as f64 / (levels_per_factor - 1) as f64)
                .collect(),
        })
        .collect();
    let k = factors.len();
    let total = levels_per_factor.pow(k as u32);
    let mut runs = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut row = vec![0usize; k];
        for slot in row.iter_mut() {
            *slot = idx % levels_per_factor;
            idx /= levels_per_factor;
        }
        runs.push(row);
    }
    Ok(Design { factors, runs })
}

/// Applies one design point onto the reference parameterization.
pub fn apply_factors(base: &ModelParams, values: &[f64]) -> ModelParams {
    let mut p = base.clone();
    p.stage_duration[0] = values[0];
    p.stage_duration[1] = values[1];
    p.beta_hazard[0] = values[2];
    p.beta_hazard[1] = values[3];
    p
}

/// Cumulative AIDS person-time over the grid horizon for one
/// parameterization, from the standard seeded initial data.
pub fn evaluate_response(
    params: &ModelParams,
    grid: &AgeGrid,
    prevalence_pct: f64,
) -> Result<f64, SimError> {
    let sim = Simulator::new(params, grid)?;
    let initial = sim.initial_state(prevalence_pct)?;
    Ok(sim.run(&initial, &[])?.i3_time_integral())
}

/// Variance shares of one factor.
#[derive(Debug, Clone)]
pub struct FactorIndices {
    pub name: &'static str,
    /// Share of variance from the factor alone.
    pub main: f64,
    /// Share including every decomposed interaction containing it.
    pub total: f64,
}

/// Exact variance decomposition of a full-factorial response.
#[derive(Debug, Clone)]
pub struct SensitivityIndices {
    pub factors: Vec<FactorIndices>,
    /// Share of total variance captured through `MAX_ORDER` interactions.
    pub explained: f64,
    pub ss_total: f64,
    /// Set when the response carries no variance to partition.
    pub degenerate: bool,
}

impl SensitivityIndices {
    /// Factor positions sorted by decreasing total index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.factors.len()).collect();
        order.sort_by(|a, b| {
            self.factors[*b]
                .total
                .total_cmp(&self.factors[*a].total)
        });
        order
    }
}

/// Exact orthogonal ANOVA over main effects and interactions up to
/// third order. Requires the complete full-factorial response vector in
/// design order.
pub fn anova_decompose(
    design: &Design,
    responses: &[f64],
) -> Result<SensitivityIndices, ParamError> {
    let k = design.factors.len();
    let n_runs = design.runs.len();
    if responses.len() != n_runs {
        return Err(ParamError::new(
            "responses",
            format!("{} responses for {n_runs} design runs", responses.len()),
        ));
    }
    if responses.iter().any(|y| !y.is_finite()) {
        return Err(ParamError::new(
            "responses",
            String::from("responses must be finite"),
        ));
    }

    let grand = responses.iter().sum::<f64>() / n_runs as f64;
    let ss_total: f64 = responses.iter().map(|y| (y - grand) * (y - grand)).sum();
    let scale = responses.iter().map(|y| y * y).sum::<f64>() / n_runs as f64;
    if ss_total <= 1e-12 * scale.max(1e-300) {
        return Ok(SensitivityIndices {
            factors: design
                .factors
                .iter()
                .map(|f| FactorIndices {
                    name: f.name,
                    main: 0.0,
                    total: 0.0,
                })
                .collect(),
            explained: 0.0,
            ss_total,
            degenerate: true,
        });
    }

    // Cell index of a run under a factor subset (bitmask), mixed radix.
    let cell_of = |mask: u32, run: &[usize]| -> usize {
        let mut cell = 0usize;
        for f in (0..k).rev() {
            if mask & (1 << f) != 0 {
                cell = cell * design.factors[f].levels.len() + run[f];
            }
        }
        cell
    };
    let cells_of = |mask: u32| -> usize {
        (0..k)
            .filter(|f| mask & (1 << f) != 0)
            .map(|f| design.factors[f].levels.len())
            .product()
    };

    // Cell-mean effects with all lower-order effects subtracted; the
    // balanced design makes the terms mutually orthogonal.
    let mut effects: Vec<Option<Vec<f64>>> = vec![None; 1 << k];
    let mut ss: Vec<f64> = vec![0.0; 1 << k];
    for mask in 1u32..(1 << k) as u32 {
        if mask.count_ones() > MAX_ORDER {
            continue;
        }
        let n_cells = cells_of(mask);
        let mut sums = vec![0.0; n_cells];
        let mut counts = vec![0usize; n_cells];
        for (run, y) in design.runs.iter().zip(responses) {
            let c = cell_of(mask, run);
            sums[c] += y;
            counts[c] += 1;
        }
        let mut effect: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, c)| s / *c as f64 - grand)
            .collect();
        // Subtract every proper non-empty sub-effect, once per cell.
        let mut sub = (mask - 1) & mask;
        while sub != 0 {
            if let Some(sub_effect) = &effects[sub as usize] {
                let mut seen = vec![false; n_cells];
                for run in &design.runs {
                    let c = cell_of(mask, run);
                    if !seen[c] {
                        seen[c] = true;
                        effect[c] -= sub_effect[cell_of(sub, run)];
                    }
                }
            }
            sub = (sub - 1) & mask;
        }
        let reps = (n_runs / n_cells) as f64;
        ss[mask as usize] = reps * effect.iter().map(|e| e * e).sum::<f64>();
        effects[mask as usize] = Some(effect);
    }

    let decomposed: f64 = ss.iter().sum();
    let factors = (0..k)
        .map(|f| {
            let main = ss[1 << f] / ss_total;
            let total = (1u32..(1 << k) as u32)
                .filter(|m| m & (1 << f) != 0 && m.count_ones() <= MAX_ORDER)
                .map(|m| ss[m as usize])
                .sum::<f64>()
                / ss_total;
            FactorIndices {
                name: design.factors[f].name,
                main,
                total,
            }
        })
        .collect();

    Ok(SensitivityIndices {
        factors,
        explained: decomposed / ss_total,
        ss_total,
        degenerate: false,
    })
}

/// Builds the design, evaluates every response sequentially and
/// decomposes. Any run failure aborts: the exact decomposition needs the
/// complete factorial.
pub fn run_sensitivity(
    params: &ModelParams,
    grid: &AgeGrid,
    levels_per_factor: usize,
    prevalence_pct: f64,
) -> Result<(Design, Vec<f64>, SensitivityIndices), SimError> {
    let design = build_design(levels_per_factor)?;
    let mut responses = Vec::with_capacity(design.runs.len());
    for run in &design.runs {
        let p = apply_factors(params, &design.values(run));
        responses.push(evaluate_response(&p, grid, prevalence_pct)?);
    }
    let indices = anova_decompose(&design, &responses)?;
    Ok((design, responses, indices))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_enumeration() {
        assert!(build_design(1).is_err());
        let d2 = build_design(2).unwrap();
        assert_eq!(d2.runs.len(), 16);
        let d4 = build_design(4).unwrap();
        assert_eq!(d4.runs.len(), 256);
        // Every combination appears exactly once.
        let mut seen = vec![false; 256];
        for run in &d4.runs {
            let idx = run.iter().rev().fold(0usize, |acc, l| acc * 4 + l);
            assert!(!seen[idx]);
            seen[idx] = true;
        }
        // Levels span the documented ranges.
        assert_eq!(d4.factors[1].levels.first(), Some(&108.0));
        assert_eq!(d4.factors[1].levels.last(), Some(&180.0));
    }

    #[test]
    fn constant_response_is_degenerate() {
        let d = build_design(2).unwrap();
        let responses = vec![7.5; d.runs.len()];
        let idx = anova_decompose(&d, &responses).unwrap();
        assert!(idx.degenerate);
        assert!(idx.factors.iter().all(|f| f.main == 0.0 && f.total == 0.0));
    }

    #[test]
    fn single_factor_response_owns_all_variance() {
        let d = build_design(3).unwrap();
        let responses: Vec<f64> = d
            .runs
            .iter()
            .map(|run| {
                let v = d.factors[1].levels[run[1]];
                v * v + 3.0
            })
            .collect();
        let idx = anova_decompose(&d, &responses).unwrap();
        assert!((idx.factors[1].main - 1.0).abs() < 1e-12);
        assert!((idx.factors[1].total - 1.0).abs() < 1e-12);
        for f in [0usize, 2, 3] {
            assert!(idx.factors[f].main.abs() < 1e-12);
            assert!(idx.factors[f].total.abs() < 1e-12);
        }
        assert!((idx.explained - 1.0).abs() < 1e-12);
        assert_eq!(idx.ranking()[0], 1);
    }

    #[test]
    fn additive_factors_have_no_interaction_share() {
        let d = build_design(3).unwrap();
        let responses: Vec<f64> = d
            .runs
            .iter()
            .map(|run| {
                let a = d.factors[0].levels[run[0]];
                let b = d.factors[2].levels[run[2]];
                2.0 * a + 0.01 * b * b
            })
            .collect();
        let idx = anova_decompose(&d, &responses).unwrap();
        assert!((idx.factors[0].main - idx.factors[0].total).abs() < 1e-12);
        assert!((idx.factors[2].main - idx.factors[2].total).abs() < 1e-12);
        assert!((idx.factors[0].main + idx.factors[2].main - 1.0).abs() < 1e-10);
    }

    #[test]
    fn decomposition_is_orthogonal_and_bounded() {
        let d = build_design(4).unwrap();
        // A deterministic response with all interaction orders present.
        let responses: Vec<f64> = d
            .runs
            .iter()
            .map(|run| {
                let v = d.values(run);
                v[0] * v[1] / 100.0 + (v[2] - 300.0) * (v[3] - 10.0) / 50.0
                    + v[0] * v[1] * v[2] / 1e5
                    + (v[0] * v[1] * v[2] * v[3]).sqrt() / 30.0
            })
            .collect();
        let idx = anova_decompose(&d, &responses).unwrap();
        assert!(idx.explained <= 1.0 + 1e-12);
        assert!(idx.explained > 0.9, "four-way remainder unexpectedly large");
        for f in &idx.factors {
            assert!(f.main >= -1e-12 && f.main <= f.total + 1e-12);
            assert!(f.total <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn indices_invariant_under_run_reordering() {
        let d = build_design(3).unwrap();
        let responses: Vec<f64> = d
            .runs
            .iter()
            .map(|run| {
                let v = d.values(run);
                v[1] * 2.0 + v[2] * v[1] / 100.0
            })
            .collect();
        let base = anova_decompose(&d, &responses).unwrap();

        let mut shuffled = d.clone();
        let mut resp2 = responses.clone();
        // Deterministic permutation: rotate by a third.
        let cut = shuffled.runs.len() / 3;
        shuffled.runs.rotate_left(cut);
        resp2.rotate_left(cut);
        let rotated = anova_decompose(&shuffled, &resp2).unwrap();
        for (a, b) in base.factors.iter().zip(&rotated.factors) {
            assert!((a.main - b.main).abs() < 1e-12);
            assert!((a.total - b.total).abs() < 1e-12);
        }
    }

    #[test]
    fn incomplete_responses_rejected() {
        let d = build_design(2).unwrap();
        assert!(anova_decompose(&d, &[1.0; 15]).is_err());
    }

    #[test]
    fn response_is_deterministic_and_needs_transmission() {
        let base = ModelParams::reference();
        let grid = AgeGrid::new(1.0, 600.0, 200.0).unwrap();
        let a = evaluate_response(&base, &grid, 0.05).unwrap();
        let b = evaluate_response(&base, &grid, 0.05).unwrap();
        assert_eq!(a, b);

        // Zero hazards and a disabled scaling are the same model: the
        // burden reduces to the decayed initial inoculum either way.
        let mut no_hazard = base.clone();
        no_hazard.beta_hazard = [0.0; 3];
        no_hazard.epsilon = Some(0.0);
        no_hazard.delta = Some(0.0);
        let mut no_scaling = base.clone();
        no_scaling.rho0 = 0.0;
        let h = evaluate_response(&no_hazard, &grid, 0.05).unwrap();
        let s = evaluate_response(&no_scaling, &grid, 0.05).unwrap();
        assert!((h - s).abs() <= 1e-12 * h.max(1e-300));
        assert!(h < a);
    }
}
