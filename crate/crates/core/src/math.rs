//! Small numeric helpers shared across the crate.

/// `e^x`, routed through `libm` so the crate builds without `std`.
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// Composite trapezoid rule over uniformly spaced samples with step `h`.
///
/// Returns 0 for fewer than two samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..n - 1].iter().sum();
    h * (0.5 * (values[0] + values[n - 1]) + interior)
}

/// Trapezoid weight of node `i` among `n` nodes: 1/2 at both ends, 1 inside.
#[inline]
pub fn trapezoid_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5
    } else {
        1.0
    }
}

/// Largest absolute entry of a slice (0 for an empty slice).
pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
