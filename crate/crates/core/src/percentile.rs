//! Cross-sectional percentiles.
//!
//! Percentiles use linear interpolation between the closest order statistics
//! (the "inclusive" definition): for `N` sorted values and percentile `p`, the
//! fractional rank is `h = (N - 1) * p / 100` and the result interpolates
//! between `sorted[floor(h)]` and `sorted[ceil(h)]`.

use alloc::vec::Vec;

use crate::error::{GuardrailError, Result};
use crate::panel::Panel;

/// Percentile of already sorted, non-empty data.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = libm::floor(h) as usize;
    let hi = libm::ceil(h) as usize;
    let frac = h - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// One line per requested percentile, each with one value per timestep,
/// computed over every item in the panel.
pub fn percentile_lines(panel: &Panel<'_>, percentiles: &[f64]) -> Result<Vec<Vec<f64>>> {
    if panel.item_count() < 2 {
        return Err(GuardrailError::TooFewItems { needed: 2, available: panel.item_count() });
    }
    let mut lines: Vec<Vec<f64>> = percentiles.iter().map(|_| Vec::with_capacity(panel.len())).collect();
    let mut column = Vec::with_capacity(panel.item_count());
    for t in 0..panel.len() {
        column.clear();
        column.extend(panel.items().iter().map(|item| item.values[t]));
        column.sort_by(f64::total_cmp);
        for (line, &p) in lines.iter_mut().zip(percentiles) {
            line.push(percentile_sorted(&column, p));
        }
    }
    Ok(lines)
}
