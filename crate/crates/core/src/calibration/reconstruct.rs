//! Rebuilding a min-max law from a piecewise fit.
//!
//! A fitted segment chain is mapped onto the two-level law form
//! `max(lower group, min(upper group))`: segments on the initial branch go
//! to the lower group, the rest to the upper group. The assignment is
//! accepted only when the law reproduces the fit at every bin midpoint
//! within a tolerance.

use super::segmentation::{CalibError, PiecewiseFit};
use crate::law::{AffineSegment, BehaviorLaw};

/// A slope was clamped into `[0, 1]` to keep the law usable in stable
/// dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampWarning {
    pub segment_index: usize,
    pub original_alpha: f64,
    pub clamped_alpha: f64,
}

/// A reconstructed law plus reconstruction diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxFit {
    pub law: BehaviorLaw,
    pub clamp_warnings: Vec<ClampWarning>,
    /// Largest midpoint disagreement between the law and the fit.
    pub max_gap: f64,
}

/// Builds the min-max law agreeing with `fit` at all bin midpoints within
/// `tolerance`.
///
/// Candidate assignments are tried in order: the first `p` segments to the
/// lower group for `p = 1, 2, ...`; then a synthetic constant floor with
/// every segment in the upper group (purely concave fits); then everything
/// in the lower group (purely convex fits). Shapes that no assignment
/// reproduces are rejected.
pub fn fit_min_max(fit: &PiecewiseFit, tolerance: f64) -> Result<MinMaxFit, CalibError> {
    let k = fit.segments.len();
    if k == 0 {
        return Err(CalibError::EmptyProblem);
    }

    let mut clamp_warnings = Vec::new();
    let clamped: Vec<AffineSegment> = fit
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let alpha = s.alpha.clamp(0.0, 1.0);
            if alpha != s.alpha {
                clamp_warnings.push(ClampWarning {
                    segment_index: i,
                    original_alpha: s.alpha,
                    clamped_alpha: alpha,
                });
            }
            AffineSegment::new(alpha, s.beta)
        })
        .collect();

    // Floor for the all-upper candidate: the smallest fitted midpoint value.
    let floor = midpoints(fit)
        .map(|(seg_idx, y)| fit.segments[seg_idx].value_at(y))
        .fold(f64::INFINITY, f64::min);

    // Splitting after the last segment is never needed: the `p = k - 1`
    // candidate already evaluates to the max over all segments.
    let mut candidates: Vec<(Vec<AffineSegment>, Vec<AffineSegment>)> = Vec::new();
    if k == 1 {
        candidates.push((vec![clamped[0]], vec![clamped[0]]));
    } else {
        for p in 1..k {
            candidates.push((clamped[..p].to_vec(), clamped[p..].to_vec()));
        }
        candidates.push((vec![AffineSegment::new(0.0, floor)], clamped.clone()));
    }

    let mut best_gap = f64::INFINITY;
    for (lower, upper) in candidates {
        let law = match BehaviorLaw::new(lower, upper) {
            Ok(law) => law,
            Err(_) => continue,
        };
        let gap = midpoints(fit)
            .map(|(seg_idx, y)| (law.evaluate(y) - fit.segments[seg_idx].value_at(y)).abs())
            .fold(0.0, f64::max);
        if gap <= tolerance {
            return Ok(MinMaxFit {
                law,
                clamp_warnings,
                max_gap: gap,
            });
        }
        best_gap = best_gap.min(gap);
    }
    Err(CalibError::NonRepresentableShape {
        max_gap: best_gap,
        tolerance,
    })
}

/// `(segment index, bin midpoint)` pairs across the whole fit.
fn midpoints(fit: &PiecewiseFit) -> impl Iterator<Item = (usize, f64)> + '_ {
    fit.segments.iter().enumerate().flat_map(move |(i, seg)| {
        (seg.bin_range.0..seg.bin_range.1).map(move |b| (i, (b as f64 + 0.5) * fit.bin_width))
    })
}
