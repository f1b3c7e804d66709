//! Identifying the behavior law and anticipation parameters `(m, lambda)`
//! from trajectory data.
//!
//! The pipeline: anticipated-spacing samples from measured positions, unit
//! binning, penalized segmented regression by dynamic programming
//! ([`segment_regress`]), min-max law reconstruction ([`fit_min_max`]),
//! and a grid search over `(m, lambda)` with leader-redundancy pruning.

mod reconstruct;
mod segmentation;

pub use reconstruct::{fit_min_max, ClampWarning, MinMaxFit};
pub use segmentation::{
    brute_force_segment, segment_regress, Bin, CalibError, FitSegment, PiecewiseFit,
    SegmentationProblem, WindowStats, BRUTE_FORCE_BIN_CAP,
};

use std::collections::{BTreeMap, HashMap};

use crate::dynamics::{discount_factor, displacement_over_leaders, AnticipationConfig};
use crate::io::Dataset;
use crate::law::BehaviorLaw;

/// One measured anticipated-spacing / velocity pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingVelocitySample {
    /// Anticipated spacing, meters.
    pub y_tilde: f64,
    /// Realized displacement over the following model step, meters/step.
    pub v: f64,
    pub car: u64,
    /// Model step index of the observation.
    pub t: u64,
}

/// Rows excluded while building samples, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipCounts {
    /// Follower had no observable leader at that instant.
    pub insufficient_leaders: usize,
    /// No position at the next step, so no realized velocity.
    pub missing_velocity: usize,
    /// Leader chain differed between the step and the next one.
    pub chain_changed: usize,
    /// Samples dropped for negative anticipated spacing.
    pub negative_spacing: usize,
}

/// Per-row leader gaps cached once so every `(m, lambda)` grid cell reuses
/// them.
#[derive(Debug, Clone)]
pub struct GapRow {
    pub car: u64,
    pub t: u64,
    /// Gap to the j-th leader at index `j - 1`; strictly positive.
    pub gaps: Vec<f64>,
    /// Forward position difference over one model step.
    pub v: f64,
}

/// All usable follower rows of a dataset, with gaps up to a depth cap.
#[derive(Debug, Clone)]
pub struct GapTable {
    rows: Vec<GapRow>,
    pub skipped: SkipCounts,
    pub max_depth: usize,
}

/// Extracts per-row leader gaps from a model-grid dataset.
///
/// Leader chains follow preceding-vehicle links when present and fall back
/// to position order within the lane. A chain stops at the first missing,
/// non-ahead, or repeated vehicle. Rows are kept only when the truncated
/// chain is identical at the row's step and the next one.
pub fn build_gap_table(dataset: &Dataset, max_depth: usize) -> Result<GapTable, CalibError> {
    if max_depth == 0 {
        return Err(CalibError::BadDepth);
    }
    if !dataset.on_model_grid() {
        return Err(CalibError::NotOnModelGrid);
    }
    let dt = crate::dynamics::DT_SECONDS;
    let to_step = |t: f64| (t / dt).round() as i64;

    // Position/lane per (step, vehicle), and per (step, lane) ordering for
    // the position-sort fallback.
    type StepLane = (i64, Option<i64>);
    let mut at: HashMap<(i64, u64), (f64, Option<i64>)> = HashMap::new();
    let mut by_step_lane: BTreeMap<StepLane, Vec<(u64, f64)>> = BTreeMap::new();
    for (&id, obs) in dataset.tracks() {
        for o in obs {
            let s = to_step(o.t);
            at.insert((s, id), (o.x, o.lane));
            by_step_lane.entry((s, o.lane)).or_default().push((id, o.x));
        }
    }
    let mut ahead: HashMap<(i64, u64), u64> = HashMap::new();
    for (&(s, _), entries) in by_step_lane.iter_mut() {
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for w in entries.windows(2) {
            ahead.insert((s, w[1].0), w[0].0);
        }
    }

    // Chain of leaders of `id` at `s`, truncated to `max_depth`.
    let chain = |id: u64, s: i64, explicit: Option<u64>| -> Vec<u64> {
        let mut out = Vec::new();
        let mut cur = id;
        let (mut cur_x, my_lane) = match at.get(&(s, id)) {
            Some(&(x, lane)) => (x, lane),
            None => return out,
        };
        // First hop honors the row's own preceding link when it has one.
        let mut next_link = explicit;
        while out.len() < max_depth {
            let next = next_link.or_else(|| ahead.get(&(s, cur)).copied());
            let Some(next) = next else { break };
            if next == id || out.contains(&next) {
                break;
            }
            let Some(&(nx, nlane)) = at.get(&(s, next)) else {
                break;
            };
            if nx <= cur_x || nlane != my_lane {
                break;
            }
            out.push(next);
            cur = next;
            cur_x = nx;
            next_link = None;
        }
        out
    };

    let mut rows = Vec::new();
    let mut skipped = SkipCounts::default();
    for (&id, obs) in dataset.tracks() {
        for (i, o) in obs.iter().enumerate() {
            let s = to_step(o.t);
            let leaders = chain(id, s, o.preceding);
            if leaders.is_empty() {
                skipped.insufficient_leaders += 1;
                continue;
            }
            let Some(next_obs) = obs.get(i + 1).filter(|n| to_step(n.t) == s + 1) else {
                skipped.missing_velocity += 1;
                continue;
            };
            let next_link = next_obs.preceding;
            let next_leaders = chain(id, s + 1, next_link);
            let depth = leaders.len().min(next_leaders.len());
            if depth == 0 || leaders[..depth] != next_leaders[..depth] {
                skipped.chain_changed += 1;
                continue;
            }
            let gaps: Vec<f64> = leaders[..depth]
                .iter()
                .map(|&l| at[&(s, l)].0 - o.x)
                .collect();
            rows.push(GapRow {
                car: id,
                t: s as u64,
                gaps,
                v: next_obs.x - o.x,
            });
        }
    }
    rows.sort_by(|a, b| a.car.cmp(&b.car).then(a.t.cmp(&b.t)));
    Ok(GapTable {
        rows,
        skipped,
        max_depth,
    })
}

impl GapTable {
    pub fn rows(&self) -> &[GapRow] {
        &self.rows
    }

    /// Keeps only rows of one follower (per-driver calibration).
    pub fn retain_car(&mut self, car: u64) {
        self.rows.retain(|r| r.car == car);
    }

    /// Anticipated-spacing samples at `(m, lambda)`; negative spacings are
    /// dropped and counted.
    pub fn samples(&self, m: usize, lambda: f64) -> (Vec<SpacingVelocitySample>, usize) {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut negative = 0usize;
        for row in &self.rows {
            let y_tilde = anticipated_from_gaps(&row.gaps, m, lambda);
            if y_tilde < 0.0 {
                negative += 1;
                continue;
            }
            out.push(SpacingVelocitySample {
                y_tilde,
                v: row.v,
                car: row.car,
                t: row.t,
            });
        }
        (out, negative)
    }
}

/// `min_j (1 + lambda)^(j-1) * gap_j / j` over `j <= min(m, gaps.len())`.
fn anticipated_from_gaps(gaps: &[f64], m: usize, lambda: f64) -> f64 {
    let depth = m.min(gaps.len());
    let mut best = f64::INFINITY;
    for j in 1..=depth {
        let term = discount_factor(lambda, j) * (gaps[j - 1] / j as f64);
        best = best.min(term);
    }
    best
}

/// Samples plus everything skipped on the way.
#[derive(Debug, Clone)]
pub struct ComputedSamples {
    pub samples: Vec<SpacingVelocitySample>,
    pub skipped: SkipCounts,
}

/// One anticipated-spacing sample per usable `(car, step)` row.
pub fn compute_samples(
    dataset: &Dataset,
    m: usize,
    lambda: f64,
) -> Result<ComputedSamples, CalibError> {
    let table = build_gap_table(dataset, m)?;
    let (samples, negative) = table.samples(m, lambda);
    let mut skipped = table.skipped;
    skipped.negative_spacing = negative;
    Ok(ComputedSamples { samples, skipped })
}

/// Smallest depth `m*` such that deepening anticipation beyond it changes
/// no sample of the dataset at this `lambda`.
pub fn dominance_prune(dataset: &Dataset, lambda: f64, m_max: usize) -> Result<usize, CalibError> {
    let table = build_gap_table(dataset, m_max)?;
    Ok(prune_from_table(&table, lambda))
}

/// [`dominance_prune`] over a prebuilt (possibly filtered) gap table.
pub fn prune_from_table(table: &GapTable, lambda: f64) -> usize {
    let mut m_star = 1usize;
    for row in table.rows() {
        let mut best = f64::INFINITY;
        let mut first_argmin = 1usize;
        for j in 1..=row.gaps.len() {
            let term = discount_factor(lambda, j) * (row.gaps[j - 1] / j as f64);
            if term < best {
                best = term;
                first_argmin = j;
            }
        }
        m_star = m_star.max(first_argmin);
    }
    m_star
}

/// Scale-aware default segmentation penalty:
/// `0.5 * Var(v) * (samples per non-empty bin span)`.
pub fn default_phi(samples: &[SpacingVelocitySample], bin_width: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.v).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|s| (s.v - mean) * (s.v - mean))
        .sum::<f64>()
        / n;
    let y_max = samples.iter().map(|s| s.y_tilde).fold(0.0, f64::max);
    let bins = (y_max / bin_width).floor() + 1.0;
    0.5 * var * (n / bins)
}

/// Inclusive lambda sweep `min, min + step, ...` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl LambdaRange {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let v = self.min + k as f64 * self.step;
            if v > self.max + 1e-9 {
                break;
            }
            out.push(v);
            if self.step <= 0.0 {
                break;
            }
            k += 1;
        }
        out
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceCell {
    pub m: usize,
    pub lambda: f64,
    pub total_cost: f64,
    pub segments: usize,
}

/// Outcome of a grid search.
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_m: usize,
    pub best_lambda: f64,
    pub best_fit: PiecewiseFit,
    /// Reconstruction of the best fit; `Err` keeps the surface and argmin
    /// usable when the fit is not of max-min shape.
    pub law: Result<MinMaxFit, CalibError>,
    pub surface: Vec<SurfaceCell>,
    pub skipped: SkipCounts,
}

/// Evaluates the segmentation cost at every `(m, lambda)` grid point and
/// reconstructs the law at the argmin.
///
/// Cost ties keep the earliest grid point in `(m asc, lambda asc)` order.
pub fn grid_search(
    dataset: &Dataset,
    m_values: &[usize],
    lambda_range: LambdaRange,
    phi: f64,
    bin_width: f64,
    fit_tolerance: f64,
) -> Result<GridSearchResult, CalibError> {
    if m_values.is_empty() {
        return Err(CalibError::BadDepth);
    }
    let m_max = *m_values.iter().max().unwrap();
    let table = build_gap_table(dataset, m_max)?;
    grid_search_table(
        &table,
        m_values,
        lambda_range,
        phi,
        bin_width,
        fit_tolerance,
    )
}

/// [`grid_search`] over a prebuilt (possibly filtered) gap table.
pub fn grid_search_table(
    table: &GapTable,
    m_values: &[usize],
    lambda_range: LambdaRange,
    phi: f64,
    bin_width: f64,
    fit_tolerance: f64,
) -> Result<GridSearchResult, CalibError> {
    if m_values.is_empty() || m_values.iter().any(|&m| m == 0 || m > table.max_depth) {
        return Err(CalibError::BadDepth);
    }
    let lambdas = lambda_range.values();

    let mut surface = Vec::with_capacity(m_values.len() * lambdas.len());
    let mut best: Option<(usize, f64, PiecewiseFit)> = None;
    let mut skipped = table.skipped;
    for &m in m_values {
        for &lambda in &lambdas {
            let (samples, negative) = table.samples(m, lambda);
            skipped.negative_spacing += negative;
            let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.y_tilde, s.v)).collect();
            let problem = SegmentationProblem::from_samples(&pairs, bin_width, phi)?;
            let fit = segment_regress(&problem)?;
            surface.push(SurfaceCell {
                m,
                lambda,
                total_cost: fit.total_cost,
                segments: fit.segments.len(),
            });
            let better = match &best {
                None => true,
                Some((_, _, cur)) => fit.total_cost < cur.total_cost,
            };
            if better {
                best = Some((m, lambda, fit));
            }
        }
    }
    let (best_m, best_lambda, best_fit) = best.expect("grid has at least one point");
    let law = fit_min_max(&best_fit, fit_tolerance);
    Ok(GridSearchResult {
        best_m,
        best_lambda,
        best_fit,
        law,
        surface,
        skipped,
    })
}

/// Per-car and overall RMSE of one-step-ahead position predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Car id -> (RMSE, prediction count).
    pub per_car: BTreeMap<u64, (f64, usize)>,
    pub overall_rmse: f64,
    pub predictions: usize,
}

/// Predicts each follower's next position from measured leader gaps and
/// compares against the measured next position.
pub fn one_step_rmse(
    dataset: &Dataset,
    law: &BehaviorLaw,
    config: &AnticipationConfig,
) -> Result<ValidationReport, CalibError> {
    let table = build_gap_table(dataset, config.m)?;
    if table.rows().is_empty() {
        return Err(CalibError::EmptyProblem);
    }
    let mut sq: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    let mut total_sq = 0.0;
    let mut total_n = 0usize;
    for row in table.rows() {
        let depth = config.m.min(row.gaps.len());
        let predicted = displacement_over_leaders(depth, |j| row.gaps[j - 1], law, config);
        let err = predicted - row.v;
        let entry = sq.entry(row.car).or_insert((0.0, 0));
        entry.0 += err * err;
        entry.1 += 1;
        total_sq += err * err;
        total_n += 1;
    }
    let per_car = sq
        .into_iter()
        .map(|(car, (s, n))| (car, ((s / n as f64).sqrt(), n)))
        .collect();
    Ok(ValidationReport {
        per_car,
        overall_rmse: (total_sq / total_n as f64).sqrt(),
        predictions: total_n,
    })
}
