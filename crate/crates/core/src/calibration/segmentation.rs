//! Penalized segmented regression over unit spacing bins.
//!
//! Samples `(y, v)` are binned along the spacing axis; a dynamic program
//! decides, bin by bin, whether to extend the current regression segment
//! or to start a new one at penalty `phi`. The minimized objective is
//! `sum of per-segment SSE + phi * number_of_segments` over all contiguous
//! segmentations; a brute-force enumerator provides the oracle.

use thiserror::Error;

/// Cap on bins for the exhaustive oracle.
pub const BRUTE_FORCE_BIN_CAP: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("no samples to segment")]
    EmptyProblem,
    #[error("penalty must be finite and nonnegative, got {phi}")]
    BadPenalty { phi: f64 },
    #[error("bin width must be positive and finite, got {width}")]
    BadBinWidth { width: f64 },
    #[error("{bins} bins exceed the exhaustive cap of {cap}")]
    TooManyBins { bins: usize, cap: usize },
    #[error(
        "fit is not of max-min form: best assignment misses by {max_gap} (tolerance {tolerance})"
    )]
    NonRepresentableShape { max_gap: f64, tolerance: f64 },
    #[error("dataset must be on the 0.5 s model grid; resample it first")]
    NotOnModelGrid,
    #[error("anticipation depth m must be at least 1")]
    BadDepth,
}

/// OLS sufficient statistics of a set of `(y, v)` samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WindowStats {
    pub n: f64,
    pub sy: f64,
    pub sv: f64,
    pub syy: f64,
    pub syv: f64,
    pub svv: f64,
}

impl WindowStats {
    pub fn push(&mut self, y: f64, v: f64) {
        self.n += 1.0;
        self.sy += y;
        self.sv += v;
        self.syy += y * y;
        self.syv += y * v;
        self.svv += v * v;
    }

    pub fn add(&self, other: &WindowStats) -> WindowStats {
        WindowStats {
            n: self.n + other.n,
            sy: self.sy + other.sy,
            sv: self.sv + other.sv,
            syy: self.syy + other.syy,
            syv: self.syv + other.syv,
            svv: self.svv + other.svv,
        }
    }

    pub fn sub(&self, other: &WindowStats) -> WindowStats {
        WindowStats {
            n: self.n - other.n,
            sy: self.sy - other.sy,
            sv: self.sv - other.sv,
            syy: self.syy - other.syy,
            syv: self.syv - other.syv,
            svv: self.svv - other.svv,
        }
    }

    /// Least-squares line `(alpha, beta)` and its SSE.
    ///
    /// Degenerate windows (no spread in y, including single samples) fall
    /// back to a flat line at the mean velocity; an empty window is all
    /// zeros. SSE is clamped at zero against cancellation noise.
    pub fn ols(&self) -> (f64, f64, f64) {
        if self.n == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let sxx = self.syy - self.sy * self.sy / self.n;
        let svv_c = self.svv - self.sv * self.sv / self.n;
        if self.n == 1.0 {
            // A lone sample is fit exactly; prefix-difference noise in the
            // reconstructed moments must not leak into the SSE.
            return (0.0, self.sv, 0.0);
        }
        if sxx <= f64::EPSILON * self.syy.max(1.0) {
            return (0.0, self.sv / self.n, svv_c.max(0.0));
        }
        let sxy = self.syv - self.sy * self.sv / self.n;
        let alpha = sxy / sxx;
        let beta = (self.sv - alpha * self.sy) / self.n;
        // Two distinct points fit exactly; forcing 0 here keeps structural
        // cost ties exact instead of leaving sub-ulp residue.
        let sse = if self.n <= 2.0 {
            0.0
        } else {
            (svv_c - alpha * sxy).max(0.0)
        };
        (alpha, beta, sse)
    }

    pub fn sse(&self) -> f64 {
        self.ols().2
    }
}

/// One spacing bin: its samples and their sufficient statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bin {
    pub stats: WindowStats,
    pub samples: Vec<(f64, f64)>,
}

/// Binned samples plus the segmentation penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationProblem {
    bins: Vec<Bin>,
    prefix: Vec<WindowStats>,
    phi: f64,
    bin_width: f64,
}

impl SegmentationProblem {
    /// Bins nonnegative `(y, v)` samples into `[k*w, (k+1)*w)` intervals
    /// covering `[0, y_max]`.
    pub fn from_samples(
        samples: &[(f64, f64)],
        bin_width: f64,
        phi: f64,
    ) -> Result<Self, CalibError> {
        if samples.is_empty() {
            return Err(CalibError::EmptyProblem);
        }
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(CalibError::BadBinWidth { width: bin_width });
        }
        if !(phi >= 0.0 && phi.is_finite()) {
            return Err(CalibError::BadPenalty { phi });
        }
        let y_max = samples.iter().map(|&(y, _)| y).fold(0.0, f64::max);
        let n_bins = (y_max / bin_width).floor() as usize + 1;
        let mut bins = vec![Bin::default(); n_bins];
        for &(y, v) in samples {
            debug_assert!(y >= 0.0, "negative spacings are dropped upstream");
            let idx = ((y / bin_width).floor() as usize).min(n_bins - 1);
            bins[idx].stats.push(y, v);
            bins[idx].samples.push((y, v));
        }
        Ok(Self::from_bins(bins, bin_width, phi))
    }

    /// Builds a problem directly from pre-filled bins (used by tests).
    pub fn from_bins(bins: Vec<Bin>, bin_width: f64, phi: f64) -> Self {
        let mut prefix = Vec::with_capacity(bins.len() + 1);
        prefix.push(WindowStats::default());
        for bin in &bins {
            let last = *prefix.last().unwrap();
            prefix.push(last.add(&bin.stats));
        }
        Self {
            bins,
            prefix,
            phi,
            bin_width,
        }
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn n_samples(&self) -> usize {
        self.bins.iter().map(|b| b.samples.len()).sum()
    }

    /// Sufficient statistics of bins `lo..hi` (exact OLS on their union).
    pub fn window(&self, lo: usize, hi: usize) -> WindowStats {
        self.prefix[hi].sub(&self.prefix[lo])
    }
}

/// One fitted segment: half-open spacing interval, its OLS line, and SSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSegment {
    pub start: f64,
    pub end: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sse: f64,
    /// Bin index range `[lo, hi)` the segment covers.
    pub bin_range: (usize, usize),
}

impl FitSegment {
    pub fn value_at(&self, y: f64) -> f64 {
        self.alpha * y + self.beta
    }
}

/// An optimal piecewise fit: segments partition `[0, y_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseFit {
    pub segments: Vec<FitSegment>,
    /// `sum of segment SSEs + phi * segments.len()`.
    pub total_cost: f64,
    pub bin_width: f64,
}

/// Canonical fit (and cost) of a fixed segmentation given by segment-start
/// bin indices (`breaks[0] == 0`).
///
/// The total is folded left to right as `(total + sse) + phi` per segment.
/// The dynamic program accumulates its state values with exactly this
/// association, so a segmentation costs bit-identical totals on every
/// route and cost ties are structural, not rounding accidents.
fn fit_from_breaks(problem: &SegmentationProblem, breaks: &[usize]) -> PiecewiseFit {
    let b = problem.bins().len();
    let mut segments = Vec::with_capacity(breaks.len());
    let mut total_cost = 0.0;
    for (k, &lo) in breaks.iter().enumerate() {
        let hi = breaks.get(k + 1).copied().unwrap_or(b);
        let (alpha, beta, sse) = problem.window(lo, hi).ols();
        total_cost = (total_cost + sse) + problem.phi;
        segments.push(FitSegment {
            start: lo as f64 * problem.bin_width,
            end: hi as f64 * problem.bin_width,
            alpha,
            beta,
            sse,
            bin_range: (lo, hi),
        });
    }
    PiecewiseFit {
        segments,
        total_cost,
        bin_width: problem.bin_width,
    }
}

/// Prefix value: canonical cost of the segmented bins, their segment
/// count, and where the last segment started.
#[derive(Debug, Clone, Copy)]
struct Prefix {
    cost: f64,
    segs: u32,
    last_start: usize,
}

/// True when candidate `(cost, segs, start)` beats the incumbent under the
/// shared order: lower cost, then fewer segments, then later break.
fn beats(cost: f64, segs: u32, start: usize, incumbent: &Prefix) -> bool {
    cost < incumbent.cost
        || (cost == incumbent.cost
            && (segs < incumbent.segs || (segs == incumbent.segs && start > incumbent.last_start)))
}

/// Optimal segmentation by dynamic programming.
///
/// Walking the spacing axis bin by bin, each stage either extends the open
/// segment (paying the SSE increment of merging the bin into it) or starts
/// a new one (paying the bin's own SSE plus `phi`); the first bin always
/// starts a segment. Folding those stage costs telescopes into the global
/// objective, so the recursion is solved in the equivalent last-segment
/// form: the best prefix ending at `e` extends some best prefix ending at
/// `s` by the segment `[s, e)`. Ties prefer fewer segments, then later
/// breakpoints (compared from the last one); the brute-force oracle
/// applies the same order.
pub fn segment_regress(problem: &SegmentationProblem) -> Result<PiecewiseFit, CalibError> {
    let b = problem.bins().len();
    if b == 0 || problem.n_samples() == 0 {
        return Err(CalibError::EmptyProblem);
    }

    // best[e]: optimal prefix over bins 0..e; best[0] is the empty prefix.
    let mut best: Vec<Prefix> = Vec::with_capacity(b + 1);
    best.push(Prefix {
        cost: 0.0,
        segs: 0,
        last_start: 0,
    });
    for e in 1..=b {
        let mut incumbent: Option<Prefix> = None;
        for (s, prefix) in best.iter().enumerate() {
            let cost = (prefix.cost + problem.window(s, e).sse()) + problem.phi;
            let segs = prefix.segs + 1;
            let take = match &incumbent {
                None => true,
                Some(cur) => beats(cost, segs, s, cur),
            };
            if take {
                incumbent = Some(Prefix {
                    cost,
                    segs,
                    last_start: s,
                });
            }
        }
        best.push(incumbent.expect("at least one predecessor"));
    }

    let mut breaks = Vec::with_capacity(best[b].segs as usize);
    let mut e = b;
    while e > 0 {
        let s = best[e].last_start;
        breaks.push(s);
        e = s;
    }
    breaks.reverse();
    Ok(fit_from_breaks(problem, &breaks))
}

/// Exhaustive minimization over all contiguous segmentations; the oracle
/// for [`segment_regress`]. Same canonical costs, same tie order: fewer
/// segments first, then later breakpoints compared from the last one.
pub fn brute_force_segment(problem: &SegmentationProblem) -> Result<PiecewiseFit, CalibError> {
    let b = problem.bins().len();
    if b == 0 || problem.n_samples() == 0 {
        return Err(CalibError::EmptyProblem);
    }
    if b > BRUTE_FORCE_BIN_CAP {
        return Err(CalibError::TooManyBins {
            bins: b,
            cap: BRUTE_FORCE_BIN_CAP,
        });
    }
    let later_breaks = |a: &[usize], b: &[usize]| -> bool { a.iter().rev().gt(b.iter().rev()) };
    let mut best: Option<(PiecewiseFit, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << (b - 1)) {
        let mut breaks = vec![0usize];
        for bit in 0..(b - 1) {
            if mask & (1 << bit) != 0 {
                breaks.push(bit + 1);
            }
        }
        let fit = fit_from_breaks(problem, &breaks);
        let better = match &best {
            None => true,
            Some((cur, cur_breaks)) => {
                fit.total_cost < cur.total_cost
                    || (fit.total_cost == cur.total_cost
                        && (breaks.len() < cur_breaks.len()
                            || (breaks.len() == cur_breaks.len()
                                && later_breaks(&breaks, cur_breaks))))
            }
        };
        if better {
            best = Some((fit, breaks));
        }
    }
    Ok(best.expect("at least one segmentation exists").0)
}
