//! Min-max piecewise-linear speed-spacing laws.
//!
//! A law maps an inter-vehicular spacing `y` (meters) to an equilibrium
//! velocity (meters per time step). It is the two-level composition
//! `V(y) = max( max over lower segments, min over upper segments )`
//! of affine pieces `alpha * y + beta`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

/// One affine piece `alpha * y + beta` of a law.
///
/// `alpha` is velocity-per-meter-of-spacing (per time step), `beta` is a
/// velocity in meters per time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSegment {
    pub alpha: f64,
    pub beta: f64,
}

impl AffineSegment {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    #[inline]
    pub fn value_at(&self, y: f64) -> f64 {
        self.alpha * y + self.beta
    }
}

/// Which group of a law a segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Member of the outer-max group.
    Lower,
    /// Member of the inner-min group.
    Upper,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Lower => write!(f, "lower"),
            Group::Upper => write!(f, "upper"),
        }
    }
}

/// Identifies the segment that realizes a law evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttainedBy {
    pub group: Group,
    pub index: usize,
}

/// A min-max piecewise-linear speed-spacing law.
///
/// Evaluation is `max( max_{s in lower} s(y), min_{s in upper} s(y) )`.
/// Both groups are non-empty. The law is immutable after construction and
/// all operations are pure, so it can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorLaw {
    lower: Vec<AffineSegment>,
    upper: Vec<AffineSegment>,
}

/// Errors from law construction and inversion.
#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("law must have at least one lower and one upper segment")]
    EmptyGroup,
    #[error("law coefficients must be finite (segment {index} of {group} group)")]
    NonFinite { group: Group, index: usize },
    #[error("velocity {v} is at or above the law's free-flow plateau {plateau}")]
    AboveFreeSpeed { v: f64, plateau: f64 },
    #[error("velocity {v} is below the law's minimum value {min} at zero spacing")]
    BelowMinimum { v: f64, min: f64 },
}

/// Result of a spacing inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseSpacing {
    /// Infimum of `{ y >= 0 : V(y) = v }`.
    pub spacing: f64,
    /// True when the solution set is a non-degenerate interval (the law is
    /// locally flat at `v`); `spacing` is then the canonical representative.
    pub non_unique: bool,
    /// Segment whose crossing produced the infimum.
    pub attained_by: AttainedBy,
}

impl BehaviorLaw {
    /// Builds a law from its two segment groups.
    pub fn new(lower: Vec<AffineSegment>, upper: Vec<AffineSegment>) -> Result<Self, LawError> {
        if lower.is_empty() || upper.is_empty() {
            return Err(LawError::EmptyGroup);
        }
        for (group, segs) in [(Group::Lower, &lower), (Group::Upper, &upper)] {
            if let Some(index) = segs
                .iter()
                .position(|s| !s.alpha.is_finite() || !s.beta.is_finite())
            {
                return Err(LawError::NonFinite { group, index });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Law consisting of a single affine piece (both groups hold it).
    pub fn single(segment: AffineSegment) -> Self {
        Self {
            lower: vec![segment],
            upper: vec![segment],
        }
    }

    pub fn lower(&self) -> &[AffineSegment] {
        &self.lower
    }

    pub fn upper(&self) -> &[AffineSegment] {
        &self.upper
    }

    /// Iterates `(group, index, segment)` over all segments.
    pub fn segments(&self) -> impl Iterator<Item = (Group, usize, AffineSegment)> + '_ {
        let lows = self
            .lower
            .iter()
            .enumerate()
            .map(|(i, s)| (Group::Lower, i, *s));
        let ups = self
            .upper
            .iter()
            .enumerate()
            .map(|(i, s)| (Group::Upper, i, *s));
        lows.chain(ups)
    }

    /// Evaluates the law at spacing `y`.
    ///
    /// Negative `y` is permitted (collision states during pathological
    /// simulations evaluate fine); callers that care record the violation.
    #[inline]
    pub fn evaluate(&self, y: f64) -> f64 {
        let mut low = f64::NEG_INFINITY;
        for s in &self.lower {
            low = low.max(s.value_at(y));
        }
        let mut up = f64::INFINITY;
        for s in &self.upper {
            up = up.min(s.value_at(y));
        }
        low.max(up)
    }

    /// Evaluates the law and reports which segment attains the value.
    ///
    /// Ties between the lower group and the upper minimum go to the upper
    /// segment; ties within a group go to the first segment attaining.
    pub fn evaluate_detailed(&self, y: f64) -> (f64, AttainedBy) {
        let (li, low) = argmax(&self.lower, y);
        let (ui, up) = argmin(&self.upper, y);
        if low > up {
            (
                low,
                AttainedBy {
                    group: Group::Lower,
                    index: li,
                },
            )
        } else {
            (
                up,
                AttainedBy {
                    group: Group::Upper,
                    index: ui,
                },
            )
        }
    }

    /// Supremum of the law as `y -> infinity` (the free-flow plateau).
    ///
    /// Infinite when no flat segment caps the law.
    pub fn plateau(&self) -> f64 {
        let lower_limit = if self.lower.iter().any(|s| s.alpha > 0.0) {
            f64::INFINITY
        } else {
            self.lower
                .iter()
                .filter(|s| s.alpha == 0.0)
                .map(|s| s.beta)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let amin = self
            .upper
            .iter()
            .map(|s| s.alpha)
            .fold(f64::INFINITY, f64::min);
        let upper_limit = if amin > 0.0 {
            f64::INFINITY
        } else if amin == 0.0 {
            self.upper
                .iter()
                .filter(|s| s.alpha == 0.0)
                .map(|s| s.beta)
                .fold(f64::INFINITY, f64::min)
        } else {
            f64::NEG_INFINITY
        };
        lower_limit.max(upper_limit)
    }

    /// Infimum spacing at which the law takes the value `v`.
    pub fn inverse_spacing(&self, v: f64) -> Result<f64, LawError> {
        self.inverse_spacing_detailed(v).map(|inv| inv.spacing)
    }

    /// Like [`inverse_spacing`](Self::inverse_spacing) but also reports
    /// non-uniqueness and the crossing segment.
    pub fn inverse_spacing_detailed(&self, v: f64) -> Result<InverseSpacing, LawError> {
        let at_zero = self.evaluate(0.0);
        if v < at_zero {
            return Err(LawError::BelowMinimum { v, min: at_zero });
        }
        let plateau = self.plateau();
        if v >= plateau {
            return Err(LawError::AboveFreeSpeed { v, plateau });
        }

        let tol = 1e-9 * v.abs().max(1.0);
        let mut best: Option<(f64, AttainedBy)> = None;
        let mut consider = |y: f64, who: AttainedBy| {
            if y >= 0.0 && (self.evaluate(y) - v).abs() <= tol {
                match best {
                    Some((cur, _)) if cur <= y => {}
                    _ => best = Some((y, who)),
                }
            }
        };

        if at_zero == v {
            let (_, who) = self.evaluate_detailed(0.0);
            consider(0.0, who);
        }
        for (group, index, seg) in self.segments() {
            if seg.alpha > 0.0 {
                consider((v - seg.beta) / seg.alpha, AttainedBy { group, index });
            }
        }

        let (spacing, attained_by) = best.ok_or(LawError::AboveFreeSpeed { v, plateau })?;
        let non_unique = self.right_slope(spacing) == 0.0;
        Ok(InverseSpacing {
            spacing,
            non_unique,
            attained_by,
        })
    }

    /// Slope of the law just right of `y`.
    fn right_slope(&self, y: f64) -> f64 {
        let (_, low) = argmax(&self.lower, y);
        let (_, up) = argmin(&self.upper, y);
        let dl = self
            .lower
            .iter()
            .filter(|s| s.value_at(y) == low)
            .map(|s| s.alpha)
            .fold(f64::NEG_INFINITY, f64::max);
        let du = self
            .upper
            .iter()
            .filter(|s| s.value_at(y) == up)
            .map(|s| s.alpha)
            .fold(f64::INFINITY, f64::min);
        if low > up {
            dl
        } else if up > low {
            du
        } else {
            dl.max(du)
        }
    }

    /// True iff every segment slope lies in `[0, 1]`; the second field lists
    /// the violating segments.
    pub fn check_stability_condition(&self) -> (bool, Vec<(Group, usize, AffineSegment)>) {
        let violators: Vec<_> = self
            .segments()
            .filter(|(_, _, s)| !(0.0..=1.0).contains(&s.alpha))
            .collect();
        (violators.is_empty(), violators)
    }

    /// Largest segment slope (used for continuity bounds).
    pub fn max_abs_slope(&self) -> f64 {
        self.segments()
            .map(|(_, _, s)| s.alpha.abs())
            .fold(0.0, f64::max)
    }
}

fn argmax(segs: &[AffineSegment], y: f64) -> (usize, f64) {
    let mut idx = 0;
    let mut val = f64::NEG_INFINITY;
    for (i, s) in segs.iter().enumerate() {
        let v = s.value_at(y);
        if v > val {
            val = v;
            idx = i;
        }
    }
    (idx, val)
}

fn argmin(segs: &[AffineSegment], y: f64) -> (usize, f64) {
    let mut idx = 0;
    let mut val = f64::INFINITY;
    for (i, s) in segs.iter().enumerate() {
        let v = s.value_at(y);
        if v < val {
            val = v;
            idx = i;
        }
    }
    (idx, val)
}

/// Errors reading or writing law CSV files.
#[derive(Debug, Error)]
pub enum LawFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: expected group 'lower' or 'upper', got '{value}'")]
    BadGroup { line: u64, value: String },
    #[error("line {line}: bad number '{value}' in column {column}")]
    BadNumber {
        line: u64,
        column: &'static str,
        value: String,
    },
    #[error("law file must declare columns group,alpha,beta")]
    MissingColumns,
    #[error(transparent)]
    Law(#[from] LawError),
}

/// Reads a law from CSV with header `group,alpha,beta`.
pub fn read_law_csv(path: impl AsRef<Path>) -> Result<BehaviorLaw, LawFileError> {
    let file = File::open(path)?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (gc, ac, bc) = match (col("group"), col("alpha"), col("beta")) {
        (Some(g), Some(a), Some(b)) => (g, a, b),
        _ => return Err(LawFileError::MissingColumns),
    };

    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let parse = |i: usize, column: &'static str| -> Result<f64, LawFileError> {
            field(i).parse().map_err(|_| LawFileError::BadNumber {
                line,
                column,
                value: field(i).to_string(),
            })
        };
        let seg = AffineSegment::new(parse(ac, "alpha")?, parse(bc, "beta")?);
        match field(gc) {
            "lower" => lower.push(seg),
            "upper" => upper.push(seg),
            other => {
                return Err(LawFileError::BadGroup {
                    line,
                    value: other.to_string(),
                })
            }
        }
    }
    Ok(BehaviorLaw::new(lower, upper)?)
}

/// Writes a law as CSV with header `group,alpha,beta`.
///
/// Floats are printed in shortest round-trip form, so read-back is exact.
pub fn write_law_csv(law: &BehaviorLaw, path: impl AsRef<Path>) -> Result<(), LawFileError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "group,alpha,beta")?;
    for (group, _, seg) in law.segments() {
        writeln!(w, "{},{},{}", group, seg.alpha, seg.beta)?;
    }
    w.flush()?;
    Ok(())
}

/// Ready-made empirical laws used in examples and tests.
pub mod presets {
    use super::{AffineSegment, BehaviorLaw};

    /// Six-segment law fitted to a measured speed-spacing relation:
    /// a zero floor below ~15 m and a 14 m/step free-flow plateau.
    pub fn six_segment_law() -> BehaviorLaw {
        BehaviorLaw::new(
            vec![AffineSegment::new(0.0, 0.0)],
            vec![
                AffineSegment::new(0.54, -8.1),
                AffineSegment::new(0.32, -1.47),
                AffineSegment::new(0.13, 6.11),
                AffineSegment::new(0.34, 10.6),
                AffineSegment::new(0.0, 14.0),
            ],
        )
        .expect("preset law is well formed")
    }

    /// Four-segment law identified from highway trajectory data with
    /// two-leader anticipation: zero floor, two rising pieces, 10 m/step
    /// plateau.
    pub fn four_segment_law() -> BehaviorLaw {
        BehaviorLaw::new(
            vec![AffineSegment::new(0.0, 0.0)],
            vec![
                AffineSegment::new(0.38, -1.90),
                AffineSegment::new(0.11, 2.95),
                AffineSegment::new(0.0, 10.0),
            ],
        )
        .expect("preset law is well formed")
    }
}
