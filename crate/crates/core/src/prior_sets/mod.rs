//! Rectangular sets of Beta priors over a time grid, component test data,
//! posterior bounds on the mean functioning probability and prior-data
//! conflict.

mod io;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::grid::{GridError, TimeGrid};

pub use io::{build_prior_spec, read_prior_csv, read_test_data_csv, PriorRow, PriorTable, ScalarPrior};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("prior strength bounds must satisfy 0 < n_lower <= n_upper (got [{n_lower}, {n_upper}])")]
    InvalidStrength { n_lower: f64, n_upper: f64 },
    #[error("functioning probability bounds must satisfy 0 <= y_lower <= y_upper <= 1 (got [{y_lower}, {y_upper}])")]
    InvalidMean { y_lower: f64, y_upper: f64 },
    #[error("observed survivors {s_obs} exceed tested components {n_obs}")]
    ObservationOutOfRange { n_obs: u64, s_obs: u64 },
    #[error("prior-data conflict is undefined without observations")]
    NoObservations,
    #[error("type {label}: {count} prior rectangles for a grid of {grid} points")]
    GridLengthMismatch { label: String, count: usize, grid: usize },
    #[error("type {label}: {bound} prior bound increases from t = {t0} to t = {t1}")]
    IncreasingBound { label: String, bound: &'static str, t0: f64, t1: f64 },
    #[error("elicited time {0} is not a grid point")]
    OffGrid(f64),
    #[error("elicited time {0} appears more than once")]
    DuplicateTime(f64),
    #[error("elicited {bound} bounds increase between t = {t0} and t = {t1}")]
    ElicitedIncreasing { bound: &'static str, t0: f64, t1: f64 },
    #[error("failure time {value} for type {label} is negative or non-finite")]
    InvalidFailureTime { label: String, value: f64 },
    #[error("Weibull parameters must be positive with scale_lower <= scale_upper")]
    InvalidWeibull,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Invalid(String),
    #[error("{file}line {line}: {message}")]
    Csv { file: String, line: u64, message: String },
}

impl PriorError {
    pub(crate) fn csv(line: u64, message: impl Into<String>) -> Self {
        PriorError::Csv { file: String::new(), line, message: message.into() }
    }

    /// Prefixes CSV errors with the file they came from.
    pub fn in_file(self, path: &str) -> Self {
        match self {
            PriorError::Csv { line, message, .. } => PriorError::Csv { file: format!("{path}: "), line, message },
            other => other,
        }
    }
}

/// `Π⁰ = [n̲, n̄] × [y̲, ȳ]` for one type at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorRectangle {
    n_lower: f64,
    n_upper: f64,
    y_lower: f64,
    y_upper: f64,
}

impl PriorRectangle {
    /// Validates the bounds and clamps both `y` bounds into `[eps, 1 − eps]`.
    pub fn new(n_lower: f64, n_upper: f64, y_lower: f64, y_upper: f64, eps: f64) -> Result<Self, PriorError> {
        if !(n_lower.is_finite() && n_upper.is_finite() && n_lower > 0.0 && n_lower <= n_upper) {
            return Err(PriorError::InvalidStrength { n_lower, n_upper });
        }
        if !(0.0 <= y_lower && y_lower <= y_upper && y_upper <= 1.0) {
            return Err(PriorError::InvalidMean { y_lower, y_upper });
        }
        let clamp = |y: f64| y.clamp(eps, 1.0 - eps);
        Ok(Self { n_lower, n_upper, y_lower: clamp(y_lower), y_upper: clamp(y_upper) })
    }

    /// `[n̲, n̄] × [ε, 1 − ε]`.
    pub fn near_noninformative(n_lower: f64, n_upper: f64, eps: f64) -> Result<Self, PriorError> {
        Self::new(n_lower, n_upper, 0.0, 1.0, eps)
    }

    pub fn n_lower(&self) -> f64 {
        self.n_lower
    }

    pub fn n_upper(&self) -> f64 {
        self.n_upper
    }

    pub fn y_lower(&self) -> f64 {
        self.y_lower
    }

    pub fn y_upper(&self) -> f64 {
        self.y_upper
    }

    pub fn n_bound(&self, end: NEndpoint) -> f64 {
        match end {
            NEndpoint::Lower => self.n_lower,
            NEndpoint::Upper => self.n_upper,
        }
    }

    pub fn is_degenerate_in_n(&self) -> bool {
        self.n_lower == self.n_upper
    }
}

/// Which end of `[n̲, n̄]` attains a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NEndpoint {
    Lower,
    Upper,
}

/// Per type, a prior rectangle at every point of a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    grid: TimeGrid,
    rects: BTreeMap<String, Vec<PriorRectangle>>,
}

impl PriorSpec {
    /// Requires one rectangle per grid point and both `y` bounds
    /// nonincreasing in `t`. Varying `n` bounds are allowed here and
    /// reported by [`lint_prior`].
    pub fn new(grid: TimeGrid, rects: BTreeMap<String, Vec<PriorRectangle>>) -> Result<Self, PriorError> {
        for (label, rs) in &rects {
            if rs.len() != grid.len() {
                return Err(PriorError::GridLengthMismatch { label: label.clone(), count: rs.len(), grid: grid.len() });
            }
            for (j, w) in rs.windows(2).enumerate() {
                let (t0, t1) = (grid.times()[j], grid.times()[j + 1]);
                if w[1].y_lower > w[0].y_lower {
                    return Err(PriorError::IncreasingBound { label: label.clone(), bound: "lower", t0, t1 });
                }
                if w[1].y_upper > w[0].y_upper {
                    return Err(PriorError::IncreasingBound { label: label.clone(), bound: "upper", t0, t1 });
                }
            }
        }
        Ok(Self { grid, rects })
    }

    /// The same rectangle for every listed type and every grid point.
    pub fn homogeneous(grid: TimeGrid, labels: &[String], rect: PriorRectangle) -> Self {
        let rects = labels.iter().map(|l| (l.clone(), vec![rect; grid.len()])).collect();
        Self { grid, rects }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.rects.keys().map(String::as_str)
    }

    pub fn rects(&self, label: &str) -> Option<&[PriorRectangle]> {
        self.rects.get(label).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[PriorRectangle])> {
        self.rects.iter().map(|(l, r)| (l.as_str(), r.as_slice()))
    }
}

/// Observed failure times per component type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TestData {
    failures: BTreeMap<String, Vec<f64>>,
}

impl TestData {
    pub fn new(failures: BTreeMap<String, Vec<f64>>) -> Result<Self, PriorError> {
        for (label, times) in &failures {
            if let Some(&value) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
                return Err(PriorError::InvalidFailureTime { label: label.clone(), value });
            }
        }
        Ok(Self { failures })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.failures.keys().map(String::as_str)
    }

    /// Failure times of `label`; empty when the type was not tested.
    pub fn failures(&self, label: &str) -> &[f64] {
        self.failures.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn n_obs(&self, label: &str) -> u64 {
        self.failures(label).len() as u64
    }
}

/// `s_t = #{observations > t}` for each type and grid point.
pub fn survival_counts(data: &TestData, grid: &TimeGrid) -> BTreeMap<String, Vec<u64>> {
    data.failures
        .iter()
        .map(|(label, obs)| (label.clone(), survivors(obs, grid)))
        .collect()
}

pub(crate) fn survivors(obs: &[f64], grid: &TimeGrid) -> Vec<u64> {
    grid.times().iter().map(|&t| obs.iter().filter(|&&x| x > t).count() as u64).collect()
}

/// Range of posterior means over the updated parameter set and the `n⁰`
/// endpoint at which each end is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorYBounds {
    pub y_lower_post: f64,
    pub y_upper_post: f64,
    pub attained_lower: NEndpoint,
    pub attained_upper: NEndpoint,
}

impl PosteriorYBounds {
    pub fn width(&self) -> f64 {
        self.y_upper_post - self.y_lower_post
    }
}

/// Closed-form posterior bounds on `y`.
///
/// The lower bound always uses `y̲⁰` and the upper `ȳ⁰`. The lower bound
/// takes `n̄⁰` when `s/n ≥ y̲⁰` and `n̲⁰` otherwise; the upper bound takes
/// `n̄⁰` when `s/n ≤ ȳ⁰` and `n̲⁰` otherwise.
pub fn posterior_y_bounds(rect: &PriorRectangle, n_obs: u64, s_obs: u64) -> Result<PosteriorYBounds, PriorError> {
    if s_obs > n_obs {
        return Err(PriorError::ObservationOutOfRange { n_obs, s_obs });
    }
    if n_obs == 0 {
        return Ok(PosteriorYBounds {
            y_lower_post: rect.y_lower,
            y_upper_post: rect.y_upper,
            attained_lower: NEndpoint::Upper,
            attained_upper: NEndpoint::Upper,
        });
    }
    let fraction = s_obs as f64 / n_obs as f64;
    let post = |n0: f64, y0: f64| (n0 * y0 + s_obs as f64) / (n0 + n_obs as f64);
    let attained_lower = if fraction >= rect.y_lower { NEndpoint::Upper } else { NEndpoint::Lower };
    let attained_upper = if fraction <= rect.y_upper { NEndpoint::Upper } else { NEndpoint::Lower };
    Ok(PosteriorYBounds {
        y_lower_post: post(rect.n_bound(attained_lower), rect.y_lower),
        y_upper_post: post(rect.n_bound(attained_upper), rect.y_upper),
        attained_lower,
        attained_upper,
    })
}

/// `s/n ∉ [y̲⁰, ȳ⁰]` (the interval is closed).
pub fn detect_conflict(rect: &PriorRectangle, n_obs: u64, s_obs: u64) -> Result<bool, PriorError> {
    if n_obs == 0 {
        return Err(PriorError::NoObservations);
    }
    if s_obs > n_obs {
        return Err(PriorError::ObservationOutOfRange { n_obs, s_obs });
    }
    let fraction = s_obs as f64 / n_obs as f64;
    Ok(fraction < rect.y_lower || fraction > rect.y_upper)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictEntry {
    pub t: f64,
    /// `s_t / n`, absent when the type has no observations.
    pub fraction: Option<f64>,
    pub y_lower: f64,
    pub y_upper: f64,
    pub conflict: bool,
}

/// Per type, per grid point conflict flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConflictReport {
    pub entries: BTreeMap<String, Vec<ConflictEntry>>,
}

impl ConflictReport {
    pub fn build(spec: &PriorSpec, data: &TestData) -> Self {
        let entries = spec
            .iter()
            .map(|(label, rects)| {
                let n = data.n_obs(label);
                let s = survivors(data.failures(label), spec.grid());
                let row = rects
                    .iter()
                    .zip(spec.grid().times())
                    .zip(s)
                    .map(|((rect, &t), s_t)| ConflictEntry {
                        t,
                        fraction: (n > 0).then(|| s_t as f64 / n as f64),
                        y_lower: rect.y_lower,
                        y_upper: rect.y_upper,
                        conflict: n > 0 && detect_conflict(rect, n, s_t).unwrap_or(false),
                    })
                    .collect();
                (label.to_string(), row)
            })
            .collect();
        Self { entries }
    }

    /// Maximal runs of consecutive flagged grid points as `(t_first, t_last)`.
    pub fn conflict_ranges(&self, label: &str) -> Vec<(f64, f64)> {
        let mut ranges = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for e in self.entries.get(label).map(Vec::as_slice).unwrap_or(&[]) {
            match (e.conflict, open.as_mut()) {
                (true, Some(run)) => run.1 = e.t,
                (true, None) => open = Some((e.t, e.t)),
                (false, Some(_)) => ranges.extend(open.take()),
                (false, None) => {}
            }
        }
        ranges.extend(open);
        ranges
    }
}

/// Densifies sparsely elicited `(t, y̲, ȳ)` onto `grid` with the least
/// committal bounds: `ȳ(t)` from the latest elicited time `≤ t` (else
/// `1 − eps`), `y̲(t)` from the earliest elicited time `≥ t` (else `eps`).
pub fn fill_bounds(elicited: &[(f64, f64, f64)], grid: &TimeGrid, eps: f64) -> Result<Vec<(f64, f64)>, PriorError> {
    let mut points: Vec<(usize, f64, f64)> = Vec::with_capacity(elicited.len());
    for &(t, lo, hi) in elicited {
        let idx = grid.position(t).ok_or(PriorError::OffGrid(t))?;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(PriorError::InvalidMean { y_lower: lo, y_upper: hi });
        }
        points.push((idx, lo, hi));
    }
    points.sort_by_key(|p| p.0);
    for w in points.windows(2) {
        let (t0, t1) = (grid.times()[w[0].0], grid.times()[w[1].0]);
        if w[0].0 == w[1].0 {
            return Err(PriorError::DuplicateTime(t0));
        }
        if w[1].1 > w[0].1 {
            return Err(PriorError::ElicitedIncreasing { bound: "lower", t0, t1 });
        }
        if w[1].2 > w[0].2 {
            return Err(PriorError::ElicitedIncreasing { bound: "upper", t0, t1 });
        }
    }
    let lower = fill_forward_lower(&points.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(), grid.len(), eps);
    let upper = fill_backward_upper(&points.iter().map(|p| (p.0, p.2)).collect::<Vec<_>>(), grid.len(), eps);
    Ok(lower.into_iter().zip(upper).collect())
}

/// `y̲(t_j)` = value at the earliest elicited index `≥ j`, else `eps`.
pub(crate) fn fill_forward_lower(points: &[(usize, f64)], len: usize, eps: f64) -> Vec<f64> {
    (0..len)
        .map(|j| points.iter().find(|p| p.0 >= j).map_or(eps, |p| p.1).max(eps))
        .collect()
}

/// `ȳ(t_j)` = value at the latest elicited index `≤ j`, else `1 − eps`.
pub(crate) fn fill_backward_upper(points: &[(usize, f64)], len: usize, eps: f64) -> Vec<f64> {
    (0..len)
        .map(|j| points.iter().rev().find(|p| p.0 <= j).map_or(1.0 - eps, |p| p.1).min(1.0 - eps))
        .collect()
}

/// Prior `y` bounds from a Weibull reliability function
/// `exp(−(t/scale)^shape)` at two scales, clamped into `[eps, 1 − eps]`.
pub fn weibull_prior_bounds(
    shape: f64,
    scale_lower: f64,
    scale_upper: f64,
    grid: &TimeGrid,
    eps: f64,
) -> Result<Vec<(f64, f64)>, PriorError> {
    let ok = |x: f64| x.is_finite() && x > 0.0;
    if !(ok(shape) && ok(scale_lower) && ok(scale_upper) && scale_lower <= scale_upper) {
        return Err(PriorError::InvalidWeibull);
    }
    let surv = |t: f64, scale: f64| (-(t / scale).powf(shape)).exp().clamp(eps, 1.0 - eps);
    Ok(grid.times().iter().map(|&t| (surv(t, scale_lower), surv(t, scale_upper))).collect())
}

/// Advisory findings about a prior specification.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorWarning {
    /// `n` bounds change over the grid.
    VaryingStrength { label: String, n_lower_range: (f64, f64), n_upper_range: (f64, f64) },
    /// `n̄⁰` far from the test sample size.
    HalfWidthRule { label: String, n_upper: f64, n_obs: u64 },
    /// A `y` bound sits at the clamp.
    AtClamp { label: String, bound: &'static str, count: usize },
    /// Data fraction falls outside the prior interval at every grid point.
    GlobalConflict { label: String },
}

impl fmt::Display for PriorWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::VaryingStrength { label, n_lower_range, n_upper_range } => write!(
                f,
                "{label}: n bounds vary over time (n_lower in [{}, {}], n_upper in [{}, {}]); posterior bounds may lose monotonicity",
                n_lower_range.0, n_lower_range.1, n_upper_range.0, n_upper_range.1
            ),
            Self::HalfWidthRule { label, n_upper, n_obs } => write!(
                f,
                "{label}: n_upper = {n_upper} is far from the test sample size {n_obs}; n_upper = n halves the prior y-interval when data agree"
            ),
            Self::AtClamp { label, bound, count } => write!(
                f,
                "{label}: {bound} y bound at the epsilon clamp at {count} grid point(s) (near-noninformative)"
            ),
            Self::GlobalConflict { label } => {
                write!(f, "{label}: observed survival fraction is outside the prior y-interval at every grid point")
            }
        }
    }
}

/// Half-width lint fires when `n̄⁰ > 2·n` or `n̄⁰ < n/4`.
pub const HALF_WIDTH_HIGH: f64 = 2.0;
pub const HALF_WIDTH_LOW: f64 = 0.25;

pub fn lint_prior(spec: &PriorSpec, data: &TestData, eps: f64) -> Vec<PriorWarning> {
    let mut warnings = Vec::new();
    let at_clamp = |y: f64, target: f64| (y - target).abs() <= 1e-12;
    for (label, rects) in spec.iter() {
        let label_s = label.to_string();
        let range = |f: fn(&PriorRectangle) -> f64| {
            rects.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        };
        let nl = range(PriorRectangle::n_lower);
        let nu = range(PriorRectangle::n_upper);
        if nl.0 != nl.1 || nu.0 != nu.1 {
            warnings.push(PriorWarning::VaryingStrength { label: label_s.clone(), n_lower_range: nl, n_upper_range: nu });
        }
        let n = data.n_obs(label);
        if n > 0 {
            let nf = n as f64;
            if let Some(r) = rects.iter().find(|r| r.n_upper > HALF_WIDTH_HIGH * nf || r.n_upper < HALF_WIDTH_LOW * nf) {
                warnings.push(PriorWarning::HalfWidthRule { label: label_s.clone(), n_upper: r.n_upper, n_obs: n });
            }
        }
        let low = rects.iter().filter(|r| at_clamp(r.y_lower, eps)).count();
        if low > 0 {
            warnings.push(PriorWarning::AtClamp { label: label_s.clone(), bound: "lower", count: low });
        }
        let high = rects.iter().filter(|r| at_clamp(r.y_upper, 1.0 - eps)).count();
        if high > 0 {
            warnings.push(PriorWarning::AtClamp { label: label_s.clone(), bound: "upper", count: high });
        }
        if n > 0 {
            let s = survivors(data.failures(label), spec.grid());
            if rects.iter().zip(&s).all(|(r, &s_t)| detect_conflict(r, n, s_t).unwrap_or(false)) {
                warnings.push(PriorWarning::GlobalConflict { label: label_s });
            }
        }
    }
    warnings
}
