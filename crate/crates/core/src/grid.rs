//! Evaluation time grids.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("time grid is empty")]
    Empty,
    #[error("time grid is not strictly increasing at index {index} ({prev} then {next})")]
    NotIncreasing { index: usize, prev: f64, next: f64 },
    #[error("non-finite or negative time {0}")]
    BadTime(f64),
    #[error("cannot parse decimal `{0}`")]
    BadDecimal(String),
    #[error("step must be positive")]
    BadStep,
    #[error("stop {stop} is before start {start}")]
    StopBeforeStart { start: String, stop: String },
    #[error("grid would have {0} points; refusing")]
    TooLarge(u64),
}

/// Strictly increasing, nonnegative evaluation times `t₁ < … < t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, GridError> {
        if times.is_empty() {
            return Err(GridError::Empty);
        }
        for &t in &times {
            if !t.is_finite() || t < 0.0 {
                return Err(GridError::BadTime(t));
            }
        }
        for (i, w) in times.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(GridError::NotIncreasing { index: i + 1, prev: w[0], next: w[1] });
            }
        }
        Ok(Self(times))
    }

    /// Inclusive `start, start+step, …, stop` from decimal strings.
    ///
    /// All three values are scaled to integers at a common power of ten, so
    /// the k-th point is the double nearest to `start + k·step` exactly; no
    /// error accumulates from repeated addition.
    pub fn from_decimal_range(start: &str, stop: &str, step: &str) -> Result<Self, GridError> {
        let parsed = [parse_decimal(start)?, parse_decimal(stop)?, parse_decimal(step)?];
        let scale = parsed.iter().map(|d| d.1).max().unwrap_or(0);
        let [a, b, h] = parsed.map(|(mant, places)| mant * 10i128.pow(scale - places));
        if h <= 0 {
            return Err(GridError::BadStep);
        }
        if b < a {
            return Err(GridError::StopBeforeStart { start: start.into(), stop: stop.into() });
        }
        let count = (b - a) / h + 1;
        if count > 10_000_000 {
            return Err(GridError::TooLarge(count as u64));
        }
        let denom = 10f64.powi(scale as i32);
        let times = (0..count).map(|k| (a + k * h) as f64 / denom).collect();
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the grid point equal to `t` (relative tolerance 1e-9).
    pub fn position(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let idx = self.0.partition_point(|&g| g < t - tol);
        (idx < self.0.len() && (self.0[idx] - t).abs() <= tol).then_some(idx)
    }
}

/// Parses a plain decimal into (mantissa, decimal places).
fn parse_decimal(s: &str) -> Result<(i128, u32), GridError> {
    let bad = || GridError::BadDecimal(s.to_string());
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if (int.is_empty() && frac.is_empty())
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
        || frac.len() > 12
    {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let mant: i128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
    Ok((if neg { -mant } else { mant }, frac.len() as u32))
}
