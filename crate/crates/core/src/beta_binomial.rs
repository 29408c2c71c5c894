//! Beta priors in canonical `(n, y)` form, conjugate updating, and the
//! Beta-Binomial posterior predictive for the number of functioning
//! components in a new system.
//!
//! With `α = n·y` and `β = n·(1 − y)`, `y` is the prior mean functioning
//! probability and `n` its strength in pseudo-observations. Observing `s`
//! functioning out of `N` tested moves `y` to the weighted average
//! `(n·y + s)/(n + N)` and `n` to `n + N`.

use thiserror::Error;

use crate::grid::{GridError, TimeGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BetaError {
    #[error("Beta shape parameters must be positive and finite (alpha = {alpha}, beta = {beta})")]
    NonPositiveShape { alpha: f64, beta: f64 },
    #[error("prior strength n must be positive and finite, got {0}")]
    InvalidStrength(f64),
    #[error("mean functioning probability y must lie in (0, 1), got {0}")]
    InvalidMean(f64),
    #[error("observed survivors {s_obs} exceed tested components {n_obs}")]
    ObservationOutOfRange { n_obs: u64, s_obs: u64 },
    #[error("l = {l} outside 0..={m}")]
    OutOfSupport { l: usize, m: usize },
    #[error("non-finite Beta-Binomial probability at l = {l} (alpha = {alpha}, beta = {beta})")]
    NonFinite { l: usize, alpha: f64, beta: f64 },
}

/// Beta parameters as prior strength `n > 0` and mean `y ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalBetaParams {
    n: f64,
    y: f64,
}

impl CanonicalBetaParams {
    pub fn new(n: f64, y: f64) -> Result<Self, BetaError> {
        if !(n.is_finite() && n > 0.0) {
            return Err(BetaError::InvalidStrength(n));
        }
        if !(y > 0.0 && y < 1.0) {
            return Err(BetaError::InvalidMean(y));
        }
        Ok(Self { n, y })
    }

    /// Like [`Self::new`] but first clamps `y` into `[eps, 1 − eps]`.
    pub fn clamped(n: f64, y: f64, eps: f64) -> Result<Self, BetaError> {
        if y.is_nan() {
            return Err(BetaError::InvalidMean(y));
        }
        Self::new(n, y.clamp(eps, 1.0 - eps))
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// `(α, β) = (n·y, n·(1 − y))`.
    pub fn shape(&self) -> (f64, f64) {
        (self.n * self.y, self.n * (1.0 - self.y))
    }
}

/// `(α, β) ↦ (n, y) = (α + β, α / (α + β))`.
pub fn to_canonical(alpha: f64, beta: f64) -> Result<CanonicalBetaParams, BetaError> {
    if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
        return Err(BetaError::NonPositiveShape { alpha, beta });
    }
    CanonicalBetaParams::new(alpha + beta, alpha / (alpha + beta))
}

/// Inverse of [`to_canonical`].
pub fn from_canonical(params: CanonicalBetaParams) -> (f64, f64) {
    params.shape()
}

/// Conjugate update after `s_obs` of `n_obs` tested components function.
pub fn update(
    prior: CanonicalBetaParams,
    n_obs: u64,
    s_obs: u64,
) -> Result<CanonicalBetaParams, BetaError> {
    if s_obs > n_obs {
        return Err(BetaError::ObservationOutOfRange { n_obs, s_obs });
    }
    if n_obs == 0 {
        return Ok(prior);
    }
    let n = prior.n + n_obs as f64;
    let y = (prior.n * prior.y + s_obs as f64) / n;
    CanonicalBetaParams::new(n, y)
}

/// Beta-Binomial law of the number of functioning components among `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBinomialDist {
    m: usize,
    alpha: f64,
    beta: f64,
}

impl BetaBinomialDist {
    pub fn new(m: usize, params: CanonicalBetaParams) -> Self {
        let (alpha, beta) = params.shape();
        Self { m, alpha, beta }
    }

    /// Posterior predictive for prior `(n⁰, y⁰)` after `s_obs` of `n_obs`
    /// function. Shapes are accumulated directly (`n⁰y⁰ + s`,
    /// `n⁰(1 − y⁰) + N − s`) rather than via the rounded posterior mean.
    pub fn posterior(
        m: usize,
        prior: CanonicalBetaParams,
        n_obs: u64,
        s_obs: u64,
    ) -> Result<Self, BetaError> {
        if s_obs > n_obs {
            return Err(BetaError::ObservationOutOfRange { n_obs, s_obs });
        }
        let (a, b) = prior.shape();
        Ok(Self { m, alpha: a + s_obs as f64, beta: b + (n_obs - s_obs) as f64 })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> CanonicalBetaParams {
        let n = self.alpha + self.beta;
        CanonicalBetaParams { n, y: self.alpha / n }
    }

    pub fn shape(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    /// `ln P(C = l)`.
    ///
    /// `B(l + α, m − l + β) / B(α, β)` is a ratio of Gamma functions whose
    /// arguments differ by integers, so `Γ(x + 1) = xΓ(x)` turns it into
    /// `∏_{x<l} (α+x)/(α+β+x) · ∏_{x<m−l} (β+x)/(α+β+l+x)`. Each factor lies
    /// in (0, 1) and is summed in log space, which avoids the cancellation
    /// of differencing large `ln Γ` values when `n` is big.
    pub fn ln_pmf(&self, l: usize) -> Result<f64, BetaError> {
        let m = self.m;
        if l > m {
            return Err(BetaError::OutOfSupport { l, m });
        }
        let (a, b) = (self.alpha, self.beta);
        let mut acc = ln_binomial(m, l);
        for x in 0..l {
            acc += ln_ratio(a + x as f64, b, a + b + x as f64);
        }
        let shift = a + l as f64;
        for x in 0..m - l {
            acc += ln_ratio(b + x as f64, shift, a + b + (l + x) as f64);
        }
        if acc.is_nan() || acc == f64::INFINITY {
            return Err(BetaError::NonFinite { l, alpha: a, beta: b });
        }
        Ok(acc)
    }

    pub fn pmf(&self, l: usize) -> Result<f64, BetaError> {
        self.ln_pmf(l).map(f64::exp)
    }

    /// `P(C ≤ l)`.
    pub fn cmf(&self, l: usize) -> Result<f64, BetaError> {
        if l > self.m {
            return Err(BetaError::OutOfSupport { l, m: self.m });
        }
        let mut total = 0.0;
        for j in 0..=l {
            total += self.pmf(j)?;
        }
        Ok(total.min(1.0))
    }

    /// `[P(C = 0), …, P(C = m)]`.
    pub fn pmf_vec(&self) -> Result<Vec<f64>, BetaError> {
        (0..=self.m).map(|l| self.pmf(l)).collect()
    }

    /// `[P(C ≤ 0), …, P(C ≤ m)]`.
    pub fn cmf_vec(&self) -> Result<Vec<f64>, BetaError> {
        let mut running = 0.0;
        self.pmf_vec().map(|p| {
            p.into_iter()
                .map(|x| {
                    running += x;
                    running.min(1.0)
                })
                .collect()
        })
    }

    pub fn mean(&self) -> f64 {
        self.m as f64 * self.alpha / (self.alpha + self.beta)
    }
}

/// `ln(num/den)` where `den = num + complement`, picking the form that keeps
/// relative accuracy when the ratio is close to 1.
fn ln_ratio(num: f64, complement: f64, den: f64) -> f64 {
    let r = num / den;
    if r < 0.5 {
        r.ln()
    } else {
        (-complement / den).ln_1p()
    }
}

fn ln_binomial(m: usize, l: usize) -> f64 {
    let l = l.min(m - l);
    if m <= 50 {
        // Exact in f64: every partial product is an integer below 2^53.
        let mut c = 1.0f64;
        for i in 0..l {
            c = c * (m - i) as f64 / (i + 1) as f64;
        }
        c.ln()
    } else {
        (0..l).map(|i| ((m - i) as f64 / (i + 1) as f64).ln()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{values} reliability values for {times} grid points")]
    LengthMismatch { times: usize, values: usize },
    #[error("reliability {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("reliability increases at index {index} ({prev} then {next})")]
    NonMonotone { index: usize, prev: f64, next: f64 },
    #[error("zero reliability at index {index}; hazard undefined")]
    ZeroReliability { index: usize },
}

/// Discrete reliability function `p_t = P(T > t)` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityCurve {
    times: TimeGrid,
    values: Vec<f64>,
}

impl ReliabilityCurve {
    pub fn new(times: TimeGrid, values: Vec<f64>) -> Result<Self, CurveError> {
        if times.len() != values.len() {
            return Err(CurveError::LengthMismatch { times: times.len(), values: values.len() });
        }
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(CurveError::OutOfRange { index, value });
            }
        }
        for (i, w) in values.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(CurveError::NonMonotone { index: i + 1, prev: w[0], next: w[1] });
            }
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-interval failure mass and hazard of a discrete reliability curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfHazard {
    /// `f(t_j) = p_{t_j} − p_{t_{j+1}}`
    pub pmf: Vec<f64>,
    /// `h(t_j) = f(t_j) / p_{t_j}`
    pub hazard: Vec<f64>,
}

pub fn discrete_pmf_hazard(curve: &ReliabilityCurve) -> Result<PmfHazard, CurveError> {
    let p = &curve.values;
    let mut pmf = Vec::with_capacity(p.len().saturating_sub(1));
    let mut hazard = Vec::with_capacity(pmf.capacity());
    for (index, w) in p.windows(2).enumerate() {
        if w[0] == 0.0 {
            return Err(CurveError::ZeroReliability { index });
        }
        let f = w[0] - w[1];
        pmf.push(f);
        hazard.push(f / w[0]);
    }
    Ok(PmfHazard { pmf, hazard })
}
