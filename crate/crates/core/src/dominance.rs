//! First-order stochastic ordering of Beta-Binomial posterior predictives
//! across the prior strength interval `[n̲⁰, n̄⁰]` at a fixed prior mean.
//!
//! Two sufficient conditions are checked: a threshold test on `y` that needs
//! no special functions, and a tail test on the likelihood ratio
//! `𝓛(l) = P_{n̄}(C = l) / P_{n̲}(C = l)` at `l = 0` and `l = m`. When
//! neither applies the caller has to search over `n⁰`.

use std::fmt;

use thiserror::Error;

use crate::beta_binomial::{BetaBinomialDist, BetaError, CanonicalBetaParams};
use crate::prior_sets::PriorRectangle;
use crate::system_bounds::Bound;

/// Tolerance for weak inequalities on likelihood ratios and cmfs.
pub const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DominanceError {
    #[error("observed survivors {s_obs} exceed tested components {n_obs}")]
    ObservationOutOfRange { n_obs: u64, s_obs: u64 },
    #[error("need n_lower < n_upper (got {n_lower}, {n_upper})")]
    InvalidInterval { n_lower: f64, n_upper: f64 },
    #[error("number of components m must be at least 1")]
    EmptyType,
    #[error("distributions have different support sizes ({0} vs {1})")]
    MismatchedM(usize, usize),
    #[error(transparent)]
    Beta(#[from] BetaError),
}

/// Ordering between the predictive at `n̄⁰` and the one at `n̲⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StochasticOrder {
    /// `β_{n̄} ≥st β_{n̲}`.
    UpperNDominates,
    /// `β_{n̲} ≥st β_{n̄}`.
    LowerNDominates,
    Undetermined,
}

/// Which check produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecisionSource {
    None,
    Degenerate,
    Theorem2,
    Lemma3,
}

impl DecisionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Degenerate => "degenerate",
            Self::Theorem2 => "theorem2",
            Self::Lemma3 => "lemma3",
        }
    }
}

impl fmt::Display for DecisionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DominanceDecision {
    pub verdict: StochasticOrder,
    pub source: DecisionSource,
}

impl DominanceDecision {
    pub const UNDETERMINED: Self = Self { verdict: StochasticOrder::Undetermined, source: DecisionSource::None };

    fn decided(verdict: StochasticOrder, source: DecisionSource) -> Self {
        Self { verdict, source }
    }

    pub fn is_decided(&self) -> bool {
        self.verdict != StochasticOrder::Undetermined
    }
}

fn check_obs(n_obs: u64, s_obs: u64) -> Result<(), DominanceError> {
    if s_obs > n_obs {
        Err(DominanceError::ObservationOutOfRange { n_obs, s_obs })
    } else {
        Ok(())
    }
}

/// Threshold test at fixed `y`, valid for every pair `n̲⁰ < n̄⁰`:
/// `y > (s+m−1)/(N+m−1)` gives `n̄⁰` dominating, `y < s/(N+m−1)` gives
/// `n̲⁰` dominating. Both inequalities are strict.
pub fn theorem2_check(y: f64, s_obs: u64, n_obs: u64, m: usize) -> Result<DominanceDecision, DominanceError> {
    check_obs(n_obs, s_obs)?;
    if m == 0 {
        return Err(DominanceError::EmptyType);
    }
    let denom = n_obs + m as u64 - 1;
    if denom == 0 {
        return Ok(DominanceDecision::UNDETERMINED);
    }
    let denom = denom as f64;
    let upper_threshold = (s_obs + m as u64 - 1) as f64 / denom;
    let lower_threshold = s_obs as f64 / denom;
    Ok(if y > upper_threshold {
        DominanceDecision::decided(StochasticOrder::UpperNDominates, DecisionSource::Theorem2)
    } else if y < lower_threshold {
        DominanceDecision::decided(StochasticOrder::LowerNDominates, DecisionSource::Theorem2)
    } else {
        DominanceDecision::UNDETERMINED
    })
}

/// `𝓛(0)` and `𝓛(m)` for the posterior predictives at `n̄⁰` over `n̲⁰`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodRatioEndpoints {
    pub l0: f64,
    pub lm: f64,
}

pub fn likelihood_ratio_endpoints(
    y: f64,
    n_lower: f64,
    n_upper: f64,
    m: usize,
    s_obs: u64,
    n_obs: u64,
) -> Result<LikelihoodRatioEndpoints, DominanceError> {
    check_obs(n_obs, s_obs)?;
    if m == 0 {
        return Err(DominanceError::EmptyType);
    }
    if !(n_lower < n_upper) {
        return Err(DominanceError::InvalidInterval { n_lower, n_upper });
    }
    let hi = BetaBinomialDist::posterior(m, CanonicalBetaParams::new(n_upper, y)?, n_obs, s_obs)?;
    let lo = BetaBinomialDist::posterior(m, CanonicalBetaParams::new(n_lower, y)?, n_obs, s_obs)?;
    let ratio = |l: usize| -> Result<f64, BetaError> { Ok((hi.ln_pmf(l)? - lo.ln_pmf(l)?).exp()) };
    Ok(LikelihoodRatioEndpoints { l0: ratio(0)?, lm: ratio(m)? })
}

/// Tail test: `𝓛(0) ≤ 1 ≤ 𝓛(m)` gives `n̄⁰` dominating, `𝓛(0) ≥ 1 ≥ 𝓛(m)`
/// gives `n̲⁰` dominating. Weak inequalities hold within [`TOLERANCE`].
pub fn lemma3_check(
    y: f64,
    n_lower: f64,
    n_upper: f64,
    m: usize,
    s_obs: u64,
    n_obs: u64,
) -> Result<DominanceDecision, DominanceError> {
    let LikelihoodRatioEndpoints { l0, lm } = likelihood_ratio_endpoints(y, n_lower, n_upper, m, s_obs, n_obs)?;
    let le_one = |x: f64| x <= 1.0 + TOLERANCE;
    let ge_one = |x: f64| x >= 1.0 - TOLERANCE;
    Ok(if le_one(l0) && ge_one(lm) {
        DominanceDecision::decided(StochasticOrder::UpperNDominates, DecisionSource::Lemma3)
    } else if ge_one(l0) && le_one(lm) {
        DominanceDecision::decided(StochasticOrder::LowerNDominates, DecisionSource::Lemma3)
    } else {
        DominanceDecision::UNDETERMINED
    })
}

/// Degenerate interval, then the threshold test, then the tail test.
pub fn decide(
    y: f64,
    n_lower: f64,
    n_upper: f64,
    m: usize,
    s_obs: u64,
    n_obs: u64,
) -> Result<DominanceDecision, DominanceError> {
    if n_lower == n_upper {
        return Ok(DominanceDecision::decided(StochasticOrder::UpperNDominates, DecisionSource::Degenerate));
    }
    let t2 = theorem2_check(y, s_obs, n_obs, m)?;
    if t2.is_decided() {
        return Ok(t2);
    }
    lemma3_check(y, n_lower, n_upper, m, s_obs, n_obs)
}

/// Result of comparing two distributions by their cmfs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    FirstDominates,
    SecondDominates,
    Equal,
    Incomparable,
}

/// `A ≥st B` iff `cmf_A(l) ≤ cmf_B(l)` for all `l < m`, within [`TOLERANCE`].
pub fn dominance_oracle(a: &BetaBinomialDist, b: &BetaBinomialDist) -> Result<Verdict, DominanceError> {
    if a.m() != b.m() {
        return Err(DominanceError::MismatchedM(a.m(), b.m()));
    }
    let (ca, cb) = (a.cmf_vec()?, b.cmf_vec()?);
    let m = a.m();
    let a_ge = (0..m).all(|l| ca[l] <= cb[l] + TOLERANCE);
    let b_ge = (0..m).all(|l| cb[l] <= ca[l] + TOLERANCE);
    Ok(match (a_ge, b_ge) {
        (true, true) => Verdict::Equal,
        (true, false) => Verdict::FirstDominates,
        (false, true) => Verdict::SecondDominates,
        (false, false) => Verdict::Incomparable,
    })
}

/// `ñ⁰` for one type and one system bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NTilde {
    Selected { n: f64, source: DecisionSource },
    Undetermined,
}

/// Picks the prior strength that makes the predictive stochastically
/// smallest (lower bound, `y = y̲⁰`) or largest (upper bound, `y = ȳ⁰`).
pub fn select_n_tilde(
    rect: &PriorRectangle,
    bound: Bound,
    m: usize,
    s_obs: u64,
    n_obs: u64,
) -> Result<NTilde, DominanceError> {
    let y = match bound {
        Bound::Lower => rect.y_lower(),
        Bound::Upper => rect.y_upper(),
    };
    let d = decide(y, rect.n_lower(), rect.n_upper(), m, s_obs, n_obs)?;
    let n = match (d.verdict, bound) {
        (StochasticOrder::Undetermined, _) => return Ok(NTilde::Undetermined),
        (StochasticOrder::UpperNDominates, Bound::Upper) | (StochasticOrder::LowerNDominates, Bound::Lower) => {
            rect.n_upper()
        }
        (StochasticOrder::UpperNDominates, Bound::Lower) | (StochasticOrder::LowerNDominates, Bound::Upper) => {
            rect.n_lower()
        }
    };
    if d.source == DecisionSource::Lemma3 && !extreme_over_interior(rect, y, n, bound, m, s_obs, n_obs)? {
        return Ok(NTilde::Undetermined);
    }
    Ok(NTilde::Selected { n, source: d.source })
}

/// Interior strengths compared against the tail-test choice.
pub const INTERIOR_CHECKS: usize = 32;

/// The tail test orders the two endpoints only. An interior strength can
/// still give a predictive that crosses both, so the chosen endpoint is
/// compared by cmf against evenly spaced interior strengths.
fn extreme_over_interior(
    rect: &PriorRectangle,
    y: f64,
    chosen: f64,
    bound: Bound,
    m: usize,
    s_obs: u64,
    n_obs: u64,
) -> Result<bool, DominanceError> {
    let post = |n: f64| -> Result<BetaBinomialDist, DominanceError> {
        Ok(BetaBinomialDist::posterior(m, CanonicalBetaParams::new(n, y)?, n_obs, s_obs)?)
    };
    let best = post(chosen)?;
    let (nl, nu) = (rect.n_lower(), rect.n_upper());
    for i in 1..INTERIOR_CHECKS {
        let n = nl + (nu - nl) * i as f64 / INTERIOR_CHECKS as f64;
        let ok = matches!(
            (bound, dominance_oracle(&best, &post(n)?)?),
            (_, Verdict::Equal) | (Bound::Upper, Verdict::FirstDominates) | (Bound::Lower, Verdict::SecondDominates)
        );
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}
