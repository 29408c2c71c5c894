//! Survival signatures and imprecise Bayesian reliability bounds for
//! multi-type coherent systems.
//!
//! The pipeline is:
//!
//! 1. [`structure_graph`] turns an s–t block diagram into an exact survival
//!    signature `Φ(l₁,…,l_K)`.
//! 2. [`beta_binomial`] provides the canonical `(n, y)` Beta parametrisation,
//!    conjugate updating and the Beta-Binomial posterior predictive.
//! 3. [`prior_sets`] holds rectangular prior parameter sets
//!    `[n̲, n̄] × [y̲, ȳ]` over a time grid, component test data and
//!    prior-data conflict detection.
//! 4. [`dominance`] decides first-order stochastic dominance across the
//!    pseudocount interval so that most bounds need no optimisation.
//! 5. [`system_bounds`] combines everything into lower/upper system
//!    reliability curves.

pub mod beta_binomial;
pub mod dominance;
pub mod fmt;
pub mod grid;
pub mod prior_sets;
pub mod structure_graph;
pub mod system_bounds;

pub use beta_binomial::{BetaBinomialDist, CanonicalBetaParams, ReliabilityCurve};
pub use dominance::{DecisionSource, DominanceDecision, StochasticOrder, Verdict};
pub use grid::TimeGrid;
pub use prior_sets::{PriorRectangle, PriorSpec, TestData};
pub use structure_graph::{SurvivalSignature, SystemGraph};
pub use system_bounds::{Bound, BoundsCurve, ComponentBoundsCurve, SearchConfig};

/// Default clamp for prior functioning probabilities: `y ∈ [ε, 1 − ε]`.
pub const DEFAULT_EPSILON: f64 = 1e-4;
