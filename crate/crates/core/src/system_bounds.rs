//! Lower and upper system reliability over a time grid.
//!
//! At each time point every type gets a Beta-Binomial posterior predictive
//! for its number of functioning components. The system reliability
//! `Σ Φ(l) ∏ P(C_k = l_k)` is then minimised (maximised) over the prior
//! rectangles. The mean is pinned at the lower (upper) `y` bound; the
//! strength is taken from a dominance shortcut where one applies and
//! searched jointly over the remaining types otherwise.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::beta_binomial::{BetaBinomialDist, BetaError, CanonicalBetaParams};
use crate::dominance::{select_n_tilde, DecisionSource, DominanceError, NTilde};
use crate::fmt::sig15;
use crate::grid::TimeGrid;
use crate::prior_sets::{
    detect_conflict, posterior_y_bounds, survivors, ConflictReport, PosteriorYBounds, PriorError, PriorRectangle,
    PriorSpec, TestData,
};
use crate::structure_graph::SurvivalSignature;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("type labels disagree: {0}")]
    LabelMismatch(String),
    #[error("signature has {expected} types but {got} inputs were given")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("type {label}: predictive over {got} components but the signature has {expected}")]
    ComponentCountMismatch { label: String, expected: usize, got: usize },
    #[error("search needs at least 2 points per dimension, got {0}")]
    BadResolution(usize),
    #[error("non-finite system reliability at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Dominance(#[from] DominanceError),
    #[error(transparent)]
    Beta(#[from] BetaError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bound {
    Lower,
    Upper,
}

impl Bound {
    fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Bound::Lower => candidate < incumbent,
            Bound::Upper => candidate > incumbent,
        }
    }
}

/// Resolution of the fallback search over undetermined prior strengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    /// Points per dimension with one or two undetermined types.
    pub points_few: usize,
    /// Points per dimension with three or more.
    pub points_many: usize,
    /// Re-search at half the step around the best grid point.
    pub refine: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { points_few: 101, points_many: 21, refine: true }
    }
}

impl SearchConfig {
    /// The same number of points per dimension regardless of dimension.
    pub fn with_resolution(points: usize) -> Result<Self, BoundsError> {
        if points < 2 {
            return Err(BoundsError::BadResolution(points));
        }
        Ok(Self { points_few: points, points_many: points, refine: true })
    }

    fn points_for(&self, dims: usize) -> usize {
        if dims <= 2 {
            self.points_few
        } else {
            self.points_many
        }
    }
}

/// How `ñ⁰` was chosen for one type and one bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    Degenerate,
    Theorem2,
    Lemma3,
    Search,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Degenerate => "degenerate",
            Self::Theorem2 => "theorem2",
            Self::Lemma3 => "lemma3",
            Self::Search => "search",
        }
    }

    fn from_source(source: DecisionSource) -> Self {
        match source {
            DecisionSource::Degenerate => Self::Degenerate,
            DecisionSource::Theorem2 => Self::Theorem2,
            DecisionSource::Lemma3 => Self::Lemma3,
            DecisionSource::None => Self::Search,
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Prior rectangle and data summary for one type at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeInput {
    pub rect: PriorRectangle,
    pub n_obs: u64,
    pub s_obs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeChoice {
    pub n_tilde: f64,
    pub mechanism: Mechanism,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundAtTime {
    pub value: f64,
    /// In signature type order.
    pub choices: Vec<TypeChoice>,
}

/// `Φ` as floats in row-major order with its axis lengths `m_k + 1`.
struct PhiTensor {
    values: Vec<f64>,
    dims: Vec<usize>,
}

impl PhiTensor {
    fn new(sig: &SurvivalSignature) -> Self {
        Self { values: sig.values(), dims: sig.counts().iter().map(|m| m + 1).collect() }
    }

    /// Best value of `Σ Φ(l) ∏ p_k(l_k)` over one pmf vector per type drawn
    /// from `candidates[k]`, and the index chosen for each type.
    ///
    /// Types are contracted one at a time, so a type with `c` candidates
    /// costs `c` passes over the tensor that remains after the earlier types.
    /// Ties keep the first candidate tuple in lexicographic order.
    fn extremum(&self, candidates: &[Vec<Vec<f64>>], bound: Bound) -> (f64, Vec<usize>) {
        let mut idx = vec![0; self.dims.len()];
        let mut best = (f64::NAN, Vec::new());
        self.descend(&self.values, 0, candidates, bound, &mut idx, &mut best);
        best
    }

    fn descend(
        &self,
        tensor: &[f64],
        depth: usize,
        candidates: &[Vec<Vec<f64>>],
        bound: Bound,
        idx: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if depth == self.dims.len() {
            let v = tensor[0];
            if best.1.is_empty() || bound.better(v, best.0) {
                *best = (v, idx.clone());
            }
            return;
        }
        let axis = self.dims[depth];
        let stride = tensor.len() / axis;
        if depth + 1 == self.dims.len() {
            // Last axis: the contraction is a dot product.
            for (i, pmf) in candidates[depth].iter().enumerate() {
                let v = pmf.iter().zip(tensor).fold(0.0, |acc, (w, phi)| acc + w * phi);
                if best.1.is_empty() || bound.better(v, best.0) {
                    idx[depth] = i;
                    *best = (v, idx.clone());
                }
            }
            return;
        }
        let mut reduced = vec![0.0; stride];
        for (i, pmf) in candidates[depth].iter().enumerate() {
            reduced.iter_mut().for_each(|x| *x = 0.0);
            for (l, &w) in pmf.iter().enumerate() {
                let row = &tensor[l * stride..(l + 1) * stride];
                for (acc, &phi) in reduced.iter_mut().zip(row) {
                    *acc += w * phi;
                }
            }
            idx[depth] = i;
            self.descend(&reduced, depth + 1, candidates, bound, idx, best);
        }
    }
}

fn check_dists(sig: &SurvivalSignature, dists: &[BetaBinomialDist]) -> Result<(), BoundsError> {
    if dists.len() != sig.num_types() {
        return Err(BoundsError::DimensionMismatch { expected: sig.num_types(), got: dists.len() });
    }
    for (k, (d, &m)) in dists.iter().zip(sig.counts()).enumerate() {
        if d.m() != m {
            return Err(BoundsError::ComponentCountMismatch { label: sig.type_labels()[k].clone(), expected: m, got: d.m() });
        }
    }
    Ok(())
}

/// `Σ_l Φ(l) ∏_k P(C_k = l_k)`, clamped to `[0, 1]`.
pub fn system_reliability_point(sig: &SurvivalSignature, dists: &[BetaBinomialDist]) -> Result<f64, BoundsError> {
    check_dists(sig, dists)?;
    let candidates = dists.iter().map(|d| Ok(vec![d.pmf_vec()?])).collect::<Result<Vec<_>, BetaError>>()?;
    let (v, _) = PhiTensor::new(sig).extremum(&candidates, Bound::Lower);
    if !v.is_finite() {
        return Err(BoundsError::NonFinite(f64::NAN));
    }
    Ok(v.clamp(0.0, 1.0))
}

fn predictive_pmf(m: usize, n: f64, y: f64, input: &TypeInput) -> Result<Vec<f64>, BoundsError> {
    let prior = CanonicalBetaParams::new(n, y)?;
    Ok(BetaBinomialDist::posterior(m, prior, input.n_obs, input.s_obs)?.pmf_vec()?)
}

fn pinned_y(rect: &PriorRectangle, bound: Bound) -> f64 {
    match bound {
        Bound::Lower => rect.y_lower(),
        Bound::Upper => rect.y_upper(),
    }
}

/// `n_lower + (n_upper − n_lower)·i/(p − 1)` for `i = 0..p`.
fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let last = (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / last }).collect()
}

fn check_inputs(sig: &SurvivalSignature, inputs: &[TypeInput]) -> Result<(), BoundsError> {
    if inputs.len() != sig.num_types() {
        return Err(BoundsError::DimensionMismatch { expected: sig.num_types(), got: inputs.len() });
    }
    Ok(())
}

/// One system bound at one time point.
pub fn bound_at_time(
    sig: &SurvivalSignature,
    inputs: &[TypeInput],
    bound: Bound,
    config: &SearchConfig,
) -> Result<BoundAtTime, BoundsError> {
    check_inputs(sig, inputs)?;
    bound_with_tensor(&PhiTensor::new(sig), sig.counts(), inputs, bound, config)
}

fn bound_with_tensor(
    phi: &PhiTensor,
    counts: &[usize],
    inputs: &[TypeInput],
    bound: Bound,
    config: &SearchConfig,
) -> Result<BoundAtTime, BoundsError> {
    let mut choices = Vec::with_capacity(inputs.len());
    let mut undetermined = Vec::new();
    for (k, (input, &m)) in inputs.iter().zip(counts).enumerate() {
        match select_n_tilde(&input.rect, bound, m, input.s_obs, input.n_obs)? {
            NTilde::Selected { n, source } => {
                choices.push(TypeChoice { n_tilde: n, mechanism: Mechanism::from_source(source) })
            }
            NTilde::Undetermined => {
                undetermined.push(k);
                choices.push(TypeChoice { n_tilde: f64::NAN, mechanism: Mechanism::Search });
            }
        }
    }
    let strengths: Vec<Vec<f64>> = if undetermined.is_empty() {
        choices.iter().map(|c| vec![c.n_tilde]).collect()
    } else {
        let points = config.points_for(undetermined.len());
        inputs
            .iter()
            .zip(&choices)
            .map(|(input, c)| match c.mechanism {
                Mechanism::Search => linspace(input.rect.n_lower(), input.rect.n_upper(), points),
                _ => vec![c.n_tilde],
            })
            .collect()
    };
    let (mut value, picked) = evaluate(phi, counts, inputs, bound, &strengths)?;
    for (k, c) in choices.iter_mut().enumerate() {
        c.n_tilde = strengths[k][picked[k]];
    }
    if !undetermined.is_empty() && config.refine {
        let points = config.points_for(undetermined.len());
        let local: Vec<Vec<f64>> = inputs
            .iter()
            .zip(&choices)
            .map(|(input, c)| {
                let (lo, hi) = (input.rect.n_lower(), input.rect.n_upper());
                if c.mechanism != Mechanism::Search {
                    return vec![c.n_tilde];
                }
                let h = (hi - lo) / (points - 1) as f64;
                let mut ns: Vec<f64> =
                    [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|j| (c.n_tilde + j * h).clamp(lo, hi)).collect();
                ns.dedup();
                ns
            })
            .collect();
        let (refined, picked) = evaluate(phi, counts, inputs, bound, &local)?;
        if bound.better(refined, value) {
            value = refined;
            for (k, c) in choices.iter_mut().enumerate() {
                c.n_tilde = local[k][picked[k]];
            }
        }
    }
    Ok(BoundAtTime { value: value.clamp(0.0, 1.0), choices })
}

fn evaluate(
    phi: &PhiTensor,
    counts: &[usize],
    inputs: &[TypeInput],
    bound: Bound,
    strengths: &[Vec<f64>],
) -> Result<(f64, Vec<usize>), BoundsError> {
    let candidates = inputs
        .iter()
        .zip(counts)
        .zip(strengths)
        .map(|((input, &m), ns)| {
            let y = pinned_y(&input.rect, bound);
            ns.iter().map(|&n| predictive_pmf(m, n, y, input)).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (v, picked) = phi.extremum(&candidates, bound);
    if !v.is_finite() {
        return Err(BoundsError::NonFinite(f64::NAN));
    }
    Ok((v, picked))
}

/// Exhaustive reference: joint grid of `points` strengths per type over
/// every type's full interval, with `y` pinned at the bound's end. Uses no
/// dominance shortcut.
pub fn grid_search_bound(
    sig: &SurvivalSignature,
    inputs: &[TypeInput],
    bound: Bound,
    points: usize,
) -> Result<f64, BoundsError> {
    check_inputs(sig, inputs)?;
    if points < 2 {
        return Err(BoundsError::BadResolution(points));
    }
    let strengths: Vec<Vec<f64>> =
        inputs.iter().map(|i| linspace(i.rect.n_lower(), i.rect.n_upper(), points)).collect();
    let (v, _) = evaluate(&PhiTensor::new(sig), sig.counts(), inputs, bound, &strengths)?;
    Ok(v.clamp(0.0, 1.0))
}

/// Per-type diagnostics at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDiagnostics {
    pub label: String,
    pub s_obs: u64,
    pub n_obs: u64,
    pub conflict: bool,
    pub lower: TypeChoice,
    pub upper: TypeChoice,
    pub posterior_y: PosteriorYBounds,
}

impl TypeDiagnostics {
    /// The more expensive of the two mechanisms.
    pub fn mechanism(&self) -> Mechanism {
        self.lower.mechanism.max(self.upper.mechanism)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsCurve {
    pub times: TimeGrid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Per time point, one entry per type in signature order.
    pub diagnostics: Vec<Vec<TypeDiagnostics>>,
}

/// Bounds on one type's mean functioning probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentBoundsCurve {
    pub label: String,
    pub times: TimeGrid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsResult {
    pub system: BoundsCurve,
    pub components: Vec<ComponentBoundsCurve>,
    pub conflicts: ConflictReport,
}

fn check_labels(sig: &SurvivalSignature, spec: &PriorSpec, data: &TestData) -> Result<(), BoundsError> {
    let sig_labels = sig.type_labels();
    let mut problems = Vec::new();
    let no_prior: Vec<&str> = sig_labels.iter().map(String::as_str).filter(|l| spec.rects(l).is_none()).collect();
    if !no_prior.is_empty() {
        problems.push(format!("no prior for {}", no_prior.join(", ")));
    }
    let extra_prior: Vec<&str> = spec.labels().filter(|l| !sig_labels.iter().any(|s| s == l)).collect();
    if !extra_prior.is_empty() {
        problems.push(format!("prior types not in system: {}", extra_prior.join(", ")));
    }
    let extra_data: Vec<&str> = data.labels().filter(|l| !sig_labels.iter().any(|s| s == l)).collect();
    if !extra_data.is_empty() {
        problems.push(format!("data types not in system: {}", extra_data.join(", ")));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(BoundsError::LabelMismatch(problems.join("; ")))
    }
}

/// System and per-type bounds at every grid point of `spec`.
///
/// With `posterior = false` the data are ignored (`n_k = 0`) and the prior
/// curves come out of the same code path. Time points are evaluated in
/// parallel; each is computed independently, so results do not depend on
/// scheduling.
pub fn compute_bounds(
    sig: &SurvivalSignature,
    spec: &PriorSpec,
    data: &TestData,
    posterior: bool,
    config: &SearchConfig,
) -> Result<BoundsResult, BoundsError> {
    check_labels(sig, spec, data)?;
    let empty = TestData::empty();
    let used = if posterior { data } else { &empty };
    let grid = spec.grid();
    let labels = sig.type_labels();
    let n_obs: Vec<u64> = labels.iter().map(|l| used.n_obs(l)).collect();
    let s_obs: Vec<Vec<u64>> = labels.iter().map(|l| survivors(used.failures(l), grid)).collect();
    let rects: Vec<&[PriorRectangle]> = labels.iter().map(|l| spec.rects(l).expect("checked labels")).collect();
    let phi = PhiTensor::new(sig);

    let points = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let inputs: Vec<TypeInput> = (0..labels.len())
                .map(|k| TypeInput { rect: rects[k][j], n_obs: n_obs[k], s_obs: s_obs[k][j] })
                .collect();
            let lo = bound_with_tensor(&phi, sig.counts(), &inputs, Bound::Lower, config)?;
            let hi = bound_with_tensor(&phi, sig.counts(), &inputs, Bound::Upper, config)?;
            let diags = inputs
                .iter()
                .enumerate()
                .map(|(k, input)| {
                    Ok(TypeDiagnostics {
                        label: labels[k].clone(),
                        s_obs: input.s_obs,
                        n_obs: input.n_obs,
                        conflict: input.n_obs > 0 && detect_conflict(&input.rect, input.n_obs, input.s_obs)?,
                        lower: lo.choices[k],
                        upper: hi.choices[k],
                        posterior_y: posterior_y_bounds(&input.rect, input.n_obs, input.s_obs)?,
                    })
                })
                .collect::<Result<Vec<_>, BoundsError>>()?;
            Ok((lo.value, hi.value, diags))
        })
        .collect::<Result<Vec<_>, BoundsError>>()?;

    let mut lower = Vec::with_capacity(points.len());
    let mut upper = Vec::with_capacity(points.len());
    let mut diagnostics = Vec::with_capacity(points.len());
    for (lo, hi, d) in points {
        lower.push(lo);
        upper.push(hi);
        diagnostics.push(d);
    }
    let components = labels
        .iter()
        .enumerate()
        .map(|(k, label)| ComponentBoundsCurve {
            label: label.clone(),
            times: grid.clone(),
            lower: diagnostics.iter().map(|d| d[k].posterior_y.y_lower_post).collect(),
            upper: diagnostics.iter().map(|d| d[k].posterior_y.y_upper_post).collect(),
        })
        .collect();
    Ok(BoundsResult {
        system: BoundsCurve { times: grid.clone(), lower, upper, diagnostics },
        components,
        conflicts: ConflictReport::build(spec, data),
    })
}

/// `t,system_lower,system_upper,<type>_lower,<type>_upper,…`
pub fn write_bounds_csv<W: Write>(result: &BoundsResult, mut out: W) -> std::io::Result<()> {
    write!(out, "t,system_lower,system_upper")?;
    for c in &result.components {
        write!(out, ",{0}_lower,{0}_upper", c.label)?;
    }
    writeln!(out)?;
    let sys = &result.system;
    for (j, &t) in sys.times.times().iter().enumerate() {
        write!(out, "{},{},{}", sig15(t), sig15(sys.lower[j]), sig15(sys.upper[j]))?;
        for c in &result.components {
            write!(out, ",{},{}", sig15(c.lower[j]), sig15(c.upper[j]))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn n_tilde_field(c: &TypeChoice) -> String {
    if c.mechanism == Mechanism::Search {
        "searched".to_string()
    } else {
        sig15(c.n_tilde)
    }
}

/// `t,type,s,n,conflict,n_tilde_lower,n_tilde_upper,mechanism`
pub fn write_diagnostics_csv<W: Write>(result: &BoundsResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,type,s,n,conflict,n_tilde_lower,n_tilde_upper,mechanism")?;
    let sys = &result.system;
    for (&t, row) in sys.times.times().iter().zip(&sys.diagnostics) {
        for d in row {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                sig15(t),
                d.label,
                d.s_obs,
                d.n_obs,
                d.conflict,
                n_tilde_field(&d.lower),
                n_tilde_field(&d.upper),
                d.mechanism()
            )?;
        }
    }
    Ok(())
}
