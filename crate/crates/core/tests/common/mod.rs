//! Helpers shared by the integration suites and the acceptance binary.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sysrel::beta_binomial::{BetaBinomialDist, CanonicalBetaParams};
use sysrel::dominance::{dominance_oracle, lemma3_check, theorem2_check, StochasticOrder, Verdict};
use sysrel::prior_sets::{build_prior_spec, read_prior_csv, read_test_data_csv, PriorRectangle, PriorSpec, ScalarPrior, TestData};
use sysrel::structure_graph::{compute_survival_signature, parse_system, NodeId, SurvivalSignature, SystemGraph};
use sysrel::{TimeGrid, DEFAULT_EPSILON as EPS};

pub fn corpus_path(name: &str) -> String {
    format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn corpus(name: &str) -> String {
    std::fs::read_to_string(corpus_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn signature_of(name: &str) -> SurvivalSignature {
    compute_survival_signature(&parse_system(&corpus(name)).unwrap()).unwrap()
}

pub fn bridge_grid() -> TimeGrid {
    TimeGrid::from_decimal_range("0", "5", "0.02").unwrap()
}

pub struct Bridge {
    pub sig: SurvivalSignature,
    pub spec: PriorSpec,
    pub data: TestData,
}

/// Bridge system, its priors and the data of scenario 1, 2 or 3.
pub fn bridge(scenario: u8) -> Bridge {
    let sig = signature_of("bridge.sys");
    let table = read_prior_csv(File::open(corpus_path("bridge_priors.csv")).unwrap()).unwrap();
    let spec = build_prior_spec(Some(&table), &ScalarPrior::default(), &bridge_grid(), sig.type_labels(), EPS).unwrap();
    let data = read_test_data_csv(File::open(corpus_path(&format!("bridge_data_scenario{scenario}.csv"))).unwrap()).unwrap();
    Bridge { sig, spec, data }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn posterior(n: f64, y: f64, m: usize, s: u64, big_n: u64) -> BetaBinomialDist {
    BetaBinomialDist::posterior(m, CanonicalBetaParams::new(n, y).unwrap(), big_n, s).unwrap()
}

#[derive(Debug, Default)]
pub struct DominanceTally {
    pub instances: usize,
    pub mean_order_violations: usize,
    pub threshold_decided: usize,
    pub threshold_violations: usize,
    pub tail_decided: usize,
    pub tail_violations: usize,
}

impl DominanceTally {
    pub fn violations(&self) -> usize {
        self.mean_order_violations + self.threshold_violations + self.tail_violations
    }
}

fn agrees(order: StochasticOrder, oracle: Verdict) -> bool {
    match order {
        StochasticOrder::UpperNDominates => matches!(oracle, Verdict::FirstDominates | Verdict::Equal),
        StochasticOrder::LowerNDominates => matches!(oracle, Verdict::SecondDominates | Verdict::Equal),
        StochasticOrder::Undetermined => true,
    }
}

/// Randomized soundness check of the y-ordering and both strength tests
/// against the cmf oracle (`m ≤ 20`, `N ≤ 50`, `n ∈ [0.1, 100]`,
/// `y ∈ [0.01, 0.99]`).
pub fn dominance_soundness(seed: u64, instances: usize) -> DominanceTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = DominanceTally { instances, ..Default::default() };
    for _ in 0..instances {
        let m = rng.random_range(1..=20usize);
        let big_n = rng.random_range(0..=50u64);
        let s = rng.random_range(0..=big_n);

        let n = log_uniform(&mut rng, 0.1, 100.0);
        let (a, b): (f64, f64) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
        let (y_lo, y_hi): (f64, f64) = (a.min(b), a.max(b));
        if y_lo < y_hi {
            let v = dominance_oracle(&posterior(n, y_hi, m, s, big_n), &posterior(n, y_lo, m, s, big_n)).unwrap();
            if !matches!(v, Verdict::FirstDominates | Verdict::Equal) {
                tally.mean_order_violations += 1;
            }
        }

        let y = rng.random_range(0.01..0.99);
        let (p, q) = (log_uniform(&mut rng, 0.1, 100.0), log_uniform(&mut rng, 0.1, 100.0));
        let (n_lo, n_hi) = (p.min(q), p.max(q));
        if n_lo == n_hi {
            continue;
        }
        let oracle = dominance_oracle(&posterior(n_hi, y, m, s, big_n), &posterior(n_lo, y, m, s, big_n)).unwrap();
        let t2 = theorem2_check(y, s, big_n, m).unwrap();
        if t2.is_decided() {
            tally.threshold_decided += 1;
            if !agrees(t2.verdict, oracle) {
                tally.threshold_violations += 1;
            }
        }
        let l3 = lemma3_check(y, n_lo, n_hi, m, s, big_n).unwrap();
        if l3.is_decided() {
            tally.tail_decided += 1;
            if !agrees(l3.verdict, oracle) {
                tally.tail_violations += 1;
            }
        }
    }
    tally
}

/// Random connected system with up to `max_types` types of at most
/// `max_per_type` components each.
pub fn random_system(rng: &mut ChaCha8Rng, max_types: usize, max_per_type: usize) -> SystemGraph {
    loop {
        let k = rng.random_range(1..=max_types);
        let mut comps = Vec::new();
        for t in 0..k {
            for _ in 0..rng.random_range(1..=max_per_type) {
                comps.push((comps.len() as u32 + 1, format!("K{t}")));
            }
        }
        let n = comps.len();
        let node = |i: usize| match i {
            0 => NodeId::Source,
            i if i == n + 1 => NodeId::Sink,
            i => NodeId::Component(i as u32),
        };
        let density = rng.random_range(0.25..0.7);
        let mut edges = Vec::new();
        for i in 0..n + 2 {
            for j in i + 1..n + 2 {
                if rng.random_bool(density) {
                    edges.push((node(i), node(j)));
                }
            }
        }
        if let Ok(g) = SystemGraph::new(comps, edges) {
            return g;
        }
    }
}

/// Nonincreasing `(y̲, ȳ)` bounds over `len` grid points.
pub fn random_monotone_bounds(rng: &mut ChaCha8Rng, len: usize) -> Vec<(f64, f64)> {
    let mut lows: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut highs: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
    lows.sort_by(|a, b| b.total_cmp(a));
    highs.sort_by(|a, b| b.total_cmp(a));
    lows.iter().zip(&highs).map(|(&l, &h)| (l.min(h), l.max(h))).collect()
}

pub struct RandomConfig {
    pub sig: SurvivalSignature,
    pub spec: PriorSpec,
    pub data: TestData,
}

/// Random system with a valid prior specification (constant `n` bounds,
/// nonincreasing `y` bounds) and random failure data on an integer grid.
pub fn random_config(rng: &mut ChaCha8Rng, max_types: usize, max_per_type: usize, grid_len: usize) -> RandomConfig {
    let sig = compute_survival_signature(&random_system(rng, max_types, max_per_type)).unwrap();
    let grid = TimeGrid::new((0..grid_len).map(|j| j as f64).collect()).unwrap();
    let mut rects = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for label in sig.type_labels() {
        let nl = log_uniform(rng, 0.2, 20.0);
        let nu = if rng.random_bool(0.2) { nl } else { nl + log_uniform(rng, 0.1, 20.0) };
        let row = random_monotone_bounds(rng, grid_len)
            .into_iter()
            .map(|(lo, hi)| PriorRectangle::new(nl, nu, lo, hi, EPS).unwrap())
            .collect();
        rects.insert(label.clone(), row);
        if rng.random_bool(0.8) {
            let count = rng.random_range(1..=12);
            let obs = (0..count).map(|_| rng.random_range(0.0..grid_len as f64)).collect();
            failures.insert(label.clone(), obs);
        }
    }
    RandomConfig { sig, spec: PriorSpec::new(grid, rects).unwrap(), data: TestData::new(failures).unwrap() }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
