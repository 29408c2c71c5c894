//! Acceptance checks, one PASS/FAIL line each. Exits nonzero on any failure.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use sysrel::beta_binomial::{update, BetaBinomialDist, CanonicalBetaParams};
use sysrel::prior_sets::{detect_conflict, posterior_y_bounds, survival_counts, NEndpoint, PriorRectangle, PriorSpec};
use sysrel::system_bounds::{bound_at_time, compute_bounds, grid_search_bound, Bound, SearchConfig, TypeInput};
use sysrel::DEFAULT_EPSILON as EPS;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail = format!("{} [{:.2}s]", o.detail, took.as_secs_f64());
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
            o.detail += &format!(" exceeds {:.0}s", limit.as_secs_f64());
        }
    }
    o
}

fn bridge_signature() -> Outcome {
    let sig = common::signature_of("bridge.sys");
    let r = |a, b| Ratio::new(a, b);
    let mut bad = Vec::new();
    for l1 in 0..=4 {
        for l2 in 0..=1 {
            for l3 in 0..=1 {
                let expected = match (l1, l2, l3) {
                    (_, _, 0) => r(0, 1),
                    (2, 0, 1) => r(1, 3),
                    (2, 1, 1) => r(2, 3),
                    (3..=4, _, 1) => r(1, 1),
                    _ => r(0, 1),
                };
                let got = sig.get(&[l1, l2, l3]);
                if got != expected {
                    bad.push(format!("Φ({l1},{l2},{l3}) = {got}"));
                }
            }
        }
    }
    outcome(bad.is_empty() && sig.counts() == [4, 1, 1], format!("20 entries, mismatches: {bad:?}"))
}

/// Two-decimal rounding of a rational, ties to even.
fn round2(x: Ratio<u64>) -> u64 {
    let scaled = x * 100;
    let (floor, frac) = (scaled.to_integer(), scaled.fract());
    let half = Ratio::new(1, 2);
    if frac > half || (frac == half && floor % 2 == 1) {
        floor + 1
    } else {
        floor
    }
}

fn brake_signature() -> Outcome {
    let sig = common::signature_of("brake.sys");
    // (M, H, C, P) → Φ × 100
    let table: BTreeMap<[usize; 4], u64> = [
        ([1, 0, 1, 1], 25),
        ([1, 0, 1, 2], 50),
        ([1, 0, 1, 3], 75),
        ([0, 1, 0, 1], 50),
        ([0, 1, 0, 2], 83),
        ([0, 1, 1, 1], 62),
        ([0, 1, 1, 2], 92),
        ([0, 1, 2, 1], 75),
        ([0, 1, 2, 2], 97),
        ([0, 1, 3, 1], 88),
        ([1, 0, 2, 1], 50),
        ([1, 0, 2, 2], 83),
        ([1, 0, 3, 1], 75),
        ([1, 1, 0, 1], 50),
        ([1, 1, 0, 2], 83),
        ([1, 1, 1, 1], 62),
        ([1, 1, 1, 2], 92),
        ([1, 1, 2, 1], 75),
        ([1, 1, 2, 2], 97),
        ([1, 1, 3, 1], 88),
    ]
    .into();
    if sig.type_labels() != ["C", "H", "M", "P"] {
        return outcome(false, format!("labels {:?}", sig.type_labels()));
    }
    let mut found = BTreeMap::new();
    for (idx, phi) in sig.entries().iter().enumerate() {
        if *phi.numer() != 0 && phi.numer() != phi.denom() {
            let l = sig.multi_index(idx);
            // Signature order is C, H, M, P.
            found.insert([l[2], l[1], l[0], l[3]], round2(*phi));
        }
    }
    outcome(found == table, format!("{} fractional entries, table has {}", found.len(), table.len()))
}

fn conjugate_update() -> Outcome {
    let prior = CanonicalBetaParams::new(8.0, 0.75).unwrap();
    let a = update(prior, 16, 12).unwrap();
    let b = update(prior, 16, 0).unwrap();
    let pass = (a.n(), a.y()) == (24.0, 0.75) && (b.n(), b.y()) == (24.0, 0.25);
    outcome(pass, format!("({}, {}) and ({}, {})", a.n(), a.y(), b.n(), b.y()))
}

fn posterior_parameter_set() -> Outcome {
    let rect = PriorRectangle::new(1.0, 8.0, 0.7, 0.8, EPS).unwrap();
    let oracle = |s: u64| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..200 {
            let n0 = 1.0 + 7.0 * i as f64 / 199.0;
            for j in 0..200 {
                let y0 = 0.7 + 0.1 * j as f64 / 199.0;
                let y = (n0 * y0 + s as f64) / (n0 + 16.0);
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
        (lo, hi)
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for s in [12, 0] {
        let b = posterior_y_bounds(&rect, 16, s).unwrap();
        let (lo, hi) = oracle(s);
        pass &= (b.y_lower_post - lo).abs() < 1e-9 && (b.y_upper_post - hi).abs() < 1e-9;
        detail.push(format!("s={s}: [{:.6}, {:.6}]", b.y_lower_post, b.y_upper_post));
    }
    let agree = posterior_y_bounds(&rect, 16, 12).unwrap();
    let conflict = posterior_y_bounds(&rect, 16, 0).unwrap();
    pass &= (agree.attained_lower, agree.attained_upper) == (NEndpoint::Upper, NEndpoint::Upper);
    pass &= conflict.attained_lower == NEndpoint::Lower;
    detail.push(format!("s=12 attains {:?}/{:?}, s=0 lower at {:?}", agree.attained_lower, agree.attained_upper, conflict.attained_lower));
    outcome(pass, detail.join(", "))
}

fn predictive_intervals() -> Outcome {
    let envelope = |big_n: u64, s: u64, f: &dyn Fn(&BetaBinomialDist) -> f64| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=140 {
            for j in 0..=100 {
                let n0 = 1.0 + 7.0 * i as f64 / 140.0;
                let y0 = 0.7 + 0.1 * j as f64 / 100.0;
                let d = BetaBinomialDist::posterior(5, CanonicalBetaParams::new(n0, y0).unwrap(), big_n, s).unwrap();
                let v = f(&d);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    };
    let cmf = |d: &BetaBinomialDist| d.cmf(2).unwrap();
    let pmf = |d: &BetaBinomialDist| d.pmf(2).unwrap();
    let cases = [((0, 0), (0.10, 0.28)), ((16, 12), (0.11, 0.14)), ((16, 0), (0.86, 1.00))];
    let mut pass = true;
    let mut detail = Vec::new();
    for ((big_n, s), (lo_ref, hi_ref)) in cases {
        let (lo, hi) = envelope(big_n, s, &cmf);
        let (plo, phi) = envelope(big_n, s, &pmf);
        pass &= (lo - lo_ref).abs() <= 0.015 && (hi - hi_ref).abs() <= 0.015;
        detail.push(format!("s={s}/{big_n}: cmf [{lo:.4}, {hi:.4}] (pmf [{plo:.4}, {phi:.4}])"));
    }
    outcome(pass, detail.join("; "))
}

fn dominance_soundness() -> Outcome {
    let t = common::dominance_soundness(6, 10_000);
    outcome(
        t.violations() == 0,
        format!(
            "{} instances: mean-order violations {}, threshold {}/{} decided wrong, tail {}/{} decided wrong",
            t.instances, t.mean_order_violations, t.threshold_violations, t.threshold_decided, t.tail_violations, t.tail_decided
        ),
    )
}

fn shortcut_equals_search() -> Outcome {
    let mut worst = 0.0f64;
    let mut searched = 0usize;
    let mut total = 0usize;
    for scenario in 1..=3 {
        let b = common::bridge(scenario);
        let grid = b.spec.grid();
        let counts = survival_counts(&b.data, grid);
        let labels = b.sig.type_labels();
        for (j, _) in grid.times().iter().enumerate() {
            let inputs: Vec<TypeInput> = labels
                .iter()
                .map(|l| TypeInput {
                    rect: b.spec.rects(l).unwrap()[j],
                    n_obs: b.data.n_obs(l),
                    s_obs: counts.get(l.as_str()).map_or(0, |s| s[j]),
                })
                .collect();
            for bound in [Bound::Lower, Bound::Upper] {
                let shortcut = bound_at_time(&b.sig, &inputs, bound, &SearchConfig::default()).unwrap();
                let oracle = grid_search_bound(&b.sig, &inputs, bound, 201).unwrap();
                worst = worst.max((shortcut.value - oracle).abs());
                total += 1;
                searched += shortcut.choices.iter().any(|c| c.mechanism.as_str() == "search") as usize;
            }
        }
    }
    outcome(worst < 1e-6, format!("{total} bounds, worst difference {worst:.3e}, {searched} needed search"))
}

fn qualitative() -> Outcome {
    let config = SearchConfig::default();
    let run = |scenario: u8, posterior: bool| {
        let b = common::bridge(scenario);
        compute_bounds(&b.sig, &b.spec, &b.data, posterior, &config).unwrap()
    };
    let prior = run(1, false);
    let s1 = run(1, true);
    let s2 = run(2, true);
    let s3 = run(3, true);
    let times = prior.system.times.times().to_vec();
    let tol = 1e-12;

    // Containment, and whether each escape coincides with some type's data
    // falling outside its prior y interval.
    let mut escapes = 0;
    let mut excess = 0.0f64;
    let mut unexplained = 0;
    for j in 0..times.len() {
        if prior.system.upper[j] - prior.system.lower[j] <= tol {
            continue;
        }
        let over = (s1.system.upper[j] - prior.system.upper[j]).max(prior.system.lower[j] - s1.system.lower[j]);
        if over > tol {
            escapes += 1;
            excess = excess.max(over);
            unexplained += !s1.system.diagnostics[j].iter().any(|d| d.conflict) as usize;
        }
    }
    let a = escapes == 0;

    // Step convention: values at t are right-continuous, so t = 2 already
    // carries the next prior step.
    let window: Vec<usize> = (0..times.len()).filter(|&j| times[j] >= 1.0 - 1e-9 && times[j] < 2.0 - 1e-9).collect();
    let first = window[0];
    let b = window.iter().all(|&j| {
        (s2.system.lower[j] - s2.system.lower[first]).abs() <= tol && (s2.system.upper[j] - s2.system.upper[first]).abs() <= tol
    });

    let t3_prior = prior.components.iter().find(|c| c.label == "T3").unwrap();
    let t3_post = s3.components.iter().find(|c| c.label == "T3").unwrap();
    let c = (0..times.len())
        .filter(|&j| times[j] >= 2.0 - 1e-9 && times[j] <= 4.0 + 1e-9)
        .all(|j| t3_post.upper[j] - t3_post.lower[j] > t3_prior.upper[j] - t3_prior.lower[j]);

    let d = (0..times.len())
        .filter(|&j| times[j] >= 1.0 - 1e-9 && times[j] < 4.4 - 1e-9)
        .all(|j| s3.system.upper[j] - s3.system.lower[j] > s1.system.upper[j] - s1.system.lower[j]);

    outcome(
        a && b && c && d,
        format!(
            "(a) {a}: {escapes} of {} points escape the prior envelope by up to {excess:.2e}, {unexplained} without a conflicting type; (b) {b} (c) {c} (d) {d}",
            times.len()
        ),
    )
}

fn structural_invariants() -> Outcome {
    let mut rng = common::rng(9);
    let mut violations = [0usize; 4];
    let mut checked = [0usize; 4];
    for _ in 0..1000 {
        let cfg = common::random_config(&mut rng, 3, 3, 6);
        let r = compute_bounds(&cfg.sig, &cfg.spec, &cfg.data, true, &SearchConfig::default()).unwrap();
        let (lo, hi) = (&r.system.lower, &r.system.upper);
        for j in 0..lo.len() {
            checked[0] += 1;
            violations[0] += (lo[j] > hi[j]) as usize;
            if j > 0 {
                checked[1] += 1;
                violations[1] += (lo[j] > lo[j - 1] + 1e-12 || hi[j] > hi[j - 1] + 1e-12) as usize;
            }
        }

        let counts = survival_counts(&cfg.data, cfg.spec.grid());
        for (label, rects) in cfg.spec.iter() {
            let n = cfg.data.n_obs(label);
            if n == 0 {
                continue;
            }
            for (j, rect) in rects.iter().enumerate() {
                let s = counts[label][j];
                if detect_conflict(rect, n, s).unwrap() {
                    continue;
                }
                let b = posterior_y_bounds(rect, n, s).unwrap();
                let prior_width = rect.y_upper() - rect.y_lower();
                let expected = prior_width * rect.n_upper() / (rect.n_upper() + n as f64);
                checked[2] += 1;
                violations[2] += ((b.width() - expected).abs() > 1e-12) as usize;
            }
        }

        // Same system and data under near-ignorance: no conflict wherever
        // some but not all tested components survive.
        let ignorant: BTreeMap<String, Vec<PriorRectangle>> = cfg
            .spec
            .iter()
            .map(|(label, rects)| {
                let row = rects
                    .iter()
                    .map(|r| PriorRectangle::near_noninformative(r.n_lower(), r.n_upper(), EPS).unwrap())
                    .collect();
                (label.to_string(), row)
            })
            .collect();
        let ignorant = PriorSpec::new(cfg.spec.grid().clone(), ignorant).unwrap();
        for (label, rects) in ignorant.iter() {
            let n = cfg.data.n_obs(label);
            for (j, rect) in rects.iter().enumerate() {
                let s = counts.get(label).map_or(0, |s| s[j]);
                if n > 0 && s > 0 && s < n {
                    checked[3] += 1;
                    violations[3] += detect_conflict(rect, n, s).unwrap() as usize;
                }
            }
        }
    }
    outcome(
        violations.iter().all(|&v| v == 0),
        format!(
            "violations/checks: ordering {}/{}, monotonicity {}/{}, width identity {}/{}, near-ignorance {}/{}",
            violations[0], checked[0], violations[1], checked[1], violations[2], checked[2], violations[3], checked[3]
        ),
    )
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);
    let criteria: Vec<Criterion> = vec![
        ("1 bridge survival signature", secs(1), bridge_signature),
        ("2 brake survival signature", secs(5), brake_signature),
        ("3 conjugate update", None, conjugate_update),
        ("4 posterior parameter set", None, posterior_parameter_set),
        ("5 predictive intervals", None, predictive_intervals),
        ("6 dominance soundness", secs(30), dominance_soundness),
        ("7 shortcut equals search", secs(120), shortcut_equals_search),
        ("8 qualitative bridge behaviour", None, qualitative),
        ("9 structural invariants", None, structural_invariants),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let o = timed(limit, check);
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
