//! Randomized properties, each runnable with a chosen number of cases.
//!
//! The runner uses a fixed-seed generator so failures reproduce.

use std::fmt::Debug;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;

use dual_hawkes::estimate::{fit, project_params, relabel_components, FitConfig, ParamVector};
use dual_hawkes::model::{intensity, marked_events};
use dual_hawkes::rank::{rank_items, set_utility};
use dual_hawkes::synth::{
    anchored_inventory_catalog, build_scenario, dissimilar_user_pair, orthonormal_basis, ScenarioConfig, ScenarioKind,
};
use dual_hawkes::{log_likelihood, log_likelihood_gradient, simulate_epoch, SimConfig};

use super::*;

pub type Property = fn(u32) -> Result<(), String>;

pub fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub const ALL: &[(&str, Property)] = &[
    ("intensity is at least mu", intensity_at_least_mu),
    ("compensator matches quadrature", compensator_matches_quadrature),
    ("recursive likelihood matches brute force", likelihood_matches_brute_force),
    ("gradient matches finite differences", gradient_matches_finite_differences),
    ("likelihood is swap symmetric", likelihood_swap_symmetric),
    ("infectivities lie in [0, 0.5]", infectivity_in_range),
    ("simulated timestamps strictly increase", simulated_times_increase),
    ("simulation is deterministic", simulation_deterministic),
    ("scenario vectors are unit norm", scenario_vectors_unit_norm),
    ("basis is orthonormal", basis_orthonormal),
    ("dissimilar pair has closed-form dot product", dissimilar_pair_dot),
    ("inventory fraction within 3 standard errors", inventory_fraction),
    ("projected parameters are valid", projected_params_valid),
    ("relabeling preserves likelihood", relabel_preserves_likelihood),
    ("fit is deterministic", fit_deterministic),
    ("ranking is scale invariant", ranking_scale_invariant),
    ("set utility lies in [0, 0.5]", set_utility_in_range),
    ("top-1 under u2 is optimal", top1_optimal),
    ("ranking by true u2 dominates other directions at top-1", evaluation_asymmetry),
];

pub fn intensity_at_least_mu(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 0usize..60, 0.0..1.0f64), |(seed, d, k, frac)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, 20, &mut r);
        let p = random_params(d, 1.0, &mut r);
        let trace = random_epoch(k, &cat, &mut r);
        let t = trace.horizon() * frac + 1e-9;
        let marks = marked_events(&trace, &cat, &p).unwrap();
        let history: Vec<_> = marks.into_iter().filter(|m| m.t < t).collect();
        let lambda = intensity(t, &history, &p).unwrap();
        prop_assert!(lambda >= p.mu, "{lambda} < {}", p.mu);
        Ok(())
    })
}

pub fn compensator_matches_quadrature(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 0usize..=50), |(seed, d, k)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, 20, &mut r);
        let p = random_params(d, 1.0, &mut r);
        let trace = random_epoch(k, &cat, &mut r);
        let marks = marked_events(&trace, &cat, &p).unwrap();
        let closed = dual_hawkes::model::compensator(trace.horizon(), &marks, &p).unwrap();
        let quad = quadrature_compensator(&reference_marks(&trace, &cat, &p), trace.horizon(), &p);
        prop_assert!((closed - quad).abs() < 1e-8, "closed {closed} quadrature {quad}");
        Ok(())
    })
}

pub fn likelihood_matches_brute_force(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..12, 0usize..=200), |(seed, d, k)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, 50, &mut r);
        let p = random_params(d, 1.0, &mut r);
        let trace = random_epoch(k, &cat, &mut r);
        let fast = log_likelihood(&trace, &cat, &p).unwrap();
        let slow = brute_force_log_likelihood(&trace, &cat, &p);
        prop_assert!(relative_gap(fast, slow) < 1e-9, "recursive {fast} brute force {slow}");
        Ok(())
    })
}

pub fn gradient_matches_finite_differences(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 1usize..=40), |(seed, d, k)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, 20, &mut r);
        let p = random_params(d, 0.9, &mut r);
        let trace = random_epoch(k, &cat, &mut r);
        let analytic = flatten_gradient(&log_likelihood_gradient(&trace, &cat, &p).unwrap());
        let numeric = finite_difference_gradient(&trace, &cat, &p);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            prop_assert!(
                (a - n).abs() <= 1e-4 * a.abs().max(n.abs()).max(1.0),
                "component {i}: analytic {a} numeric {n}"
            );
        }
        Ok(())
    })
}

pub fn flatten_gradient(g: &dual_hawkes::model::Gradient) -> Vec<f64> {
    let mut v = vec![g.mu, g.beta1, g.beta2];
    v.extend(&g.u1);
    v.extend(&g.u2);
    v
}

pub fn likelihood_swap_symmetric(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 0usize..100), |(seed, d, k)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, 20, &mut r);
        let p = random_params(d, 1.0, &mut r);
        let trace = random_epoch(k, &cat, &mut r);
        let a = log_likelihood(&trace, &cat, &p).unwrap();
        let b = log_likelihood(&trace, &cat, &p.swapped()).unwrap();
        prop_assert!(relative_gap(a, b) < 1e-12, "{a} vs {b}");
        Ok(())
    })
}

pub fn infectivity_in_range(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 1usize..60), |(seed, d, k)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, 20, &mut r);
        let p = random_params(d, 1.0, &mut r);
        let trace = random_epoch(k, &cat, &mut r);
        for m in marked_events(&trace, &cat, &p).unwrap() {
            prop_assert!((0.0..=0.5).contains(&m.alpha1) && (0.0..=0.5).contains(&m.alpha2));
            prop_assert!(m.alpha1 + m.alpha2 <= 1.0);
        }
        Ok(())
    })
}

fn sim_case(seed: u64, d: usize, sessions: usize) -> (ItemCatalog, ModelParams, SimConfig) {
    let mut r = rng(seed);
    let cat = random_catalog(d, 30, &mut r);
    let p = random_params(d, 1.0, &mut r);
    let config = SimConfig {
        sessions_per_epoch: sessions,
        rng_seed: r.random(),
        ..SimConfig::default()
    };
    (cat, p, config)
}

pub fn simulated_times_increase(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 1usize..300), |(seed, d, n)| {
        let (cat, p, config) = sim_case(seed, d, n);
        let trace = simulate_epoch(&p, &cat, &config, seed).unwrap();
        prop_assert_eq!(trace.len(), n);
        let s = trace.sessions();
        prop_assert!(s[0].t > 0.0);
        for w in s.windows(2) {
            prop_assert!(w[1].t > w[0].t);
        }
        prop_assert_eq!(trace.horizon(), s[n - 1].t);
        Ok(())
    })
}

pub fn simulation_deterministic(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 1usize..200), |(seed, d, n)| {
        let (cat, p, config) = sim_case(seed, d, n);
        let a = simulate_epoch(&p, &cat, &config, seed).unwrap();
        let b = simulate_epoch(&p, &cat, &config, seed).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

fn kind_strategy() -> impl Strategy<Value = ScenarioKind> {
    prop_oneof![
        Just(ScenarioKind::Orthonormal),
        (-1.0..=1.0f64).prop_map(ScenarioKind::Dissimilarity),
        (0.0..=1.0f64).prop_map(ScenarioKind::Inventory),
    ]
}

fn unit(v: &[f64]) -> bool {
    (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9
}

pub fn scenario_vectors_unit_norm(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..16, 1usize..200, kind_strategy()), |(seed, d, m, kind)| {
        let sc = build_scenario(&ScenarioConfig::new(d, m, kind, seed)).unwrap();
        prop_assert!(unit(&sc.u1) && unit(&sc.u2));
        prop_assert!(sc.catalog.rows().all(unit));
        prop_assert_eq!(sc.catalog.count(), m);
        Ok(())
    })
}

pub fn basis_orthonormal(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 1usize..=64), |(seed, d)| {
        let q = orthonormal_basis(d, &mut rng(seed));
        let gram = q.transpose() * &q;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)] - target).abs() < 1e-9);
            }
        }
        Ok(())
    })
}

pub fn dissimilar_pair_dot(cases: u32) -> Result<(), String> {
    let s_values = prop::sample::select(vec![-0.5, 0.0, 0.2, 0.5, 1.0]);
    check(cases, (any::<u64>(), 2usize..16, s_values), |(seed, d, s)| {
        let q = orthonormal_basis(d, &mut rng(seed));
        let (u1, u2) = dissimilar_user_pair(&q, s).unwrap();
        let dot: f64 = u1.iter().zip(&u2).map(|(a, b)| a * b).sum();
        let expected = -s / (1.0 + s * s).sqrt();
        prop_assert!((dot - expected).abs() < 1e-9, "s={s}: {dot} vs {expected}");
        Ok(())
    })
}

/// Smallest `c` with `P(Binomial(n, p) >= c) < alpha`.
pub fn binomial_upper_count(n: u32, p: f64, alpha: f64) -> u32 {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut tail = 1.0;
    for c in 0..=n {
        if tail < alpha {
            return c;
        }
        tail -= pmf;
        pmf *= (n - c) as f64 / (c + 1) as f64 * p / (1.0 - p);
    }
    n + 1
}

/// Each case is one m = 1000 catalog. Cases outside 3 standard errors are
/// counted and the count must be plausible under the nominal two-sided rate;
/// no case may leave 5 standard errors.
pub fn inventory_fraction(cases: u32) -> Result<(), String> {
    let outside = std::cell::Cell::new(0u32);
    check(cases, (any::<u64>(), 0.0..=1.0f64), |(seed, s)| {
        let mut r = rng(seed);
        let q = orthonormal_basis(10, &mut r);
        let (u1, u2) = dissimilar_user_pair(&q, 0.2).unwrap();
        let m = 1000;
        let (_, heads) = anchored_inventory_catalog(&u1, &u2, s, m, 0.01, &mut r).unwrap();
        let frac = heads.iter().filter(|&&h| h).count() as f64 / m as f64;
        let se = (s * (1.0 - s) / m as f64).sqrt();
        let gap = (frac - s).abs();
        prop_assert!(gap <= 5.0 * se, "s={s}: observed {frac}");
        if gap > 3.0 * se {
            outside.set(outside.get() + 1);
        }
        Ok(())
    })?;
    let rate = 0.0027;
    let limit = binomial_upper_count(cases, rate, 1e-3);
    if outside.get() >= limit {
        return Err(format!("{} of {cases} catalogs outside 3 standard errors (limit {limit})", outside.get()));
    }
    Ok(())
}

pub fn projected_params_valid(cases: u32) -> Result<(), String> {
    let strategy = (1usize..8).prop_flat_map(|d| {
        (
            prop::collection::vec(-5.0..5.0f64, 3),
            prop::collection::vec(-3.0..3.0f64, 2 * d),
        )
    });
    check(cases, strategy, |(logs, embeddings)| {
        let mut v = logs;
        v.extend(embeddings);
        let mut theta = ParamVector(v);
        theta.clip_embeddings();
        let p = project_params(&theta).unwrap();
        prop_assert!(p.validate().is_ok());
        Ok(())
    })
}

pub fn relabel_preserves_likelihood(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 0usize..100), |(seed, d, k)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, 20, &mut r);
        let p = random_params(d, 1.0, &mut r);
        let trace = random_epoch(k, &cat, &mut r);
        let relabeled = relabel_components(p.clone());
        prop_assert!(relabeled.params.beta1 >= relabeled.params.beta2);
        let a = log_likelihood(&trace, &cat, &p).unwrap();
        let b = log_likelihood(&trace, &cat, &relabeled.params).unwrap();
        prop_assert!(relative_gap(a, b) < 1e-12, "{a} vs {b}");
        Ok(())
    })
}

pub fn fit_deterministic(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..5, 1usize..5), |(seed, d, n)| {
        let (cat, p, config) = sim_case(seed, d, 30);
        let traces = dual_hawkes::simulate_epochs(&p, &cat, &config, n).unwrap();
        let fc = FitConfig {
            max_steps: 20,
            batch_size: 2,
            init_seed: seed,
            ..FitConfig::default()
        };
        let a = fit(&traces, &cat, &fc).unwrap();
        let b = fit(&traces, &cat, &fc).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn ranking_scale_invariant(cases: u32) -> Result<(), String> {
    let strategy = (any::<u64>(), 2usize..8, 1usize..100).prop_flat_map(|(seed, d, m)| (Just(seed), Just(d), Just(m), 1..=m, 1e-3..1e3f64));
    check(cases, strategy, |(seed, d, m, k, c)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, m, &mut r);
        let dir = random_embedding(d, 1.0, &mut r);
        let scaled: Vec<f64> = dir.iter().map(|x| x * c).collect();
        let a = rank_items(&cat, &dir, k).unwrap();
        let b = rank_items(&cat, &scaled, k).unwrap();
        prop_assert_eq!(a.indices, b.indices);
        Ok(())
    })
}

pub fn set_utility_in_range(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 1usize..20), |(seed, d, n)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, 30, &mut r);
        let u2 = random_embedding(d, 1.0, &mut r);
        let selected: Vec<usize> = (0..n).map(|_| r.random_range(0..30)).collect();
        let u = set_utility(&selected, &cat, &u2).unwrap();
        prop_assert!((0.0..=0.5).contains(&u));
        Ok(())
    })
}

pub fn top1_optimal(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 1usize..100), |(seed, d, m)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, m, &mut r);
        let u2 = random_embedding(d, 1.0, &mut r);
        let best = rank_items(&cat, &u2, 1).unwrap().indices[0];
        let best_utility = set_utility(&[best], &cat, &u2).unwrap();
        for j in 0..m {
            prop_assert!(best_utility >= set_utility(&[j], &cat, &u2).unwrap());
        }
        Ok(())
    })
}

pub fn evaluation_asymmetry(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2usize..8, 1usize..100), |(seed, d, m)| {
        let mut r = rng(seed);
        let cat = random_catalog(d, m, &mut r);
        let u2 = random_embedding(d, 1.0, &mut r);
        let other = random_embedding(d, 1.0, &mut r);
        let ours = rank_items(&cat, &u2, 1).unwrap().indices;
        let theirs = rank_items(&cat, &other, 1).unwrap().indices;
        prop_assert!(set_utility(&ours, &cat, &u2).unwrap() >= set_utility(&theirs, &cat, &u2).unwrap());
        Ok(())
    })
}
