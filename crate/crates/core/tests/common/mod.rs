//! Independent reference implementations and random instance generators
//! shared by the integration tests.
#![allow(dead_code)]

use dual_hawkes::{EpochTrace, ItemCatalog, ModelParams, SessionRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

pub mod properties;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gaussian_unit<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn random_catalog<R: Rng>(d: usize, m: usize, rng: &mut R) -> ItemCatalog {
    let rows: Vec<Vec<f64>> = (0..m).map(|_| gaussian_unit(d, rng)).collect();
    ItemCatalog::from_rows(&rows).unwrap()
}

/// A random point inside the ball of radius `max_norm`.
pub fn random_embedding<R: Rng>(d: usize, max_norm: f64, rng: &mut R) -> Vec<f64> {
    let r = max_norm * rng.random::<f64>();
    gaussian_unit(d, rng).into_iter().map(|x| x * r).collect()
}

pub fn random_params<R: Rng>(d: usize, max_norm: f64, rng: &mut R) -> ModelParams {
    ModelParams::new(
        rng.random_range(0.05..2.0),
        rng.random_range(0.1..5.0),
        rng.random_range(0.1..5.0),
        random_embedding(d, max_norm, rng),
        random_embedding(d, max_norm, rng),
    )
    .unwrap()
}

/// `k` sessions with exponential gaps; the horizon extends past the last one
/// by a random amount.
pub fn random_epoch<R: Rng>(k: usize, catalog: &ItemCatalog, rng: &mut R) -> EpochTrace {
    let gaps = Exp::new(1.0).unwrap();
    let mut t = 0.0;
    let sessions: Vec<SessionRecord> = (0..k)
        .map(|_| {
            t += gaps.sample(rng) + 1e-6;
            let len = rng.random_range(1..=4);
            SessionRecord {
                t,
                items: (0..len).map(|_| rng.random_range(0..catalog.count())).collect(),
            }
        })
        .collect();
    EpochTrace::new(sessions, t + rng.random_range(0.0..2.0)).unwrap()
}

/// `(t, α¹, α²)` for every session, computed directly from the definitions.
pub fn reference_marks(trace: &EpochTrace, catalog: &ItemCatalog, p: &ModelParams) -> Vec<(f64, f64, f64)> {
    trace
        .sessions()
        .iter()
        .map(|s| {
            let mut v = vec![0.0; catalog.dim()];
            for &j in &s.items {
                for (a, b) in v.iter_mut().zip(catalog.row(j)) {
                    *a += b / s.items.len() as f64;
                }
            }
            let dot = |u: &[f64]| v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
            (s.t, (dot(&p.u1) + 1.0) / 4.0, (dot(&p.u2) + 1.0) / 4.0)
        })
        .collect()
}

/// Intensity at `t` counting only the first `n` marks.
pub fn reference_intensity(t: f64, marks: &[(f64, f64, f64)], n: usize, p: &ModelParams) -> f64 {
    p.mu + marks[..n]
        .iter()
        .map(|&(tj, a1, a2)| a1 * p.beta1 * (-p.beta1 * (t - tj)).exp() + a2 * p.beta2 * (-p.beta2 * (t - tj)).exp())
        .sum::<f64>()
}

/// Direct double-sum log-likelihood.
pub fn brute_force_log_likelihood(trace: &EpochTrace, catalog: &ItemCatalog, p: &ModelParams) -> f64 {
    let marks = reference_marks(trace, catalog, p);
    let t_end = trace.horizon();
    let log_sum: f64 = (0..marks.len())
        .map(|i| reference_intensity(marks[i].0, &marks, i, p).ln())
        .sum();
    let integral = p.mu * t_end
        + marks
            .iter()
            .map(|&(tj, a1, a2)| a1 * (1.0 - (-p.beta1 * (t_end - tj)).exp()) + a2 * (1.0 - (-p.beta2 * (t_end - tj)).exp()))
            .sum::<f64>();
    log_sum - integral
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Integral of the intensity over `[0, T]`, segment by segment between events.
pub fn quadrature_compensator(marks: &[(f64, f64, f64)], horizon: f64, p: &ModelParams) -> f64 {
    let mut knots = vec![0.0];
    knots.extend(marks.iter().map(|m| m.0));
    knots.push(horizon);
    let per_segment = 1e-11 / knots.len() as f64;
    knots
        .windows(2)
        .enumerate()
        .map(|(n, w)| adaptive_simpson(&|t| reference_intensity(t, marks, n, p), w[0], w[1], per_segment))
        .sum()
}

/// `[μ, β¹, β², u¹…, u²…]`.
pub fn flatten(p: &ModelParams) -> Vec<f64> {
    let mut v = vec![p.mu, p.beta1, p.beta2];
    v.extend(&p.u1);
    v.extend(&p.u2);
    v
}

pub fn unflatten(v: &[f64], d: usize) -> ModelParams {
    ModelParams {
        mu: v[0],
        beta1: v[1],
        beta2: v[2],
        u1: v[3..3 + d].to_vec(),
        u2: v[3 + d..3 + 2 * d].to_vec(),
    }
}

/// Central finite differences of the brute-force log-likelihood.
pub fn finite_difference_gradient(trace: &EpochTrace, catalog: &ItemCatalog, p: &ModelParams) -> Vec<f64> {
    let base = flatten(p);
    (0..base.len())
        .map(|i| {
            let h = 1e-6 * base[i].abs().max(1.0);
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let f = |v: &[f64]| brute_force_log_likelihood(trace, catalog, &unflatten(v, p.dim()));
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
