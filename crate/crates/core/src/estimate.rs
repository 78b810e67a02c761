//! Maximum-likelihood fitting by minibatch Adam ascent.
//!
//! The optimizer works on an unconstrained vector
//! `[ln μ, ln β¹, ln β², u¹…, u²…]`; embeddings are clipped back into the unit
//! ball after every step. Components are not ordered during the search. The
//! likelihood is symmetric in the two kernels, so the fitted parameters are
//! relabelled at the end so that `β¹ > β²`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{norm, EpochTrace, Gradient, ItemCatalog, ModelParams, PreparedEpoch};
use crate::seed::{derive_seed, rng_from_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    /// Epochs per minibatch.
    pub batch_size: usize,
    pub max_steps: usize,
    pub init_seed: u64,
    pub adam_beta_m: f64,
    pub adam_beta_v: f64,
    pub adam_eps: f64,
    /// Early stop when the full-data mean log-likelihood changes by less
    /// than this (relative) between checks `convergence_window` steps apart.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Moving-average window applied to the per-step objective.
    pub smoothing_window: usize,
    /// Allowed relative drop of the smoothed objective below its running
    /// maximum after burn-in, on top of the minibatch noise band, before the
    /// fit is flagged as non-monotone.
    pub monotone_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            batch_size: 16,
            max_steps: 20_000,
            init_seed: 0,
            adam_beta_m: 0.9,
            adam_beta_v: 0.999,
            adam_eps: 1e-8,
            convergence_tol: 1e-6,
            convergence_window: 500,
            smoothing_window: 32,
            monotone_tol: 0.01,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        for (name, b) in [("adam_beta_m", self.adam_beta_m), ("adam_beta_v", self.adam_beta_v)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::InvalidConfig("adam_eps must be positive".into()));
        }
        if self.smoothing_window == 0 || self.convergence_window == 0 {
            return Err(Error::InvalidConfig("windows must be >= 1".into()));
        }
        Ok(())
    }
}

/// Unconstrained optimizer coordinates `[ln μ, ln β¹, ln β², u¹…, u²…]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn dim(&self) -> usize {
        (self.0.len() - 3) / 2
    }

    pub fn from_params(params: &ModelParams) -> Self {
        let mut v = vec![params.mu.ln(), params.beta1.ln(), params.beta2.ln()];
        v.extend(&params.u1);
        v.extend(&params.u2);
        Self(v)
    }

    /// Clips both embedding blocks back into the unit ball.
    pub fn clip_embeddings(&mut self) {
        let d = self.dim();
        for block in self.0[3..].chunks_exact_mut(d) {
            clip_to_ball(block);
        }
    }

    /// Converts a log-likelihood gradient into a gradient in these coordinates.
    pub fn chain_gradient(params: &ModelParams, grad: &Gradient) -> Vec<f64> {
        let mut g = vec![grad.mu * params.mu, grad.beta1 * params.beta1, grad.beta2 * params.beta2];
        g.extend(&grad.u1);
        g.extend(&grad.u2);
        g
    }
}

fn clip_to_ball(u: &mut [f64]) {
    let n = norm(u);
    if n > 1.0 {
        u.iter_mut().for_each(|x| *x /= n);
    }
}

/// Random starting point: `μ, β¹, β²` uniform in `[0.1, 2]` (stored as logs),
/// embeddings i.i.d. `N(0, 1/d)` clipped into the unit ball.
pub fn init_params<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<ParamVector> {
    if d == 0 {
        return Err(Error::InvalidConfig("dimension must be >= 1".into()));
    }
    let mut v = Vec::with_capacity(3 + 2 * d);
    for _ in 0..3 {
        v.push(rng.random_range(0.1..=2.0f64).ln());
    }
    let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("positive variance");
    for _ in 0..2 * d {
        v.push(normal.sample(rng));
    }
    let mut p = ParamVector(v);
    p.clip_embeddings();
    Ok(p)
}

/// Maps optimizer coordinates to model parameters (not necessarily canonical).
pub fn project_params(theta: &ParamVector) -> Result<ModelParams> {
    let v = &theta.0;
    if v.len() < 5 || !(v.len() - 3).is_multiple_of(2) {
        return Err(Error::InvalidParams(format!("parameter vector of length {} is malformed", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("parameter vector".into()));
    }
    let d = theta.dim();
    let exp = |x: f64, name: &str| {
        let y = x.exp();
        if y.is_finite() && y > 0.0 {
            Ok(y)
        } else {
            Err(Error::NonFinite(format!("exp overflow for {name} (log value {x})")))
        }
    };
    let mut u1 = v[3..3 + d].to_vec();
    let mut u2 = v[3 + d..].to_vec();
    clip_to_ball(&mut u1);
    clip_to_ball(&mut u2);
    ModelParams::new(exp(v[0], "mu")?, exp(v[1], "beta1")?, exp(v[2], "beta2")?, u1, u2)
}

/// First and second moment accumulators of Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam ascent step on `theta`. Returns the applied step.
pub fn adam_step(state: &mut AdamState, theta: &mut ParamVector, gradient: &[f64], config: &FitConfig) -> Result<Vec<f64>> {
    if gradient.len() != state.m.len() || theta.0.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            found: gradient.len(),
        });
    }
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i} at step {}", state.t + 1)));
    }
    state.t += 1;
    let (b1, b2) = (config.adam_beta_m, config.adam_beta_v);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let mut step = Vec::with_capacity(gradient.len());
    for (i, &g) in gradient.iter().enumerate() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        let delta = config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        theta.0[i] += delta;
        step.push(delta);
    }
    Ok(step)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Relabeled {
    pub params: ModelParams,
    pub swapped: bool,
    /// `|β¹ - β²| < 1e-9`: the components cannot be told apart.
    pub tie: bool,
}

/// Orders the kernel components so that `β¹ ≥ β²`, swapping embeddings in
/// lockstep.
pub fn relabel_components(params: ModelParams) -> Relabeled {
    let tie = (params.beta1 - params.beta2).abs() < 1e-9;
    if params.beta1 < params.beta2 {
        Relabeled {
            params: params.swapped(),
            swapped: true,
            tie,
        }
    } else {
        Relabeled {
            params,
            swapped: false,
            tie,
        }
    }
}

/// `‖estimate - truth‖₂ / ‖truth‖₂`.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    let denom = norm(truth);
    if denom == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let diff: f64 = estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
    Ok(diff.sqrt() / denom)
}

/// Relative error of every parameter against a ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub u1: f64,
    pub u2: f64,
}

impl ParamErrors {
    pub fn between(estimate: &ModelParams, truth: &ModelParams) -> Result<Self> {
        Ok(Self {
            mu: relative_error(&[estimate.mu], &[truth.mu])?,
            beta1: relative_error(&[estimate.beta1], &[truth.beta1])?,
            beta2: relative_error(&[estimate.beta2], &[truth.beta2])?,
            u1: relative_error(&estimate.u1, &truth.u1)?,
            u2: relative_error(&estimate.u2, &truth.u2)?,
        })
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.mu, self.beta1, self.beta2, self.u1, self.u2]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Canonical (`β¹ ≥ β²`) estimate.
    pub params: ModelParams,
    /// Mean minibatch log-likelihood at every step.
    pub trajectory: Vec<f64>,
    pub steps_taken: usize,
    pub early_stopped: bool,
    /// Smoothed objective fell noticeably after burn-in.
    pub non_monotone: bool,
    /// Fitted decay rates coincide; the labelling is arbitrary.
    pub beta_tie: bool,
    /// Components were swapped during relabelling.
    pub swapped: bool,
    pub errors: Option<ParamErrors>,
}

impl FitReport {
    pub fn with_truth(mut self, truth: &ModelParams) -> Result<Self> {
        self.errors = Some(ParamErrors::between(&self.params, truth)?);
        Ok(self)
    }
}

/// Mean log-likelihood and mean gradient over a set of prepared epochs.
///
/// Per-epoch terms may be computed in parallel; they are summed in index
/// order so the result does not depend on scheduling.
pub fn batch_objective(epochs: &[&PreparedEpoch], params: &ModelParams) -> Result<(f64, Gradient)> {
    let parts: Vec<(f64, Gradient)> = epochs
        .par_iter()
        .map(|e| e.value_and_gradient(params))
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut grad = Gradient::zeros(params.dim());
    for (v, g) in &parts {
        value += v;
        grad.add_assign(g);
    }
    let inv = 1.0 / epochs.len() as f64;
    grad.scale(inv);
    Ok((value * inv, grad))
}

/// Mean log-likelihood over every epoch.
fn full_objective(epochs: &[PreparedEpoch], params: &ModelParams) -> Result<f64> {
    let values: Vec<f64> = epochs
        .par_iter()
        .map(|e| e.log_likelihood(params))
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Width of the minibatch noise band, in standard errors of the smoothed mean.
pub const MONOTONE_NOISE_SIGMAS: f64 = 6.0;

/// True when the smoothed series drops below its running maximum, after the
/// first quarter of the run, by more than `tol` (relative) plus a band of
/// [`MONOTONE_NOISE_SIGMAS`] standard errors of a `window`-step mean of the
/// raw per-step values.
fn drops_after_burn_in(raw: &[f64], smoothed: &[f64], window: usize, tol: f64) -> bool {
    let burn_in = smoothed.len() / 4;
    let tail = &raw[burn_in..];
    let band = if tail.len() > 1 {
        let m = tail.iter().sum::<f64>() / tail.len() as f64;
        let var = tail.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (tail.len() - 1) as f64;
        MONOTONE_NOISE_SIGMAS * (var / window as f64).sqrt()
    } else {
        0.0
    };
    let mut best = f64::NEG_INFINITY;
    for &x in &smoothed[burn_in..] {
        if x < best - tol * best.abs() - band {
            return true;
        }
        best = best.max(x);
    }
    false
}

/// Fits model parameters to a set of independent epochs.
pub fn fit(epochs: &[EpochTrace], catalog: &ItemCatalog, config: &FitConfig) -> Result<FitReport> {
    let mut rng = rng_from_seed(derive_seed(config.init_seed, stream::INIT, 0));
    let theta = init_params(catalog.dim(), &mut rng)?;
    fit_from(epochs, catalog, config, theta)
}

/// [`fit`] from an explicit starting point.
pub fn fit_from(epochs: &[EpochTrace], catalog: &ItemCatalog, config: &FitConfig, start: ParamVector) -> Result<FitReport> {
    config.validate()?;
    if epochs.is_empty() {
        return Err(Error::InvalidConfig("at least one epoch is required".into()));
    }
    if start.dim() != catalog.dim() {
        return Err(Error::DimensionMismatch {
            expected: catalog.dim(),
            found: start.dim(),
        });
    }
    let prepared: Vec<PreparedEpoch> = epochs
        .iter()
        .map(|e| PreparedEpoch::new(e, catalog))
        .collect::<Result<_>>()?;

    let mut shuffle_rng = rng_from_seed(derive_seed(config.init_seed, stream::SHUFFLE, 0));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut cursor = order.len();
    let batch = config.batch_size.min(prepared.len());

    let mut theta = start;
    theta.clip_embeddings();
    let mut state = AdamState::new(theta.0.len());
    let mut trajectory = Vec::with_capacity(config.max_steps);
    let mut smoothed = Vec::with_capacity(config.max_steps);
    let mut smooth_sum = 0.0;
    let mut early_stopped = false;
    let mut checkpoint: Option<f64> = None;

    for step in 0..config.max_steps {
        if cursor >= order.len() {
            order.shuffle(&mut shuffle_rng);
            cursor = 0;
        }
        let end = (cursor + batch).min(order.len());
        let members: Vec<&PreparedEpoch> = order[cursor..end].iter().map(|&i| &prepared[i]).collect();
        cursor = end;

        let params = project_params(&theta)?;
        let (value, grad) = batch_objective(&members, &params)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("objective at step {step}")));
        }
        trajectory.push(value);
        smooth_sum += value;
        if step >= config.smoothing_window {
            smooth_sum -= trajectory[step - config.smoothing_window];
        }
        smoothed.push(smooth_sum / (step + 1).min(config.smoothing_window) as f64);

        let g = ParamVector::chain_gradient(&params, &grad);
        adam_step(&mut state, &mut theta, &g, config)?;
        theta.clip_embeddings();

        if (step + 1) % config.convergence_window == 0 {
            let current = full_objective(&prepared, &project_params(&theta)?)?;
            if let Some(previous) = checkpoint {
                let change = ((current - previous) / f64::abs(previous).max(f64::MIN_POSITIVE)).abs();
                if change < config.convergence_tol {
                    early_stopped = true;
                    break;
                }
            }
            checkpoint = Some(current);
        }
    }

    let relabeled = relabel_components(project_params(&theta)?);
    Ok(FitReport {
        params: relabeled.params,
        steps_taken: trajectory.len(),
        non_monotone: drops_after_burn_in(&trajectory, &smoothed, config.smoothing_window, config.monotone_tol),
        trajectory,
        early_stopped,
        beta_tie: relabeled.tie,
        swapped: relabeled.swapped,
        errors: None,
    })
}
