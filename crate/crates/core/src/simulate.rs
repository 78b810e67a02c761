//! Trace simulation by Ogata thinning.
//!
//! Arrival times and session contents come from two independent streams
//! derived from the epoch seed, so the items a user sees never depend on the
//! realized arrival times.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{link, mean_of_items, dot, EpochTrace, ItemCatalog, ModelParams, SessionRecord};
use crate::seed::{derive_seed, rng_from_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sessions_per_epoch: usize,
    /// Success probability of the geometric session-length draw.
    pub session_len_p: f64,
    pub session_len_min: usize,
    pub session_len_max: usize,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sessions_per_epoch: 1000,
            session_len_p: 0.8,
            session_len_min: 1,
            session_len_max: 6,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.session_len_p > 0.0 && self.session_len_p < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "session_len_p must lie in (0, 1), got {}",
                self.session_len_p
            )));
        }
        if self.session_len_min < 1 || self.session_len_min > self.session_len_max {
            return Err(Error::InvalidConfig(format!(
                "session length bounds [{}, {}] are invalid",
                self.session_len_min, self.session_len_max
            )));
        }
        Ok(())
    }

    /// Seed of epoch `index` under this config's master seed.
    pub fn epoch_seed(&self, index: u64) -> u64 {
        derive_seed(self.rng_seed, stream::EPOCH, index)
    }
}

/// Number of Bernoulli(`p`) trials up to and including the first success,
/// clipped to `[min, max]`. Mass beyond `max` collapses onto `max`.
pub fn draw_session_length<R: Rng + ?Sized>(rng: &mut R, config: &SimConfig) -> usize {
    let mut trials = 1;
    while trials < config.session_len_max && !rng.random_bool(config.session_len_p) {
        trials += 1;
    }
    trials.max(config.session_len_min)
}

/// `length` item indices drawn uniformly with replacement.
pub fn draw_session_items<R: Rng + ?Sized>(length: usize, catalog: &ItemCatalog, rng: &mut R) -> Result<Vec<usize>> {
    if length == 0 {
        return Err(Error::EmptySession);
    }
    if catalog.count() == 0 {
        return Err(Error::InvalidParams("empty catalog".into()));
    }
    Ok((0..length).map(|_| rng.random_range(0..catalog.count())).collect())
}

/// Simulates one epoch of `config.sessions_per_epoch` arrivals.
///
/// The horizon of the returned trace is its last arrival time.
pub fn simulate_epoch(params: &ModelParams, catalog: &ItemCatalog, config: &SimConfig, seed: u64) -> Result<EpochTrace> {
    params.validate()?;
    config.validate()?;
    if catalog.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: catalog.dim(),
            found: params.dim(),
        });
    }
    let mut arrivals = rng_from_seed(derive_seed(seed, stream::THINNING, 0));
    let mut content = rng_from_seed(derive_seed(seed, stream::CONTENT, 0));
    let unit = Exp::new(1.0).expect("unit rate");

    let (mu, b1, b2) = (params.mu, params.beta1, params.beta2);
    let mut sessions = Vec::with_capacity(config.sessions_per_epoch);
    // Excess intensity of each component just after the last accepted arrival.
    let (mut excess1, mut excess2) = (0.0, 0.0);
    let mut last = 0.0;
    let mut bound = mu;
    let mut t = 0.0;

    while sessions.len() < config.sessions_per_epoch {
        let wait = unit.sample(&mut arrivals) / bound;
        if wait <= 0.0 {
            continue;
        }
        t += wait;
        let dt = t - last;
        let lambda = mu + excess1 * (-b1 * dt).exp() + excess2 * (-b2 * dt).exp();
        assert!(
            lambda <= bound * (1.0 + 1e-12),
            "thinning bound violated: λ = {lambda} > {bound}"
        );
        if arrivals.random::<f64>() * bound >= lambda {
            continue;
        }

        let len = draw_session_length(&mut content, config);
        let items = draw_session_items(len, catalog, &mut content)?;
        let v = mean_of_items(&items, catalog)?;
        let alpha1 = link(dot(&v, &params.u1))?;
        let alpha2 = link(dot(&v, &params.u2))?;
        excess1 = excess1 * (-b1 * dt).exp() + alpha1 * b1;
        excess2 = excess2 * (-b2 * dt).exp() + alpha2 * b2;
        last = t;
        bound = mu + excess1 + excess2;
        sessions.push(SessionRecord { t, items });
    }
    EpochTrace::censored_at_last(sessions)
}

/// Simulates `count` independent epochs with seeds derived from
/// `config.rng_seed`. Epoch `i` is the same whatever `count` is.
pub fn simulate_epochs(params: &ModelParams, catalog: &ItemCatalog, config: &SimConfig, count: usize) -> Result<Vec<EpochTrace>> {
    (0..count)
        .into_par_iter()
        .map(|i| simulate_epoch(params, catalog, config, config.epoch_seed(i as u64)))
        .collect()
}
