//! Dual-kernel marked Hawkes model of user returns.
//!
//! A user's arrival intensity is
//!
//! ```text
//! λ(t) = μ + Σ_{t' < t} [ α¹(t') β¹ e^{-β¹ (t - t')} + α²(t') β² e^{-β² (t - t')} ]
//! ```
//!
//! where the marks `αᶜ(t') = φ(v_S · uᶜ)` are computed from the session that
//! started at `t'`, with `φ(x) = (x + 1) / 4`. The fast component (`β¹`, `u¹`)
//! carries moreishness, the slow component (`β²`, `u²`) carries utility.
//!
//! Likelihood and gradient evaluation run in O(k·d) per epoch through the
//! usual exponential-kernel recursions rather than the O(k²) double sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for unit-norm checks and for clamping link arguments.
pub const NORM_TOL: f64 = 1e-9;

/// Full parameter bundle for one user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Base intensity (events per unit time).
    pub mu: f64,
    /// System-1 (moreishness) decay rate.
    pub beta1: f64,
    /// System-2 (utility) decay rate.
    pub beta2: f64,
    /// Moreishness embedding.
    pub u1: Vec<f64>,
    /// Utility embedding.
    pub u2: Vec<f64>,
}

impl ModelParams {
    /// Builds a parameter set and checks every invariant except the `β¹ > β²`
    /// ordering, which only canonical parameters are required to satisfy.
    pub fn new(mu: f64, beta1: f64, beta2: f64, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        let params = Self {
            mu,
            beta1,
            beta2,
            u1,
            u2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("mu", self.mu), ("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if self.u1.is_empty() {
            return Err(Error::InvalidParams("embeddings must have dimension >= 1".into()));
        }
        if self.u1.len() != self.u2.len() {
            return Err(Error::DimensionMismatch {
                expected: self.u1.len(),
                found: self.u2.len(),
            });
        }
        for (name, u) in [("u1", &self.u1), ("u2", &self.u2)] {
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} has non-finite entries")));
            }
            let n = norm(u);
            if n > 1.0 + NORM_TOL {
                return Err(Error::InvalidParams(format!("{name} has norm {n} > 1")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.u1.len()
    }

    /// True when the fast component is labelled first (`β¹ > β²`).
    pub fn is_canonical(&self) -> bool {
        self.beta1 > self.beta2
    }

    /// The same model with the two kernel components exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            mu: self.mu,
            beta1: self.beta2,
            beta2: self.beta1,
            u1: self.u2.clone(),
            u2: self.u1.clone(),
        }
    }
}

/// Known item embeddings, one unit-norm row per item.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemCatalog {
    dim: usize,
    count: usize,
    data: Vec<f64>,
}

impl ItemCatalog {
    /// Builds a catalog from a row-major buffer of `count × dim` values.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParams("catalog dimension must be >= 1".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParams(format!(
                "catalog buffer of length {} is not a non-empty multiple of dim {dim}",
                data.len()
            )));
        }
        let count = data.len() / dim;
        for (j, row) in data.chunks_exact(dim).enumerate() {
            let n = norm(row);
            if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidParams(format!("item {j} has norm {n}, expected 1")));
            }
        }
        Ok(Self { dim, count, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// One arrival: its timestamp and the items consumed in the session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub t: f64,
    pub items: Vec<usize>,
}

/// An independent realization of the process observed on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochTrace {
    sessions: Vec<SessionRecord>,
    horizon: f64,
}

impl EpochTrace {
    pub fn new(sessions: Vec<SessionRecord>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidParams(format!("horizon must be finite and >= 0, got {horizon}")));
        }
        let mut prev = f64::NEG_INFINITY;
        for (index, s) in sessions.iter().enumerate() {
            if !s.t.is_finite() || s.t < 0.0 {
                return Err(Error::InvalidParams(format!("session {index} has invalid time {}", s.t)));
            }
            if s.t <= prev {
                return Err(Error::NonIncreasingTimestamps { index, prev, t: s.t });
            }
            if s.items.is_empty() {
                return Err(Error::EmptySession);
            }
            prev = s.t;
        }
        if prev > horizon {
            return Err(Error::AfterHorizon { t: prev, horizon });
        }
        Ok(Self { sessions, horizon })
    }

    /// Uses the last arrival as the observation horizon.
    pub fn censored_at_last(sessions: Vec<SessionRecord>) -> Result<Self> {
        let horizon = sessions.last().map(|s| s.t).unwrap_or(0.0);
        Self::new(sessions, horizon)
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Number of arrivals in `[t1, t2)`.
    pub fn count_between(&self, t1: f64, t2: f64) -> usize {
        self.sessions.iter().filter(|s| s.t >= t1 && s.t < t2).count()
    }

    /// Checks that every item index resolves in `catalog`.
    pub fn check_items(&self, catalog: &ItemCatalog) -> Result<()> {
        for s in &self.sessions {
            if let Some(&index) = s.items.iter().find(|&&j| j >= catalog.count()) {
                return Err(Error::ItemOutOfRange {
                    index,
                    count: catalog.count(),
                });
            }
        }
        Ok(())
    }
}

/// An arrival with its two infectivities already resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkedEvent {
    pub t: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl MarkedEvent {
    pub fn new(t: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        for a in [alpha1, alpha2] {
            if !(0.0..=0.5).contains(&a) {
                return Err(Error::InvalidParams(format!("infectivity {a} outside [0, 0.5]")));
            }
        }
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("event time {t}")));
        }
        Ok(Self { t, alpha1, alpha2 })
    }
}

/// Gradient of the log-likelihood with respect to every model parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl Gradient {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mu: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            u1: vec![0.0; dim],
            u2: vec![0.0; dim],
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        self.mu += other.mu;
        self.beta1 += other.beta1;
        self.beta2 += other.beta2;
        axpy(1.0, &other.u1, &mut self.u1);
        axpy(1.0, &other.u2, &mut self.u2);
    }

    pub fn scale(&mut self, factor: f64) {
        self.mu *= factor;
        self.beta1 *= factor;
        self.beta2 *= factor;
        self.u1.iter_mut().for_each(|x| *x *= factor);
        self.u2.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite()
            && self.beta1.is_finite()
            && self.beta2.is_finite()
            && self.u1.iter().chain(&self.u2).all(|x| x.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Link function `φ(x) = (x + 1) / 4`, mapping `[-1, 1]` onto `[0, 0.5]`.
///
/// Arguments within [`NORM_TOL`] of the domain are clamped; anything further
/// out is rejected.
pub fn link(x: f64) -> Result<f64> {
    if !(-1.0 - NORM_TOL..=1.0 + NORM_TOL).contains(&x) {
        return Err(Error::LinkDomain(x));
    }
    Ok((x.clamp(-1.0, 1.0) + 1.0) / 4.0)
}

/// Derivative of [`link`] on the interior of its domain.
pub const LINK_SLOPE: f64 = 0.25;

/// Mean of the item embeddings of a session.
pub fn session_vector(session: &SessionRecord, catalog: &ItemCatalog) -> Result<Vec<f64>> {
    mean_of_items(&session.items, catalog)
}

pub(crate) fn mean_of_items(items: &[usize], catalog: &ItemCatalog) -> Result<Vec<f64>> {
    if items.is_empty() {
        return Err(Error::EmptySession);
    }
    let mut out = vec![0.0; catalog.dim()];
    for &j in items {
        if j >= catalog.count() {
            return Err(Error::ItemOutOfRange {
                index: j,
                count: catalog.count(),
            });
        }
        axpy(1.0, catalog.row(j), &mut out);
    }
    let inv = 1.0 / items.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(out)
}

/// Infectivity of a session summarized by `v_s` for embedding `u`.
pub fn infectivity(v_s: &[f64], u: &[f64]) -> Result<f64> {
    if v_s.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v_s.len(),
        });
    }
    link(dot(v_s, u))
}

/// Resolves every session of `epoch` into a [`MarkedEvent`] under `params`.
pub fn marked_events(epoch: &EpochTrace, catalog: &ItemCatalog, params: &ModelParams) -> Result<Vec<MarkedEvent>> {
    check_dims(catalog, params)?;
    epoch
        .sessions()
        .iter()
        .map(|s| {
            let v = session_vector(s, catalog)?;
            Ok(MarkedEvent {
                t: s.t,
                alpha1: infectivity(&v, &params.u1)?,
                alpha2: infectivity(&v, &params.u2)?,
            })
        })
        .collect()
}

fn check_dims(catalog: &ItemCatalog, params: &ModelParams) -> Result<()> {
    if catalog.dim() != params.dim() || params.u2.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: catalog.dim(),
            found: params.dim(),
        });
    }
    Ok(())
}

/// Conditional intensity at `t` given a history of events strictly before `t`.
pub fn intensity(t: f64, history: &[MarkedEvent], params: &ModelParams) -> Result<f64> {
    let mut lambda = params.mu;
    for e in history {
        if e.t >= t {
            return Err(Error::HistoryNotBefore { event: e.t, t });
        }
        let dt = t - e.t;
        lambda += e.alpha1 * params.beta1 * (-params.beta1 * dt).exp()
            + e.alpha2 * params.beta2 * (-params.beta2 * dt).exp();
    }
    Ok(lambda)
}

/// Closed-form integral of the intensity over `[0, horizon]`.
pub fn compensator(horizon: f64, history: &[MarkedEvent], params: &ModelParams) -> Result<f64> {
    let mut total = params.mu * horizon;
    for e in history {
        if e.t > horizon {
            return Err(Error::AfterHorizon { t: e.t, horizon });
        }
        let dt = horizon - e.t;
        total += e.alpha1 * -(-params.beta1 * dt).exp_m1() + e.alpha2 * -(-params.beta2 * dt).exp_m1();
    }
    Ok(total)
}

/// Log-likelihood of one epoch: `Σ log λ(tᵢ) - ∫₀ᵀ λ(t) dt`.
pub fn log_likelihood(epoch: &EpochTrace, catalog: &ItemCatalog, params: &ModelParams) -> Result<f64> {
    PreparedEpoch::new(epoch, catalog)?.log_likelihood(params)
}

/// Analytic gradient of [`log_likelihood`].
pub fn log_likelihood_gradient(epoch: &EpochTrace, catalog: &ItemCatalog, params: &ModelParams) -> Result<Gradient> {
    PreparedEpoch::new(epoch, catalog)?
        .value_and_gradient(params)
        .map(|(_, g)| g)
}

/// An epoch with its session vectors resolved against a catalog.
///
/// Session vectors do not depend on the parameters, so repeated likelihood
/// evaluations during fitting reuse them.
#[derive(Clone, Debug)]
pub struct PreparedEpoch {
    times: Vec<f64>,
    vectors: Vec<f64>,
    dim: usize,
    horizon: f64,
}

impl PreparedEpoch {
    pub fn new(epoch: &EpochTrace, catalog: &ItemCatalog) -> Result<Self> {
        let dim = catalog.dim();
        let mut vectors = Vec::with_capacity(epoch.len() * dim);
        for s in epoch.sessions() {
            vectors.extend(session_vector(s, catalog)?);
        }
        Ok(Self {
            times: epoch.sessions().iter().map(|s| s.t).collect(),
            vectors,
            dim,
            horizon: epoch.horizon(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if params.dim() != self.dim || params.u2.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: params.dim(),
            });
        }
        Ok(())
    }

    fn alphas(&self, params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut a1 = Vec::with_capacity(self.len());
        let mut a2 = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let v = self.vector(i);
            a1.push(link(dot(v, &params.u1))?);
            a2.push(link(dot(v, &params.u2))?);
        }
        Ok((a1, a2))
    }

    pub fn log_likelihood(&self, params: &ModelParams) -> Result<f64> {
        self.check(params)?;
        let (a1, a2) = self.alphas(params)?;
        let (b1, b2) = (params.beta1, params.beta2);
        // Aᶜᵢ = Σ_{j<i} αᶜⱼ e^{-βᶜ (tᵢ - tⱼ)}
        let (mut acc1, mut acc2) = (0.0, 0.0);
        let mut sum_log = 0.0;
        for i in 0..self.len() {
            if i > 0 {
                let dt = self.times[i] - self.times[i - 1];
                if dt < 0.0 {
                    return Err(Error::NonIncreasingTimestamps {
                        index: i,
                        prev: self.times[i - 1],
                        t: self.times[i],
                    });
                }
                acc1 = (-b1 * dt).exp() * (acc1 + a1[i - 1]);
                acc2 = (-b2 * dt).exp() * (acc2 + a2[i - 1]);
            }
            sum_log += (params.mu + b1 * acc1 + b2 * acc2).ln();
        }
        let mut comp = params.mu * self.horizon;
        for i in 0..self.len() {
            let dt = self.horizon - self.times[i];
            comp += a1[i] * -(-b1 * dt).exp_m1() + a2[i] * -(-b2 * dt).exp_m1();
        }
        let ll = sum_log - comp;
        if !ll.is_finite() {
            return Err(Error::NonFinite("log-likelihood".into()));
        }
        Ok(ll)
    }

    /// Log-likelihood together with its analytic gradient.
    pub fn value_and_gradient(&self, params: &ModelParams) -> Result<(f64, Gradient)> {
        self.check(params)?;
        let (a1, a2) = self.alphas(params)?;
        let d = self.dim;
        let (b1, b2) = (params.beta1, params.beta2);
        let mut grad = Gradient::zeros(d);

        // Per component: A = Σ α e^{-βΔ}, D = Σ α Δ e^{-βΔ} (so ∂A/∂β = -D),
        // G = Σ v e^{-βΔ} (so ∂A/∂u = G/4).
        let (mut acc1, mut acc2) = (0.0, 0.0);
        let (mut lag1, mut lag2) = (0.0, 0.0);
        let mut g1 = vec![0.0; d];
        let mut g2 = vec![0.0; d];
        let mut sum_log = 0.0;
        for i in 0..self.len() {
            if i > 0 {
                let dt = self.times[i] - self.times[i - 1];
                if dt < 0.0 {
                    return Err(Error::NonIncreasingTimestamps {
                        index: i,
                        prev: self.times[i - 1],
                        t: self.times[i],
                    });
                }
                let e1 = (-b1 * dt).exp();
                let e2 = (-b2 * dt).exp();
                acc1 = e1 * (acc1 + a1[i - 1]);
                acc2 = e2 * (acc2 + a2[i - 1]);
                lag1 = e1 * lag1 + dt * acc1;
                lag2 = e2 * lag2 + dt * acc2;
                let prev = self.vector(i - 1);
                for k in 0..d {
                    g1[k] = e1 * (g1[k] + prev[k]);
                    g2[k] = e2 * (g2[k] + prev[k]);
                }
            }
            let lambda = params.mu + b1 * acc1 + b2 * acc2;
            sum_log += lambda.ln();
            let inv = 1.0 / lambda;
            grad.mu += inv;
            grad.beta1 += (acc1 - b1 * lag1) * inv;
            grad.beta2 += (acc2 - b2 * lag2) * inv;
            let s1 = b1 * LINK_SLOPE * inv;
            let s2 = b2 * LINK_SLOPE * inv;
            for k in 0..d {
                grad.u1[k] += s1 * g1[k];
                grad.u2[k] += s2 * g2[k];
            }
        }

        let mut comp = params.mu * self.horizon;
        grad.mu -= self.horizon;
        for i in 0..self.len() {
            let dt = self.horizon - self.times[i];
            let e1 = (-b1 * dt).exp();
            let e2 = (-b2 * dt).exp();
            let m1 = -(-b1 * dt).exp_m1();
            let m2 = -(-b2 * dt).exp_m1();
            comp += a1[i] * m1 + a2[i] * m2;
            grad.beta1 -= a1[i] * dt * e1;
            grad.beta2 -= a2[i] * dt * e2;
            let v = self.vector(i);
            let (c1, c2) = (LINK_SLOPE * m1, LINK_SLOPE * m2);
            for ((g1, g2), x) in grad.u1.iter_mut().zip(grad.u2.iter_mut()).zip(v) {
                *g1 -= c1 * x;
                *g2 -= c2 * x;
            }
        }

        let ll = sum_log - comp;
        if !ll.is_finite() || !grad.is_finite() {
            return Err(Error::NonFinite("log-likelihood or gradient".into()));
        }
        Ok((ll, grad))
    }
}
