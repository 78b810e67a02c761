//! Synthetic embedding scenarios: a random orthonormal basis, user pairs
//! built from its rows, and item catalogs scattered around anchor vectors.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{norm, ItemCatalog};
use crate::seed::rng_from_seed;

/// Dissimilarity baked into the inventory scenario's moreishness embedding.
pub const INVENTORY_DISSIMILARITY: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "s")]
pub enum ScenarioKind {
    /// `u¹ = Q₁`, `u² = Q₂`, items around random rows of `Q`.
    Orthonormal,
    /// `u² = Q₁`, `u¹ ∝ -s·Q₁ + Q₂`, items around random rows of `Q`.
    Dissimilarity(f64),
    /// Dissimilarity 0.2 users; each item anchored at `u²` with probability `s`,
    /// otherwise at `u¹`.
    Inventory(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub d: usize,
    pub m: usize,
    pub noise_var: f64,
    pub kind: ScenarioKind,
    pub rng_seed: u64,
}

impl ScenarioConfig {
    /// Scenario with the default noise variance `1 / (10 d)`.
    pub fn new(d: usize, m: usize, kind: ScenarioKind, rng_seed: u64) -> Self {
        Self {
            d,
            m,
            noise_var: 1.0 / (10.0 * d as f64),
            kind,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidConfig(format!("d must be >= 2, got {}", self.d)));
        }
        if self.m < 1 {
            return Err(Error::InvalidConfig("m must be >= 1".into()));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_var must be positive, got {}", self.noise_var)));
        }
        match self.kind {
            ScenarioKind::Dissimilarity(s) if !(-1.0..=1.0).contains(&s) => {
                Err(Error::InvalidConfig(format!("dissimilarity {s} outside [-1, 1]")))
            }
            ScenarioKind::Inventory(s) if !(0.0..=1.0).contains(&s) => {
                Err(Error::InvalidConfig(format!("inventory fraction {s} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// A generated ground truth: basis, true user embeddings and item catalog.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub basis: DMatrix<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub catalog: ItemCatalog,
}

/// Builds the scenario described by `config`, consuming a single RNG stream
/// seeded from `config.rng_seed` (basis first, then items).
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = rng_from_seed(config.rng_seed);
    let basis = orthonormal_basis(config.d, &mut rng);
    let (u1, u2, catalog) = match config.kind {
        ScenarioKind::Orthonormal => {
            let (u1, u2) = base_user_pair(&basis)?;
            let catalog = random_item_catalog(&basis, config.m, config.noise_var, &mut rng)?;
            (u1, u2, catalog)
        }
        ScenarioKind::Dissimilarity(s) => {
            let (u1, u2) = dissimilar_user_pair(&basis, s)?;
            let catalog = random_item_catalog(&basis, config.m, config.noise_var, &mut rng)?;
            (u1, u2, catalog)
        }
        ScenarioKind::Inventory(s) => {
            let (u1, u2) = dissimilar_user_pair(&basis, INVENTORY_DISSIMILARITY)?;
            let catalog = inventory_catalog(&u1, &u2, s, config.m, config.noise_var, &mut rng)?;
            (u1, u2, catalog)
        }
    };
    Ok(Scenario { basis, u1, u2, catalog })
}

/// Orthonormal factor of the QR decomposition of a standard-normal `d × d`
/// matrix, with column signs fixed so that `R` has a nonnegative diagonal.
pub fn orthonormal_basis<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn row(q: &DMatrix<f64>, i: usize) -> Vec<f64> {
    q.row(i).iter().copied().collect()
}

fn require_two_rows(q: &DMatrix<f64>) -> Result<()> {
    if q.nrows() < 2 {
        return Err(Error::InvalidConfig(format!("basis needs at least two rows, has {}", q.nrows())));
    }
    Ok(())
}

/// `(u¹, u²) = (Q₁, Q₂)`.
pub fn base_user_pair(q: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    require_two_rows(q)?;
    Ok((row(q, 0), row(q, 1)))
}

/// `u² = Q₁`, `u¹ = (-s·Q₁ + Q₂) / ‖-s·Q₁ + Q₂‖`.
pub fn dissimilar_user_pair(q: &DMatrix<f64>, s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    require_two_rows(q)?;
    if !s.is_finite() {
        return Err(Error::InvalidConfig(format!("dissimilarity must be finite, got {s}")));
    }
    let q1 = row(q, 0);
    let q2 = row(q, 1);
    let raw: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| -s * a + b).collect();
    let n = norm(&raw);
    let u1 = raw.into_iter().map(|x| x / n).collect();
    Ok((u1, q1))
}

/// `anchor + ε`, `ε ~ N(0, noise_var)` per dimension, scaled to unit norm.
/// Degenerate (zero) draws are redrawn.
fn noisy_unit<R: Rng + ?Sized>(anchor: &[f64], noise: &Normal<f64>, rng: &mut R, out: &mut Vec<f64>) {
    loop {
        let v: Vec<f64> = anchor.iter().map(|a| a + noise.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 && n.is_finite() {
            out.extend(v.iter().map(|x| x / n));
            return;
        }
    }
}

fn noise_dist(noise_var: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, noise_var.sqrt()).map_err(|e| Error::InvalidConfig(format!("noise variance: {e}")))
}

/// Catalog of `m` items, each a noisy copy of a uniformly chosen row of `q`.
pub fn random_item_catalog<R: Rng + ?Sized>(q: &DMatrix<f64>, m: usize, noise_var: f64, rng: &mut R) -> Result<ItemCatalog> {
    anchored_item_catalog(q, m, noise_var, rng).map(|(c, _)| c)
}

/// Like [`random_item_catalog`], also returning the anchor row of each item.
pub fn anchored_item_catalog<R: Rng + ?Sized>(
    q: &DMatrix<f64>,
    m: usize,
    noise_var: f64,
    rng: &mut R,
) -> Result<(ItemCatalog, Vec<usize>)> {
    let noise = noise_dist(noise_var)?;
    let d = q.ncols();
    let rows: Vec<Vec<f64>> = (0..q.nrows()).map(|i| row(q, i)).collect();
    let mut data = Vec::with_capacity(m * d);
    let mut anchors = Vec::with_capacity(m);
    for _ in 0..m {
        let r = rng.random_range(0..rows.len());
        noisy_unit(&rows[r], &noise, rng, &mut data);
        anchors.push(r);
    }
    Ok((ItemCatalog::new(d, data)?, anchors))
}

/// Catalog where each item is anchored at `u2` with probability `s` and at
/// `u1` otherwise.
pub fn inventory_catalog<R: Rng + ?Sized>(
    u1: &[f64],
    u2: &[f64],
    s: f64,
    m: usize,
    noise_var: f64,
    rng: &mut R,
) -> Result<ItemCatalog> {
    anchored_inventory_catalog(u1, u2, s, m, noise_var, rng).map(|(c, _)| c)
}

/// Like [`inventory_catalog`], also flagging which items are `u2`-anchored.
pub fn anchored_inventory_catalog<R: Rng + ?Sized>(
    u1: &[f64],
    u2: &[f64],
    s: f64,
    m: usize,
    noise_var: f64,
    rng: &mut R,
) -> Result<(ItemCatalog, Vec<bool>)> {
    if u1.len() != u2.len() {
        return Err(Error::DimensionMismatch {
            expected: u1.len(),
            found: u2.len(),
        });
    }
    let coin = Bernoulli::new(s).map_err(|_| Error::InvalidConfig(format!("inventory fraction {s} outside [0, 1]")))?;
    let noise = noise_dist(noise_var)?;
    let mut data = Vec::with_capacity(m * u1.len());
    let mut heads = Vec::with_capacity(m);
    for _ in 0..m {
        let utility_item = coin.sample(rng);
        noisy_unit(if utility_item { u2 } else { u1 }, &noise, rng, &mut data);
        heads.push(utility_item);
    }
    Ok((ItemCatalog::new(u1.len(), data)?, heads))
}
