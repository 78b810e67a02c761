//! Utility-based ranking and its evaluation against the true utility
//! embedding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, link, mean_of_items, EpochTrace, ItemCatalog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

fn check_request(catalog: &ItemCatalog, direction: &[f64], k: usize) -> Result<()> {
    if direction.len() != catalog.dim() {
        return Err(Error::DimensionMismatch {
            expected: catalog.dim(),
            found: direction.len(),
        });
    }
    if k == 0 || k > catalog.count() {
        return Err(Error::RankTooLarge {
            k,
            count: catalog.count(),
        });
    }
    Ok(())
}

/// Top-`k` items by `v_j · direction`, ties broken by ascending index.
pub fn rank_items(catalog: &ItemCatalog, direction: &[f64], k: usize) -> Result<RankResult> {
    check_request(catalog, direction, k)?;
    let scores: Vec<f64> = catalog.rows().map(|v| dot(v, direction)).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let by_score = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_score);
        order.truncate(k);
    }
    order.sort_unstable_by(by_score);
    Ok(RankResult {
        scores: order.iter().map(|&j| scores[j]).collect(),
        indices: order,
    })
}

/// Samples `k` distinct items from the softmax of `score / temperature`
/// without replacement (Gumbel top-k). Returned in sampled order.
pub fn rank_items_softmax<R: Rng + ?Sized>(
    catalog: &ItemCatalog,
    direction: &[f64],
    k: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<RankResult> {
    check_request(catalog, direction, k)?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
    }
    let scores: Vec<f64> = catalog.rows().map(|v| dot(v, direction)).collect();
    let mut keyed: Vec<(f64, usize)> = scores
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (s / temperature - (-u.ln()).ln(), j)
        })
        .collect();
    keyed.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let indices: Vec<usize> = keyed.into_iter().take(k).map(|(_, j)| j).collect();
    Ok(RankResult {
        scores: indices.iter().map(|&j| scores[j]).collect(),
        indices,
    })
}

/// Utility `φ(v_S · u²)` of a set of items under the true utility embedding.
pub fn set_utility(selected: &[usize], catalog: &ItemCatalog, u2_true: &[f64]) -> Result<f64> {
    if u2_true.len() != catalog.dim() {
        return Err(Error::DimensionMismatch {
            expected: catalog.dim(),
            found: u2_true.len(),
        });
    }
    let v = mean_of_items(selected, catalog)?;
    link(dot(&v, u2_true))
}

/// The direction an engagement optimizer ranks by: `u¹ + u²`.
pub fn engagement_direction(u1: &[f64], u2: &[f64]) -> Vec<f64> {
    u1.iter().zip(u2).map(|(a, b)| a + b).collect()
}

/// Total per-session utility across `traces` divided by the total observed time.
pub fn long_run_average_utility(traces: &[EpochTrace], catalog: &ItemCatalog, u2_true: &[f64]) -> Result<f64> {
    let total_time: f64 = traces.iter().map(EpochTrace::horizon).sum();
    if total_time.is_nan() || total_time <= 0.0 {
        return Err(Error::InvalidParams("total horizon must be positive".into()));
    }
    let mut total = 0.0;
    for trace in traces {
        for s in trace.sessions() {
            total += set_utility(&s.items, catalog, u2_true)?;
        }
    }
    Ok(total / total_time)
}
