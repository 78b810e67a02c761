//! Synthetic experiment harness.
//!
//! Four sweeps are supported: recovery error against the number of epochs,
//! recovery error against the gap between decay rates, and the utility of
//! utility-based versus engagement-based ranking against user dissimilarity
//! and against the share of utility-aligned inventory.
//!
//! Every (grid point, replicate) pair is an independent job with seeds derived
//! from the master seed and the replicate index only, so all grid points of a
//! replicate share the same basis, catalog draw, simulation stream and
//! optimizer initialization. Jobs run on the rayon pool and are joined in
//! grid order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit, FitConfig, ParamErrors};
use crate::model::ModelParams;
use crate::rank::{engagement_direction, rank_items, set_utility};
use crate::seed::{derive_seed, stream};
use crate::simulate::{simulate_epochs, SimConfig};
use crate::stats::{mean, median, std_dev};
use crate::synth::{build_scenario, ScenarioConfig, ScenarioKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ErrorVsSamples,
    ErrorVsBetaGap,
    UtilityVsDissimilarity,
    UtilityVsInventory,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::ErrorVsSamples,
        ExperimentKind::ErrorVsBetaGap,
        ExperimentKind::UtilityVsDissimilarity,
        ExperimentKind::UtilityVsInventory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ErrorVsSamples => "error-vs-samples",
            ExperimentKind::ErrorVsBetaGap => "error-vs-beta-gap",
            ExperimentKind::UtilityVsDissimilarity => "utility-vs-dissimilarity",
            ExperimentKind::UtilityVsInventory => "utility-vs-inventory",
        }
    }

    pub fn csv_file_name(self) -> &'static str {
        match self {
            ExperimentKind::ErrorVsSamples => "error_vs_samples.csv",
            ExperimentKind::ErrorVsBetaGap => "error_vs_beta_gap.csv",
            ExperimentKind::UtilityVsDissimilarity => "utility_vs_dissimilarity.csv",
            ExperimentKind::UtilityVsInventory => "utility_vs_inventory.csv",
        }
    }

    pub fn csv_header(self) -> &'static str {
        match self {
            ExperimentKind::ErrorVsSamples => "samples,beta_1_err,beta_2_err,u_1_err,u_2_err,mu_err",
            ExperimentKind::ErrorVsBetaGap => "\"beta_1 - beta_2\",beta_1_err,beta_2_err,u_1_err,u_2_err,mu_err",
            ExperimentKind::UtilityVsDissimilarity => "dissimilarity,utility_1,utility_1_std,utility_2,utility_2_std",
            ExperimentKind::UtilityVsInventory => "inventory,utility_1,utility_1_std,utility_2,utility_2_std",
        }
    }

    pub fn is_utility(self) -> bool {
        matches!(self, ExperimentKind::UtilityVsDissimilarity | ExperimentKind::UtilityVsInventory)
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment {s:?}; valid names: {}", Self::valid_names())))
    }
}

/// Ground-truth dynamics shared by every grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseModel {
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub d: usize,
    pub m: usize,
}

impl Default for BaseModel {
    fn default() -> Self {
        Self {
            mu: 0.3,
            beta1: 4.0,
            beta2: 1.0,
            d: 10,
            m: 1000,
        }
    }
}

/// Which `u¹ + u²` the engagement baseline ranks by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagementSource {
    /// Fitted `û¹ + û²`.
    Estimated,
    /// Ground-truth `u¹ + u²`.
    True,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub grid: Vec<f64>,
    pub replicates: usize,
    pub base: BaseModel,
    pub fit: FitConfig,
    pub sessions_per_epoch: usize,
    /// Epochs per fit; ignored by `error-vs-samples`, whose grid is the epoch count.
    pub epochs: usize,
    pub top_k: usize,
    pub seed: u64,
    pub engagement: EngagementSource,
}

/// Optimizer settings used by the desk-scale presets.
pub fn desk_fit_config() -> FitConfig {
    FitConfig {
        max_steps: 6000,
        ..FitConfig::default()
    }
}

impl ExperimentSpec {
    /// Desk-scale preset for `kind`.
    pub fn desk(kind: ExperimentKind) -> Self {
        let (grid, epochs) = match kind {
            ExperimentKind::ErrorVsSamples => (vec![4.0, 16.0, 64.0], 64),
            ExperimentKind::ErrorVsBetaGap => (vec![0.0, 1.0, 2.0, 3.0], 256),
            ExperimentKind::UtilityVsDissimilarity => (vec![-0.5, -0.2, 0.0, 0.2, 0.5, 1.0], 64),
            ExperimentKind::UtilityVsInventory => (vec![0.1, 0.25, 0.5, 0.75, 1.0], 64),
        };
        Self {
            kind,
            grid,
            replicates: 5,
            base: BaseModel::default(),
            fit: desk_fit_config(),
            sessions_per_epoch: 1000,
            epochs,
            top_k: 10,
            seed: 0,
            engagement: EngagementSource::Estimated,
        }
    }

    /// Full-size preset: larger grids and 1024 epochs per fit.
    pub fn paper_scale(kind: ExperimentKind) -> Self {
        let mut spec = Self::desk(kind);
        spec.fit = FitConfig::default();
        spec.epochs = 1024;
        match kind {
            ExperimentKind::ErrorVsSamples => spec.grid = vec![4.0, 16.0, 64.0, 256.0, 1024.0],
            ExperimentKind::ErrorVsBetaGap => spec.grid = vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            ExperimentKind::UtilityVsDissimilarity => {
                spec.grid = vec![-1.0, -0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
            }
            ExperimentKind::UtilityVsInventory => {
                spec.grid = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("grid must not be empty".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be >= 1".into()));
        }
        if self.sessions_per_epoch == 0 {
            return Err(Error::InvalidConfig("sessions_per_epoch must be >= 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.base.m {
            return Err(Error::InvalidConfig(format!("top_k must lie in [1, {}]", self.base.m)));
        }
        self.fit.validate()?;
        for &g in &self.grid {
            let ok = match self.kind {
                ExperimentKind::ErrorVsSamples => g >= 1.0 && g.fract() == 0.0,
                ExperimentKind::ErrorVsBetaGap => g >= 0.0 && (self.base.beta2 + g).is_finite(),
                ExperimentKind::UtilityVsDissimilarity => (-1.0..=1.0).contains(&g),
                ExperimentKind::UtilityVsInventory => (0.0..=1.0).contains(&g),
            };
            if !ok {
                return Err(Error::InvalidConfig(format!("grid value {g} is invalid for {}", self.kind)));
            }
        }
        if self.kind != ExperimentKind::ErrorVsSamples && self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }

    fn scenario_kind(&self, g: f64) -> ScenarioKind {
        match self.kind {
            ExperimentKind::ErrorVsSamples | ExperimentKind::ErrorVsBetaGap => ScenarioKind::Orthonormal,
            ExperimentKind::UtilityVsDissimilarity => ScenarioKind::Dissimilarity(g),
            ExperimentKind::UtilityVsInventory => ScenarioKind::Inventory(g),
        }
    }
}

/// Result of one (grid point, replicate) job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub grid_value: f64,
    pub replicate: usize,
    pub truth: ModelParams,
    pub estimate: ModelParams,
    pub errors: ParamErrors,
    /// Utility of ranking by `u¹ + u²` (engagement optimization).
    pub utility_engagement: Option<f64>,
    /// Utility of ranking by the estimated `u²`.
    pub utility_ours: Option<f64>,
    pub steps_taken: usize,
    pub non_monotone: bool,
    pub beta_tie: bool,
}

/// Runs a single job of `spec`.
pub fn run_replicate(spec: &ExperimentSpec, grid_value: f64, replicate: usize) -> Result<ReplicateOutcome> {
    let rep = replicate as u64;
    let base = &spec.base;
    let scenario = build_scenario(&ScenarioConfig::new(
        base.d,
        base.m,
        spec.scenario_kind(grid_value),
        derive_seed(spec.seed, stream::SCENARIO, rep),
    ))?;
    let beta1 = match spec.kind {
        ExperimentKind::ErrorVsBetaGap => base.beta2 + grid_value,
        _ => base.beta1,
    };
    let truth = ModelParams::new(base.mu, beta1, base.beta2, scenario.u1.clone(), scenario.u2.clone())?;
    let epochs = match spec.kind {
        ExperimentKind::ErrorVsSamples => grid_value as usize,
        _ => spec.epochs,
    };
    let sim = SimConfig {
        sessions_per_epoch: spec.sessions_per_epoch,
        rng_seed: derive_seed(spec.seed, stream::SIMULATION, rep),
        ..SimConfig::default()
    };
    let traces = simulate_epochs(&truth, &scenario.catalog, &sim, epochs)?;
    let fit_config = FitConfig {
        init_seed: derive_seed(spec.seed, stream::INIT, rep),
        ..spec.fit.clone()
    };
    let report = fit(&traces, &scenario.catalog, &fit_config)?.with_truth(&truth)?;
    let estimate = report.params.clone();

    let (utility_engagement, utility_ours) = if spec.kind.is_utility() {
        let ours = rank_items(&scenario.catalog, &estimate.u2, spec.top_k)?;
        let engagement = match spec.engagement {
            EngagementSource::Estimated => engagement_direction(&estimate.u1, &estimate.u2),
            EngagementSource::True => engagement_direction(&truth.u1, &truth.u2),
        };
        let baseline = rank_items(&scenario.catalog, &engagement, spec.top_k)?;
        (
            Some(set_utility(&baseline.indices, &scenario.catalog, &truth.u2)?),
            Some(set_utility(&ours.indices, &scenario.catalog, &truth.u2)?),
        )
    } else {
        (None, None)
    };

    Ok(ReplicateOutcome {
        grid_value,
        replicate,
        truth,
        estimate,
        errors: report.errors.expect("errors computed against truth"),
        utility_engagement,
        utility_ours,
        steps_taken: report.steps_taken,
        non_monotone: report.non_monotone,
        beta_tie: report.beta_tie,
    })
}

/// One aggregated CSV row per grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub grid_value: f64,
    /// Error experiments: medians of `[β¹, β², u¹, u², μ]` errors.
    /// Utility experiments: `[engagement mean, engagement std, ours mean, ours std]`.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub rows: Vec<ExperimentRow>,
    pub outcomes: Vec<ReplicateOutcome>,
}

/// Runs every job of `spec` and aggregates replicates per grid point.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let jobs: Vec<(f64, usize)> = spec
        .grid
        .iter()
        .flat_map(|&g| (0..spec.replicates).map(move |r| (g, r)))
        .collect();
    let outcomes: Vec<ReplicateOutcome> = jobs
        .par_iter()
        .map(|&(g, r)| run_replicate(spec, g, r))
        .collect::<Result<_>>()?;

    let rows = outcomes
        .chunks(spec.replicates)
        .map(|group| {
            let values = if spec.kind.is_utility() {
                let engagement: Vec<f64> = group.iter().filter_map(|o| o.utility_engagement).collect();
                let ours: Vec<f64> = group.iter().filter_map(|o| o.utility_ours).collect();
                vec![mean(&engagement), std_dev(&engagement), mean(&ours), std_dev(&ours)]
            } else {
                let col = |f: fn(&ParamErrors) -> f64| median(&group.iter().map(|o| f(&o.errors)).collect::<Vec<_>>());
                vec![col(|e| e.beta1), col(|e| e.beta2), col(|e| e.u1), col(|e| e.u2), col(|e| e.mu)]
            };
            ExperimentRow {
                grid_value: group[0].grid_value,
                values,
            }
        })
        .collect();

    Ok(ExperimentResult {
        spec: spec.clone(),
        rows,
        outcomes,
    })
}

impl ExperimentResult {
    /// CSV text with the experiment's fixed header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(self.spec.kind.csv_header());
        out.push('\n');
        for row in &self.rows {
            let mut cells = vec![row.grid_value.to_string()];
            cells.extend(row.values.iter().map(f64::to_string));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Values of a named CSV column, in grid order.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let header = self.spec.kind.csv_header();
        let index = header.split(',').position(|h| h.trim_matches('"') == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| if index == 0 { r.grid_value } else { r.values[index - 1] })
                .collect(),
        )
    }
}
