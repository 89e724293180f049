//! Aggregation-strategy comparison and the three-channel combination sweep.

use indexmap::IndexMap;
use itertools::Itertools;
use serde::Serialize;

use crate::calibration::{calibrate_rated, CalibrateOptions, CalibrationResult, GridSpec, RatedTriples};
use crate::channels::{ChannelSet, ChannelSpec};
use crate::error::{Error, Result};
use crate::rank::{bootstrap_tau, BootstrapSummary, TauVariant};

/// Weight positions in a sweep follow this order, filtered to the subset.
pub const SWEEP_ORDER: [ChannelSpec; 6] = [
    ChannelSpec::Mid,
    ChannelSpec::Gte,
    ChannelSpec::Dino,
    ChannelSpec::BertScore,
    ChannelSpec::Lpips,
    ChannelSpec::Clip,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Hybrid,
    Additive,
    Multiplicative,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Hybrid => "Hybrid",
            Strategy::Additive => "Additive",
            Strategy::Multiplicative => "Multiplicative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub runs: usize,
    pub seed: u64,
    pub variant: TauVariant,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            runs: 1000,
            seed: 0,
            variant: TauVariant::TauC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub combination: [ChannelSpec; 3],
    pub weights: crate::fusion::FusionWeights,
    pub tau: f64,
    pub p_value: f64,
    /// Mean Redemption Score over the rated samples at the row's weights.
    pub mean_score: f64,
    /// Bootstrap σ of τ at the row's weights, when requested.
    pub std_dev: Option<f64>,
    pub bootstrap: Option<BootstrapSummary>,
}

fn row(label: String, rated: &RatedTriples, result: &CalibrationResult, bootstrap: Option<&BootstrapConfig>) -> Result<AblationRow> {
    let scores = rated.triples.scores(&result.best);
    let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
    let summary = bootstrap
        .map(|b| bootstrap_tau(&scores, &rated.ratings, b.runs, b.seed, b.variant))
        .transpose()?;
    Ok(AblationRow {
        label,
        combination: result.selection,
        weights: result.best,
        tau: result.best_tau,
        p_value: result.p_value,
        mean_score,
        std_dev: summary.map(|s| s.std_dev),
        bootstrap: summary,
    })
}

/// Calibrates the selection three times: λ free (hybrid), λ = 1 (additive)
/// and λ = 0 (multiplicative). The weight grid is shared.
pub fn strategy_ablation(
    channels: &ChannelSet,
    selection: [ChannelSpec; 3],
    ratings: &IndexMap<String, f64>,
    spec: &GridSpec,
    options: &CalibrateOptions,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<Vec<AblationRow>> {
    let rated = RatedTriples::new(channels, selection, ratings)?;
    [
        (Strategy::Hybrid, *spec),
        (Strategy::Additive, spec.with_fixed_lambda(spec.lambda_den)),
        (Strategy::Multiplicative, spec.with_fixed_lambda(0)),
    ]
    .into_iter()
    .map(|(strategy, grid)| {
        let result = calibrate_rated(&rated, &grid, options)?;
        row(strategy.label().to_string(), &rated, &result, bootstrap)
    })
    .collect()
}

/// Sorts and deduplicates a pool into [`SWEEP_ORDER`].
pub fn canonical_pool(pool: &[ChannelSpec]) -> Vec<ChannelSpec> {
    SWEEP_ORDER.iter().copied().filter(|c| pool.contains(c)).collect()
}

pub fn combination_label(combination: &[ChannelSpec; 3]) -> String {
    combination.iter().map(|c| display_name(*c)).join(" + ")
}

pub fn display_name(c: ChannelSpec) -> &'static str {
    match c {
        ChannelSpec::Mid => "MID",
        ChannelSpec::Dino => "DINO",
        ChannelSpec::Gte => "GTEScore",
        ChannelSpec::Clip => "CLIP",
        ChannelSpec::BertScore => "BERT",
        ChannelSpec::Lpips => "LPIPS",
    }
}

/// Calibrates every 3-subset of the pool; rows sorted by τ descending, ties
/// kept in subset order.
pub fn combination_sweep(
    pool: &[ChannelSpec],
    channels: &ChannelSet,
    ratings: &IndexMap<String, f64>,
    spec: &GridSpec,
    options: &CalibrateOptions,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<Vec<AblationRow>> {
    let pool = canonical_pool(pool);
    if pool.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "combination sweep needs at least 3 distinct channels, got {}",
            pool.len()
        )));
    }
    if let Some(missing) = pool.iter().find(|c| !channels.contains_key(c.name())) {
        return Err(Error::MissingChannel(missing.name().to_string()));
    }

    let mut rows = pool
        .iter()
        .copied()
        .combinations(3)
        .map(|c| {
            let combination = [c[0], c[1], c[2]];
            let rated = RatedTriples::new(channels, combination, ratings)?;
            let result = calibrate_rated(&rated, spec, options)?;
            row(combination_label(&combination), &rated, &result, bootstrap)
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.tau.total_cmp(&a.tau));
    Ok(rows)
}
