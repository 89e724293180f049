//! Constrained grid search over fusion weights.
//!
//! The grid holds every `(α, β, γ)` on the simplex with a fixed step and a
//! per-weight floor, crossed with every `λ` step in a range. Weights are
//! integer numerators throughout, so feasibility never depends on float
//! rounding. The winner maximizes Kendall τ against human ratings; ties go
//! to the lexicographically smallest `(α, β, γ, λ)`.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::{ChannelSet, ChannelSpec};
use crate::error::{Error, Result};
use crate::fusion::{snap, FusionWeights, SquashedTriples};
use crate::rank::{self, PValueMethod, TauResult, TauVariant};

/// Significance threshold on the best point's p-value.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    /// Weights move in steps of `1 / weight_den`.
    pub weight_den: u32,
    /// Floor on each of α, β, γ, in units of `1 / weight_den`.
    pub min_weight: u32,
    /// λ moves in steps of `1 / lambda_den`.
    pub lambda_den: u32,
    /// Inclusive λ range, in units of `1 / lambda_den`.
    pub lambda_lo: u32,
    pub lambda_hi: u32,
}

impl Default for GridSpec {
    /// Weight step 0.05 with floor 0.15, λ step 0.1 over `[0, 1]`.
    fn default() -> Self {
        Self {
            weight_den: 20,
            min_weight: 3,
            lambda_den: 10,
            lambda_lo: 0,
            lambda_hi: 10,
        }
    }
}

fn step_denominator(step: f64, what: &str) -> Result<u32> {
    if !(step.is_finite() && step > 0.0 && step <= 1.0) {
        return Err(Error::InfeasibleGrid(format!("{what} step {step} must be in (0, 1]")));
    }
    let inv = 1.0 / step;
    let den = inv.round();
    if (inv - den).abs() > 1e-6 {
        return Err(Error::InfeasibleGrid(format!("{what} step {step} does not divide 1")));
    }
    Ok(den as u32)
}

impl GridSpec {
    /// Builds a spec from decimal steps, e.g. `(0.05, 0.15, 0.1)`.
    pub fn from_decimal(weight_step: f64, min_weight: f64, lambda_step: f64) -> Result<Self> {
        let weight_den = step_denominator(weight_step, "weight")?;
        let lambda_den = step_denominator(lambda_step, "lambda")?;
        let min_weight = snap(min_weight, weight_den)
            .map_err(|_| Error::InfeasibleGrid(format!("min weight {min_weight} is not a multiple of {weight_step}")))?;
        let spec = Self {
            weight_den,
            min_weight,
            lambda_den,
            lambda_lo: 0,
            lambda_hi: lambda_den,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same spec with λ pinned to a single grid value.
    pub fn with_fixed_lambda(self, lambda_num: u32) -> Self {
        Self {
            lambda_lo: lambda_num,
            lambda_hi: lambda_num,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight_den == 0 || self.lambda_den == 0 {
            return Err(Error::InfeasibleGrid("zero step denominator".into()));
        }
        if 3 * self.min_weight > self.weight_den {
            return Err(Error::InfeasibleGrid(format!(
                "three weights of at least {}/{} cannot sum to 1",
                self.min_weight, self.weight_den
            )));
        }
        if self.lambda_lo > self.lambda_hi || self.lambda_hi > self.lambda_den {
            return Err(Error::InfeasibleGrid(format!(
                "lambda range [{}, {}]/{} is empty or exceeds 1",
                self.lambda_lo, self.lambda_hi, self.lambda_den
            )));
        }
        Ok(())
    }

    pub fn contains(&self, w: &FusionWeights) -> bool {
        let (a, b, g, l) = w.numerators();
        w.weight_den() == self.weight_den
            && w.lambda_den() == self.lambda_den
            && a.min(b).min(g) >= self.min_weight
            && (self.lambda_lo..=self.lambda_hi).contains(&l)
    }

    /// Number of weight triples: compositions of `den − 3·min` into 3 parts.
    pub fn triple_count(&self) -> usize {
        let free = (self.weight_den - 3 * self.min_weight) as usize;
        (free + 2) * (free + 1) / 2
    }

    pub fn lambda_count(&self) -> usize {
        (self.lambda_hi - self.lambda_lo + 1) as usize
    }
}

/// Every feasible weight combination in lexicographic `(α, β, γ, λ)` order.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<FusionWeights>> {
    spec.validate()?;
    let (den, min) = (spec.weight_den, spec.min_weight);
    let mut out = Vec::with_capacity(spec.triple_count() * spec.lambda_count());
    for a in min..=(den - 2 * min) {
        for b in min..=(den - a - min) {
            let g = den - a - b;
            for l in spec.lambda_lo..=spec.lambda_hi {
                out.push(FusionWeights::new(a, b, g, den, l, spec.lambda_den)?);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InfeasibleGrid("no grid points".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CalibrateOptions {
    pub variant: TauVariant,
    pub p_value: PValueMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub weights: FusionWeights,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityEntry {
    /// e.g. `lambda-1`, `alpha->gamma`
    pub perturbation: String,
    pub weights: FusionWeights,
    pub tau: f64,
    /// `tau − best_tau`
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SensitivityReport {
    pub entries: Vec<SensitivityEntry>,
    /// Neighbors outside the grid, by perturbation label.
    pub skipped: Vec<String>,
    /// Largest drop in τ among neighbors (0 when none is worse).
    pub max_degradation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub selection: [ChannelSpec; 3],
    pub n: usize,
    pub best: FusionWeights,
    pub best_tau: f64,
    pub best_result: TauResult,
    pub p_value: f64,
    pub significant: bool,
    pub grid_trace: Vec<GridPoint>,
    pub sensitivity: SensitivityReport,
}

/// Squashed triples and ratings aligned sample by sample; the unit of work
/// for calibration.
#[derive(Debug, Clone)]
pub struct RatedTriples {
    pub triples: SquashedTriples,
    pub ratings: Vec<f64>,
}

impl RatedTriples {
    /// Aligns channels with the rated samples. `ratings` maps sample id to
    /// human rating; every rated sample must be covered by all channels.
    pub fn new(channels: &ChannelSet, selection: [ChannelSpec; 3], ratings: &IndexMap<String, f64>) -> Result<Self> {
        let all = SquashedTriples::new(channels, selection)?;
        let ids: Vec<String> = ratings.keys().cloned().collect();
        let triples = all.subset(&ids)?;
        let ratings: Vec<f64> = ratings.values().copied().collect();
        let mut distinct = ratings.clone();
        distinct.sort_unstable_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::Degenerate("calibration needs at least 2 distinct ratings".into()));
        }
        Ok(Self { triples, ratings })
    }

    pub fn tau(&self, w: &FusionWeights, variant: TauVariant) -> Result<TauResult> {
        rank::kendall_tau(&self.triples.scores(w), &self.ratings, variant)
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

pub fn calibrate(
    channels: &ChannelSet,
    selection: [ChannelSpec; 3],
    ratings: &IndexMap<String, f64>,
    spec: &GridSpec,
    options: &CalibrateOptions,
) -> Result<CalibrationResult> {
    let rated = RatedTriples::new(channels, selection, ratings)?;
    calibrate_rated(&rated, spec, options)
}

/// [`calibrate`] on already-aligned data.
pub fn calibrate_rated(rated: &RatedTriples, spec: &GridSpec, options: &CalibrateOptions) -> Result<CalibrationResult> {
    let grid = enumerate_grid(spec)?;
    let results: Vec<TauResult> = grid
        .par_iter()
        .map(|w| rated.tau(w, options.variant))
        .collect::<Result<_>>()?;

    // grid is in lexicographic order, so keeping the first maximum
    // implements the tie-break
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.tau > results[best].tau {
            best = i;
        }
    }
    let best_weights = grid[best];
    let best_result = results[best];
    let p_value = match options.p_value {
        PValueMethod::Normal => rank::tau_p_value(&best_result, PValueMethod::Normal)?,
        PValueMethod::Permutation { iters, seed } => {
            rank::tau_p_value_permutation(&rated.triples.scores(&best_weights), &rated.ratings, iters, seed)?
        }
    };
    let sensitivity = sensitivity_rated(rated, &best_weights, best_result.tau, spec, options.variant)?;

    Ok(CalibrationResult {
        selection: rated.triples.selection,
        n: rated.len(),
        best: best_weights,
        best_tau: best_result.tau,
        best_result,
        p_value,
        significant: p_value < SIGNIFICANCE_LEVEL,
        grid_trace: grid
            .into_iter()
            .zip(&results)
            .map(|(weights, r)| GridPoint { weights, tau: r.tau })
            .collect(),
        sensitivity,
    })
}

const WEIGHT_NAMES: [&str; 3] = ["alpha", "beta", "gamma"];

/// Grid neighbors of `best`: one λ step either way, and one weight step
/// moved between each ordered pair of (α, β, γ).
/// Labelled feasible neighbors and the labels of infeasible ones.
pub type Neighbors = (Vec<(String, FusionWeights)>, Vec<String>);

pub fn neighbors(best: &FusionWeights, spec: &GridSpec) -> Result<Neighbors> {
    if !spec.contains(best) {
        return Err(Error::InvalidInput(format!("{best} is not on the grid")));
    }
    let (a, b, g, l) = best.numerators();
    let mut feasible = Vec::new();
    let mut skipped = Vec::new();

    for (label, lambda) in [("lambda-1", l.checked_sub(1)), ("lambda+1", Some(l + 1))] {
        match lambda.filter(|v| (spec.lambda_lo..=spec.lambda_hi).contains(v)) {
            Some(v) => feasible.push((
                label.to_string(),
                FusionWeights::new(a, b, g, spec.weight_den, v, spec.lambda_den)?,
            )),
            None => skipped.push(label.to_string()),
        }
    }

    let w = [a, b, g];
    for from in 0..3 {
        for to in 0..3 {
            if from == to {
                continue;
            }
            let label = format!("{}->{}", WEIGHT_NAMES[from], WEIGHT_NAMES[to]);
            if w[from] < spec.min_weight + 1 {
                skipped.push(label);
                continue;
            }
            let mut moved = w;
            moved[from] -= 1;
            moved[to] += 1;
            feasible.push((
                label,
                FusionWeights::new(moved[0], moved[1], moved[2], spec.weight_den, l, spec.lambda_den)?,
            ));
        }
    }
    Ok((feasible, skipped))
}

pub fn sensitivity(
    channels: &ChannelSet,
    selection: [ChannelSpec; 3],
    ratings: &IndexMap<String, f64>,
    best: &FusionWeights,
    spec: &GridSpec,
    variant: TauVariant,
) -> Result<SensitivityReport> {
    let rated = RatedTriples::new(channels, selection, ratings)?;
    let best_tau = rated.tau(best, variant)?.tau;
    sensitivity_rated(&rated, best, best_tau, spec, variant)
}

fn sensitivity_rated(
    rated: &RatedTriples,
    best: &FusionWeights,
    best_tau: f64,
    spec: &GridSpec,
    variant: TauVariant,
) -> Result<SensitivityReport> {
    let (feasible, skipped) = neighbors(best, spec)?;
    let entries = feasible
        .into_iter()
        .map(|(perturbation, weights)| {
            let tau = rated.tau(&weights, variant)?.tau;
            Ok(SensitivityEntry {
                perturbation,
                weights,
                tau,
                delta: tau - best_tau,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_degradation = entries.iter().map(|e| -e.delta).fold(0.0, f64::max);
    Ok(SensitivityReport {
        entries,
        skipped,
        max_degradation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_grid_size() {
        let grid = enumerate_grid(&GridSpec::default()).unwrap();
        assert_eq!(grid.len(), 858);
        assert_eq!(GridSpec::default().triple_count(), 78);
        let unique: HashSet<_> = grid.iter().map(|w| w.numerators()).collect();
        assert_eq!(unique.len(), 858);
        assert!(grid.windows(2).all(|p| p[0].numerators() < p[1].numerators()));
        assert!(grid.iter().all(|w| {
            let (a, b, g, _) = w.numerators();
            a + b + g == 20 && a.min(b).min(g) >= 3
        }));
    }

    #[test]
    fn coarse_grid_by_hand() {
        let spec = GridSpec::from_decimal(0.5, 0.0, 0.5).unwrap();
        let grid = enumerate_grid(&spec).unwrap();
        assert_eq!(grid.len(), 18);
    }

    #[test]
    fn infeasible_min_weight() {
        assert!(matches!(
            GridSpec::from_decimal(0.05, 0.35, 0.1),
            Err(Error::InfeasibleGrid(_))
        ));
        assert!(GridSpec::from_decimal(0.03, 0.15, 0.1).is_err());
        assert!(GridSpec::from_decimal(0.05, 0.12, 0.1).is_err());
    }

    #[test]
    fn composition_count_matches_enumeration() {
        for den in [2u32, 4, 5, 10, 20] {
            for min in 0..=(den / 3) {
                let spec = GridSpec {
                    weight_den: den,
                    min_weight: min,
                    lambda_den: 2,
                    lambda_lo: 0,
                    lambda_hi: 2,
                };
                let grid = enumerate_grid(&spec).unwrap();
                assert_eq!(grid.len(), spec.triple_count() * 3);
            }
        }
    }

    #[test]
    fn interior_and_boundary_neighbors() {
        let spec = GridSpec::default();
        // alpha sits on the floor, so it cannot donate
        let (n, skipped) = neighbors(&FusionWeights::default(), &spec).unwrap();
        assert_eq!(n.len(), 6);
        assert_eq!(skipped, vec!["alpha->beta".to_string(), "alpha->gamma".to_string()]);

        let interior = FusionWeights::new(6, 7, 7, 20, 5, 10).unwrap();
        assert_eq!(neighbors(&interior, &spec).unwrap().0.len(), 8);

        let top = FusionWeights::new(6, 7, 7, 20, 10, 10).unwrap();
        let (n, skipped) = neighbors(&top, &spec).unwrap();
        let lambdas: Vec<_> = n.iter().filter(|(l, _)| l.starts_with("lambda")).collect();
        assert_eq!(lambdas.len(), 1);
        assert_eq!(lambdas[0].1.lambda(), 0.9);
        assert_eq!(skipped, vec!["lambda+1".to_string()]);

        let off_grid = FusionWeights::new(2, 8, 10, 20, 5, 10).unwrap();
        assert!(neighbors(&off_grid, &spec).is_err());
    }
}
