//! Squash normalization and the hybrid Redemption Score.
//!
//! Each raw channel value is mapped into `(0, 1)` by
//! `squash(x) = (x / (1 + |x|) + 1) / 2`. Three squashed values `z` are then
//! fused with weights `(α, β, γ)` on the simplex and an interpolation `λ`:
//!
//! ```text
//! L  = α z₁ + β z₂ + γ z₃
//! M  = z₁^α z₂^β z₃^γ
//! RS = λ L + (1 − λ) M
//! ```

use std::fmt;

use indexmap::IndexMap;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::channels::{ChannelSet, ChannelSpec};
use crate::error::{Error, Result};

pub fn squash(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite { context: "squash input".into() });
    }
    Ok((x / (1.0 + x.abs()) + 1.0) / 2.0)
}

/// Fusion weights held as integer numerators over fixed denominators, so
/// `α + β + γ = 1` is checked exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FusionWeights {
    alpha: u32,
    beta: u32,
    gamma: u32,
    weight_den: u32,
    lambda: u32,
    lambda_den: u32,
}

pub const DEFAULT_WEIGHT_DEN: u32 = 20;
pub const DEFAULT_LAMBDA_DEN: u32 = 10;

impl Default for FusionWeights {
    /// `(0.15, 0.35, 0.50)` with `λ = 0.8`.
    fn default() -> Self {
        Self {
            alpha: 3,
            beta: 7,
            gamma: 10,
            weight_den: DEFAULT_WEIGHT_DEN,
            lambda: 8,
            lambda_den: DEFAULT_LAMBDA_DEN,
        }
    }
}

impl FusionWeights {
    pub fn new(alpha: u32, beta: u32, gamma: u32, weight_den: u32, lambda: u32, lambda_den: u32) -> Result<Self> {
        if weight_den == 0 || lambda_den == 0 {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        if alpha + beta + gamma != weight_den {
            return Err(Error::InvalidInput(format!(
                "weights {alpha}/{weight_den} + {beta}/{weight_den} + {gamma}/{weight_den} do not sum to 1"
            )));
        }
        if lambda > lambda_den {
            return Err(Error::InvalidInput(format!("lambda {lambda}/{lambda_den} exceeds 1")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            weight_den,
            lambda,
            lambda_den,
        })
    }

    /// Snaps decimal weights onto the twentieths/tenths grid, rejecting
    /// values that are not grid-aligned.
    pub fn from_decimal(alpha: f64, beta: f64, gamma: f64, lambda: f64) -> Result<Self> {
        let w = |v: f64| snap(v, DEFAULT_WEIGHT_DEN);
        Self::new(
            w(alpha)?,
            w(beta)?,
            w(gamma)?,
            DEFAULT_WEIGHT_DEN,
            snap(lambda, DEFAULT_LAMBDA_DEN)?,
            DEFAULT_LAMBDA_DEN,
        )
    }

    pub fn alpha(&self) -> f64 {
        self.alpha as f64 / self.weight_den as f64
    }
    pub fn beta(&self) -> f64 {
        self.beta as f64 / self.weight_den as f64
    }
    pub fn gamma(&self) -> f64 {
        self.gamma as f64 / self.weight_den as f64
    }
    pub fn lambda(&self) -> f64 {
        self.lambda as f64 / self.lambda_den as f64
    }

    pub fn weights(&self) -> [f64; 3] {
        [self.alpha(), self.beta(), self.gamma()]
    }

    /// `(α, β, γ, λ)` numerators; the lexicographic tie-break key.
    pub fn numerators(&self) -> (u32, u32, u32, u32) {
        (self.alpha, self.beta, self.gamma, self.lambda)
    }

    pub fn weight_den(&self) -> u32 {
        self.weight_den
    }

    pub fn lambda_den(&self) -> u32 {
        self.lambda_den
    }
}

pub(crate) fn snap(v: f64, den: u32) -> Result<u32> {
    let scaled = v * den as f64;
    let rounded = scaled.round();
    if !v.is_finite() || v < 0.0 || (scaled - rounded).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("{v} is not a multiple of 1/{den}")));
    }
    Ok(rounded as u32)
}

impl fmt::Display for FusionWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.2}, {:.2}, {:.2}, λ={:.2})",
            self.alpha(),
            self.beta(),
            self.gamma(),
            self.lambda()
        )
    }
}

impl Serialize for FusionWeights {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("FusionWeights", 6)?;
        s.serialize_field("alpha", &self.alpha())?;
        s.serialize_field("beta", &self.beta())?;
        s.serialize_field("gamma", &self.gamma())?;
        s.serialize_field("lambda", &self.lambda())?;
        s.serialize_field("weight_numerators", &[self.alpha, self.beta, self.gamma])?;
        s.serialize_field("lambda_numerator", &self.lambda)?;
        s.end()
    }
}

/// Weighted arithmetic mean of the three squashed values.
pub fn linear_component(z: [f64; 3], w: &FusionWeights) -> f64 {
    let [a, b, g] = w.weights();
    a * z[0] + b * z[1] + g * z[2]
}

/// Weighted geometric mean, evaluated as `exp(Σ wᵢ ln zᵢ)`.
pub fn geometric_component(z: [f64; 3], w: &FusionWeights) -> f64 {
    let [a, b, g] = w.weights();
    (a * z[0].ln() + b * z[1].ln() + g * z[2].ln()).exp()
}

pub fn redemption_score(z: [f64; 3], w: &FusionWeights) -> Result<f64> {
    if let Some(v) = z.iter().find(|v| !(v.is_finite() && **v > 0.0 && **v < 1.0)) {
        return Err(Error::InvalidInput(format!("squashed value {v} outside (0, 1)")));
    }
    Ok(fuse(z, w))
}

/// Unchecked core of [`redemption_score`] for pre-validated inputs.
#[inline]
pub(crate) fn fuse(z: [f64; 3], w: &FusionWeights) -> f64 {
    let lambda = w.lambda();
    lambda * linear_component(z, w) + (1.0 - lambda) * geometric_component(z, w)
}

/// Squashed `(z₁, z₂, z₃)` per sample for an ordered channel selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedTriples {
    pub selection: [ChannelSpec; 3],
    pub sample_ids: Vec<String>,
    pub z: Vec<[f64; 3]>,
}

impl SquashedTriples {
    /// Squashes the selected channels once. All three must cover exactly
    /// the same samples; order follows the first channel.
    pub fn new(channels: &ChannelSet, selection: [ChannelSpec; 3]) -> Result<Self> {
        let vecs = selection
            .iter()
            .map(|c| channels.get(c.name()).ok_or_else(|| Error::MissingChannel(c.name().into())))
            .collect::<Result<Vec<_>>>()?;
        let first = vecs[0];
        for v in &vecs[1..] {
            if v.len() != first.len() {
                return Err(Error::InvalidInput(format!(
                    "channel {} covers {} samples but {} covers {}",
                    v.name,
                    v.len(),
                    first.name,
                    first.len()
                )));
            }
        }
        let mut sample_ids = Vec::with_capacity(first.len());
        let mut z = Vec::with_capacity(first.len());
        for id in first.values.keys() {
            let mut triple = [0.0; 3];
            for (k, v) in vecs.iter().enumerate() {
                let raw = v.get(id).ok_or_else(|| {
                    Error::InvalidInput(format!("channel {} has no value for sample {id}", v.name))
                })?;
                let s = squash(raw)?;
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::Degenerate(format!(
                        "channel {} value {raw} for sample {id} saturates the squash",
                        v.name
                    )));
                }
                triple[k] = s;
            }
            sample_ids.push(id.clone());
            z.push(triple);
        }
        Ok(Self {
            selection,
            sample_ids,
            z,
        })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Redemption Score of every sample, in `sample_ids` order.
    pub fn scores(&self, w: &FusionWeights) -> Vec<f64> {
        self.z.iter().map(|&z| fuse(z, w)).collect()
    }

    /// Restricts to the given sample ids (in the given order).
    pub fn subset(&self, ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut z = Vec::with_capacity(ids.len());
        for id in ids {
            let i = index
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("sample {id} not covered by channels")))?;
            z.push(self.z[*i]);
        }
        Ok(Self {
            selection: self.selection,
            sample_ids: ids.to_vec(),
            z,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub per_sample: IndexMap<String, f64>,
    /// Squashed channel values that fed each score.
    pub z: IndexMap<String, [f64; 3]>,
    pub weights: FusionWeights,
    pub channels_used: [ChannelSpec; 3],
    pub mean: f64,
}

pub fn score_dataset(channels: &ChannelSet, selection: [ChannelSpec; 3], w: &FusionWeights) -> Result<ScoreVector> {
    let triples = SquashedTriples::new(channels, selection)?;
    let scores = triples.scores(w);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(ScoreVector {
        per_sample: triples.sample_ids.iter().cloned().zip(scores).collect(),
        z: triples.sample_ids.iter().cloned().zip(triples.z.iter().copied()).collect(),
        weights: *w,
        channels_used: selection,
        mean,
    })
}

/// The canonical Redemption Score selection.
pub const CANONICAL_SELECTION: [ChannelSpec; 3] = [ChannelSpec::Mid, ChannelSpec::Dino, ChannelSpec::Gte];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ChannelKind, ChannelVector};
    use proptest::prelude::*;

    fn w(a: u32, b: u32, g: u32, l: u32) -> FusionWeights {
        FusionWeights::new(a, b, g, 20, l, 10).unwrap()
    }

    #[test]
    fn squash_values() {
        assert_eq!(squash(0.0).unwrap(), 0.5);
        assert!((squash(-17.55).unwrap() - 0.026_954).abs() < 1e-6);
        assert!((squash(0.76).unwrap() - 0.715_909).abs() < 1e-6);
        assert!(squash(f64::NAN).is_err());
        assert!(squash(f64::INFINITY).is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(FusionWeights::new(3, 7, 9, 20, 8, 10).is_err());
        assert!(FusionWeights::new(3, 7, 10, 20, 11, 10).is_err());
        let d = FusionWeights::from_decimal(0.15, 0.35, 0.5, 0.8).unwrap();
        assert_eq!(d, FusionWeights::default());
        assert!(FusionWeights::from_decimal(0.151, 0.35, 0.499, 0.8).is_err());
    }

    // Expected values computed independently (log-space evaluation in
    // double precision outside this crate).
    #[test]
    fn redemption_examples() {
        let additive = redemption_score([0.8, 0.6, 0.7], &w(7, 5, 8, 10)).unwrap();
        assert!((additive - 0.71).abs() < 1e-12);

        let hybrid = redemption_score([0.9, 0.8, 0.7], &w(3, 7, 10, 8)).unwrap();
        assert!((hybrid - 0.764_334_014_576_215).abs() < 1e-12);

        let multiplicative = redemption_score([0.9, 0.8, 0.7], &w(3, 4, 13, 0)).unwrap();
        assert!((multiplicative - 0.746_565_814_961_599).abs() < 1e-12);

        assert!(redemption_score([0.0, 0.5, 0.5], &w(3, 7, 10, 8)).is_err());
        assert!(redemption_score([1.0, 0.5, 0.5], &w(3, 7, 10, 8)).is_err());
    }

    fn channel(name: &str, values: &[(&str, f64)]) -> ChannelVector {
        ChannelVector::new(
            name,
            ChannelKind::ScalarPassthrough,
            values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn score_dataset_single_zero_sample() {
        let mut set = ChannelSet::new();
        for n in ["mid", "dino", "gte"] {
            set.insert(n.into(), channel(n, &[("a", 0.0)]));
        }
        let sv = score_dataset(&set, CANONICAL_SELECTION, &FusionWeights::default()).unwrap();
        assert_eq!(sv.per_sample["a"], 0.5);
        assert_eq!(sv.mean, 0.5);
    }

    #[test]
    fn coverage_gap_is_an_error() {
        let mut set = ChannelSet::new();
        set.insert("mid".into(), channel("mid", &[("a", 0.0), ("b", 1.0)]));
        set.insert("dino".into(), channel("dino", &[("a", 0.0), ("c", 1.0)]));
        set.insert("gte".into(), channel("gte", &[("a", 0.0), ("b", 1.0)]));
        assert!(score_dataset(&set, CANONICAL_SELECTION, &FusionWeights::default()).is_err());
        set.shift_remove("gte");
        assert!(matches!(
            score_dataset(&set, CANONICAL_SELECTION, &FusionWeights::default()),
            Err(Error::MissingChannel(_))
        ));
    }

    fn any_weights() -> impl Strategy<Value = FusionWeights> {
        (0u32..=20, 0u32..=20, 0u32..=10).prop_filter_map("on simplex", |(a, b, l)| {
            (a + b <= 20).then(|| FusionWeights::new(a, b, 20 - a - b, 20, l, 10).unwrap())
        })
    }

    fn unit() -> impl Strategy<Value = f64> {
        1e-6f64..(1.0 - 1e-6)
    }

    proptest! {
        #[test]
        fn squash_odd_symmetry_and_range(x in -1e6f64..1e6) {
            let s = squash(x).unwrap();
            prop_assert!(s > 0.0 && s < 1.0);
            prop_assert!((squash(-x).unwrap() - (1.0 - s)).abs() < 1e-15);
        }

        #[test]
        fn squash_strictly_increasing(x in -1e3f64..1e3, dx in 1e-6f64..10.0) {
            prop_assert!(squash(x + dx).unwrap() > squash(x).unwrap());
        }

        #[test]
        fn constant_triple_is_fixed_point(v in unit(), w in any_weights()) {
            prop_assert!((redemption_score([v, v, v], &w).unwrap() - v).abs() < 1e-12);
        }

        #[test]
        fn linear_dominates_geometric(z in [unit(), unit(), unit()], w in any_weights()) {
            let l = linear_component(z, &w);
            let m = geometric_component(z, &w);
            prop_assert!(l >= m - 1e-15);
            let rs = redemption_score(z, &w).unwrap();
            prop_assert!(rs >= m - 1e-15 && rs <= l + 1e-15);
        }

        #[test]
        fn increasing_in_each_component(
            z in [0.01f64..0.9, 0.01f64..0.9, 0.01f64..0.9],
            k in 0usize..3,
            w in any_weights(),
        ) {
            let weight = w.weights()[k];
            prop_assume!(weight > 0.0);
            let mut up = z;
            up[k] += 0.05;
            prop_assert!(redemption_score(up, &w).unwrap() > redemption_score(z, &w).unwrap());
        }

        #[test]
        fn log_space_matches_direct_powers(z in [unit(), unit(), unit()], w in any_weights()) {
            let [a, b, g] = w.weights();
            let direct = z[0].powf(a) * z[1].powf(b) * z[2].powf(g);
            prop_assert!((geometric_component(z, &w) - direct).abs() < 1e-12);
        }
    }
}
