//! Named per-sample score channels.
//!
//! Each channel turns a dataset into one raw score per sample:
//!
//! | name        | source                                                   |
//! |-------------|----------------------------------------------------------|
//! | `mid`       | Gaussian PMI of the CLIP (image, candidate) pair         |
//! | `dino`      | mean of two DINO cosines over original/generated images  |
//! | `gte`       | cosine of GTE candidate vs reference caption embeddings  |
//! | `clip`      | cosine of CLIP image vs candidate embeddings             |
//! | `bertscore` | precomputed scalar, passed through                       |
//! | `lpips`     | precomputed scalar mapped through `1 / (1 + x)`          |

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{reference_key, tables, validate_join, Dataset, JoinMode, KeyRule, Requirement};
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianStats, Shrinkage};

/// Slack allowed on cosine values outside `[-1, 1]`.
const COSINE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSpec {
    Mid,
    Dino,
    Gte,
    Clip,
    #[serde(alias = "bert")]
    BertScore,
    Lpips,
}

impl ChannelSpec {
    pub const ALL: [ChannelSpec; 6] = [
        ChannelSpec::Mid,
        ChannelSpec::Dino,
        ChannelSpec::Gte,
        ChannelSpec::Clip,
        ChannelSpec::BertScore,
        ChannelSpec::Lpips,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelSpec::Mid => "mid",
            ChannelSpec::Dino => "dino",
            ChannelSpec::Gte => "gte",
            ChannelSpec::Clip => "clip",
            ChannelSpec::BertScore => "bertscore",
            ChannelSpec::Lpips => "lpips",
        }
    }

    pub fn kind(self) -> ChannelKind {
        match self {
            ChannelSpec::Mid => ChannelKind::Mid,
            ChannelSpec::Dino | ChannelSpec::Gte | ChannelSpec::Clip => ChannelKind::Cosine,
            ChannelSpec::BertScore => ChannelKind::ScalarPassthrough,
            ChannelSpec::Lpips => ChannelKind::LpipsNormalized,
        }
    }

    /// Inputs this channel reads for every sample.
    pub fn requirements(self, options: &ChannelOptions) -> Vec<Requirement> {
        match self {
            ChannelSpec::Mid | ChannelSpec::Clip => vec![
                Requirement::table(tables::CLIP_IMAGE, KeyRule::ImageId),
                Requirement::table(tables::CLIP_TEXT, KeyRule::SampleId),
            ],
            ChannelSpec::Dino => vec![
                Requirement::table(tables::DINO_IMAGE, KeyRule::ImageId),
                Requirement::table(tables::DINO_GEN_CANDIDATE, KeyRule::SampleId),
                Requirement::table(tables::DINO_GEN_REFERENCE, KeyRule::ImageId),
            ],
            ChannelSpec::Gte => vec![
                Requirement::table(tables::GTE_CANDIDATE, KeyRule::SampleId),
                Requirement::table(
                    tables::GTE_REFERENCE,
                    match options.gte_aggregation {
                        Aggregation::First => KeyRule::Reference(0),
                        Aggregation::Max | Aggregation::Mean => KeyRule::AllReferences,
                    },
                ),
            ],
            ChannelSpec::BertScore => vec![Requirement::Scalar("bertscore".into())],
            ChannelSpec::Lpips => vec![Requirement::Scalar("lpips".into())],
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mid" => Ok(ChannelSpec::Mid),
            "dino" => Ok(ChannelSpec::Dino),
            "gte" | "gtescore" => Ok(ChannelSpec::Gte),
            "clip" => Ok(ChannelSpec::Clip),
            "bertscore" | "bert" => Ok(ChannelSpec::BertScore),
            "lpips" => Ok(ChannelSpec::Lpips),
            other => Err(Error::UnknownChannel(other.to_string())),
        }
    }
}

/// Parses a comma-separated channel list such as `mid,dino,gte`.
pub fn parse_channel_list(s: &str) -> Result<Vec<ChannelSpec>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Cosine,
    Mid,
    ScalarPassthrough,
    LpipsNormalized,
}

/// How GTE scores combine multiple references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// The designated (first) reference only.
    #[default]
    First,
    Max,
    Mean,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(Aggregation::First),
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::InvalidInput(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChannelOptions {
    pub gte_aggregation: Aggregation,
    pub shrinkage: Shrinkage,
    /// Precomputed Gaussian statistics for `mid`; fitted on the dataset
    /// when absent.
    pub mid_stats: Option<GaussianStats>,
}

/// Raw (pre-squash) per-sample values of one channel, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub name: String,
    pub kind: ChannelKind,
    pub values: IndexMap<String, f64>,
}

impl ChannelVector {
    pub fn new(name: impl Into<String>, kind: ChannelKind, values: IndexMap<String, f64>) -> Result<Self> {
        let name = name.into();
        for (id, &v) in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("channel {name}, sample {id}"),
                });
            }
            if kind == ChannelKind::Cosine && v.abs() > 1.0 + COSINE_SLACK {
                return Err(Error::InvalidInput(format!(
                    "channel {name}: cosine {v} outside [-1, 1] for sample {id}"
                )));
            }
        }
        Ok(Self { name, kind, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<f64> {
        self.values.get(sample_id).copied()
    }

    pub fn mean(&self) -> f64 {
        self.values.values().sum::<f64>() / self.values.len() as f64
    }
}

/// Channel vectors keyed by channel name, in request order.
pub type ChannelSet = IndexMap<String, ChannelVector>;

/// `uᵀv / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch { left: u.len(), right: v.len() });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Cycle-consistency similarity: the mean of `cos(orig, gen_cand)` and
/// `cos(gen_cand, gen_ref)`.
pub fn dino_sim(e_orig: &[f64], e_gen_cand: &[f64], e_gen_ref: &[f64]) -> Result<f64> {
    let s1 = cosine(e_orig, e_gen_cand)?;
    let s2 = cosine(e_gen_cand, e_gen_ref)?;
    Ok(0.5 * (s1 + s2))
}

pub fn gte_score<R: AsRef<[f64]>>(e_cand: &[f64], e_refs: &[R], aggregation: Aggregation) -> Result<f64> {
    if e_refs.is_empty() {
        return Err(Error::InvalidInput("gte_score needs at least one reference".into()));
    }
    match aggregation {
        Aggregation::First => cosine(e_cand, e_refs[0].as_ref()),
        Aggregation::Max => e_refs
            .iter()
            .map(|r| cosine(e_cand, r.as_ref()))
            .try_fold(f64::NEG_INFINITY, |acc, c| c.map(|c| acc.max(c))),
        Aggregation::Mean => {
            let sum = e_refs
                .iter()
                .map(|r| cosine(e_cand, r.as_ref()))
                .try_fold(0.0, |acc, c| c.map(|c| acc + c))?;
            Ok(sum / e_refs.len() as f64)
        }
    }
}

/// `1 / (1 + lpips)`, mapping a perceptual distance into `(0, 1]`.
pub fn lpips_norm(raw_lpips: f64) -> Result<f64> {
    if !raw_lpips.is_finite() || raw_lpips < 0.0 {
        return Err(Error::InvalidInput(format!("LPIPS must be finite and ≥ 0, got {raw_lpips}")));
    }
    Ok(1.0 / (1.0 + raw_lpips))
}

/// Computes each requested channel for every sample in the dataset. Inputs
/// must be complete; run [`validate_join`] in skip mode first to drop
/// incomplete samples instead.
pub fn build_channels(dataset: &Dataset, requested: &[ChannelSpec], options: &ChannelOptions) -> Result<ChannelSet> {
    let requirements: Vec<Requirement> = requested
        .iter()
        .flat_map(|spec| spec.requirements(options))
        .collect();
    validate_join(dataset, &requirements, JoinMode::Strict)?;

    let mut out = ChannelSet::new();
    for &spec in requested {
        if out.contains_key(spec.name()) {
            continue;
        }
        let values = match spec {
            ChannelSpec::Mid => mid_channel(dataset, options)?,
            ChannelSpec::Clip => per_sample(dataset, |s| {
                let x = vector(dataset, tables::CLIP_IMAGE, &s.image_id)?;
                let y = vector(dataset, tables::CLIP_TEXT, &s.sample_id)?;
                cosine(&x, &y)
            })?,
            ChannelSpec::Dino => per_sample(dataset, |s| {
                let orig = vector(dataset, tables::DINO_IMAGE, &s.image_id)?;
                let cand = vector(dataset, tables::DINO_GEN_CANDIDATE, &s.sample_id)?;
                let reference = vector(dataset, tables::DINO_GEN_REFERENCE, &s.image_id)?;
                dino_sim(&orig, &cand, &reference)
            })?,
            ChannelSpec::Gte => per_sample(dataset, |s| {
                let cand = vector(dataset, tables::GTE_CANDIDATE, &s.sample_id)?;
                let count = match options.gte_aggregation {
                    Aggregation::First => 1,
                    _ => s.references.len(),
                };
                let refs = (0..count)
                    .map(|i| vector(dataset, tables::GTE_REFERENCE, &reference_key(&s.image_id, i)))
                    .collect::<Result<Vec<_>>>()?;
                gte_score(&cand, &refs, options.gte_aggregation)
            })?,
            ChannelSpec::BertScore => per_sample(dataset, |s| scalar(s, "bertscore"))?,
            ChannelSpec::Lpips => per_sample(dataset, |s| lpips_norm(scalar(s, "lpips")?))?,
        };
        out.insert(
            spec.name().to_string(),
            ChannelVector::new(spec.name(), spec.kind(), values)?,
        );
    }
    Ok(out)
}

fn mid_channel(dataset: &Dataset, options: &ChannelOptions) -> Result<IndexMap<String, f64>> {
    let fitted;
    let stats = match &options.mid_stats {
        Some(s) => s,
        None => {
            fitted = gaussian::fit_dataset(dataset, options.shrinkage)?;
            &fitted
        }
    };
    Ok(gaussian::mid_scores(stats, dataset)?.per_sample)
}

fn per_sample<F>(dataset: &Dataset, f: F) -> Result<IndexMap<String, f64>>
where
    F: Fn(&crate::data::Sample) -> Result<f64>,
{
    dataset
        .samples
        .iter()
        .map(|s| Ok((s.sample_id.clone(), f(s)?)))
        .collect()
}

fn vector(dataset: &Dataset, table: &str, key: &str) -> Result<Vec<f64>> {
    dataset
        .table(table)?
        .get_f64(key)
        .ok_or_else(|| Error::MissingChannel(format!("{table}[{key}]")))
}

fn scalar(s: &crate::data::Sample, name: &str) -> Result<f64> {
    s.scalar_channels
        .get(name)
        .copied()
        .ok_or_else(|| Error::MissingChannel(format!("{name} for sample {}", s.sample_id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use approx::assert_relative_eq;

    fn planar(angle: f64) -> Vec<f64> {
        vec![angle.cos(), angle.sin()]
    }

    #[test]
    fn cosine_cases() {
        assert_relative_eq!(cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroVector)));
        assert!(matches!(cosine(&[1.0], &[1.0, 1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn dino_cases() {
        let a = vec![0.2, 0.5, -0.1];
        assert_relative_eq!(dino_sim(&a, &a, &a).unwrap(), 1.0, epsilon = 1e-15);
        let orth = dino_sim(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(orth, 0.0);

        // generated-candidate at angle 0, original at acos(0.8), reference at -acos(0.6)
        let cand = planar(0.0);
        let orig = planar(0.8f64.acos());
        let reference = planar(-(0.6f64.acos()));
        assert!((dino_sim(&orig, &cand, &reference).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn dino_role_asymmetry() {
        let orig = [0.9, 0.1, 0.3];
        let cand = [0.1, 0.8, -0.2];
        let reference = [0.4, 0.4, 0.7];
        let a = dino_sim(&orig, &cand, &reference).unwrap();
        let swapped = dino_sim(&cand, &orig, &reference).unwrap();
        assert!((a - swapped).abs() > 1e-3);
    }

    #[test]
    fn dino_scale_invariant() {
        let orig = [0.9, 0.1, 0.3];
        let cand = [0.1, 0.8, -0.2];
        let reference = [0.4, 0.4, 0.7];
        let scaled: Vec<f64> = cand.iter().map(|v| v * 7.5).collect();
        assert_relative_eq!(
            dino_sim(&orig, &cand, &reference).unwrap(),
            dino_sim(&orig, &scaled, &reference).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn gte_cases() {
        let c = planar(0.0);
        assert_relative_eq!(gte_score(&c, std::slice::from_ref(&c), Aggregation::First).unwrap(), 1.0);
        let refs = [planar(0.2f64.acos()), planar(0.9f64.acos())];
        assert!((gte_score(&c, &refs, Aggregation::Max).unwrap() - 0.9).abs() < 1e-12);
        assert!((gte_score(&c, &refs, Aggregation::First).unwrap() - 0.2).abs() < 1e-12);
        assert!((gte_score(&c, &refs, Aggregation::Mean).unwrap() - 0.55).abs() < 1e-12);
        let empty: [Vec<f64>; 0] = [];
        assert!(gte_score(&c, &empty, Aggregation::First).is_err());
    }

    #[test]
    fn gte_max_monotone_in_references() {
        let c = [0.3, -0.2, 0.9];
        let pool = [[0.1, 0.1, 0.1], [-0.5, 0.2, 0.0], [0.3, -0.1, 0.8], [0.0, 1.0, 0.0]];
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=pool.len() {
            let s = gte_score(&c, &pool[..k], Aggregation::Max).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn lpips_cases() {
        assert_eq!(lpips_norm(0.0).unwrap(), 1.0);
        assert_eq!(lpips_norm(1.0).unwrap(), 0.5);
        assert!((lpips_norm(0.25).unwrap() - 0.8).abs() < 1e-15);
        assert!(lpips_norm(-0.1).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!(
            parse_channel_list("mid,gte,dino,bert,lpips,clip").unwrap(),
            vec![
                ChannelSpec::Mid,
                ChannelSpec::Gte,
                ChannelSpec::Dino,
                ChannelSpec::BertScore,
                ChannelSpec::Lpips,
                ChannelSpec::Clip
            ]
        );
        assert!(matches!("cider".parse::<ChannelSpec>(), Err(Error::UnknownChannel(_))));
    }

    fn scalar_dataset() -> Dataset {
        let mk = |id: &str, lp: f64| {
            let mut s = Sample::new(id, "img", "c", vec!["r".into()]);
            s.scalar_channels.insert("lpips".into(), lp);
            s
        };
        Dataset::new("t", vec![mk("a", 0.0), mk("b", 1.0)]).unwrap()
    }

    #[test]
    fn scalar_channels_build() {
        let ds = scalar_dataset();
        let set = build_channels(&ds, &[ChannelSpec::Lpips], &ChannelOptions::default()).unwrap();
        let lp = &set["lpips"];
        assert_eq!(lp.get("a"), Some(1.0));
        assert_eq!(lp.get("b"), Some(0.5));
        assert_eq!(lp.kind, ChannelKind::LpipsNormalized);

        assert!(matches!(
            build_channels(&ds, &[ChannelSpec::BertScore], &ChannelOptions::default()),
            Err(Error::MissingEmbeddings(_))
        ));
    }
}
