//! Seeded synthetic datasets with a known quality signal.
//!
//! Every candidate caption gets a latent quality `q ∈ [0, 1]`. Human
//! ratings, embedding alignments and scalar scores are all noisy functions
//! of `q`, so each channel correlates with the ratings without matching
//! them exactly. Useful for demos, benchmarks and tests; nothing here
//! models real encoders.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::channels::{ChannelSet, ChannelSpec, ChannelVector};
use crate::data::{reference_key, tables, ChannelRole, Dataset, EmbeddingTable, Sample};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub images: usize,
    pub captions_per_image: usize,
    pub references_per_image: usize,
    pub clip_dim: usize,
    pub dino_dim: usize,
    pub gte_dim: usize,
    /// Samples whose candidate is copied verbatim from reference 0.
    pub identity_pairs: usize,
    /// Standard deviation of the rating noise (rating scale 1–4).
    pub rating_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            images: 20,
            captions_per_image: 3,
            references_per_image: 3,
            clip_dim: 8,
            dino_dim: 8,
            gte_dim: 12,
            identity_pairs: 0,
            rating_noise: 0.4,
            seed: 0,
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// `normalize(weight · target + noise · ε)` with `ε` uniform on the sphere.
fn blend(rng: &mut ChaCha8Rng, target: &[f64], weight: f64, noise: f64) -> Vec<f64> {
    let eps = random_unit(rng, target.len());
    let v: Vec<f64> = target.iter().zip(&eps).map(|(t, e)| weight * t + noise * e).collect();
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / norm).collect()
}

/// Rating on the 1–4 scale as the mean of three raters (multiples of 1/3).
fn rating(rng: &mut ChaCha8Rng, quality: f64, noise: f64) -> f64 {
    let normal = Normal::new(0.0, noise.max(1e-12)).expect("valid sigma");
    let sum: f64 = (0..3)
        .map(|_| (1.0 + 3.0 * quality + normal.sample(rng)).round().clamp(1.0, 4.0))
        .sum();
    sum / 3.0
}

/// Builds a complete in-memory dataset: records with ratings and scalar
/// channels plus all seven embedding tables.
pub fn synthetic_dataset(config: &SyntheticConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let refs_per_image = config.references_per_image.max(1);

    let mut clip_image = EmbeddingTable::new(tables::CLIP_IMAGE, config.clip_dim)?;
    let mut clip_text = EmbeddingTable::new(tables::CLIP_TEXT, config.clip_dim)?;
    let mut dino_image = EmbeddingTable::new(tables::DINO_IMAGE, config.dino_dim)?;
    let mut dino_cand = EmbeddingTable::new(tables::DINO_GEN_CANDIDATE, config.dino_dim)?;
    let mut dino_ref = EmbeddingTable::new(tables::DINO_GEN_REFERENCE, config.dino_dim)?;
    let mut gte_cand = EmbeddingTable::new(tables::GTE_CANDIDATE, config.gte_dim)?;
    let mut gte_ref = EmbeddingTable::new(tables::GTE_REFERENCE, config.gte_dim)?;

    let noise = Normal::new(0.0, 0.08).expect("valid sigma");
    let mut samples = Vec::new();
    for i in 0..config.images {
        let image_id = format!("img{i:05}");
        let x = random_unit(&mut rng, config.clip_dim);
        let orig = random_unit(&mut rng, config.dino_dim);
        let topic = random_unit(&mut rng, config.gte_dim);
        clip_image.insert_f64(&image_id, &x)?;
        dino_image.insert_f64(&image_id, &orig)?;
        dino_ref.insert_f64(&image_id, &blend(&mut rng, &orig, 1.0, 0.5))?;

        let references: Vec<String> = (0..refs_per_image).map(|k| format!("reference {k} of {image_id}")).collect();
        let mut ref_vectors = Vec::new();
        for k in 0..refs_per_image {
            let v = blend(&mut rng, &topic, 1.0, 0.4);
            gte_ref.insert_f64(reference_key(&image_id, k), &v)?;
            ref_vectors.push(v);
        }

        for c in 0..config.captions_per_image {
            let sample_id = format!("{image_id}-c{c}");
            let q: f64 = rng.random();
            let mut s = Sample::new(&sample_id, &image_id, format!("candidate {c} of {image_id}"), references.clone());
            s.human_rating = Some(rating(&mut rng, q, config.rating_noise));
            s.model_tag = Some(format!("model{}", c % 5));
            s.scalar_channels
                .insert("bertscore".into(), 0.45 + 0.35 * q + noise.sample(&mut rng));
            s.scalar_channels
                .insert("lpips".into(), (0.75 - 0.45 * q + noise.sample(&mut rng)).max(0.0));

            clip_text.insert_f64(&sample_id, &blend(&mut rng, &x, 0.2 + 1.2 * q, 0.9))?;
            dino_cand.insert_f64(&sample_id, &blend(&mut rng, &orig, 0.1 + q, 0.8))?;
            gte_cand.insert_f64(&sample_id, &blend(&mut rng, &ref_vectors[0], 0.3 + q, 0.7))?;
            samples.push(s);
        }
    }
    for s in samples.iter_mut().take(config.identity_pairs) {
        s.candidate = s.references[0].clone();
    }

    let mut ds = Dataset::new("synthetic", samples)?;
    ds.provenance = serde_json::json!({
        "generator": "synthetic",
        "seed": config.seed,
        "images": config.images,
        "captions_per_image": config.captions_per_image,
    });
    ds.add_table(clip_image, ChannelRole::Image)?;
    ds.add_table(clip_text, ChannelRole::Candidate)?;
    ds.add_table(dino_image, ChannelRole::Image)?;
    ds.add_table(dino_cand, ChannelRole::GeneratedCandidate)?;
    ds.add_table(dino_ref, ChannelRole::GeneratedReference)?;
    ds.add_table(gte_cand, ChannelRole::Candidate)?;
    ds.add_table(gte_ref, ChannelRole::ReferenceText)?;
    Ok(ds)
}

/// Raw channel values drawn directly (no embeddings) for `n` samples, plus
/// ratings. Fast enough for benchmarks at tens of thousands of samples.
pub fn synthetic_channels(n: usize, seed: u64) -> (ChannelSet, IndexMap<String, f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("s{i:06}")).collect();
    let mut values: BTreeMap<ChannelSpec, IndexMap<String, f64>> = BTreeMap::new();
    let mut ratings = IndexMap::new();
    let unit = Normal::new(0.0, 1.0).expect("valid sigma");

    for id in &ids {
        let q: f64 = rng.random();
        ratings.insert(id.clone(), rating(&mut rng, q, 0.5));
        let mut put = |c: ChannelSpec, v: f64| {
            values.entry(c).or_default().insert(id.clone(), v);
        };
        put(ChannelSpec::Mid, -22.0 + 10.0 * q + 3.0 * unit.sample(&mut rng));
        put(ChannelSpec::Dino, (0.1 + 0.35 * q + 0.12 * unit.sample(&mut rng)).clamp(-1.0, 1.0));
        put(ChannelSpec::Gte, (0.6 + 0.3 * q + 0.08 * unit.sample(&mut rng)).clamp(-1.0, 1.0));
        put(ChannelSpec::Clip, (0.15 + 0.15 * q + 0.06 * unit.sample(&mut rng)).clamp(-1.0, 1.0));
        put(ChannelSpec::BertScore, 0.45 + 0.3 * q + 0.12 * unit.sample(&mut rng));
        put(ChannelSpec::Lpips, 1.0 / (1.0 + (0.8 - 0.4 * q + 0.15 * unit.sample(&mut rng)).max(0.0)));
    }

    let set = values
        .into_iter()
        .map(|(c, v)| {
            let vector = ChannelVector::new(c.name(), c.kind(), v).expect("finite synthetic values");
            (c.name().to_string(), vector)
        })
        .collect();
    (set, ratings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_complete() {
        let cfg = SyntheticConfig::default();
        let a = synthetic_dataset(&cfg).unwrap();
        let b = synthetic_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        assert_eq!(a.tables.len(), 7);
        for t in a.tables.values() {
            t.check_unit_norm().unwrap();
        }
    }

    #[test]
    fn channel_fixture_covers_all_samples() {
        let (set, ratings) = synthetic_channels(50, 1);
        assert_eq!(set.len(), 6);
        assert!(set.values().all(|c| c.len() == 50));
        assert_eq!(ratings.len(), 50);
    }
}
