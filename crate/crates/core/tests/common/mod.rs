//! Independent reference implementations and on-disk fixtures shared by
//! the integration tests and the acceptance suite.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use redemption_score::data::bundle::{write_bundle, EmbeddingTable};

/// (concordant, discordant, tied in x only, tied in y only, tied in both)
/// by enumerating every pair.
pub fn brute_counts(x: &[f64], y: &[f64]) -> (u64, u64, u64, u64, u64) {
    let (mut c, mut d, mut tx, mut ty, mut txy) = (0, 0, 0, 0, 0);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                txy += 1;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c, d, tx, ty, txy)
}

fn distinct(v: &[f64]) -> usize {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.dedup();
    s.len()
}

pub fn brute_tau_c(x: &[f64], y: &[f64]) -> f64 {
    let (c, d, ..) = brute_counts(x, y);
    let n = x.len() as f64;
    let m = distinct(x).min(distinct(y)) as f64;
    2.0 * m * (c as f64 - d as f64) / (n * n * (m - 1.0))
}

pub fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let (c, d, tx, ty, _) = brute_counts(x, y);
    let (c, d, tx, ty) = (c as f64, d as f64, tx as f64, ty as f64);
    (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
}

/// `τ_c · (m − 1) / (2m) · n²` as an exact integer-backed comparison key:
/// returns (m, nc − nd) so callers can compare without rounding.
pub fn tau_c_key(x: &[f64], y: &[f64]) -> (i128, i128) {
    let (c, d, ..) = brute_counts(x, y);
    let m = distinct(x).min(distinct(y)) as i128;
    (m, c as i128 - d as i128)
}

pub fn squash(x: f64) -> f64 {
    let t = x / (1.0 + x.abs());
    0.5 * t + 0.5
}

/// Hybrid fusion written directly from the definition.
pub fn rs(z: [f64; 3], w: [f64; 3], lambda: f64) -> f64 {
    let additive = w[0] * z[0] + w[1] * z[1] + w[2] * z[2];
    let multiplicative = z[0].powf(w[0]) * z[1].powf(w[1]) * z[2].powf(w[2]);
    lambda * additive + (1.0 - lambda) * multiplicative
}

pub fn unit(angle: f64) -> Vec<f64> {
    vec![angle.cos(), angle.sin()]
}

/// Five samples over three images. Every embedding is a 2-D unit vector
/// at a known angle, so cosines are `cos(θ₁ − θ₂)`.
pub struct Fixture {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub sample_ids: Vec<String>,
    pub ratings: Vec<f64>,
    /// Expected raw (clip, dino, gte) per sample.
    pub expected: Vec<[f64; 3]>,
}

pub const FIXTURE_IMAGES: [(&str, f64, f64, f64); 3] = [
    // image id, clip image angle, dino original angle, dino reference-gen angle
    ("imgA", 0.0, 0.2, 0.5),
    ("imgB", 1.0, 1.4, 1.1),
    ("imgC", 2.0, -0.3, 0.1),
];

// sample id, image index, clip text angle, dino candidate-gen angle, gte candidate angle, rating
pub const FIXTURE_SAMPLES: [(&str, usize, f64, f64, f64, f64); 5] = [
    ("s1", 0, 0.3, 0.4, 0.1, 4.0),
    ("s2", 0, 1.2, 1.5, 0.9, 2.0),
    ("s3", 1, 1.1, 1.3, 0.7, 3.0),
    ("s4", 2, 0.4, 0.9, 2.2, 1.0),
    ("s5", 2, 2.1, -0.2, 1.2, 2.333_333_333_333_333_5),
];

/// GTE reference angle for image `i`, reference `k`.
pub fn gte_ref_angle(i: usize, k: usize) -> f64 {
    0.5 * i as f64 + 0.25 * k as f64
}

pub fn write_fixture(dir: &Path) -> Fixture {
    std::fs::create_dir_all(dir).unwrap();
    let mut clip_image = EmbeddingTable::new("clip_image", 2).unwrap();
    let mut dino_image = EmbeddingTable::new("dino_image", 2).unwrap();
    let mut dino_ref = EmbeddingTable::new("dino_gen_reference", 2).unwrap();
    let mut gte_ref = EmbeddingTable::new("gte_reference", 2).unwrap();
    for (i, (id, clip, orig, gref)) in FIXTURE_IMAGES.iter().enumerate() {
        clip_image.insert_f64(*id, &unit(*clip)).unwrap();
        dino_image.insert_f64(*id, &unit(*orig)).unwrap();
        dino_ref.insert_f64(*id, &unit(*gref)).unwrap();
        for k in 0..2 {
            gte_ref.insert_f64(format!("{id}#{k}"), &unit(gte_ref_angle(i, k))).unwrap();
        }
    }

    let mut clip_text = EmbeddingTable::new("clip_text", 2).unwrap();
    let mut dino_cand = EmbeddingTable::new("dino_gen_candidate", 2).unwrap();
    let mut gte_cand = EmbeddingTable::new("gte_candidate", 2).unwrap();
    let mut records = String::new();
    let mut expected = Vec::new();
    for (sid, img, clip, dcand, gte, rating) in FIXTURE_SAMPLES {
        let (image_id, clip_img, orig, gref) = FIXTURE_IMAGES[img];
        clip_text.insert_f64(sid, &unit(clip)).unwrap();
        dino_cand.insert_f64(sid, &unit(dcand)).unwrap();
        gte_cand.insert_f64(sid, &unit(gte)).unwrap();
        records.push_str(&format!(
            "{{\"sample_id\":\"{sid}\",\"image_id\":\"{image_id}\",\"candidate\":\"caption {sid}\",\
             \"references\":[\"ref 0 of {image_id}\",\"ref 1 of {image_id}\"],\"human_rating\":{rating}}}\n"
        ));
        // f32 storage: compare against the angles with a small tolerance
        expected.push([
            (clip_img - clip).cos(),
            0.5 * ((orig - dcand).cos() + (dcand - gref).cos()),
            (gte - gte_ref_angle(img, 0)).cos(),
        ]);
    }

    let tables = [
        (&clip_image, "image"),
        (&clip_text, "candidate"),
        (&dino_image, "image"),
        (&dino_cand, "generated-candidate"),
        (&dino_ref, "generated-reference"),
        (&gte_cand, "candidate"),
        (&gte_ref, "reference-text"),
    ];
    let mut channels = Vec::new();
    for (table, role) in tables {
        write_bundle(&dir.join(format!("{}.evb", table.channel_name)), table).unwrap();
        let key_space = match role {
            "image" | "generated-reference" => "image_id",
            "reference-text" => "reference",
            _ => "sample_id",
        };
        channels.push(format!(
            "    {{\"name\": \"{0}\", \"role\": \"{role}\", \"key_space\": \"{key_space}\", \"bundle\": \"{0}.evb\", \"dim\": 2}}",
            table.channel_name
        ));
    }
    std::fs::write(dir.join("records.jsonl"), records).unwrap();
    let manifest = dir.join("manifest.json");
    std::fs::write(
        &manifest,
        format!(
            "{{\n  \"name\": \"five\",\n  \"records\": \"records.jsonl\",\n  \"channels\": [\n{}\n  ]\n}}\n",
            channels.join(",\n")
        ),
    )
    .unwrap();

    Fixture {
        dir: dir.to_path_buf(),
        manifest,
        sample_ids: FIXTURE_SAMPLES.iter().map(|s| s.0.to_string()).collect(),
        ratings: FIXTURE_SAMPLES.iter().map(|s| s.5).collect(),
        expected,
    }
}
