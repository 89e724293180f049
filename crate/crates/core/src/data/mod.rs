//! Records, embedding tables and dataset manifests.
//!
//! A dataset on disk is a JSON manifest naming a line-delimited JSON record
//! file plus one [`bundle`] per embedding channel. Paths in the manifest are
//! resolved relative to the manifest's own directory.

pub mod bundle;

/// Conventional table names the score channels look up.
pub mod tables {
    /// CLIP image embeddings, image-keyed.
    pub const CLIP_IMAGE: &str = "clip_image";
    /// CLIP candidate-caption embeddings, sample-keyed.
    pub const CLIP_TEXT: &str = "clip_text";
    /// DINO embeddings of the original image, image-keyed.
    pub const DINO_IMAGE: &str = "dino_image";
    /// DINO embeddings of the image generated from the candidate, sample-keyed.
    pub const DINO_GEN_CANDIDATE: &str = "dino_gen_candidate";
    /// DINO embeddings of the image generated from the designated reference, image-keyed.
    pub const DINO_GEN_REFERENCE: &str = "dino_gen_reference";
    /// GTE candidate-caption embeddings, sample-keyed.
    pub const GTE_CANDIDATE: &str = "gte_candidate";
    /// GTE reference-caption embeddings, keyed `image_id#index`.
    pub const GTE_REFERENCE: &str = "gte_reference";
}

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use bundle::{read_bundle, write_bundle, EmbeddingTable};

use crate::error::{Error, Result};

/// One image/candidate-caption record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub image_id: String,
    pub candidate: String,
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_rating: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_tag: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scalar_channels: BTreeMap<String, f64>,
}

impl Sample {
    pub fn new(
        sample_id: impl Into<String>,
        image_id: impl Into<String>,
        candidate: impl Into<String>,
        references: Vec<String>,
    ) -> Self {
        Self {
            sample_id: sample_id.into(),
            image_id: image_id.into(),
            candidate: candidate.into(),
            references,
            human_rating: None,
            model_tag: None,
            scalar_channels: BTreeMap::new(),
        }
    }

    pub fn with_rating(mut self, rating: f64) -> Self {
        self.human_rating = Some(rating);
        self
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.sample_id.is_empty() {
            return Err("empty sample_id".into());
        }
        if self.references.is_empty() {
            return Err(format!("sample `{}` has no references", self.sample_id));
        }
        if let Some(r) = self.human_rating {
            if !r.is_finite() || !(1.0..=4.0).contains(&r) {
                return Err(format!("sample `{}` rating {r} outside [1, 4]", self.sample_id));
            }
        }
        if let Some((name, _)) = self.scalar_channels.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("sample `{}` scalar `{name}` is not finite", self.sample_id));
        }
        Ok(())
    }

    /// True when the candidate equals one of the references after trimming
    /// surrounding whitespace. Case-sensitive.
    pub fn is_identity_pair(&self) -> bool {
        let cand = self.candidate.trim();
        self.references.iter().any(|r| r.trim() == cand)
    }
}

/// Key of the `index`-th reference of an image in reference-keyed tables.
pub fn reference_key(image_id: &str, index: usize) -> String {
    format!("{image_id}#{index}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelRole {
    Image,
    Candidate,
    GeneratedCandidate,
    GeneratedReference,
    ReferenceText,
    Scalar,
}

impl ChannelRole {
    pub fn key_space(self) -> KeySpace {
        match self {
            ChannelRole::Image | ChannelRole::GeneratedReference => KeySpace::ImageId,
            ChannelRole::Candidate | ChannelRole::GeneratedCandidate | ChannelRole::Scalar => {
                KeySpace::SampleId
            }
            ChannelRole::ReferenceText => KeySpace::Reference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeySpace {
    SampleId,
    ImageId,
    /// `image_id#index`
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestChannel {
    pub name: String,
    pub role: ChannelRole,
    pub key_space: KeySpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default = "default_true")]
    pub unit_norm: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub records: PathBuf,
    #[serde(default)]
    pub channels: Vec<ManifestChannel>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableInfo {
    pub role: ChannelRole,
    pub unit_norm: bool,
}

/// A loaded, validated dataset. Immutable once built; share freely.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
    pub tables: BTreeMap<String, EmbeddingTable>,
    pub table_info: BTreeMap<String, TableInfo>,
    pub provenance: serde_json::Value,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let name = name.into();
        let mut seen = HashSet::new();
        for s in &samples {
            s.validate().map_err(|m| Error::malformed(&name, m))?;
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateKey {
                    context: name.clone(),
                    key: s.sample_id.clone(),
                });
            }
        }
        Ok(Self {
            name,
            samples,
            ..Default::default()
        })
    }

    pub fn add_table(&mut self, table: EmbeddingTable, role: ChannelRole) -> Result<()> {
        if role == ChannelRole::Scalar {
            return Err(Error::malformed(&table.channel_name, "scalar channels carry no bundle"));
        }
        if self.tables.contains_key(&table.channel_name) {
            return Err(Error::DuplicateKey {
                context: self.name.clone(),
                key: table.channel_name,
            });
        }
        self.table_info.insert(
            table.channel_name.clone(),
            TableInfo {
                role,
                unit_norm: true,
            },
        );
        self.tables.insert(table.channel_name.clone(), table);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Result<&EmbeddingTable> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.sample_id.as_str())
    }

    /// Same tables and metadata, restricted to the given samples.
    fn with_samples(&self, samples: Vec<Sample>) -> Self {
        Self {
            name: self.name.clone(),
            samples,
            tables: self.tables.clone(),
            table_info: self.table_info.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Loads a manifest, its record file and every referenced bundle.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::malformed(manifest_path.display().to_string(), e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let records_path = base.join(&manifest.records);
    let samples = read_records(&records_path)?;
    let mut dataset = Dataset::new(manifest.name.clone(), samples)
        .map_err(|e| relabel(e, &records_path))?;
    dataset.provenance = manifest.provenance.clone();

    for ch in &manifest.channels {
        let context = format!("{}: channel `{}`", manifest_path.display(), ch.name);
        if ch.key_space != ch.role.key_space() {
            return Err(Error::malformed(
                context,
                format!("role {:?} requires key space {:?}", ch.role, ch.role.key_space()),
            ));
        }
        if ch.role == ChannelRole::Scalar {
            continue;
        }
        let bundle_rel = ch
            .bundle
            .as_ref()
            .ok_or_else(|| Error::malformed(&context, "no bundle path"))?;
        let bundle_path = base.join(bundle_rel);
        let table = read_bundle(&bundle_path, &ch.name)?;
        if let Some(dim) = ch.dim {
            if dim != table.dim {
                return Err(Error::DimMismatch {
                    context: format!("bundle {}", bundle_path.display()),
                    expected: dim,
                    found: table.dim,
                });
            }
        }
        if ch.unit_norm {
            table.check_unit_norm().map_err(|e| match e {
                Error::NotUnitNorm { key, norm, .. } => Error::NotUnitNorm {
                    context: format!("bundle {}", bundle_path.display()),
                    key,
                    norm,
                },
                other => other,
            })?;
        }
        dataset.add_table(table, ch.role)?;
        if let Some(info) = dataset.table_info.get_mut(&ch.name) {
            info.unit_norm = ch.unit_norm;
        }
    }
    Ok(dataset)
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Malformed { message, .. } => Error::malformed(path.display().to_string(), message),
        Error::DuplicateKey { key, .. } => Error::DuplicateKey {
            context: path.display().to_string(),
            key,
        },
        other => other,
    }
}

pub fn read_records(path: &Path) -> Result<Vec<Sample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        sample.validate().map_err(|message| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_records(path: &Path, samples: &[Sample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let line = serde_json::to_string(s).expect("sample serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `records.jsonl`, one `<table>.evb` per table and `manifest.json`
/// into `dir`, returning the manifest path.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_records(&dir.join("records.jsonl"), &dataset.samples)?;

    let mut channels = Vec::new();
    for (name, table) in &dataset.tables {
        let info = dataset.table_info.get(name).copied().unwrap_or(TableInfo {
            role: ChannelRole::Image,
            unit_norm: true,
        });
        let file = format!("{name}.evb");
        write_bundle(&dir.join(&file), table)?;
        channels.push(ManifestChannel {
            name: name.clone(),
            role: info.role,
            key_space: info.role.key_space(),
            bundle: Some(PathBuf::from(file)),
            dim: Some(table.dim),
            unit_norm: info.unit_norm,
        });
    }
    let scalar_names: std::collections::BTreeSet<&String> = dataset
        .samples
        .iter()
        .flat_map(|s| s.scalar_channels.keys())
        .collect();
    for name in scalar_names {
        channels.push(ManifestChannel {
            name: name.clone(),
            role: ChannelRole::Scalar,
            key_space: KeySpace::SampleId,
            bundle: None,
            dim: None,
            unit_norm: false,
        });
    }

    let manifest = Manifest {
        name: dataset.name.clone(),
        records: PathBuf::from("records.jsonl"),
        channels,
        provenance: dataset.provenance.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Drops samples whose candidate caption is literally one of their
/// references. Returns the retained dataset and the number removed.
pub fn filter_identity_pairs(dataset: Dataset) -> (Dataset, usize) {
    let before = dataset.samples.len();
    let Dataset {
        name,
        samples,
        tables,
        table_info,
        provenance,
    } = dataset;
    let samples: Vec<Sample> = samples.into_iter().filter(|s| !s.is_identity_pair()).collect();
    let removed = before - samples.len();
    (
        Dataset {
            name,
            samples,
            tables,
            table_info,
            provenance,
        },
        removed,
    )
}

/// How an embedding key is derived from a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyRule {
    SampleId,
    ImageId,
    Reference(usize),
    /// Every reference of the sample, `image_id#0 .. image_id#(k-1)`.
    AllReferences,
}

/// An input a score channel needs for every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Requirement {
    Table { table: String, key: KeyRule },
    Scalar(String),
}

impl Requirement {
    pub fn table(table: &str, key: KeyRule) -> Self {
        Requirement::Table {
            table: table.to_string(),
            key,
        }
    }

    fn name(&self) -> &str {
        match self {
            Requirement::Table { table, .. } => table,
            Requirement::Scalar(name) => name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JoinMode {
    #[default]
    Strict,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingEntry {
    pub sample_id: String,
    pub channel: String,
    pub key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct JoinReport {
    pub missing: Vec<MissingEntry>,
    /// Sample ids removed in skip mode, in dataset order.
    pub dropped: Vec<String>,
}

impl JoinReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Checks that every requirement resolves for every sample.
///
/// In strict mode any miss fails with [`Error::MissingEmbeddings`]; in skip
/// mode samples with misses are dropped and listed in the report.
pub fn validate_join(dataset: &Dataset, required: &[Requirement], mode: JoinMode) -> Result<(Dataset, JoinReport)> {
    let mut report = JoinReport::default();
    let mut retained = Vec::with_capacity(dataset.samples.len());

    for s in &dataset.samples {
        let before = report.missing.len();
        for req in required {
            for key in missing_keys(dataset, s, req) {
                report.missing.push(MissingEntry {
                    sample_id: s.sample_id.clone(),
                    channel: req.name().to_string(),
                    key,
                });
            }
        }
        if report.missing.len() == before {
            retained.push(s.clone());
        } else {
            report.dropped.push(s.sample_id.clone());
        }
    }

    if mode == JoinMode::Strict && !report.is_empty() {
        report.dropped.clear();
        return Err(Error::MissingEmbeddings(report));
    }
    Ok((dataset.with_samples(retained), report))
}

fn missing_keys(dataset: &Dataset, s: &Sample, req: &Requirement) -> Vec<String> {
    match req {
        Requirement::Scalar(name) => {
            if s.scalar_channels.contains_key(name) {
                vec![]
            } else {
                vec![s.sample_id.clone()]
            }
        }
        Requirement::Table { table, key } => {
            let keys = match key {
                KeyRule::SampleId => vec![s.sample_id.clone()],
                KeyRule::ImageId => vec![s.image_id.clone()],
                KeyRule::Reference(i) => vec![reference_key(&s.image_id, *i)],
                KeyRule::AllReferences => (0..s.references.len())
                    .map(|i| reference_key(&s.image_id, i))
                    .collect(),
            };
            match dataset.tables.get(table) {
                None => keys,
                Some(t) => keys.into_iter().filter(|k| !t.contains(k)).collect(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(r: &[&str]) -> Vec<String> {
        r.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity_filter_is_exact_and_case_sensitive() {
        let samples = vec![
            Sample::new("a", "i", "a dog runs", refs(&["a dog runs", "dog running"])),
            Sample::new("b", "i", "A dog runs", refs(&["a dog runs"])),
            Sample::new("c", "i", "  dog running ", refs(&["a dog runs", "dog running"])),
        ];
        let ds = Dataset::new("t", samples).unwrap();
        let (kept, removed) = filter_identity_pairs(ds);
        assert_eq!(removed, 2);
        assert_eq!(kept.samples.len(), 1);
        assert_eq!(kept.samples[0].sample_id, "b");

        let (again, removed) = filter_identity_pairs(kept.clone());
        assert_eq!(removed, 0);
        assert_eq!(again, kept);
    }

    #[test]
    fn sample_invariants() {
        let mut s = Sample::new("a", "i", "c", vec![]);
        assert!(s.validate().is_err());
        s.references.push("r".into());
        assert!(s.validate().is_ok());
        s.human_rating = Some(2.67);
        assert!(s.validate().is_ok());
        s.human_rating = Some(4.5);
        assert!(s.validate().is_err());
        s.human_rating = None;
        s.scalar_channels.insert("lpips".into(), f64::NAN);
        assert!(s.validate().is_err());
    }

    #[test]
    fn duplicate_sample_ids_rejected() {
        let s = Sample::new("a", "i", "c", refs(&["r"]));
        assert!(matches!(
            Dataset::new("t", vec![s.clone(), s]),
            Err(Error::DuplicateKey { .. })
        ));
    }

    fn gapped_dataset(n: usize, gaps: &[usize]) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample::new(format!("s{i}"), format!("img{}", i / 2), "c", refs(&["r"])))
            .collect();
        let mut ds = Dataset::new("t", samples).unwrap();
        let mut table = EmbeddingTable::new("gen", 2).unwrap();
        for i in (0..n).filter(|i| !gaps.contains(i)) {
            table.insert(format!("s{i}"), vec![1.0, 0.0]).unwrap();
        }
        ds.add_table(table, ChannelRole::GeneratedCandidate).unwrap();
        ds
    }

    #[test]
    fn join_reports_missing_generated_candidate() {
        let req = [Requirement::table("gen", KeyRule::SampleId)];
        let complete = gapped_dataset(4, &[]);
        let (_, report) = validate_join(&complete, &req, JoinMode::Strict).unwrap();
        assert!(report.is_empty());

        let ds = gapped_dataset(4, &[1]);
        match validate_join(&ds, &req, JoinMode::Strict) {
            Err(Error::MissingEmbeddings(r)) => {
                assert_eq!(r.missing.len(), 1);
                assert_eq!(r.missing[0].sample_id, "s1");
                assert_eq!(r.missing[0].channel, "gen");
            }
            other => panic!("expected strict-mode miss, got {other:?}"),
        }
    }

    #[test]
    fn skip_mode_drops_and_lists() {
        let ds = gapped_dataset(10, &[3, 7]);
        let req = [Requirement::table("gen", KeyRule::SampleId)];
        let (kept, report) = validate_join(&ds, &req, JoinMode::Skip).unwrap();
        assert_eq!(kept.len(), 8);
        assert_eq!(report.dropped, vec!["s3".to_string(), "s7".to_string()]);
        assert!(kept.sample_ids().all(|id| id != "s3" && id != "s7"));
    }

    #[test]
    fn missing_table_and_scalar_are_reported() {
        let ds = gapped_dataset(2, &[]);
        let req = [
            Requirement::table("absent", KeyRule::ImageId),
            Requirement::Scalar("bertscore".into()),
        ];
        let (_, report) = validate_join(&ds, &req, JoinMode::Skip).unwrap();
        assert_eq!(report.missing.len(), 4);
    }
}
