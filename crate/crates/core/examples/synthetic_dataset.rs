//! Writes a synthetic dataset (records, bundles and manifest) that the
//! `redemption` binary can read.
//!
//!     cargo run --example synthetic_dataset -- /tmp/synth 200
//!     cargo run --bin redemption -- calibrate --manifest /tmp/synth/manifest.json

use std::path::PathBuf;

use redemption_score::data::write_dataset;
use redemption_score::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> redemption_score::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic-data".into()));
    let images = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);

    let dataset = synthetic_dataset(&SyntheticConfig {
        images,
        identity_pairs: 2,
        ..SyntheticConfig::default()
    })?;
    let manifest = write_dataset(&dir, &dataset)?;
    println!("{} samples, {} tables", dataset.len(), dataset.tables.len());
    println!("manifest: {}", manifest.display());
    Ok(())
}
