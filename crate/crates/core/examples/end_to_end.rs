//! Whole pipeline on a synthetic dataset: write it to disk, load it back,
//! drop identity pairs, build channels, calibrate, score, bootstrap and
//! print the correlation table.
//!
//!     cargo run --release --example end_to_end

use indexmap::IndexMap;
use redemption_score::ablation::display_name;
use redemption_score::calibration::{calibrate, CalibrateOptions, GridSpec};
use redemption_score::channels::{build_channels, ChannelOptions};
use redemption_score::data::{filter_identity_pairs, load_dataset, write_dataset};
use redemption_score::fusion::{score_dataset, CANONICAL_SELECTION};
use redemption_score::rank::{bootstrap_tau, kendall_tau, p_value, PValueMethod, TauVariant};
use redemption_score::report::{calibration_table, format_bootstrap, metric_table, MetricRow};
use redemption_score::synthetic::{synthetic_dataset, SyntheticConfig};

fn aligned(values: &IndexMap<String, f64>, ratings: &IndexMap<String, f64>) -> (Vec<f64>, Vec<f64>) {
    ratings.iter().map(|(id, r)| (values[id], *r)).unzip()
}

fn main() -> redemption_score::Result<()> {
    let dir = std::env::temp_dir().join("redemption-end-to-end");
    let generated = synthetic_dataset(&SyntheticConfig {
        images: 400,
        identity_pairs: 5,
        ..SyntheticConfig::default()
    })?;
    let manifest = write_dataset(&dir, &generated)?;

    let (dataset, removed) = filter_identity_pairs(load_dataset(&manifest)?);
    println!("loaded {} samples ({removed} identity pairs removed)", dataset.len());

    let channels = build_channels(&dataset, &CANONICAL_SELECTION, &ChannelOptions::default())?;
    let ratings: IndexMap<String, f64> = dataset
        .samples
        .iter()
        .filter_map(|s| s.human_rating.map(|r| (s.sample_id.clone(), r)))
        .collect();

    let result = calibrate(&channels, CANONICAL_SELECTION, &ratings, &GridSpec::default(), &CalibrateOptions::default())?;
    print!("\n{}", calibration_table(&result).render());

    let scores = score_dataset(&channels, CANONICAL_SELECTION, &result.best)?;
    let mut rows = Vec::new();
    for c in CANONICAL_SELECTION {
        let (x, y) = aligned(&channels[c.name()].values, &ratings);
        let r = kendall_tau(&x, &y, TauVariant::TauC)?;
        rows.push(MetricRow {
            metric: display_name(c).into(),
            mean: channels[c.name()].mean(),
            tau: r.tau,
            p_value: p_value(&x, &y, &r, PValueMethod::Normal)?,
        });
    }
    let (x, y) = aligned(&scores.per_sample, &ratings);
    let r = kendall_tau(&x, &y, TauVariant::TauC)?;
    rows.push(MetricRow {
        metric: "Redemption Score".into(),
        mean: scores.mean,
        tau: r.tau,
        p_value: p_value(&x, &y, &r, PValueMethod::Normal)?,
    });
    print!("\n{}", metric_table(&rows).render());

    let boot = bootstrap_tau(&x, &y, 1000, 0, TauVariant::TauC)?;
    println!("\nbootstrap τ: {}", format_bootstrap(&boot));
    Ok(())
}
