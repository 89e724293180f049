//! Grid search of (α, β, γ, λ) against ratings on a synthetic dataset,
//! with the sensitivity of the optimum to one-step perturbations.
//!
//!     cargo run --release --example calibrate

use redemption_score::calibration::{calibrate, CalibrateOptions, GridSpec};
use redemption_score::channels::{build_channels, ChannelOptions};
use redemption_score::fusion::CANONICAL_SELECTION;
use redemption_score::report::{calibration_table, sensitivity_table};
use redemption_score::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> redemption_score::Result<()> {
    let dataset = synthetic_dataset(&SyntheticConfig {
        images: 300,
        ..SyntheticConfig::default()
    })?;
    let channels = build_channels(&dataset, &CANONICAL_SELECTION, &ChannelOptions::default())?;
    let ratings = dataset
        .samples
        .iter()
        .filter_map(|s| s.human_rating.map(|r| (s.sample_id.clone(), r)))
        .collect();

    let spec = GridSpec::default();
    let result = calibrate(&channels, CANONICAL_SELECTION, &ratings, &spec, &CalibrateOptions::default())?;
    println!("{} grid points searched over {} samples\n", result.grid_trace.len(), result.n);
    print!("{}", calibration_table(&result).render());
    println!();
    print!("{}", sensitivity_table(&result).render());
    println!("\nlargest drop at a neighbor: {:.2} points of τ", result.sensitivity.max_degradation * 100.0);
    Ok(())
}
