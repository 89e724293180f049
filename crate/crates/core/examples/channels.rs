//! The per-sample channel scores, on hand-made vectors and on a synthetic
//! dataset.
//!
//!     cargo run --example channels

use redemption_score::channels::{build_channels, cosine, dino_sim, gte_score, lpips_norm, Aggregation, ChannelOptions, ChannelSpec};
use redemption_score::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> redemption_score::Result<()> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    println!("cosine at 45°           {:.4}", cosine(&[1.0, 0.0], &[s, s])?);
    println!("dino_sim (0.7 vs 0.9)   {:.4}", dino_sim(&[1.0, 0.0], &[0.7, 0.71414284], &[0.9, 0.43588989])?);
    let refs = [vec![1.0, 0.0], vec![0.0, 1.0]];
    for agg in [Aggregation::First, Aggregation::Max, Aggregation::Mean] {
        println!("gte_score {:<13} {:.4}", format!("{agg:?}"), gte_score(&[0.6, 0.8], &refs, agg)?);
    }
    println!("lpips_norm(0.25)        {:.4}", lpips_norm(0.25)?);

    let dataset = synthetic_dataset(&SyntheticConfig::default())?;
    let channels = build_channels(&dataset, &ChannelSpec::ALL, &ChannelOptions::default())?;
    println!("\n{} synthetic samples", dataset.len());
    for (name, c) in &channels {
        println!("  {name:<10} mean {:>9.4}", c.mean());
    }
    Ok(())
}
