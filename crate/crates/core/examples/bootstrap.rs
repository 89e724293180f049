//! Bootstrap distribution of τ for a fused score and its channels.
//!
//!     cargo run --release --example bootstrap

use redemption_score::channels::ChannelSpec;
use redemption_score::fusion::{FusionWeights, SquashedTriples};
use redemption_score::rank::{bootstrap_tau, TauVariant};
use redemption_score::report::{bootstrap_table, format_bootstrap};
use redemption_score::synthetic::synthetic_channels;

fn main() -> redemption_score::Result<()> {
    let (channels, ratings) = synthetic_channels(2000, 3);
    let selection = [ChannelSpec::Mid, ChannelSpec::Dino, ChannelSpec::Gte];
    let triples = SquashedTriples::new(&channels, selection)?;
    let w = FusionWeights::from_decimal(0.15, 0.35, 0.5, 0.8)?;
    let y: Vec<f64> = triples.sample_ids.iter().map(|id| ratings[id]).collect();

    let mut rows = vec![(
        "Redemption Score".to_string(),
        bootstrap_tau(&triples.scores(&w), &y, 1000, 0, TauVariant::TauC)?,
    )];
    for c in selection {
        let x: Vec<f64> = triples.sample_ids.iter().map(|id| channels[c.name()].values[id]).collect();
        rows.push((c.name().to_string(), bootstrap_tau(&x, &y, 1000, 0, TauVariant::TauC)?));
    }
    print!("{}", bootstrap_table(&rows).render());
    println!("\nRedemption Score: {}", format_bootstrap(&rows[0].1));
    Ok(())
}
