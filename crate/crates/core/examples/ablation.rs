//! Aggregation-strategy comparison and the sweep over every three-channel
//! subset of six channels.
//!
//!     cargo run --release --example ablation

use redemption_score::ablation::{combination_sweep, strategy_ablation, SWEEP_ORDER};
use redemption_score::calibration::{CalibrateOptions, GridSpec};
use redemption_score::fusion::CANONICAL_SELECTION;
use redemption_score::report::ablation_table;
use redemption_score::synthetic::synthetic_channels;

fn main() -> redemption_score::Result<()> {
    let (channels, ratings) = synthetic_channels(1500, 11);
    let spec = GridSpec::default();
    let options = CalibrateOptions::default();

    let strategies = strategy_ablation(&channels, CANONICAL_SELECTION, &ratings, &spec, &options, None)?;
    print!("{}", ablation_table("approach", &strategies).render());

    let sweep = combination_sweep(&SWEEP_ORDER, &channels, &ratings, &spec, &options, None)?;
    println!();
    print!("{}", ablation_table("combination", &sweep).render());
    Ok(())
}
