//! Squashing and the hybrid fusion of three channel scores.
//!
//!     cargo run --example fusion

use redemption_score::fusion::{geometric_component, linear_component, redemption_score, squash, FusionWeights};

fn main() -> redemption_score::Result<()> {
    for x in [-17.55, -1.0, 0.0, 0.76, 3.0] {
        println!("squash({x:>6}) = {:.6}", squash(x)?);
    }

    let z = [0.9, 0.8, 0.7];
    for (lambda, w) in [(0.8, (0.15, 0.35, 0.5)), (1.0, (0.15, 0.35, 0.5)), (0.0, (0.15, 0.35, 0.5))] {
        let weights = FusionWeights::from_decimal(w.0, w.1, w.2, lambda)?;
        println!(
            "{weights}: linear {:.6}  geometric {:.6}  RS {:.6}",
            linear_component(z, &weights),
            geometric_component(z, &weights),
            redemption_score(z, &weights)?
        );
    }
    Ok(())
}
