//! Kendall's τ_c and τ_b with ties, and both p-value methods.
//!
//!     cargo run --example kendall

use redemption_score::rank::{kendall_tau, p_value, PValueMethod, TauVariant};

fn main() -> redemption_score::Result<()> {
    let scores = [0.61, 0.72, 0.55, 0.80, 0.64, 0.70, 0.52, 0.77, 0.66, 0.59];
    let ratings = [2.0, 3.0, 1.0, 4.0, 2.0, 3.0, 1.0, 4.0, 3.0, 2.0];

    for variant in [TauVariant::TauC, TauVariant::TauB] {
        let r = kendall_tau(&scores, &ratings, variant)?;
        let normal = p_value(&scores, &ratings, &r, PValueMethod::Normal)?;
        let perm = p_value(&scores, &ratings, &r, PValueMethod::Permutation { iters: 9999, seed: 0 })?;
        println!(
            "{variant}: τ = {:.4}  (nc {}, nd {}, ties in ratings {})  p normal {normal:.5}  p permutation {perm:.5}",
            r.tau, r.concordant, r.discordant, r.ties_y
        );
    }
    Ok(())
}
