//! Fits the joint Gaussian on correlated pairs and compares the estimated
//! mutual information with the closed form `−½ ln(1 − ρ²)` per dimension.
//!
//!     cargo run --release --example mid_gaussian

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use redemption_score::gaussian::{fit_gaussian_stats, mutual_information, pmi, Shrinkage};

fn main() -> redemption_score::Result<()> {
    let rho: f64 = 0.6;
    let dim = 4;
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y = x
                .iter()
                .map(|&xi| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    rho * xi + (1.0 - rho * rho).sqrt() * e
                })
                .collect();
            (x, y)
        })
        .collect();

    let stats = fit_gaussian_stats(&pairs, Shrinkage::Auto)?;
    let closed = -0.5 * (1.0 - rho * rho).ln() * dim as f64;
    println!("n = {n}, dim = {dim}, ρ = {rho}");
    println!("estimated MI  {:.5}", mutual_information(&stats));
    println!("closed form   {closed:.5}");
    println!("ridge used    {:.3e}", stats.shrinkage_used());

    let mean_pmi: f64 = pairs
        .iter()
        .map(|(x, y)| pmi(&stats, x, y))
        .sum::<redemption_score::Result<f64>>()?
        / n as f64;
    println!("mean PMI      {mean_pmi:.5}");

    let (x, y) = &pairs[0];
    println!("PMI of first pair {:.4}", pmi(&stats, x, y)?);
    Ok(())
}
