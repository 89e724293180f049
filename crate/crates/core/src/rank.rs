//! Kendall rank correlation, significance tests and bootstrap resampling.
//!
//! Pair counts come from Knight's `O(n log n)` algorithm: sort by `(x, y)`,
//! count tie runs, then count discordant pairs as the inversions of a
//! merge sort over `y`. The counts are exact integers, so the fast path
//! agrees with pairwise enumeration bit for bit.
//!
//! Two normalizations are provided:
//!
//! * `τ_b = (n_c − n_d) / √((n₀ − n₁)(n₀ − n₂))`
//! * `τ_c = 2m (n_c − n_d) / (n² (m − 1))` with `m = min(#distinct x, #distinct y)`
//!
//! Random draws use ChaCha8 seeded from a `u64`; run or permutation `i`
//! reads stream `i`, so results do not depend on scheduling.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauVariant {
    #[default]
    TauC,
    TauB,
}

impl FromStr for TauVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau_c" | "c" => Ok(TauVariant::TauC),
            "tau_b" | "b" => Ok(TauVariant::TauB),
            other => Err(Error::InvalidInput(format!("unknown tau variant `{other}`"))),
        }
    }
}

impl fmt::Display for TauVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TauVariant::TauC => "tau_c",
            TauVariant::TauB => "tau_b",
        })
    }
}

/// Integer pair counts underlying every Kendall statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PairCounts {
    pub n: u64,
    pub concordant: u64,
    pub discordant: u64,
    /// Pairs tied in x but not in y.
    pub ties_x: u64,
    /// Pairs tied in y but not in x.
    pub ties_y: u64,
    /// Pairs tied in both.
    pub ties_xy: u64,
    pub distinct_x: u64,
    pub distinct_y: u64,
}

impl PairCounts {
    pub fn total_pairs(&self) -> u64 {
        self.n * (self.n.saturating_sub(1)) / 2
    }

    /// `n_c − n_d`
    pub fn score(&self) -> i64 {
        self.concordant as i64 - self.discordant as i64
    }

    pub fn m(&self) -> u64 {
        self.distinct_x.min(self.distinct_y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauResult {
    pub tau: f64,
    pub variant: TauVariant,
    pub n: u64,
    pub concordant: u64,
    pub discordant: u64,
    pub ties_x: u64,
    pub ties_y: u64,
    pub ties_xy: u64,
    pub m: u64,
}

impl TauResult {
    pub fn counts(&self) -> PairCounts {
        PairCounts {
            n: self.n,
            concordant: self.concordant,
            discordant: self.discordant,
            ties_x: self.ties_x,
            ties_y: self.ties_y,
            ties_xy: self.ties_xy,
            distinct_x: 0,
            distinct_y: 0,
        }
    }
}

fn validate(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 observations, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "kendall input".into() });
    }
    Ok(())
}

/// Pair counts via sort + merge-sort inversion counting.
pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    validate(x, y)?;
    Ok(pair_counts_unchecked(x, y))
}

fn pair_counts_unchecked(x: &[f64], y: &[f64]) -> PairCounts {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| x[a].total_cmp(&x[b]).then_with(|| y[a].total_cmp(&y[b])));

    let mut tied_x = 0u64;
    let mut tied_xy = 0u64;
    let mut distinct_x = 1u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for w in order.windows(2) {
        let (p, q) = (w[0], w[1]);
        if x[p] == x[q] {
            run_x += 1;
            if y[p] == y[q] {
                run_xy += 1;
            } else {
                tied_xy += run_xy * (run_xy - 1) / 2;
                run_xy = 1;
            }
        } else {
            distinct_x += 1;
            tied_x += run_x * (run_x - 1) / 2;
            tied_xy += run_xy * (run_xy - 1) / 2;
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += run_x * (run_x - 1) / 2;
    tied_xy += run_xy * (run_xy - 1) / 2;

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut scratch = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut scratch);

    let mut tied_y = 0u64;
    let mut distinct_y = 1u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            distinct_y += 1;
            tied_y += run_y * (run_y - 1) / 2;
            run_y = 1;
        }
    }
    tied_y += run_y * (run_y - 1) / 2;

    let total = (n as u64) * (n as u64 - 1) / 2;
    let concordant = total + tied_xy - tied_x - tied_y - discordant;
    PairCounts {
        n: n as u64,
        concordant,
        discordant,
        ties_x: tied_x - tied_xy,
        ties_y: tied_y - tied_xy,
        ties_xy: tied_xy,
        distinct_x,
        distinct_y,
    }
}

/// Bottom-up merge sort of `v`, returning the number of strict inversions.
fn merge_count(v: &mut Vec<f64>, scratch: &mut Vec<f64>) -> u64 {
    let n = v.len();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[i].total_cmp(&v[j]) != Ordering::Greater {
                    scratch[k] = v[i];
                    i += 1;
                } else {
                    scratch[k] = v[j];
                    j += 1;
                    swaps += (mid - i) as u64;
                }
                k += 1;
            }
            scratch[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            scratch[k..k + (end - j)].copy_from_slice(&v[j..end]);
            start = end;
        }
        std::mem::swap(v, scratch);
        width *= 2;
    }
    swaps
}

/// Turns exact pair counts into a τ value.
pub fn tau_from_counts(counts: &PairCounts, variant: TauVariant) -> Result<TauResult> {
    let m = counts.m();
    if m < 2 {
        return Err(Error::Degenerate("constant input has no ranking".into()));
    }
    let s = counts.score() as f64;
    let n = counts.n as f64;
    let tau = match variant {
        TauVariant::TauC => 2.0 * m as f64 * s / (n * n * (m as f64 - 1.0)),
        TauVariant::TauB => {
            let n0 = counts.total_pairs();
            let n1 = counts.ties_x + counts.ties_xy;
            let n2 = counts.ties_y + counts.ties_xy;
            s / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt()
        }
    };
    Ok(TauResult {
        tau,
        variant,
        n: counts.n,
        concordant: counts.concordant,
        discordant: counts.discordant,
        ties_x: counts.ties_x,
        ties_y: counts.ties_y,
        ties_xy: counts.ties_xy,
        m,
    })
}

pub fn kendall_tau(x: &[f64], y: &[f64], variant: TauVariant) -> Result<TauResult> {
    tau_from_counts(&pair_counts(x, y)?, variant)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    #[default]
    /// Normal approximation to the null distribution of `n_c − n_d`.
    Normal,
    /// Shuffles of y; add-one smoothed.
    Permutation { iters: usize, seed: u64 },
}


/// Two-sided p-value for `result` computed on `(x, y)`.
///
/// The permutation method needs the original data, so it is a separate
/// entry point: [`tau_p_value_permutation`]. This one accepts either
/// method and returns an error for `Permutation`.
pub fn tau_p_value(result: &TauResult, method: PValueMethod) -> Result<f64> {
    match method {
        PValueMethod::Normal => normal_p_value(result.n, result.concordant as i64 - result.discordant as i64),
        PValueMethod::Permutation { .. } => Err(Error::InvalidInput(
            "permutation p-values need the data; use tau_p_value_permutation".into(),
        )),
    }
}

fn normal_p_value(n: u64, score: i64) -> Result<f64> {
    if n < 4 {
        return Err(Error::InvalidInput(format!("normal approximation needs n ≥ 4, got {n}")));
    }
    let n = n as f64;
    let z = 3.0 * score as f64 / (n * (n - 1.0) * (2.0 * n + 5.0) / 2.0).sqrt();
    Ok(libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
}

/// Permutation p-value: fraction of `iters` shuffles of `y` whose
/// `|n_c − n_d|` reaches the observed one, with add-one smoothing.
///
/// Shuffling `y` preserves both tie structures, so every τ variant's
/// denominator is fixed and comparing `|n_c − n_d|` is exact.
pub fn tau_p_value_permutation(x: &[f64], y: &[f64], iters: usize, seed: u64) -> Result<f64> {
    let observed = pair_counts(x, y)?;
    if iters == 0 {
        return Err(Error::InvalidInput("permutation test needs iters ≥ 1".into()));
    }
    let target = observed.score().unsigned_abs();
    let hits: usize = (0..iters)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut shuffled = y.to_vec();
            shuffled.shuffle(&mut rng);
            usize::from(pair_counts_unchecked(x, &shuffled).score().unsigned_abs() >= target)
        })
        .sum();
    Ok((hits as f64 + 1.0) / (iters as f64 + 1.0))
}

/// p-value by either method, given the data.
pub fn p_value(x: &[f64], y: &[f64], result: &TauResult, method: PValueMethod) -> Result<f64> {
    match method {
        PValueMethod::Normal => tau_p_value(result, method),
        PValueMethod::Permutation { iters, seed } => tau_p_value_permutation(x, y, iters, seed),
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub runs: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

/// Redraws allowed per run when a resample has a constant column.
pub const MAX_REDRAWS: usize = 100;

/// Resamples `(score, rating)` pairs jointly with replacement `runs` times
/// and summarizes the τ distribution (sample std-dev, 95% percentile CI).
pub fn bootstrap_tau(scores: &[f64], ratings: &[f64], runs: usize, seed: u64, variant: TauVariant) -> Result<BootstrapSummary> {
    validate(scores, ratings)?;
    if runs == 0 {
        return Err(Error::InvalidInput("bootstrap needs runs ≥ 1".into()));
    }
    let n = scores.len();
    let taus: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut xs = vec![0.0; n];
            let mut ys = vec![0.0; n];
            for _ in 0..=MAX_REDRAWS {
                for k in 0..n {
                    let i = rng.random_range(0..n);
                    xs[k] = scores[i];
                    ys[k] = ratings[i];
                }
                let counts = pair_counts_unchecked(&xs, &ys);
                if counts.m() >= 2 {
                    return tau_from_counts(&counts, variant).map(|t| t.tau);
                }
            }
            Err(Error::Degenerate(format!(
                "bootstrap run {r}: {MAX_REDRAWS} redraws all had a constant column"
            )))
        })
        .collect::<Result<_>>()?;

    let mean = taus.iter().sum::<f64>() / runs as f64;
    let std_dev = if runs > 1 {
        (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = taus;
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(BootstrapSummary {
        runs,
        mean,
        std_dev,
        ci_low: percentile(&sorted, 0.025),
        ci_high: percentile(&sorted, 0.975),
        seed,
    })
}

/// Linear-interpolation percentile of sorted data, `q ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}
