//! Gaussian mutual information between image and caption embeddings.
//!
//! Image embeddings `x` and caption embeddings `y` are modelled as jointly
//! Gaussian. From the fitted moments we get the mutual information
//!
//! ```text
//! I(X;Y) = ½ (log|Σx| + log|Σy| − log|Σxy|)
//! ```
//!
//! and the point-wise mutual information of a single pair, which corrects
//! `I` by squared Mahalanobis distances:
//!
//! ```text
//! PMI(x, y) = I + ½ (D²x(x) + D²y(y) − D²xy([x; y]))
//!           = log N([x; y]) − log N(x) − log N(y)
//! ```
//!
//! MID is the mean PMI over the evaluated pairs.
//!
//! Every covariance is factorized once with a Cholesky decomposition.
//! Log-determinants come from the factor diagonals and Mahalanobis distances
//! from triangular solves; no explicit inverse or determinant is formed.
//! High-dimensional embeddings fitted on a few thousand pairs give
//! rank-deficient covariances, so a diagonal ridge (`shrinkage`) is added
//! to all three matrices before factorizing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{tables, Dataset};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Ridge policy for the covariance factorizations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Shrinkage {
    /// Start at `1e-6 · tr(Σxy)/d` and escalate ×10 up to `1e-2 · tr(Σxy)/d`.
    #[default]
    Auto,
    /// Exactly this absolute ridge, no escalation. `Fixed(0.0)` factorizes
    /// the raw covariances.
    Fixed(f64),
}


const AUTO_START: f64 = 1e-6;
const AUTO_MAX: f64 = 1e-2;

/// Fitted moments and cached factorizations. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    dim_x: usize,
    dim_y: usize,
    mu_x: DVector<f64>,
    mu_y: DVector<f64>,
    sigma_x: DMatrix<f64>,
    sigma_y: DMatrix<f64>,
    sigma_xy: DMatrix<f64>,
    chol_x: DMatrix<f64>,
    chol_y: DMatrix<f64>,
    chol_xy: DMatrix<f64>,
    logdet_x: f64,
    logdet_y: f64,
    logdet_xy: f64,
    shrinkage_used: f64,
    n_fit: usize,
}

/// Fits means and unbiased covariances on `(x, y)` pairs.
pub fn fit_gaussian_stats<X, Y>(pairs: &[(X, Y)], shrinkage: Shrinkage) -> Result<GaussianStats>
where
    X: AsRef<[f64]> + Sync,
    Y: AsRef<[f64]> + Sync,
{
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 pairs to fit covariances, got {n}"
        )));
    }
    let dim_x = pairs[0].0.as_ref().len();
    let dim_y = pairs[0].1.as_ref().len();
    if dim_x == 0 || dim_y == 0 {
        return Err(Error::InvalidInput("empty embedding vectors".into()));
    }
    let d = dim_x + dim_y;

    // rows are stacked [x; y]
    let mut z = DMatrix::<f64>::zeros(n, d);
    for (i, (x, y)) in pairs.iter().enumerate() {
        let (x, y) = (x.as_ref(), y.as_ref());
        if x.len() != dim_x {
            return Err(Error::LengthMismatch { left: dim_x, right: x.len() });
        }
        if y.len() != dim_y {
            return Err(Error::LengthMismatch { left: dim_y, right: y.len() });
        }
        for (j, &v) in x.iter().chain(y.iter()).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { context: format!("pair {i}") });
            }
            z[(i, j)] = v;
        }
    }

    let mean = DVector::from_iterator(d, z.column_iter().map(|c| c.sum() / n as f64));
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let mut cov = z.tr_mul(&z) / (n as f64 - 1.0);
    symmetrize(&mut cov);

    let mu_x = mean.rows(0, dim_x).into_owned();
    let mu_y = mean.rows(dim_x, dim_y).into_owned();
    GaussianStats::from_moments(mu_x, mu_y, cov, n, shrinkage)
}

/// Fits on the (CLIP image, CLIP candidate) pairs of every sample in the
/// dataset.
pub fn fit_dataset(dataset: &Dataset, shrinkage: Shrinkage) -> Result<GaussianStats> {
    let pairs = clip_pairs(dataset)?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = pairs.into_iter().map(|(_, x, y)| (x, y)).collect();
    fit_gaussian_stats(&pairs, shrinkage)
}

type KeyedPair = (String, Vec<f64>, Vec<f64>);

fn clip_pairs(dataset: &Dataset) -> Result<Vec<KeyedPair>> {
    let images = dataset.table(tables::CLIP_IMAGE)?;
    let texts = dataset.table(tables::CLIP_TEXT)?;
    dataset
        .samples
        .iter()
        .map(|s| {
            let x = images
                .get_f64(&s.image_id)
                .ok_or_else(|| missing(&s.sample_id, tables::CLIP_IMAGE))?;
            let y = texts
                .get_f64(&s.sample_id)
                .ok_or_else(|| missing(&s.sample_id, tables::CLIP_TEXT))?;
            Ok((s.sample_id.clone(), x, y))
        })
        .collect()
}

fn missing(sample_id: &str, table: &str) -> Error {
    Error::MissingEmbeddings(crate::data::JoinReport {
        missing: vec![crate::data::MissingEntry {
            sample_id: sample_id.to_string(),
            channel: table.to_string(),
            key: sample_id.to_string(),
        }],
        dropped: vec![],
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of `m + jitter·I` and its log-determinant, or
/// `None` when the matrix is not numerically positive definite.
const PIVOT_TOLERANCE: f64 = 1e-12;

fn factor(m: &DMatrix<f64>, jitter: f64) -> Option<(DMatrix<f64>, f64)> {
    let d = m.nrows();
    let mut a = m.clone();
    for i in 0..d {
        a[(i, i)] += jitter;
    }
    let scale = a.diagonal().max();
    let l = nalgebra::Cholesky::new(a)?.unpack();
    let mut logdet = 0.0;
    for i in 0..d {
        let v = l[(i, i)];
        // pivots at rounding level mean the matrix is numerically singular
        if !(v.is_finite() && v * v > PIVOT_TOLERANCE * scale) {
            return None;
        }
        logdet += v.ln();
    }
    Some((l, 2.0 * logdet))
}

/// Squared norm of `L⁻¹ v` by forward substitution on a column-major
/// lower-triangular factor.
fn mahalanobis_sq(l: &DMatrix<f64>, v: &mut [f64]) -> f64 {
    let d = l.nrows();
    let data = l.as_slice();
    for j in 0..d {
        let col = &data[j * d..(j + 1) * d];
        let w = v[j] / col[j];
        v[j] = w;
        for i in (j + 1)..d {
            v[i] -= col[i] * w;
        }
    }
    v.iter().map(|w| w * w).sum()
}

impl GaussianStats {
    /// Builds statistics from known moments. `sigma_xy` is the joint
    /// covariance of the stacked vector `[x; y]`.
    pub fn from_moments(
        mu_x: DVector<f64>,
        mu_y: DVector<f64>,
        sigma_xy: DMatrix<f64>,
        n_fit: usize,
        shrinkage: Shrinkage,
    ) -> Result<Self> {
        let dim_x = mu_x.len();
        let dim_y = mu_y.len();
        let d = dim_x + dim_y;
        if sigma_xy.nrows() != d || sigma_xy.ncols() != d {
            return Err(Error::DimMismatch {
                context: "joint covariance".into(),
                expected: d,
                found: sigma_xy.nrows(),
            });
        }
        if sigma_xy.iter().chain(mu_x.iter()).chain(mu_y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "gaussian moments".into() });
        }
        let sigma_x = sigma_xy.view((0, 0), (dim_x, dim_x)).into_owned();
        let sigma_y = sigma_xy.view((dim_x, dim_x), (dim_y, dim_y)).into_owned();

        let ladder: Vec<f64> = match shrinkage {
            Shrinkage::Fixed(v) => {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidInput(format!("shrinkage must be finite and ≥ 0, got {v}")));
                }
                vec![v]
            }
            Shrinkage::Auto => {
                let scale = sigma_xy.trace() / d as f64;
                if scale.is_nan() || scale <= 0.0 {
                    return Err(Error::Degenerate("joint covariance has zero trace".into()));
                }
                let mut steps = Vec::new();
                let mut j = AUTO_START;
                while j <= AUTO_MAX * (1.0 + 1e-9) {
                    steps.push(j * scale);
                    j *= 10.0;
                }
                steps
            }
        };

        let mut last = 0.0;
        for &jitter in &ladder {
            last = jitter;
            let (Some(fx), Some(fy), Some(fxy)) = (
                factor(&sigma_x, jitter),
                factor(&sigma_y, jitter),
                factor(&sigma_xy, jitter),
            ) else {
                continue;
            };
            return Ok(Self {
                dim_x,
                dim_y,
                mu_x,
                mu_y,
                sigma_x,
                sigma_y,
                sigma_xy,
                chol_x: fx.0,
                chol_y: fy.0,
                chol_xy: fxy.0,
                logdet_x: fx.1,
                logdet_y: fy.1,
                logdet_xy: fxy.1,
                shrinkage_used: jitter,
                n_fit,
            });
        }
        Err(Error::Factorization { jitter: last })
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }
    pub fn dim_y(&self) -> usize {
        self.dim_y
    }
    pub fn mu_x(&self) -> &DVector<f64> {
        &self.mu_x
    }
    pub fn mu_y(&self) -> &DVector<f64> {
        &self.mu_y
    }
    pub fn sigma_x(&self) -> &DMatrix<f64> {
        &self.sigma_x
    }
    pub fn sigma_y(&self) -> &DMatrix<f64> {
        &self.sigma_y
    }
    /// Joint covariance of `[x; y]`, without the ridge.
    pub fn sigma_xy(&self) -> &DMatrix<f64> {
        &self.sigma_xy
    }
    pub fn chol_x(&self) -> &DMatrix<f64> {
        &self.chol_x
    }
    pub fn chol_y(&self) -> &DMatrix<f64> {
        &self.chol_y
    }
    pub fn chol_xy(&self) -> &DMatrix<f64> {
        &self.chol_xy
    }
    pub fn logdet_x(&self) -> f64 {
        self.logdet_x
    }
    pub fn logdet_y(&self) -> f64 {
        self.logdet_y
    }
    pub fn logdet_xy(&self) -> f64 {
        self.logdet_xy
    }
    /// Ridge actually added to every diagonal before factorizing.
    pub fn shrinkage_used(&self) -> f64 {
        self.shrinkage_used
    }
    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(Error::LengthMismatch { left: self.dim_x, right: x.len() });
        }
        if y.len() != self.dim_y {
            return Err(Error::LengthMismatch { left: self.dim_y, right: y.len() });
        }
        Ok(())
    }

    /// Squared Mahalanobis distances `(D²x, D²y, D²xy)` of a pair.
    pub fn mahalanobis_terms(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
        self.check_dims(x, y)?;
        let mut cx: Vec<f64> = x.iter().zip(self.mu_x.iter()).map(|(a, m)| a - m).collect();
        let mut cy: Vec<f64> = y.iter().zip(self.mu_y.iter()).map(|(a, m)| a - m).collect();
        let mut cxy = Vec::with_capacity(self.dim_x + self.dim_y);
        cxy.extend_from_slice(&cx);
        cxy.extend_from_slice(&cy);
        Ok((
            mahalanobis_sq(&self.chol_x, &mut cx),
            mahalanobis_sq(&self.chol_y, &mut cy),
            mahalanobis_sq(&self.chol_xy, &mut cxy),
        ))
    }
}

/// Mutual information of the fitted Gaussian in nats.
pub fn mutual_information(stats: &GaussianStats) -> f64 {
    0.5 * (stats.logdet_x + stats.logdet_y - stats.logdet_xy)
}

/// Point-wise mutual information, Mahalanobis form.
pub fn pmi(stats: &GaussianStats, x: &[f64], y: &[f64]) -> Result<f64> {
    let (dx, dy, dxy) = stats.mahalanobis_terms(x, y)?;
    Ok(mutual_information(stats) + 0.5 * (dx + dy - dxy))
}

/// Point-wise mutual information as the log-density ratio
/// `log N([x; y]) − log N(x) − log N(y)`. Agrees with [`pmi`] to rounding.
pub fn pmi_log_density(stats: &GaussianStats, x: &[f64], y: &[f64]) -> Result<f64> {
    let (dx, dy, dxy) = stats.mahalanobis_terms(x, y)?;
    let log_n = |dim: usize, logdet: f64, d2: f64| -0.5 * (dim as f64 * LN_2PI + logdet + d2);
    Ok(log_n(stats.dim_x + stats.dim_y, stats.logdet_xy, dxy)
        - log_n(stats.dim_x, stats.logdet_x, dx)
        - log_n(stats.dim_y, stats.logdet_y, dy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MidScores {
    pub per_sample: IndexMap<String, f64>,
    /// Dataset-level MID: arithmetic mean of the per-sample PMI.
    pub mean: f64,
}

/// PMI of every sample's (image, candidate) CLIP pair, plus the mean.
pub fn mid_scores(stats: &GaussianStats, dataset: &Dataset) -> Result<MidScores> {
    let pairs = clip_pairs(dataset)?;
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|(_, x, y)| pmi(stats, x, y))
        .collect::<Result<_>>()?;
    let mean = if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    let per_sample = pairs.into_iter().map(|(id, _, _)| id).zip(values).collect();
    Ok(MidScores { per_sample, mean })
}

// Stats cache: magic RSGS, u32 version, u32 dim_x, u32 dim_y, u64 n_fit,
// f64 shrinkage, then f64 mu_x, mu_y and the row-major joint covariance.
// All little-endian.

pub const STATS_MAGIC: &[u8; 4] = b"RSGS";
pub const STATS_VERSION: u32 = 1;

pub fn write_stats(path: &Path, stats: &GaussianStats) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_stats_to(&mut w, stats)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_stats_to<W: Write>(mut w: W, stats: &GaussianStats) -> std::io::Result<()> {
    w.write_all(STATS_MAGIC)?;
    w.write_all(&STATS_VERSION.to_le_bytes())?;
    w.write_all(&(stats.dim_x as u32).to_le_bytes())?;
    w.write_all(&(stats.dim_y as u32).to_le_bytes())?;
    w.write_all(&(stats.n_fit as u64).to_le_bytes())?;
    w.write_all(&stats.shrinkage_used.to_le_bytes())?;
    for v in stats.mu_x.iter().chain(stats.mu_y.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    let d = stats.dim_x + stats.dim_y;
    for i in 0..d {
        for j in 0..d {
            w.write_all(&stats.sigma_xy[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a stats cache and refactorizes with the recorded ridge.
pub fn read_stats(path: &Path) -> Result<GaussianStats> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_stats_from(BufReader::new(file), &path.display().to_string())
}

pub fn read_stats_from<R: Read>(mut r: R, context: &str) -> Result<GaussianStats> {
    let io = |e: std::io::Error| Error::malformed(context, format!("truncated stats cache: {e}"));
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(io)?;
    if &b4 != STATS_MAGIC {
        return Err(Error::malformed(context, "bad magic (expected RSGS)"));
    }
    r.read_exact(&mut b4).map_err(io)?;
    if u32::from_le_bytes(b4) != STATS_VERSION {
        return Err(Error::malformed(context, "unsupported stats cache version"));
    }
    r.read_exact(&mut b4).map_err(io)?;
    let dim_x = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4).map_err(io)?;
    let dim_y = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8).map_err(io)?;
    let n_fit = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(io)?;
    let shrinkage = f64::from_le_bytes(b8);

    let mut next = || -> Result<f64> {
        r.read_exact(&mut b8).map_err(io)?;
        Ok(f64::from_le_bytes(b8))
    };
    let d = dim_x + dim_y;
    let mu_x = DVector::from_vec((0..dim_x).map(|_| next()).collect::<Result<_>>()?);
    let mu_y = DVector::from_vec((0..dim_y).map(|_| next()).collect::<Result<_>>()?);
    let cov: Vec<f64> = (0..d * d).map(|_| next()).collect::<Result<_>>()?;
    let sigma_xy = DMatrix::from_row_slice(d, d, &cov);
    GaussianStats::from_moments(mu_x, mu_y, sigma_xy, n_fit, Shrinkage::Fixed(shrinkage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn bivariate(rho: f64) -> GaussianStats {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        GaussianStats::from_moments(
            DVector::zeros(1),
            DVector::zeros(1),
            cov,
            0,
            Shrinkage::Fixed(0.0),
        )
        .unwrap()
    }

    #[test]
    fn two_point_fit() {
        let pairs = vec![(vec![0.0], vec![0.0]), (vec![2.0], vec![2.0])];
        let s = fit_gaussian_stats(&pairs, Shrinkage::Auto).unwrap();
        assert_eq!(s.mu_x()[0], 1.0);
        assert_eq!(s.mu_y()[0], 1.0);
        assert_eq!(s.sigma_x()[(0, 0)], 2.0);
        assert!(s.sigma_xy().iter().all(|&v| v == 2.0));
        // singular joint: a ridge had to be applied
        assert!(s.shrinkage_used() > 0.0);
        assert!(fit_gaussian_stats(&pairs, Shrinkage::Fixed(0.0)).is_err());
    }

    #[test]
    fn too_few_pairs() {
        let pairs = vec![(vec![0.0], vec![0.0])];
        assert!(matches!(
            fit_gaussian_stats(&pairs, Shrinkage::Auto),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn closed_form_mi() {
        let s = bivariate(0.6);
        assert_relative_eq!(mutual_information(&s), 0.223_143_551_314_209_7, epsilon = 1e-12);
    }

    #[test]
    fn block_diagonal_is_independent() {
        let cov = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.3, 0.0, 0.0, //
                0.3, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.5, -0.2, //
                0.0, 0.0, -0.2, 0.7,
            ],
        );
        let s = GaussianStats::from_moments(
            DVector::from_vec(vec![0.1, -0.2]),
            DVector::from_vec(vec![0.3, 0.0]),
            cov,
            0,
            Shrinkage::Fixed(0.0),
        )
        .unwrap();
        assert!(mutual_information(&s).abs() < 1e-12);
        assert!(pmi(&s, &[1.0, 2.0], &[-0.4, 3.0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pmi_hand_case() {
        let s = bivariate(0.5);
        assert!((pmi(&s, &[1.0], &[1.0]).unwrap() - 0.477_174).abs() < 1e-6);
        // at the means all distance terms vanish
        assert_relative_eq!(pmi(&s, &[0.0], &[0.0]).unwrap(), mutual_information(&s), epsilon = 1e-15);
    }

    #[test]
    fn perfect_copy_is_singular_without_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..200)
            .map(|_| {
                let v: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                (v.clone(), v)
            })
            .collect();
        assert!(matches!(
            fit_gaussian_stats(&pairs, Shrinkage::Fixed(0.0)),
            Err(Error::Factorization { .. })
        ));
    }

    #[test]
    fn factor_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..40)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                let y: Vec<f64> = (0..2).map(|i| x[i] * 0.5 + 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
                (x, y)
            })
            .collect();
        let s = fit_gaussian_stats(&pairs, Shrinkage::Auto).unwrap();
        let j = s.shrinkage_used();
        let cov = s.sigma_xy();
        assert_relative_eq!(cov, &cov.transpose(), max_relative = 1e-10);
        assert_eq!(cov.view((0, 0), (3, 3)).into_owned(), *s.sigma_x());
        assert_eq!(cov.view((3, 3), (2, 2)).into_owned(), *s.sigma_y());
        for (sigma, l, logdet) in [
            (s.sigma_x(), s.chol_x(), s.logdet_x()),
            (s.sigma_y(), s.chol_y(), s.logdet_y()),
            (s.sigma_xy(), s.chol_xy(), s.logdet_xy()),
        ] {
            let target = sigma + DMatrix::identity(sigma.nrows(), sigma.nrows()) * j;
            assert_relative_eq!(l * l.transpose(), target, max_relative = 1e-8);
            let from_diag = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            assert_eq!(logdet, from_diag);
        }
    }

    #[test]
    fn stats_cache_round_trip() {
        let s = bivariate(0.3);
        let mut bytes = Vec::new();
        write_stats_to(&mut bytes, &s).unwrap();
        let back = read_stats_from(bytes.as_slice(), "mem").unwrap();
        assert_eq!(back.sigma_xy(), s.sigma_xy());
        assert_eq!(back.logdet_xy(), s.logdet_xy());
        assert_eq!(back.shrinkage_used(), s.shrinkage_used());
        bytes[0] = b'X';
        assert!(read_stats_from(bytes.as_slice(), "mem").is_err());
    }

    #[test]
    fn length_mismatch() {
        let s = bivariate(0.3);
        assert!(matches!(pmi(&s, &[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
    }
}
