use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::StatsError;
use crate::matrix::Matrix;

/// A reproducible random stream addressed by `(seed, stream_id)`.
///
/// Backed by ChaCha8 where the seed fixes the key and the stream id selects
/// an independent keystream, so replication `r` of a Monte Carlo run can be
/// drawn from stream `r` on any worker without coordination.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Multinomial sampler via sequential conditional binomials.
///
/// Conditional probabilities `p_k / sum_{l >= k} p_l` are computed once from
/// suffix sums so repeated draws for the same probability vector are cheap.
#[derive(Debug, Clone)]
pub struct MultinomialSampler {
    conditional: Vec<f64>,
}

impl MultinomialSampler {
    pub fn new(probs: &[f64]) -> Result<Self, StatsError> {
        if probs.is_empty() {
            return Err(StatsError::BadProbabilityVector("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(StatsError::BadProbabilityVector(format!("invalid entry {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(StatsError::BadProbabilityVector(format!("sums to {sum}")));
        }
        let mut conditional = vec![0.0; probs.len()];
        let mut suffix = 0.0;
        for k in (0..probs.len()).rev() {
            suffix += probs[k];
            conditional[k] = if suffix > 0.0 {
                (probs[k] / suffix).min(1.0)
            } else {
                0.0
            };
        }
        Ok(Self { conditional })
    }

    pub fn len(&self) -> usize {
        self.conditional.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditional.is_empty()
    }

    /// Draws into `out`, which must have `self.len()` entries.
    pub fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, n: u64, out: &mut [u64]) {
        debug_assert_eq!(out.len(), self.conditional.len());
        let last = out.len() - 1;
        let mut remaining = n;
        for (k, slot) in out.iter_mut().enumerate() {
            if remaining == 0 {
                *slot = 0;
                continue;
            }
            let p = self.conditional[k];
            let draw = if k == last || p >= 1.0 {
                remaining
            } else if p <= 0.0 {
                0
            } else {
                Binomial::new(remaining, p)
                    .expect("conditional probability lies in (0, 1)")
                    .sample(rng)
            };
            *slot = draw;
            remaining -= draw;
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R, n: u64) -> Vec<u64> {
        let mut out = vec![0; self.conditional.len()];
        self.sample_into(rng, n, &mut out);
        out
    }
}

/// One multinomial draw of `n` trials over `probs`.
pub fn sample_multinomial(rng: &mut RngStream, n: u64, probs: &[f64]) -> Result<Vec<u64>, StatsError> {
    Ok(MultinomialSampler::new(probs)?.sample(rng, n))
}

#[derive(Debug, Clone)]
enum Factor {
    /// `cov = L L^T` with `L` stored as `dim x rank`.
    Dense { l: Matrix<f64> },
    /// Unit variances, common correlation `rho`: `x_i = sqrt(rho) z_0 + sqrt(1 - rho) z_i`.
    Equicorrelated { dim: usize, rho: f64 },
}

/// Multivariate normal sampler that tolerates singular covariance.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    factor: Factor,
}

/// Eigenvalues below this are treated as a genuinely indefinite matrix.
const PSD_TOLERANCE: f64 = 1e-8;

impl MvnSampler {
    /// Factors `cov` after symmetrization. Eigenvalues in `[-1e-8, 0)` are
    /// clipped to zero; anything more negative is rejected.
    pub fn new(cov: &Matrix<f64>) -> Result<Self, StatsError> {
        let (rows, cols) = cov.shape();
        if rows != cols {
            return Err(StatsError::Dimension(format!("{rows}x{cols} covariance")));
        }
        let dim = rows;
        if let Some(bad) = cov.iter().find(|v| !v.is_finite()) {
            return Err(StatsError::Dimension(format!("non-finite entry {bad}")));
        }
        let sym = nalgebra::DMatrix::from_fn(dim, dim, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
        let eig = sym.clone().symmetric_eigen();
        let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if dim > 0 && min_eigenvalue < -PSD_TOLERANCE {
            return Err(StatsError::NotPsd { min_eigenvalue });
        }
        let target = if min_eigenvalue < 0.0 {
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
        } else {
            sym
        };
        Ok(Self {
            factor: Factor::Dense {
                l: pivoted_cholesky(&target),
            },
        })
    }

    /// Sampler for unit variances and a common correlation `rho` in `[0, 1]`.
    pub fn equicorrelated(dim: usize, rho: f64) -> Self {
        Self {
            factor: Factor::Equicorrelated {
                dim,
                rho: rho.clamp(0.0, 1.0),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match &self.factor {
            Factor::Dense { l } => l.rows(),
            Factor::Equicorrelated { dim, .. } => *dim,
        }
    }

    /// Draws a zero-mean vector into `out`.
    pub fn sample_centered_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.factor {
            Factor::Dense { l } => {
                let rank = l.cols();
                let z: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(rng)).collect();
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = l.row(i).iter().zip(&z).map(|(a, b)| a * b).sum();
                }
            }
            Factor::Equicorrelated { rho, .. } => {
                let shared: f64 = if *rho > 0.0 {
                    rho.sqrt() * Distribution::<f64>::sample(&StandardNormal, rng)
                } else {
                    0.0
                };
                let own = (1.0 - rho).sqrt();
                for slot in out.iter_mut() {
                    let z: f64 = if own > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
                    *slot = shared + own * z;
                }
            }
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R, mean: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_centered_into(rng, &mut out);
        for (x, m) in out.iter_mut().zip(mean) {
            *x += m;
        }
        out
    }
}

/// One draw from `N(mean, cov)`.
pub fn sample_mvn(rng: &mut RngStream, mean: &[f64], cov: &Matrix<f64>) -> Result<Vec<f64>, StatsError> {
    if cov.rows() != mean.len() {
        return Err(StatsError::Dimension(format!(
            "mean has {} entries, covariance is {}x{}",
            mean.len(),
            cov.rows(),
            cov.cols()
        )));
    }
    Ok(MvnSampler::new(cov)?.sample(rng, mean))
}

/// Outer-product Cholesky with diagonal pivoting, stopping once the largest
/// remaining pivot is negligible. Rows of the returned factor keep the
/// original ordering, so `L L^T` reproduces the input directly.
fn pivoted_cholesky(a: &nalgebra::DMatrix<f64>) -> Matrix<f64> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = scale * 1e-12;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut l = Matrix::filled(n, n, 0.0);
    let mut rank = 0;
    for k in 0..n {
        let (offset, &best) = perm[k..]
            .iter()
            .enumerate()
            .max_by(|x, y| diag[*x.1].total_cmp(&diag[*y.1]).then(y.0.cmp(&x.0)))
            .expect("non-empty");
        if diag[best] <= tol {
            break;
        }
        perm.swap(k, k + offset);
        let p = perm[k];
        let pivot = diag[p].sqrt();
        l[(p, k)] = pivot;
        for &i in &perm[k + 1..] {
            let mut v = a[(i, p)];
            for c in 0..k {
                v -= l[(i, c)] * l[(p, c)];
            }
            let v = v / pivot;
            l[(i, k)] = v;
            diag[i] -= v * v;
        }
        rank = k + 1;
    }
    let keep: Vec<usize> = (0..rank).collect();
    l.select_cols(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = RngStream::new(7, 3);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStream::new(7, 3);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = RngStream::new(7, 4);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn multinomial_degenerate_cases() {
        let mut rng = RngStream::new(1, 0);
        assert_eq!(sample_multinomial(&mut rng, 7, &[1.0]).unwrap(), vec![7]);
        assert_eq!(sample_multinomial(&mut rng, 0, &[0.5, 0.5]).unwrap(), vec![0, 0]);
        assert_eq!(sample_multinomial(&mut rng, 9, &[0.0, 1.0, 0.0]).unwrap(), vec![0, 9, 0]);
    }

    #[test]
    fn multinomial_rejects_bad_vectors() {
        let mut rng = RngStream::new(1, 0);
        assert!(sample_multinomial(&mut rng, 3, &[0.5, 0.6]).is_err());
        assert!(sample_multinomial(&mut rng, 3, &[1.5, -0.5]).is_err());
        assert!(sample_multinomial(&mut rng, 3, &[]).is_err());
    }

    #[test]
    fn multinomial_uniform_moments() {
        let mut rng = RngStream::new(2024, 0);
        let n = 1_000_000u64;
        let counts = sample_multinomial(&mut rng, n, &[0.25; 4]).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), n);
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 250_000.0).abs() < 5.0 * sigma, "{c}");
        }
    }

    #[test]
    fn mvn_zero_covariance_returns_mean() {
        let mut rng = RngStream::new(3, 0);
        let mean = [1.5, -2.0, 0.25];
        let x = sample_mvn(&mut rng, &mean, &Matrix::filled(3, 3, 0.0)).unwrap();
        assert_eq!(x, mean);
    }

    #[test]
    fn mvn_rank_one_gives_equal_coordinates() {
        let cov = Matrix::filled(2, 2, 1.0);
        let sampler = MvnSampler::new(&cov).unwrap();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..100 {
            let x = sampler.sample(&mut rng, &[0.0, 0.0]);
            assert_eq!(x[0], x[1]);
        }
        let eq = MvnSampler::equicorrelated(3, 1.0);
        for _ in 0..100 {
            let x = eq.sample(&mut rng, &[0.0; 3]);
            assert!(x[0] == x[1] && x[1] == x[2]);
        }
    }

    #[test]
    fn mvn_rejects_indefinite() {
        let cov = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(MvnSampler::new(&cov), Err(StatsError::NotPsd { .. })));
    }

    #[test]
    fn mvn_tolerates_tiny_negative_eigenvalue() {
        let eps = 1e-10;
        let cov = Matrix::from_rows(&[vec![1.0, 1.0 + eps], vec![1.0 + eps, 1.0]]).unwrap();
        assert!(MvnSampler::new(&cov).is_ok());
    }

    #[test]
    fn pivoted_cholesky_reconstructs() {
        let cov = Matrix::from_rows(&[
            vec![4.0, 2.0, 0.6],
            vec![2.0, 2.0, 0.4],
            vec![0.6, 0.4, 1.0],
        ])
        .unwrap();
        let a = nalgebra::DMatrix::from_fn(3, 3, |i, j| cov[(i, j)]);
        let l = pivoted_cholesky(&a);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = l.row(i).iter().zip(l.row(j)).map(|(x, y)| x * y).sum();
                assert!((v - cov[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
