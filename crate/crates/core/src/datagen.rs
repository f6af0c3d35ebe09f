//! Synthetic tables with clustered, correlated adverse events.
//!
//! Each replication draws, per cluster and per drug column, a vector of
//! residuals from `N(0, Sigma_g)` and maps it to counts around the
//! signal-inflated expected counts. A tolerance variant regenerates tables
//! whose grand total strays too far from the original.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::parallel::map_indices;
use crate::stats::{round_half_even, MvnSampler, RngStream, StatsError};
use crate::table::{default_labels, ContinTable, TableError};

/// Retry ceiling per table for [`generate_tables_with_tol`].
pub const DEFAULT_MAX_ATTEMPTS: u32 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("row marginal sums to {rows}, column marginal to {cols}")]
    MarginalMismatch { rows: u64, cols: u64 },
    #[error("marginals sum to zero")]
    ZeroTotal,
    #[error("correlation matrix for cluster {cluster} is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPsd { cluster: usize, min_eigenvalue: f64 },
    #[error("invalid correlation specification: {0}")]
    InvalidCorrelation(String),
    #[error("invalid signal strength: {0}")]
    InvalidSignal(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("replication {rep}: no table within tolerance after {attempts} attempts (best RTD {best_rtd:.4}%)")]
    RetryExhausted { rep: usize, attempts: u32, best_rtd: f64 },
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Within-cluster correlation.
#[derive(Debug, Clone, PartialEq)]
pub enum WithinCorr {
    /// One correlation in `[0, 1]` for every cluster.
    Uniform(f64),
    /// Correlation per cluster identifier.
    PerCluster(BTreeMap<usize, f64>),
    /// Full I x I correlation matrix; only within-cluster blocks are used.
    Explicit(Matrix<f64>),
}

/// Assignment of AE rows to clusters plus their correlation structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    /// Cluster identifier of each AE row.
    pub assignment: Vec<usize>,
    pub within: WithinCorr,
}

impl ClusterSpec {
    /// Every row in its own cluster.
    pub fn independent(rows: usize) -> Self {
        Self {
            assignment: (0..rows).collect(),
            within: WithinCorr::Uniform(0.0),
        }
    }

    /// All rows in one cluster.
    pub fn single(rows: usize, within: WithinCorr) -> Self {
        Self {
            assignment: vec![0; rows],
            within,
        }
    }

    /// Member rows of each cluster, ordered by cluster identifier.
    pub fn groups(&self) -> Vec<(usize, Vec<usize>)> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &g) in self.assignment.iter().enumerate() {
            map.entry(g).or_default().push(i);
        }
        map.into_iter().collect()
    }
}

/// Multiplicative signal strengths `lambda_ij >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalStrengthMatrix(Matrix<f64>);

impl SignalStrengthMatrix {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self(Matrix::filled(rows, cols, 1.0))
    }

    pub fn new(lambdas: Matrix<f64>) -> Result<Self, DatagenError> {
        if let Some(((i, j), v)) = lambdas.indexed_iter().find(|(_, v)| !(**v >= 1.0 && v.is_finite())) {
            return Err(DatagenError::InvalidSignal(format!(
                "lambda at ({i}, {j}) is {v}, must be finite and >= 1"
            )));
        }
        Ok(Self(lambdas))
    }

    pub fn with_signal(mut self, i: usize, j: usize, lambda: f64) -> Result<Self, DatagenError> {
        self.0[(i, j)] = lambda;
        Self::new(self.0)
    }

    pub fn as_matrix(&self) -> &Matrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub row_marginal: Vec<u64>,
    pub column_marginal: Vec<u64>,
    pub signal: SignalStrengthMatrix,
    pub clusters: ClusterSpec,
    pub n_rep: usize,
    pub seed: u64,
    /// Maximum relative total deviation in percent.
    pub tolerance: Option<f64>,
    pub max_attempts: u32,
    pub row_names: Option<Vec<String>>,
    pub col_names: Option<Vec<String>>,
}

impl GenerationRequest {
    /// Non-signal request with independent rows.
    pub fn new(row_marginal: Vec<u64>, column_marginal: Vec<u64>, n_rep: usize, seed: u64) -> Self {
        let (rows, cols) = (row_marginal.len(), column_marginal.len());
        Self {
            row_marginal,
            column_marginal,
            signal: SignalStrengthMatrix::ones(rows, cols),
            clusters: ClusterSpec::independent(rows),
            n_rep,
            seed,
            tolerance: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            row_names: None,
            col_names: None,
        }
    }

    /// Request built from a reference table. Without `clusters`, all rows form
    /// one cluster whose correlation matrix is estimated from the table.
    pub fn from_table(t: &ContinTable, clusters: Option<ClusterSpec>, n_rep: usize, seed: u64) -> Self {
        let clusters = clusters.unwrap_or_else(|| {
            let (corr, _) = estimate_cluster_corr(t);
            ClusterSpec::single(t.n_rows(), WithinCorr::Explicit(corr))
        });
        Self {
            row_marginal: t.row_totals().to_vec(),
            column_marginal: t.col_totals().to_vec(),
            signal: SignalStrengthMatrix::ones(t.n_rows(), t.n_cols()),
            clusters,
            n_rep,
            seed,
            tolerance: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            row_names: Some(t.row_names().to_vec()),
            col_names: Some(t.col_names().to_vec()),
        }
    }
}

/// Pearson correlation of two residual rows over positions where both are
/// present; `None` when fewer than two positions remain or either side is
/// constant.
fn row_correlation(x: &[Option<f64>], y: &[Option<f64>]) -> Option<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter_map(|(p, q)| Some(((*p)?, (*q)?))).unzip();
    if a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (p, q) in a.iter().zip(&b) {
        sab += (p - ma) * (q - mb);
        saa += (p - ma) * (p - ma);
        sbb += (q - mb) * (q - mb);
    }
    let scale = a.iter().chain(&b).fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = 1e-24 * scale * scale * n;
    if saa <= tiny || sbb <= tiny {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise row correlations of the residuals, before any PSD projection.
/// Undefined pairs are 0; the diagonal is 1.
pub fn residual_row_correlations(t: &ContinTable) -> (Matrix<f64>, Vec<String>) {
    let res = t.std_pearson_residuals();
    let rows = t.n_rows();
    let mut warnings = Vec::new();
    for i in 0..rows {
        let present: Vec<f64> = res.row(i).iter().flatten().copied().collect();
        let constant = present.windows(2).all(|w| w[0] == w[1]);
        if constant {
            warnings.push(format!(
                "row {:?} has zero residual variance; its correlations are set to 0",
                t.row_names()[i]
            ));
        }
    }
    let corr = Matrix::from_fn(rows, rows, |i, k| {
        if i == k {
            1.0
        } else {
            row_correlation(res.row(i), res.row(k)).unwrap_or(0.0)
        }
    });
    (corr, warnings)
}

/// Estimated AE correlation matrix: pairwise residual-row correlations,
/// symmetrized, eigenvalues clipped at zero and rescaled to unit diagonal.
pub fn estimate_cluster_corr(t: &ContinTable) -> (Matrix<f64>, Vec<String>) {
    let (raw, warnings) = residual_row_correlations(t);
    (nearest_correlation(&raw), warnings)
}

fn nearest_correlation(m: &Matrix<f64>) -> Matrix<f64> {
    let n = m.rows();
    let sym = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let eig = sym.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let c = &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..n).map(|i| c[(i, i)]).collect();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if d[i] > 0.0 && d[j] > 0.0 {
            (c[(i, j)] / (d[i] * d[j]).sqrt()).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    })
}

/// `|orig - sim| / orig * 100`.
///
/// # Panics
/// If `orig_total` is zero.
pub fn relative_total_deviation(orig_total: u64, sim_total: u64) -> f64 {
    assert!(orig_total > 0, "original total must be positive");
    orig_total.abs_diff(sim_total) as f64 * 100.0 / orig_total as f64
}

/// Stream identifier of replication `rep`, attempt `attempt`.
pub fn stream_id(rep: usize, attempt: u32) -> u64 {
    ((rep as u64) << 32) | u64::from(attempt)
}

/// Validated generation context, reusable across replications.
#[derive(Debug, Clone)]
pub struct TableGenerator {
    mean: Matrix<f64>,
    scale: Matrix<f64>,
    clusters: Vec<(Vec<usize>, MvnSampler)>,
    row_names: Vec<String>,
    col_names: Vec<String>,
    orig_total: u64,
    seed: u64,
}

impl TableGenerator {
    pub fn new(req: &GenerationRequest) -> Result<Self, DatagenError> {
        let (rows, cols) = (req.row_marginal.len(), req.column_marginal.len());
        let row_sum: u64 = req.row_marginal.iter().sum();
        let col_sum: u64 = req.column_marginal.iter().sum();
        if row_sum != col_sum {
            return Err(DatagenError::MarginalMismatch {
                rows: row_sum,
                cols: col_sum,
            });
        }
        if row_sum == 0 {
            return Err(DatagenError::ZeroTotal);
        }
        if req.signal.as_matrix().shape() != (rows, cols) {
            return Err(DatagenError::InvalidSignal(format!(
                "shape {:?} does not match {rows}x{cols}",
                req.signal.as_matrix().shape()
            )));
        }
        if req.clusters.assignment.len() != rows {
            return Err(DatagenError::InvalidCorrelation(format!(
                "{} cluster assignments for {rows} rows",
                req.clusters.assignment.len()
            )));
        }
        let row_names = req.row_names.clone().unwrap_or_else(|| default_labels("AE", rows));
        let col_names = req.col_names.clone().unwrap_or_else(|| default_labels("drug", cols));
        // Validates shape and labels once; generated tables reuse them.
        ContinTable::new(Matrix::filled(rows, cols, 1), row_names.clone(), col_names.clone())?;

        let total = row_sum as f64;
        let lambda = req.signal.as_matrix();
        let mean = Matrix::from_fn(rows, cols, |i, j| {
            req.row_marginal[i] as f64 * req.column_marginal[j] as f64 / total * lambda[(i, j)]
        });
        let scale = Matrix::from_fn(rows, cols, |i, j| {
            let pi = req.row_marginal[i] as f64 / total;
            let pj = req.column_marginal[j] as f64 / total;
            (mean[(i, j)] * (1.0 - pi) * (1.0 - pj)).max(0.0).sqrt()
        });
        let clusters = build_samplers(&req.clusters)?;
        Ok(Self {
            mean,
            scale,
            clusters,
            row_names,
            col_names,
            orig_total: row_sum,
            seed: req.seed,
        })
    }

    pub fn orig_total(&self) -> u64 {
        self.orig_total
    }

    /// Draws the I x J residual matrix: per cluster, per column, one MVN vector.
    pub fn draw_residuals(&self, rng: &mut RngStream) -> Matrix<f64> {
        let (rows, cols) = self.mean.shape();
        let mut e = Matrix::filled(rows, cols, 0.0);
        let mut buf = Vec::new();
        for (members, sampler) in &self.clusters {
            buf.resize(members.len(), 0.0);
            for j in 0..cols {
                sampler.sample_centered_into(rng, &mut buf);
                for (&i, &v) in members.iter().zip(&buf) {
                    e[(i, j)] = v;
                }
            }
        }
        e
    }

    /// Deterministic map from residuals to counts:
    /// `x = e sqrt(E lambda (1 - p_i)(1 - p_j)) + E lambda`, rounded half to
    /// even when nonnegative and 0 otherwise.
    pub fn counts_from_residuals(&self, e: &Matrix<f64>) -> Matrix<u64> {
        Matrix::from_fn(self.mean.rows(), self.mean.cols(), |i, j| {
            let x = e[(i, j)] * self.scale[(i, j)] + self.mean[(i, j)];
            if x >= 0.0 {
                round_half_even(x) as u64
            } else {
                0
            }
        })
    }

    pub fn table_from_residuals(&self, e: &Matrix<f64>) -> Result<ContinTable, DatagenError> {
        Ok(ContinTable::from_parts(
            self.counts_from_residuals(e),
            self.row_names.clone(),
            self.col_names.clone(),
        )?)
    }

    /// Table for replication `rep` on its `attempt`-th stream.
    pub fn generate(&self, rep: usize, attempt: u32) -> Result<ContinTable, DatagenError> {
        let mut rng = RngStream::new(self.seed, stream_id(rep, attempt));
        self.table_from_residuals(&self.draw_residuals(&mut rng))
    }

    /// First table of replication `rep` within `tol` percent RTD.
    pub fn generate_within(&self, rep: usize, tol: f64, max_attempts: u32) -> Result<ContinTable, DatagenError> {
        let mut best = f64::INFINITY;
        for attempt in 0..max_attempts {
            let mut rng = RngStream::new(self.seed, stream_id(rep, attempt));
            let counts = self.counts_from_residuals(&self.draw_residuals(&mut rng));
            let sim: u64 = counts.iter().sum();
            let rtd = relative_total_deviation(self.orig_total, sim);
            if rtd <= tol {
                return Ok(ContinTable::from_parts(counts, self.row_names.clone(), self.col_names.clone())?);
            }
            best = best.min(rtd);
        }
        Err(DatagenError::RetryExhausted {
            rep,
            attempts: max_attempts,
            best_rtd: best,
        })
    }
}

fn build_samplers(spec: &ClusterSpec) -> Result<Vec<(Vec<usize>, MvnSampler)>, DatagenError> {
    if let WithinCorr::Explicit(m) = &spec.within {
        let n = spec.assignment.len();
        if m.shape() != (n, n) {
            return Err(DatagenError::InvalidCorrelation(format!(
                "{:?} correlation matrix for {n} rows",
                m.shape()
            )));
        }
        for i in 0..n {
            if (m[(i, i)] - 1.0).abs() > 1e-9 {
                return Err(DatagenError::InvalidCorrelation(format!("diagonal entry {i} is {}", m[(i, i)])));
            }
            for k in 0..i {
                if (m[(i, k)] - m[(k, i)]).abs() > 1e-9 || !m[(i, k)].is_finite() {
                    return Err(DatagenError::InvalidCorrelation(format!("entries ({i}, {k}) and ({k}, {i}) differ")));
                }
            }
        }
    }
    let check_rho = |g: usize, rho: f64| {
        if (0.0..=1.0).contains(&rho) {
            Ok(rho)
        } else {
            Err(DatagenError::InvalidCorrelation(format!("cluster {g}: rho {rho} outside [0, 1]")))
        }
    };
    spec.groups()
        .into_iter()
        .map(|(g, members)| {
            let sampler = match &spec.within {
                WithinCorr::Uniform(rho) => MvnSampler::equicorrelated(members.len(), check_rho(g, *rho)?),
                WithinCorr::PerCluster(map) => {
                    let rho = *map.get(&g).ok_or_else(|| {
                        DatagenError::InvalidCorrelation(format!("no correlation given for cluster {g}"))
                    })?;
                    MvnSampler::equicorrelated(members.len(), check_rho(g, rho)?)
                }
                WithinCorr::Explicit(m) => {
                    let sub = m.select_rows(&members).select_cols(&members);
                    MvnSampler::new(&sub).map_err(|e| match e {
                        StatsError::NotPsd { min_eigenvalue } => DatagenError::NotPsd {
                            cluster: g,
                            min_eigenvalue,
                        },
                        other => DatagenError::InvalidCorrelation(other.to_string()),
                    })?
                }
            };
            Ok((members, sampler))
        })
        .collect()
}

fn first_error<T>(results: Vec<Result<T, DatagenError>>) -> Result<Vec<T>, DatagenError> {
    results.into_iter().collect()
}

/// `n_rep` independent tables. Replication `r` uses stream `(r, 0)`.
pub fn generate_tables(req: &GenerationRequest) -> Result<Vec<ContinTable>, DatagenError> {
    if req.n_rep == 0 {
        return Err(DatagenError::InvalidRequest("n_rep must be positive".into()));
    }
    let gen = TableGenerator::new(req)?;
    first_error(map_indices(req.n_rep, |r| gen.generate(r, 0)))
}

/// Like [`generate_tables`], but each table whose RTD exceeds the tolerance is
/// regenerated on streams `(r, 1)`, `(r, 2)`, ... until it passes. Tables that
/// pass on the first attempt are identical to [`generate_tables`] output.
pub fn generate_tables_with_tol(req: &GenerationRequest) -> Result<Vec<ContinTable>, DatagenError> {
    let tol = req
        .tolerance
        .ok_or_else(|| DatagenError::InvalidRequest("tolerance is required".into()))?;
    if !(tol > 0.0) {
        return Err(DatagenError::InvalidRequest(format!("tolerance {tol} must be positive")));
    }
    if req.n_rep == 0 {
        return Err(DatagenError::InvalidRequest("n_rep must be positive".into()));
    }
    if req.max_attempts == 0 {
        return Err(DatagenError::InvalidRequest("max_attempts must be positive".into()));
    }
    let gen = TableGenerator::new(req)?;
    first_error(map_indices(req.n_rep, |r| gen.generate_within(r, tol, req.max_attempts)))
}
