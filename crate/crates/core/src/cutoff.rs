//! Per-column cutoffs for the univariate outlier step: Tukey fences, Monte
//! Carlo null maxima and the adaptive boxplot coefficient search.

use thiserror::Error;

use crate::matrix::{Matrix, MaybeMatrix};
use crate::parallel::map_indices;
use crate::stats::{quantile_sorted, BoxplotStats, MultinomialSampler, RngStream, StatsError};
use crate::table::{pearson_residual, ContinTable, ResidualMatrix};

/// Coefficient used for the zero-cell lower fence in every method.
pub const ZERO_CELL_COEF: f64 = 1.5;

/// Cells at or below this count are excluded from Monte Carlo maxima.
pub const MC_MIN_COUNT: u64 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CutoffError {
    #[error("coefficient list has {got} entries, table has {expected} columns")]
    CoefLengthMismatch { expected: usize, got: usize },
    #[error("boxplot coefficient must be positive and finite, got {0}")]
    InvalidCoef(f64),
    #[error("column {column} has no simulated cell with count above 5 in any replication")]
    AllInfinite { column: usize },
    #[error("no coefficient up to {ceiling} meets the target FDR for column(s) {columns:?}")]
    NoConvergence { columns: Vec<usize>, ceiling: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Whether fences are computed within each drug column or over the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutoffScope {
    #[default]
    PerColumn,
    WholeTable,
}

impl CutoffScope {
    pub fn from_col_specific(col_specific: bool) -> Self {
        if col_specific {
            Self::PerColumn
        } else {
            Self::WholeTable
        }
    }
}

/// Boxplot coefficient, either shared by every column or one per column.
#[derive(Debug, Clone, PartialEq)]
pub enum Coef {
    Scalar(f64),
    PerColumn(Vec<f64>),
}

impl Default for Coef {
    fn default() -> Self {
        Self::Scalar(1.5)
    }
}

impl Coef {
    /// Expands to one coefficient per column, validating length and sign.
    pub fn resolve(&self, cols: usize) -> Result<Vec<f64>, CutoffError> {
        let coefs = match self {
            Self::Scalar(c) => vec![*c; cols],
            Self::PerColumn(v) if v.len() != cols => {
                return Err(CutoffError::CoefLengthMismatch {
                    expected: cols,
                    got: v.len(),
                })
            }
            Self::PerColumn(v) => v.clone(),
        };
        if let Some(&bad) = coefs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(CutoffError::InvalidCoef(bad));
        }
        Ok(coefs)
    }
}

/// Upper cutoffs for nonzero cells and lower cutoffs for zero cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSet {
    pub upper: Vec<f64>,
    pub zero_lower: Vec<f64>,
    pub scope: CutoffScope,
    pub warnings: Vec<String>,
}

/// Per-drug maxima of simulated residuals, one row per column and one entry
/// per replication. `-inf` marks a replication with no admissible cell.
#[derive(Debug, Clone, PartialEq)]
pub struct NullMaxima {
    pub values: Matrix<f64>,
}

impl NullMaxima {
    pub fn reps(&self) -> usize {
        self.values.cols()
    }

    pub fn n_cols(&self) -> usize {
        self.values.rows()
    }

    /// Maxima over the whole table for each replication.
    pub fn table_maxima(&self) -> Vec<f64> {
        (0..self.reps())
            .map(|r| {
                (0..self.n_cols())
                    .map(|j| self.values[(j, r)])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Sorted null sample to compare column `j` against under `scope`.
    fn sorted_sample(&self, j: usize, scope: CutoffScope) -> Vec<f64> {
        let mut v = match scope {
            CutoffScope::PerColumn => self.values.row(j).to_vec(),
            CutoffScope::WholeTable => self.table_maxima(),
        };
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Cell probabilities `p_ij = (n_i./n..)(n_.j/n..)` under independence.
pub fn null_cell_probs(t: &ContinTable) -> Matrix<f64> {
    let n = t.total() as f64;
    Matrix::from_fn(t.n_rows(), t.n_cols(), |i, j| {
        (t.row_totals()[i] as f64 / n) * (t.col_totals()[j] as f64 / n)
    })
}

/// Draws tables from `Multinomial(n.., p_ij)` with `p_ij` the independence
/// probabilities of a reference table.
///
/// Sampled as row totals from `Multinomial(n.., p_i.)` and then each row from
/// `Multinomial(n_i, p_.j)`, which is the same law because `p_ij` factorizes.
/// Rows are drawn in label order, so reordering the rows of the reference
/// table reorders the simulated tables the same way.
#[derive(Debug, Clone)]
pub struct NullSimulator {
    rows: usize,
    cols: usize,
    total: u64,
    order: Vec<usize>,
    row_sampler: MultinomialSampler,
    col_sampler: MultinomialSampler,
}

/// A simulated table with its margins.
#[derive(Debug, Clone)]
pub struct SimulatedTable {
    pub counts: Vec<u64>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    pub total: u64,
}

impl SimulatedTable {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            counts: vec![0; rows * cols],
            row_totals: vec![0; rows],
            col_totals: vec![0; cols],
            total: 0,
        }
    }
}

impl NullSimulator {
    pub fn new(t: &ContinTable) -> Result<Self, CutoffError> {
        let n = t.total() as f64;
        let mut order: Vec<usize> = (0..t.n_rows()).collect();
        order.sort_by(|&a, &b| t.row_names()[a].cmp(&t.row_names()[b]));
        let row_p: Vec<f64> = order.iter().map(|&i| t.row_totals()[i] as f64 / n).collect();
        let col_p: Vec<f64> = t.col_totals().iter().map(|&c| c as f64 / n).collect();
        Ok(Self {
            rows: t.n_rows(),
            cols: t.n_cols(),
            total: t.total(),
            order,
            row_sampler: MultinomialSampler::new(&row_p)?,
            col_sampler: MultinomialSampler::new(&col_p)?,
        })
    }

    fn simulate_into(&self, rng: &mut RngStream, out: &mut SimulatedTable) {
        let mut sorted = vec![0u64; self.rows];
        self.row_sampler.sample_into(rng, self.total, &mut sorted);
        for (&i, &n) in self.order.iter().zip(&sorted) {
            out.row_totals[i] = n;
        }
        out.col_totals.iter_mut().for_each(|c| *c = 0);
        for &i in &self.order {
            let row = &mut out.counts[i * self.cols..(i + 1) * self.cols];
            self.col_sampler.sample_into(rng, out.row_totals[i], row);
            for (c, &n) in out.col_totals.iter_mut().zip(row.iter()) {
                *c += n;
            }
        }
        out.total = self.total;
    }

    pub fn simulate(&self, rng: &mut RngStream) -> SimulatedTable {
        let mut out = SimulatedTable::new(self.rows, self.cols);
        self.simulate_into(rng, &mut out);
        out
    }

    /// Simulated table as a labeled [`ContinTable`] with the reference labels.
    pub fn simulate_table(&self, rng: &mut RngStream, like: &ContinTable) -> ContinTable {
        let sim = self.simulate(rng);
        ContinTable::from_parts(
            Matrix::from_vec(self.rows, self.cols, sim.counts).expect("shape"),
            like.row_names().to_vec(),
            like.col_names().to_vec(),
        )
        .expect("simulated total equals the positive reference total")
    }
}

/// Tukey cutoffs from the observed residuals.
///
/// With `separate`, the upper fence comes from nonzero cells and the lower
/// fence from zero cells; otherwise both come from the pooled residuals.
pub fn boxplot_cutoffs(
    res: &ResidualMatrix,
    counts: &ContinTable,
    coef: &Coef,
    col_specific: bool,
    separate: bool,
) -> Result<CutoffSet, CutoffError> {
    let cols = counts.n_cols();
    let coefs = coef.resolve(cols)?;
    let scope = CutoffScope::from_col_specific(col_specific);
    let mut warnings = Vec::new();
    let mut upper = Vec::with_capacity(cols);
    let mut zero_lower = Vec::with_capacity(cols);

    let table_groups = (scope == CutoffScope::WholeTable).then(|| residual_groups(res, counts, None));
    for (j, &c) in coefs.iter().enumerate() {
        let column_groups;
        let (nonzero, zero) = match &table_groups {
            Some(g) => (&g.0, &g.1),
            None => {
                column_groups = residual_groups(res, counts, Some(j));
                (&column_groups.0, &column_groups.1)
            }
        };
        let label = column_label(counts, j, scope);
        if separate {
            upper.push(fence(nonzero, c, true, "nonzero", &label, &mut warnings)?);
            zero_lower.push(fence(zero, ZERO_CELL_COEF, false, "zero", &label, &mut warnings)?);
        } else {
            let pooled: Vec<f64> = nonzero.iter().chain(zero.iter()).copied().collect();
            upper.push(fence(&pooled, c, true, "all", &label, &mut warnings)?);
            zero_lower.push(fence(&pooled, c, false, "all", &label, &mut warnings)?);
        }
    }
    dedup_warnings(&mut warnings);
    Ok(CutoffSet {
        upper,
        zero_lower,
        scope,
        warnings,
    })
}

fn column_label(t: &ContinTable, j: usize, scope: CutoffScope) -> String {
    match scope {
        CutoffScope::PerColumn => format!("column {:?}", t.col_names()[j]),
        CutoffScope::WholeTable => "table".to_string(),
    }
}

fn dedup_warnings(w: &mut Vec<String>) {
    let mut seen = std::collections::HashSet::new();
    w.retain(|s| seen.insert(s.clone()));
}

/// Finite residuals of nonzero and zero cells, for one column or the table.
fn residual_groups(res: &ResidualMatrix, t: &ContinTable, col: Option<usize>) -> (Vec<f64>, Vec<f64>) {
    let mut nonzero = Vec::new();
    let mut zero = Vec::new();
    for ((i, j), e) in res.indexed_iter() {
        if col.is_some_and(|c| c != j) {
            continue;
        }
        if let Some(e) = e {
            if t.count(i, j) > 0 {
                nonzero.push(*e);
            } else {
                zero.push(*e);
            }
        }
    }
    (nonzero, zero)
}

fn fence(
    data: &[f64],
    coef: f64,
    upper: bool,
    group: &str,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<f64, CutoffError> {
    match data.len() {
        0 => {
            if upper {
                warnings.push(format!("{label}: no {group} residuals, nothing is masked"));
            }
            Ok(if upper { f64::INFINITY } else { f64::NEG_INFINITY })
        }
        n => {
            if n == 1 {
                warnings.push(format!("{label}: a single {group} residual, fence has zero IQR"));
            }
            let s = BoxplotStats::from_data(data, coef)?;
            Ok(if upper { s.upper() } else { s.lower() })
        }
    }
}

/// Simulates `reps` independence tables and records, per drug column, the
/// largest residual among cells with count above 5. Residuals use each
/// simulated table's own margins. Replication `r` draws from stream
/// `(seed, r)`, so the result does not depend on the worker count.
pub fn mc_null_simulation(t: &ContinTable, reps: usize, seed: u64) -> Result<NullMaxima, CutoffError> {
    if reps == 0 {
        return Err(CutoffError::InvalidParameter("reps must be at least 1".into()));
    }
    let sim = NullSimulator::new(t)?;
    let (rows, cols) = (t.n_rows(), t.n_cols());
    let maxima: Vec<Vec<f64>> = map_indices(reps, |r| {
        let mut rng = RngStream::new(seed, r as u64);
        let s = sim.simulate(&mut rng);
        let mut m = vec![f64::NEG_INFINITY; cols];
        for i in 0..rows {
            for (j, slot) in m.iter_mut().enumerate() {
                let n = s.counts[i * cols + j];
                if n <= MC_MIN_COUNT {
                    continue;
                }
                if let Some(e) = pearson_residual(n, s.row_totals[i], s.col_totals[j], s.total) {
                    if e > *slot {
                        *slot = e;
                    }
                }
            }
        }
        m
    });
    let values = Matrix::from_fn(cols, reps, |j, r| maxima[r][j]);
    Ok(NullMaxima { values })
}

/// Upper cutoffs as the `quantile_q` quantile of the finite null maxima.
pub fn mc_upper_cutoffs(null: &NullMaxima, quantile_q: f64, scope: CutoffScope) -> Result<Vec<f64>, CutoffError> {
    if !(0.0..=1.0).contains(&quantile_q) {
        return Err(CutoffError::InvalidParameter(format!("quantile {quantile_q} outside [0, 1]")));
    }
    (0..null.n_cols())
        .map(|j| {
            let sorted = null.sorted_sample(j, scope);
            let finite: Vec<f64> = sorted.into_iter().filter(|v| v.is_finite()).collect();
            if finite.is_empty() {
                return Err(CutoffError::AllInfinite { column: j });
            }
            Ok(quantile_sorted(&finite, quantile_q)?)
        })
        .collect()
}

/// Monte Carlo cutoffs: quantile of the null maxima for nonzero cells and the
/// Tukey lower fence of the observed residuals for zero cells.
pub fn mc_cutoffs(
    null: &NullMaxima,
    quantile_q: f64,
    res: &ResidualMatrix,
    counts: &ContinTable,
    col_specific: bool,
    separate: bool,
) -> Result<CutoffSet, CutoffError> {
    let scope = CutoffScope::from_col_specific(col_specific);
    let upper = mc_upper_cutoffs(null, quantile_q, scope)?;
    let lower = boxplot_cutoffs(res, counts, &Coef::Scalar(ZERO_CELL_COEF), col_specific, separate)?;
    Ok(CutoffSet {
        upper,
        zero_lower: lower.zero_lower,
        scope,
        warnings: lower.warnings,
    })
}

/// Monte Carlo p-values `(1 + #{r : m_r >= e_ij}) / (R + 1)` for cells with
/// count above 5; other cells are missing.
pub fn mc_pvalues(null: &NullMaxima, res: &ResidualMatrix, counts: &ContinTable, scope: CutoffScope) -> MaybeMatrix {
    let reps = null.reps();
    let samples: Vec<Vec<f64>> = match scope {
        CutoffScope::PerColumn => (0..null.n_cols()).map(|j| null.sorted_sample(j, scope)).collect(),
        CutoffScope::WholeTable => vec![null.sorted_sample(0, scope)],
    };
    Matrix::from_fn(res.rows(), res.cols(), |i, j| {
        let e = res[(i, j)]?;
        if counts.count(i, j) <= MC_MIN_COUNT {
            return None;
        }
        let sample = match scope {
            CutoffScope::PerColumn => &samples[j],
            CutoffScope::WholeTable => &samples[0],
        };
        let below = sample.partition_point(|&m| m < e);
        let at_or_above = reps - below;
        Some((1 + at_or_above) as f64 / (reps + 1) as f64)
    })
}

/// Options for [`find_optimal_coef`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefSearch {
    pub reps: usize,
    pub target_fdr: f64,
    pub step: f64,
    pub start: f64,
    pub ceiling: f64,
    pub scope: CutoffScope,
    pub seed: u64,
}

impl Default for CoefSearch {
    fn default() -> Self {
        Self {
            reps: 1000,
            target_fdr: 0.05,
            step: 0.1,
            start: 1.5,
            ceiling: 10.0,
            scope: CutoffScope::PerColumn,
            seed: 0,
        }
    }
}

/// Per replication and column: Q3, IQR and maximum of the nonzero-cell residuals.
#[derive(Debug, Clone, Copy)]
struct FenceSummary {
    q3: f64,
    iqr: f64,
    max: f64,
}

impl FenceSummary {
    fn of(values: &mut [f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(values, 0.25).ok()?;
        let q3 = quantile_sorted(values, 0.75).ok()?;
        Some(Self {
            q3,
            iqr: q3 - q1,
            max: values[values.len() - 1],
        })
    }

    fn flags(&self, coef: f64) -> bool {
        self.max > self.q3 + coef * self.iqr
    }
}

/// Grid search for the smallest boxplot coefficient whose null false
/// discovery rate is at most `target_fdr`.
///
/// Under independence every flagged cell is a false positive, so the FDR of a
/// replication is 1 when any nonzero cell exceeds `Q3 + c IQR` and 0 otherwise.
/// Returns one coefficient per column (replicated under whole-table scope).
pub fn find_optimal_coef(t: &ContinTable, opts: &CoefSearch) -> Result<Vec<f64>, CutoffError> {
    if opts.reps == 0 {
        return Err(CutoffError::InvalidParameter("reps must be at least 1".into()));
    }
    if !(opts.target_fdr > 0.0 && opts.target_fdr <= 1.0) {
        return Err(CutoffError::InvalidParameter(format!("target FDR {} outside (0, 1]", opts.target_fdr)));
    }
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(CutoffError::InvalidParameter(format!("step {} must be positive", opts.step)));
    }
    let sim = NullSimulator::new(t)?;
    let (rows, cols) = (t.n_rows(), t.n_cols());
    let groups = match opts.scope {
        CutoffScope::PerColumn => cols,
        CutoffScope::WholeTable => 1,
    };
    let summaries: Vec<Vec<Option<FenceSummary>>> = map_indices(opts.reps, |r| {
        let mut rng = RngStream::new(opts.seed, r as u64);
        let s = sim.simulate(&mut rng);
        let mut buckets: Vec<Vec<f64>> = vec![Vec::with_capacity(rows); groups];
        for i in 0..rows {
            for j in 0..cols {
                let n = s.counts[i * cols + j];
                if n == 0 {
                    continue;
                }
                if let Some(e) = pearson_residual(n, s.row_totals[i], s.col_totals[j], s.total) {
                    let g = if groups == 1 { 0 } else { j };
                    buckets[g].push(e);
                }
            }
        }
        buckets.iter_mut().map(|b| FenceSummary::of(b)).collect()
    });

    let max_steps = ((opts.ceiling - opts.start) / opts.step + 1e-9).floor().max(0.0) as usize;
    let mut coefs = Vec::with_capacity(groups);
    let mut failed = Vec::new();
    for g in 0..groups {
        let found = (0..=max_steps).map(|k| grid_value(opts.start, opts.step, k)).find(|&c| {
            let flagged = summaries
                .iter()
                .filter(|rep| rep[g].is_some_and(|s| s.flags(c)))
                .count();
            flagged as f64 / opts.reps as f64 <= opts.target_fdr
        });
        match found {
            Some(c) => coefs.push(c),
            None => failed.push(g),
        }
    }
    if !failed.is_empty() {
        return Err(CutoffError::NoConvergence {
            columns: failed,
            ceiling: opts.ceiling,
        });
    }
    if groups == 1 {
        coefs = vec![coefs[0]; cols];
    }
    Ok(coefs)
}

/// `start + k step`, snapped to 1e-9 so grid values print cleanly.
fn grid_value(start: f64, step: f64, k: usize) -> f64 {
    ((start + k as f64 * step) * 1e9).round() / 1e9
}
