//! Labeled adverse-event by drug contingency tables, expected counts and
//! standardized Pearson residuals.

use std::collections::HashSet;

use thiserror::Error;

use crate::matrix::{Matrix, MaybeMatrix};
use crate::stats::round_half_even;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("negative count {value} at row {row}, column {col}")]
    NegativeCount { row: usize, col: usize, value: f64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("non-integral count {value} at row {row}, column {col}")]
    NonIntegral { row: usize, col: usize, value: f64 },
    #[error("table must have at least 2 rows and 2 columns, got {rows}x{cols}")]
    EmptyTable { rows: usize, cols: usize },
    #[error("duplicate {axis} label {label:?}")]
    DuplicateLabel { axis: &'static str, label: String },
    #[error("empty {axis} label at position {index}")]
    EmptyLabel { axis: &'static str, index: usize },
    #[error("{axis} label count {got} does not match dimension {expected}")]
    LabelCount {
        axis: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("grand total is zero")]
    ZeroTotal,
}

/// An I x J table of report counts, rows are adverse events and columns drugs.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinTable {
    counts: Matrix<u64>,
    row_names: Vec<String>,
    col_names: Vec<String>,
    row_totals: Vec<u64>,
    col_totals: Vec<u64>,
    total: u64,
}

/// Expected counts `E_ij = n_i. n_.j / n..` under row/column independence.
pub type ExpectedMatrix = Matrix<f64>;

/// Standardized Pearson residuals; `None` where the denominator vanishes.
pub type ResidualMatrix = MaybeMatrix;

/// Unvalidated input to [`validate_and_fix`].
#[derive(Debug, Clone)]
pub struct RawTable {
    pub values: Matrix<f64>,
    pub row_names: Option<Vec<String>>,
    pub col_names: Option<Vec<String>>,
}

/// Result of [`validate_and_fix`]: the table plus any repairs that were made.
#[derive(Debug, Clone)]
pub struct Fixed {
    pub table: ContinTable,
    pub warnings: Vec<String>,
}

impl ContinTable {
    /// Builds a table, enforcing every invariant strictly.
    pub fn new(
        counts: Matrix<u64>,
        row_names: Vec<String>,
        col_names: Vec<String>,
    ) -> Result<Self, TableError> {
        let (rows, cols) = counts.shape();
        if rows < 2 || cols < 2 {
            return Err(TableError::EmptyTable { rows, cols });
        }
        check_labels("row", &row_names, rows)?;
        check_labels("column", &col_names, cols)?;
        Self::from_parts(counts, row_names, col_names)
    }

    /// Builds a table with generated `AE_i` / `drug_j` labels.
    pub fn unlabeled(counts: Matrix<u64>) -> Result<Self, TableError> {
        let (rows, cols) = counts.shape();
        Self::new(counts, default_labels("AE", rows), default_labels("drug", cols))
    }

    pub(crate) fn from_parts(
        counts: Matrix<u64>,
        row_names: Vec<String>,
        col_names: Vec<String>,
    ) -> Result<Self, TableError> {
        let (rows, cols) = counts.shape();
        let mut row_totals = vec![0u64; rows];
        let mut col_totals = vec![0u64; cols];
        for ((i, j), &n) in counts.indexed_iter() {
            row_totals[i] += n;
            col_totals[j] += n;
        }
        let total: u64 = row_totals.iter().sum();
        if total == 0 {
            return Err(TableError::ZeroTotal);
        }
        Ok(Self {
            counts,
            row_names,
            col_names,
            row_totals,
            col_totals,
            total,
        })
    }

    #[inline]
    pub fn counts(&self) -> &Matrix<u64> {
        &self.counts
    }

    #[inline]
    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[(i, j)]
    }

    pub fn row_names(&self) -> &[String] {
        &self.row_names
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn row_totals(&self) -> &[u64] {
        &self.row_totals
    }

    pub fn col_totals(&self) -> &[u64] {
        &self.col_totals
    }

    /// Grand total `n..`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_rows(&self) -> usize {
        self.counts.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.counts.cols()
    }

    pub fn expected_counts(&self) -> ExpectedMatrix {
        let n = self.total as f64;
        Matrix::from_fn(self.n_rows(), self.n_cols(), |i, j| {
            self.row_totals[i] as f64 * self.col_totals[j] as f64 / n
        })
    }

    pub fn std_pearson_residuals(&self) -> ResidualMatrix {
        Matrix::from_fn(self.n_rows(), self.n_cols(), |i, j| {
            pearson_residual(
                self.counts[(i, j)],
                self.row_totals[i],
                self.col_totals[j],
                self.total,
            )
        })
    }

    /// Same table with rows permuted: row `k` of the result is row `order[k]`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let counts = self.counts.select_rows(order);
        let row_names = order.iter().map(|&i| self.row_names[i].clone()).collect();
        Self::from_parts(counts, row_names, self.col_names.clone())
            .expect("row permutation preserves the total")
    }

    pub fn to_raw(&self) -> RawTable {
        RawTable {
            values: self.counts.map(|&n| n as f64),
            row_names: Some(self.row_names.clone()),
            col_names: Some(self.col_names.clone()),
        }
    }
}

/// Standardized Pearson residual of one cell given its margins.
#[inline]
pub(crate) fn pearson_residual(n: u64, row: u64, col: u64, total: u64) -> Option<f64> {
    let total = total as f64;
    let (pr, pc) = (row as f64 / total, col as f64 / total);
    let expected = row as f64 * col as f64 / total;
    let denom = (expected * (1.0 - pr) * (1.0 - pc)).sqrt();
    (denom > 0.0).then(|| (n as f64 - expected) / denom)
}

pub(crate) fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}_{k}")).collect()
}

fn check_labels(axis: &'static str, labels: &[String], expected: usize) -> Result<(), TableError> {
    if labels.len() != expected {
        return Err(TableError::LabelCount {
            axis,
            expected,
            got: labels.len(),
        });
    }
    let mut seen = HashSet::with_capacity(labels.len());
    for (index, label) in labels.iter().enumerate() {
        if label.is_empty() {
            return Err(TableError::EmptyLabel { axis, index });
        }
        if !seen.insert(label.as_str()) {
            return Err(TableError::DuplicateLabel {
                axis,
                label: label.clone(),
            });
        }
    }
    Ok(())
}

/// Checks a raw labeled matrix and repairs what can be repaired.
///
/// Negative or non-finite entries are always rejected. In strict mode
/// non-integral counts and duplicate labels are errors; otherwise counts are
/// rounded half-to-even and duplicates get a numeric suffix. Missing or empty
/// labels are replaced by `AE_i` / `drug_j` in both modes.
pub fn validate_and_fix(raw: &RawTable, strict: bool) -> Result<Fixed, TableError> {
    let (rows, cols) = raw.values.shape();
    let mut warnings = Vec::new();

    let mut counts = Matrix::filled(rows, cols, 0u64);
    let mut rounded = 0usize;
    for ((i, j), &v) in raw.values.indexed_iter() {
        if !v.is_finite() {
            return Err(TableError::NonFinite { row: i, col: j });
        }
        if v < 0.0 {
            return Err(TableError::NegativeCount {
                row: i,
                col: j,
                value: v,
            });
        }
        if v.fract() != 0.0 {
            if strict {
                return Err(TableError::NonIntegral {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            rounded += 1;
        }
        counts[(i, j)] = round_half_even(v) as u64;
    }
    if rounded > 0 {
        warnings.push(format!("rounded {rounded} non-integral count(s) half-to-even"));
    }
    if rows < 2 || cols < 2 {
        return Err(TableError::EmptyTable { rows, cols });
    }

    let row_names = fix_labels("row", "AE", raw.row_names.as_deref(), rows, strict, &mut warnings)?;
    let col_names = fix_labels("column", "drug", raw.col_names.as_deref(), cols, strict, &mut warnings)?;

    let table = ContinTable::from_parts(counts, row_names, col_names)?;
    Ok(Fixed { table, warnings })
}

fn fix_labels(
    axis: &'static str,
    prefix: &str,
    labels: Option<&[String]>,
    n: usize,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<Vec<String>, TableError> {
    let Some(labels) = labels else {
        warnings.push(format!("no {axis} labels given; generated {prefix}_1..{prefix}_{n}"));
        return Ok(default_labels(prefix, n));
    };
    if labels.len() != n {
        return Err(TableError::LabelCount {
            axis,
            expected: n,
            got: labels.len(),
        });
    }
    let mut out: Vec<String> = Vec::with_capacity(n);
    let mut seen: HashSet<String> = HashSet::with_capacity(n);
    for (k, label) in labels.iter().enumerate() {
        let mut label = label.trim().to_string();
        if label.is_empty() {
            label = format!("{prefix}_{}", k + 1);
            warnings.push(format!("empty {axis} label at position {}; using {label}", k + 1));
        }
        if seen.contains(&label) {
            if strict {
                return Err(TableError::DuplicateLabel { axis, label });
            }
            let base = label.clone();
            let mut suffix = 2;
            while seen.contains(&label) {
                label = format!("{base}_{suffix}");
                suffix += 1;
            }
            warnings.push(format!("duplicate {axis} label {base:?} renamed to {label:?}"));
        }
        seen.insert(label.clone());
        out.push(label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(rows: &[Vec<f64>]) -> RawTable {
        RawTable {
            values: Matrix::from_rows(rows).unwrap(),
            row_names: None,
            col_names: None,
        }
    }

    fn table(rows: &[Vec<u64>]) -> ContinTable {
        ContinTable::unlabeled(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn valid_two_by_two() {
        let mut r = raw(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        r.row_names = Some(vec!["a".into(), "b".into()]);
        r.col_names = Some(vec!["x".into(), "y".into()]);
        let fixed = validate_and_fix(&r, true).unwrap();
        assert_eq!(fixed.table.total(), 4);
        assert!(fixed.warnings.is_empty());
    }

    #[test]
    fn negative_count_rejected() {
        let err = validate_and_fix(&raw(&[vec![1.0, -1.0], vec![1.0, 1.0]]), false).unwrap_err();
        assert!(matches!(err, TableError::NegativeCount { row: 0, col: 1, .. }));
    }

    #[test]
    fn unlabeled_gets_generated_labels() {
        let fixed =
            validate_and_fix(&raw(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]), false).unwrap();
        assert_eq!(fixed.table.row_names(), &["AE_1", "AE_2", "AE_3"]);
        assert_eq!(fixed.table.col_names(), &["drug_1", "drug_2"]);
        assert_eq!(fixed.warnings.len(), 2);
    }

    #[test]
    fn strict_rejects_fractions_lenient_rounds_half_even() {
        let r = raw(&[vec![2.5, 3.5], vec![1.0, 0.4]]);
        assert!(matches!(validate_and_fix(&r, true), Err(TableError::NonIntegral { .. })));
        let t = validate_and_fix(&r, false).unwrap().table;
        assert_eq!(t.counts().as_slice(), &[2, 4, 1, 0]);
    }

    #[test]
    fn too_small_rejected() {
        let err = validate_and_fix(&raw(&[vec![1.0, 2.0, 3.0]]), false).unwrap_err();
        assert_eq!(err, TableError::EmptyTable { rows: 1, cols: 3 });
    }

    #[test]
    fn zero_total_rejected() {
        let err = validate_and_fix(&raw(&[vec![0.0, 0.0], vec![0.0, 0.0]]), false).unwrap_err();
        assert_eq!(err, TableError::ZeroTotal);
    }

    #[test]
    fn duplicates_strict_and_lenient() {
        let mut r = raw(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        r.row_names = Some(vec!["Pain".into(), "Pain".into()]);
        r.col_names = Some(vec!["x".into(), "y".into()]);
        assert!(matches!(validate_and_fix(&r, true), Err(TableError::DuplicateLabel { .. })));
        let t = validate_and_fix(&r, false).unwrap().table;
        assert_eq!(t.row_names(), &["Pain", "Pain_2"]);
    }

    #[test]
    fn expected_counts_examples() {
        let e = table(&[vec![1, 1], vec![1, 1]]).expected_counts();
        assert!(e.iter().all(|&v| v == 1.0));
        let e = table(&[vec![2, 0], vec![0, 2]]).expected_counts();
        assert!(e.iter().all(|&v| v == 1.0));
        let e = table(&[vec![10, 0], vec![0, 0], vec![0, 10]]).expected_counts();
        assert_eq!(e.as_slice(), &[5.0, 5.0, 0.0, 0.0, 5.0, 5.0]);
    }

    #[test]
    fn residual_examples() {
        let r = table(&[vec![1, 1], vec![1, 1]]).std_pearson_residuals();
        assert!(r.iter().all(|v| *v == Some(0.0)));
        let r = table(&[vec![2, 0], vec![0, 2]]).std_pearson_residuals();
        assert_eq!(r.as_slice(), &[Some(2.0), Some(-2.0), Some(-2.0), Some(2.0)]);
    }

    #[test]
    fn zero_row_marginal_is_missing() {
        let r = table(&[vec![10, 0], vec![0, 0], vec![0, 10]]).std_pearson_residuals();
        assert_eq!(r.row(1), &[None, None]);
        assert!(r.row(0).iter().all(Option::is_some));
    }

    #[test]
    fn permute_rows_relabels() {
        let t = table(&[vec![1, 2], vec![3, 4], vec![5, 6]]);
        let p = t.permute_rows(&[2, 0, 1]);
        assert_eq!(p.row_names(), &["AE_3", "AE_1", "AE_2"]);
        assert_eq!(p.count(0, 1), 6);
    }
}
