use crate::matrix::{Matrix, MaybeMatrix, SignalMatrix};
use crate::stats::fisher_exact_greater;
use crate::table::ContinTable;

use super::EngineError;

/// Cells with counts in `1..=FISHER_MAX_COUNT` are screened by Fisher's test.
pub const FISHER_MAX_COUNT: u64 = 5;

/// Column name that, absent explicit classes, marks the comparison pool.
pub const OTHER_COLUMN: &str = "Other";

/// How comparison columns are chosen for the 2x2 table of a cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DrugClasses {
    /// Named drugs form one class; columns named "Other" form the pool.
    #[default]
    Inferred,
    /// One class label per column.
    Explicit(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct FisherScreen {
    pub pval: MaybeMatrix,
    pub signal: SignalMatrix,
    pub warnings: Vec<String>,
}

/// Comparison columns for drug `j`.
fn comparison_columns(
    t: &ContinTable,
    classes: &DrugClasses,
    exclude_same_class: bool,
    j: usize,
    warnings: &mut Vec<String>,
) -> Vec<usize> {
    let cols = t.n_cols();
    let others = (0..cols).filter(move |&k| k != j);
    if !exclude_same_class {
        return others.collect();
    }
    match classes {
        DrugClasses::Explicit(labels) => others.filter(|&k| labels[k] != labels[j]).collect(),
        DrugClasses::Inferred => {
            let is_other = |k: usize| t.col_names()[k].eq_ignore_ascii_case(OTHER_COLUMN);
            if !(0..cols).any(is_other) {
                warnings.push(format!(
                    "no {OTHER_COLUMN:?} column and no drug classes given; \
                     Fisher tests compare against all other columns"
                ));
                return others.collect();
            }
            let own = is_other(j);
            others.filter(|&k| is_other(k) != own).collect()
        }
    }
}

/// One-sided Fisher exact tests for cells with `0 < n_ij <= 5`.
///
/// For cell `(i, j)` the 2x2 table is `a = n_ij`, `b` = row `i` summed over
/// the comparison columns, `c = n_.j - a` and `d` = comparison column totals
/// minus `b`. Other cells are missing.
pub fn fisher_screen(
    t: &ContinTable,
    classes: &DrugClasses,
    exclude_same_class: bool,
    alpha: f64,
) -> Result<FisherScreen, EngineError> {
    let (rows, cols) = (t.n_rows(), t.n_cols());
    if let DrugClasses::Explicit(labels) = classes {
        if labels.len() != cols {
            return Err(EngineError::ClassLabels {
                expected: cols,
                got: labels.len(),
            });
        }
    }
    let mut warnings = Vec::new();
    let mut pval = Matrix::filled(rows, cols, None);
    let mut signal = Matrix::filled(rows, cols, None);
    for j in 0..cols {
        let needs_test = (0..rows).any(|i| (1..=FISHER_MAX_COUNT).contains(&t.count(i, j)));
        if !needs_test {
            continue;
        }
        let pool = comparison_columns(t, classes, exclude_same_class, j, &mut warnings);
        if pool.is_empty() {
            return Err(EngineError::NoComparisonColumns {
                column: t.col_names()[j].clone(),
            });
        }
        let pool_total: u64 = pool.iter().map(|&k| t.col_totals()[k]).sum();
        for i in 0..rows {
            let a = t.count(i, j);
            if !(1..=FISHER_MAX_COUNT).contains(&a) {
                continue;
            }
            let b: u64 = pool.iter().map(|&k| t.count(i, k)).sum();
            let c = t.col_totals()[j] - a;
            let d = pool_total - b;
            let p = fisher_exact_greater(a, b, c, d);
            pval[(i, j)] = Some(p);
            signal[(i, j)] = Some(u8::from(p <= alpha));
        }
    }
    warnings.dedup();
    Ok(FisherScreen { pval, signal, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(rows: &[Vec<u64>], cols: &[&str]) -> ContinTable {
        let counts = Matrix::from_rows(rows).unwrap();
        let names = (1..=rows.len()).map(|i| format!("AE_{i}")).collect();
        ContinTable::new(counts, names, cols.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn zero_and_large_cells_skipped() {
        let t = labeled(&[vec![0, 9], vec![7, 3]], &["A", "B"]);
        let f = fisher_screen(&t, &DrugClasses::Inferred, false, 0.05).unwrap();
        assert_eq!(f.pval[(0, 0)], None);
        assert_eq!(f.pval[(1, 0)], None);
        assert_eq!(f.pval[(0, 1)], None);
        assert!(f.pval[(1, 1)].is_some());
    }

    #[test]
    fn same_class_exclusion_can_empty_pool() {
        let t = labeled(&[vec![1, 9], vec![7, 3]], &["A", "B"]);
        let classes = DrugClasses::Explicit(vec!["beta".into(), "beta".into()]);
        assert!(matches!(
            fisher_screen(&t, &classes, true, 0.05),
            Err(EngineError::NoComparisonColumns { .. })
        ));
    }

    #[test]
    fn most_extreme_table() {
        // Cell (0,0): a=4, b=0, c=0, d=4.
        let t = labeled(&[vec![4, 0], vec![0, 4]], &["A", "B"]);
        let f = fisher_screen(&t, &DrugClasses::Inferred, false, 0.05).unwrap();
        assert!((f.pval[(0, 0)].unwrap() - 1.0 / 70.0).abs() < 1e-12);
        assert_eq!(f.signal[(0, 0)], Some(1));
    }

    #[test]
    fn other_column_is_pool() {
        let t = labeled(
            &[vec![4, 1, 0], vec![0, 2, 4], vec![1, 1, 100]],
            &["A", "B", "Other"],
        );
        let f = fisher_screen(&t, &DrugClasses::Inferred, true, 0.05).unwrap();
        // Cell (0,0): a=4, b=0 (Other only), c=1, d=104.
        let expected = fisher_exact_greater(4, 0, 1, 104);
        assert_eq!(f.pval[(0, 0)], Some(expected));
        assert!(f.warnings.is_empty());
        // Without exclusion, B joins the pool: b = 1.
        let f = fisher_screen(&t, &DrugClasses::Inferred, false, 0.05).unwrap();
        assert_eq!(f.pval[(0, 0)], Some(fisher_exact_greater(4, 1, 1, 107)));
    }

    #[test]
    fn inferred_without_other_falls_back() {
        let t = labeled(&[vec![4, 1], vec![0, 2]], &["A", "B"]);
        let f = fisher_screen(&t, &DrugClasses::Inferred, true, 0.05).unwrap();
        assert!(f.pval[(0, 0)].is_some());
        assert_eq!(f.warnings.len(), 1);
    }
}
