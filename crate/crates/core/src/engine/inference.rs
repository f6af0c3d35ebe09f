use crate::matrix::{Matrix, MaybeMatrix};
use crate::stats::{bh_adjust, normal_upper_tail};
use crate::table::ResidualMatrix;

use super::correlation::FittedMatrix;

/// Family over which step-5 p-values are adjusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BhFamily {
    #[default]
    WholeTable,
    PerColumn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub pval: MaybeMatrix,
    pub adj_pval: MaybeMatrix,
    /// Per-column mean of `e - u_hat` over usable rows.
    pub column_mean: Vec<Option<f64>>,
    /// Per-column population variance of `e - u_hat`.
    pub column_var: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// Standardizes `e - u_hat` within each column and converts to upper-tail
/// normal p-values, then applies Benjamini-Hochberg.
pub fn standardize_and_test(res: &ResidualMatrix, fit: &FittedMatrix, family: BhFamily) -> Inference {
    let (rows, cols) = res.shape();
    let mut pval = Matrix::filled(rows, cols, None);
    let mut column_mean = vec![None; cols];
    let mut column_var = vec![None; cols];
    let mut warnings = Vec::new();
    for j in 0..cols {
        let dev: Vec<(usize, f64)> = (0..rows)
            .filter_map(|i| Some((i, res[(i, j)]? - fit.values[(i, j)]?)))
            .collect();
        if dev.len() < 2 {
            warnings.push(format!("column {j}: fewer than 2 usable cells, no step-5 p-values"));
            continue;
        }
        let n = dev.len() as f64;
        let a = dev.iter().map(|d| d.1).sum::<f64>() / n;
        let b = dev.iter().map(|d| (d.1 - a).powi(2)).sum::<f64>() / n;
        let scale = dev.iter().map(|d| d.1 * d.1).fold(0.0, f64::max);
        if !(b > 1e-20 * scale) {
            warnings.push(format!("column {j}: zero variance of deviations, no step-5 p-values"));
            continue;
        }
        column_mean[j] = Some(a);
        column_var[j] = Some(b);
        let sd = b.sqrt();
        for (i, d) in dev {
            pval[(i, j)] = Some(normal_upper_tail((d - a) / sd));
        }
    }
    let adj_pval = match family {
        BhFamily::WholeTable => {
            let adj = bh_adjust(pval.as_slice());
            Matrix::from_vec(rows, cols, adj).expect("shape")
        }
        BhFamily::PerColumn => {
            let mut out = Matrix::filled(rows, cols, None);
            for j in 0..cols {
                for (i, v) in bh_adjust(&pval.column(j)).into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
            out
        }
    };
    Inference {
        pval,
        adj_pval,
        column_mean,
        column_var,
        warnings,
    }
}

/// Standardized deviations `r_ij` as used for the p-values (for diagnostics).
pub fn standardized_deviations(res: &ResidualMatrix, fit: &FittedMatrix, inf: &Inference) -> MaybeMatrix {
    Matrix::from_fn(res.rows(), res.cols(), |i, j| {
        let (a, b) = (inf.column_mean[j]?, inf.column_var[j]?);
        Some((res[(i, j)]? - fit.values[(i, j)]? - a) / b.sqrt())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted(values: MaybeMatrix) -> FittedMatrix {
        FittedMatrix { values, fits: vec![] }
    }

    #[test]
    fn three_deviations() {
        let res = Matrix::from_rows(&[vec![Some(1.0)], vec![Some(2.0)], vec![Some(3.0)]]).unwrap();
        let fit = fitted(Matrix::filled(3, 1, Some(0.0)));
        let inf = standardize_and_test(&res, &fit, BhFamily::WholeTable);
        assert_eq!(inf.column_mean[0], Some(2.0));
        assert!((inf.column_var[0].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let r = standardized_deviations(&res, &fit, &inf);
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (i, e) in expected.iter().enumerate() {
            assert!((r[(i, 0)].unwrap() - e).abs() < 1e-12);
        }
        assert_eq!(inf.pval[(1, 0)], Some(0.5));
    }

    #[test]
    fn equal_deviations_make_column_missing() {
        let res = Matrix::filled(4, 1, Some(0.1));
        let fit = fitted(Matrix::filled(4, 1, Some(-0.2)));
        let inf = standardize_and_test(&res, &fit, BhFamily::WholeTable);
        assert!(inf.pval.iter().all(Option::is_none));
        assert_eq!(inf.warnings.len(), 1);
    }

    #[test]
    fn single_usable_cell_missing() {
        let res = Matrix::from_rows(&[vec![Some(1.0)], vec![Some(2.0)]]).unwrap();
        let fit = fitted(Matrix::from_rows(&[vec![Some(0.0)], vec![None]]).unwrap());
        let inf = standardize_and_test(&res, &fit, BhFamily::PerColumn);
        assert!(inf.pval.iter().all(Option::is_none));
    }
}
