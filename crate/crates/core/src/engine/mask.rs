use crate::cutoff::CutoffSet;
use crate::matrix::{Matrix, MaybeMatrix, SignalMatrix};
use crate::table::{ContinTable, ResidualMatrix};

/// Residuals with univariate outliers masked out.
pub type UMatrix = MaybeMatrix;

/// Masks outlying residuals and flags upper outliers.
///
/// Nonzero cells are masked when `|e| > c+` (either tail) but only flagged
/// when `e > c+`. Zero cells are masked when `e < c0` and never flagged.
pub fn build_u_matrix(res: &ResidualMatrix, counts: &ContinTable, cut: &CutoffSet) -> (UMatrix, SignalMatrix) {
    let (rows, cols) = res.shape();
    let mut u = Matrix::filled(rows, cols, None);
    let mut signal = Matrix::filled(rows, cols, None);
    for i in 0..rows {
        for j in 0..cols {
            let Some(e) = res[(i, j)] else { continue };
            let upper = cut.upper[j];
            if counts.count(i, j) > 0 {
                signal[(i, j)] = Some(u8::from(e > upper));
                if e.abs() <= upper {
                    u[(i, j)] = Some(e);
                }
            } else {
                signal[(i, j)] = Some(0);
                if e >= cut.zero_lower[j] {
                    u[(i, j)] = Some(e);
                }
            }
        }
    }
    (u, signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::CutoffScope;

    fn cut(upper: f64, zero_lower: f64) -> CutoffSet {
        CutoffSet {
            upper: vec![upper; 2],
            zero_lower: vec![zero_lower; 2],
            scope: CutoffScope::PerColumn,
            warnings: vec![],
        }
    }

    fn one_cell(e: f64, n: u64) -> (Option<f64>, Option<u8>) {
        let t = ContinTable::unlabeled(Matrix::from_rows(&[vec![n, 1], vec![1, 1]]).unwrap()).unwrap();
        let res = Matrix::from_rows(&[vec![Some(e), Some(0.0)], vec![Some(0.0), None]]).unwrap();
        let (u, s) = build_u_matrix(&res, &t, &cut(4.0, -2.0));
        assert_eq!(u[(1, 1)], None);
        assert_eq!(s[(1, 1)], None);
        (u[(0, 0)], s[(0, 0)])
    }

    #[test]
    fn inside_fence_kept() {
        assert_eq!(one_cell(3.0, 5), (Some(3.0), Some(0)));
    }

    #[test]
    fn upper_outlier_masked_and_flagged() {
        assert_eq!(one_cell(5.0, 5), (None, Some(1)));
    }

    #[test]
    fn lower_outlier_masked_not_flagged() {
        assert_eq!(one_cell(-5.0, 5), (None, Some(0)));
    }

    #[test]
    fn zero_cells_use_lower_cutoff() {
        assert_eq!(one_cell(-1.0, 0), (Some(-1.0), Some(0)));
        assert_eq!(one_cell(-3.0, 0), (None, Some(0)));
        assert_eq!(one_cell(9.0, 0), (Some(9.0), Some(0)));
    }
}
