use std::path::Path;

use super::IoError;
use crate::matrix::SignalMatrix;
use crate::table::ContinTable;

pub const REPORT_HEADER: [&str; 5] = ["Drug", "AE", "Observed Count", "Expected Count", "Std Pearson Resid"];

/// One flagged (drug, AE) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub drug: String,
    pub ae: String,
    pub observed: u64,
    pub expected: f64,
    /// `None` when the residual is undefined.
    pub std_pearson_res: Option<f64>,
}

/// Rows for every cell with signal 1, grouped by drug in column order and by
/// descending expected count within a drug.
pub fn report_drug_ae_pairs(t: &ContinTable, signal: &SignalMatrix) -> Result<Vec<ReportRow>, IoError> {
    if signal.shape() != (t.n_rows(), t.n_cols()) {
        return Err(IoError::DimensionMismatch(format!(
            "signal matrix is {}x{}, table is {}x{}",
            signal.rows(),
            signal.cols(),
            t.n_rows(),
            t.n_cols()
        )));
    }
    if let Some(((i, j), v)) = signal.indexed_iter().find(|(_, v)| matches!(v, Some(s) if *s > 1)) {
        return Err(IoError::DimensionMismatch(format!(
            "signal entry at ({i}, {j}) is {v:?}, expected 0, 1 or missing"
        )));
    }
    let expected = t.expected_counts();
    let res = t.std_pearson_residuals();
    let mut rows = Vec::new();
    for j in 0..t.n_cols() {
        let mut flagged: Vec<usize> = (0..t.n_rows()).filter(|&i| signal[(i, j)] == Some(1)).collect();
        flagged.sort_by(|&a, &b| expected[(b, j)].total_cmp(&expected[(a, j)]).then(a.cmp(&b)));
        rows.extend(flagged.into_iter().map(|i| ReportRow {
            drug: t.col_names()[j].clone(),
            ae: t.row_names()[i].clone(),
            observed: t.count(i, j),
            expected: expected[(i, j)],
            std_pearson_res: res[(i, j)],
        }));
    }
    Ok(rows)
}

/// Report CSV with four decimals for the real columns.
pub fn report_to_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in rows {
        let res = r.std_pearson_res.map_or_else(|| super::MISSING_TOKEN.to_string(), |v| format!("{v:.4}"));
        w.write_record([
            r.drug.clone(),
            r.ae.clone(),
            r.observed.to_string(),
            format!("{:.4}", r.expected),
            res,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("UTF-8")
}

pub fn write_report_csv(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, report_to_csv(rows)).map_err(|e| IoError::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn diag() -> ContinTable {
        ContinTable::unlabeled(Matrix::from_rows(&[vec![2, 0], vec![0, 2]]).unwrap()).unwrap()
    }

    #[test]
    fn all_zero_signal_empty() {
        let rows = report_drug_ae_pairs(&diag(), &Matrix::filled(2, 2, Some(0))).unwrap();
        assert!(rows.is_empty());
        assert_eq!(report_to_csv(&rows), "Drug,AE,Observed Count,Expected Count,Std Pearson Resid\n");
    }

    #[test]
    fn single_flagged_cell() {
        let mut s = Matrix::filled(2, 2, Some(0));
        s[(1, 1)] = Some(1);
        let rows = report_drug_ae_pairs(&diag(), &s).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].observed, 2);
        assert_eq!(rows[0].expected, 1.0);
        assert!((rows[0].std_pearson_res.unwrap() - 2.0).abs() < 1e-12);
        assert!(report_to_csv(&rows).ends_with("drug_2,AE_2,2,1.0000,2.0000\n"));
    }

    #[test]
    fn ordering_by_drug_then_expected() {
        let t = ContinTable::unlabeled(Matrix::from_rows(&[vec![1, 5], vec![9, 5], vec![4, 5]]).unwrap()).unwrap();
        let s = Matrix::filled(3, 2, Some(1));
        let order: Vec<(String, String)> = report_drug_ae_pairs(&t, &s)
            .unwrap()
            .into_iter()
            .map(|r| (r.drug, r.ae))
            .collect();
        assert_eq!(order[0], ("drug_1".into(), "AE_2".into()));
        assert_eq!(order[1], ("drug_1".into(), "AE_3".into()));
        assert_eq!(order[3].0, "drug_2");
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            report_drug_ae_pairs(&diag(), &Matrix::filled(3, 2, Some(0))),
            Err(IoError::DimensionMismatch(_))
        ));
    }
}
