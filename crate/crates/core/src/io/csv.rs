use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::IoError;
use crate::matrix::{Matrix, MaybeMatrix};
use crate::table::{validate_and_fix, ContinTable, RawTable};

/// Token written for missing values.
pub const MISSING_TOKEN: &str = "NA";

/// A real-valued matrix with row and column labels, entries possibly missing.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub values: MaybeMatrix,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
}

impl LabeledMatrix {
    pub fn new(values: MaybeMatrix, row_names: Vec<String>, col_names: Vec<String>) -> Result<Self, IoError> {
        if values.shape() != (row_names.len(), col_names.len()) {
            return Err(IoError::DimensionMismatch(format!(
                "{}x{} values with {} row and {} column labels",
                values.rows(),
                values.cols(),
                row_names.len(),
                col_names.len()
            )));
        }
        Ok(Self {
            values,
            row_names,
            col_names,
        })
    }

    /// Labels taken from `t`.
    pub fn like(t: &ContinTable, values: MaybeMatrix) -> Result<Self, IoError> {
        Self::new(values, t.row_names().to_vec(), t.col_names().to_vec())
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_real(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    format!("{x}")
}

struct Grid {
    col_names: Vec<String>,
    row_names: Vec<String>,
    cells: Vec<Vec<(u64, String)>>,
}

fn read_grid(text: &str) -> Result<Grid, IoError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => {
            return Err(IoError::Parse {
                line: 1,
                column: 1,
                message: "empty file".into(),
            })
        }
    };
    let first = header.get(0).unwrap_or("").trim_start_matches('\u{feff}');
    if !(first.is_empty() || first == "AE") {
        return Err(IoError::Parse {
            line: 1,
            column: 1,
            message: format!("first header cell must be empty or \"AE\", found {first:?}"),
        });
    }
    let col_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if col_names.is_empty() {
        return Err(IoError::Parse {
            line: 1,
            column: 2,
            message: "no column labels".into(),
        });
    }
    let mut row_names = Vec::new();
    let mut cells = Vec::new();
    for record in records {
        let record: StringRecord = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != col_names.len() + 1 {
            return Err(IoError::Parse {
                line,
                column: record.len().min(col_names.len() + 1),
                message: format!("expected {} fields, found {}", col_names.len() + 1, record.len()),
            });
        }
        row_names.push(record[0].to_string());
        cells.push(record.iter().skip(1).map(|s| (line, s.trim().to_string())).collect());
    }
    if row_names.is_empty() {
        return Err(IoError::Parse {
            line: 2,
            column: 1,
            message: "no data rows".into(),
        });
    }
    Ok(Grid {
        col_names,
        row_names,
        cells,
    })
}

/// Parses contingency-table CSV text. `strict` is passed to
/// [`validate_and_fix`]; warnings from lenient repairs are returned.
pub fn parse_contin_csv(text: &str, strict: bool) -> Result<(ContinTable, Vec<String>), IoError> {
    let grid = read_grid(text)?;
    let rows = grid.row_names.len();
    let cols = grid.col_names.len();
    let mut values = Vec::with_capacity(rows * cols);
    for row in &grid.cells {
        for (j, (line, cell)) in row.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| IoError::Parse {
                line: *line,
                column: j + 2,
                message: format!("count {cell:?} in column {:?} is not a number", grid.col_names[j]),
            })?;
            values.push(v);
        }
    }
    let raw = RawTable {
        values: Matrix::from_vec(rows, cols, values).expect("grid is rectangular"),
        row_names: Some(grid.row_names),
        col_names: Some(grid.col_names),
    };
    let fixed = validate_and_fix(&raw, strict)?;
    Ok((fixed.table, fixed.warnings))
}

fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))
}

/// Reads and strictly validates a contingency table.
pub fn read_contin_csv(path: impl AsRef<Path>) -> Result<ContinTable, IoError> {
    Ok(parse_contin_csv(&read_text(path.as_ref())?, true)?.0)
}

pub fn read_contin_csv_with(path: impl AsRef<Path>, strict: bool) -> Result<(ContinTable, Vec<String>), IoError> {
    parse_contin_csv(&read_text(path.as_ref())?, strict)
}

/// Parses a labeled real matrix; `NA` (or an empty cell) is missing.
pub fn parse_matrix_csv(text: &str) -> Result<LabeledMatrix, IoError> {
    let grid = read_grid(text)?;
    let (rows, cols) = (grid.row_names.len(), grid.col_names.len());
    let mut values = Vec::with_capacity(rows * cols);
    for row in &grid.cells {
        for (j, (line, cell)) in row.iter().enumerate() {
            let v = match cell.as_str() {
                "" | MISSING_TOKEN | "NaN" | "nan" => None,
                "Inf" | "inf" => Some(f64::INFINITY),
                "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
                s => Some(s.parse::<f64>().map_err(|_| IoError::Parse {
                    line: *line,
                    column: j + 2,
                    message: format!("value {s:?} is not a number"),
                })?),
            };
            values.push(v);
        }
    }
    LabeledMatrix::new(
        Matrix::from_vec(rows, cols, values).expect("grid is rectangular"),
        grid.row_names,
        grid.col_names,
    )
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<LabeledMatrix, IoError> {
    parse_matrix_csv(&read_text(path.as_ref())?)
}

fn write_grid<'a>(
    col_names: &[String],
    rows: impl Iterator<Item = (&'a str, Vec<String>)>,
) -> Result<String, IoError> {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(std::iter::once("").chain(col_names.iter().map(String::as_str)))?;
    for (name, cells) in rows {
        w.write_record(std::iter::once(name.to_string()).chain(cells))?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::file(Path::new("<buffer>"), e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Contingency table as CSV text.
pub fn table_to_csv(t: &ContinTable) -> String {
    write_grid(
        t.col_names(),
        t.row_names()
            .iter()
            .enumerate()
            .map(|(i, name)| (name.as_str(), t.counts().row(i).iter().map(u64::to_string).collect())),
    )
    .expect("in-memory write")
}

fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|e| IoError::file(path, e))
}

pub fn write_contin_csv(t: &ContinTable, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_file(path.as_ref(), &table_to_csv(t))
}

impl LabeledMatrix {
    pub fn to_csv(&self, missing_token: &str) -> String {
        write_grid(
            &self.col_names,
            self.row_names.iter().enumerate().map(|(i, name)| {
                let cells = self
                    .values
                    .row(i)
                    .iter()
                    .map(|v| v.map_or_else(|| missing_token.to_string(), format_real))
                    .collect();
                (name.as_str(), cells)
            }),
        )
        .expect("in-memory write")
    }
}

/// Writes a labeled matrix at full precision with `missing_token` for gaps.
pub fn write_matrix_csv(m: &LabeledMatrix, path: impl AsRef<Path>, missing_token: &str) -> Result<(), IoError> {
    write_file(path.as_ref(), &m.to_csv(missing_token))
}

/// Reads a cluster assignment with columns `idx,AE`. Returns the cluster
/// index of each AE name in file order.
pub fn read_cluster_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, String)>, IoError> {
    let text = read_text(path.as_ref())?;
    let mut reader = ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| IoError::Parse {
            line: 1,
            column: 1,
            message: format!("missing {name:?} column"),
        })
    };
    let (idx_col, ae_col) = (find("idx")?, find("AE")?);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let idx = record[idx_col].trim().parse::<usize>().map_err(|_| IoError::Parse {
            line,
            column: idx_col + 1,
            message: format!("cluster index {:?} is not a nonnegative integer", &record[idx_col]),
        })?;
        out.push((idx, record[ae_col].to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_label_row_parses() {
        let text = ",Acebutolol,Atenolol,Bisoprolol,Carvedilol,Metoprolol,Nadolol,Propranolol,Timolol,Other\n\
                    Pain,3582,455,977,110,457,307,166,348,1074063\n\
                    Nausea,1,2,3,4,5,6,7,8,9\n";
        let (t, w) = parse_contin_csv(text, true).unwrap();
        assert!(w.is_empty());
        let pain = t.row_names().iter().position(|r| r == "Pain").unwrap();
        let ace = t.col_names().iter().position(|c| c == "Acebutolol").unwrap();
        assert_eq!(t.count(pain, ace), 3582);
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(parse_contin_csv("", true), Err(IoError::Parse { line: 1, .. })));
    }

    #[test]
    fn non_numeric_cell_named() {
        let err = parse_contin_csv(",A,B\nx,1,2\ny,3,oops\n", true).unwrap_err();
        match err {
            IoError::Parse { line, column, message } => {
                assert_eq!((line, column), (3, 3));
                assert!(message.contains("oops"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ae_header_accepted_and_ragged_rejected() {
        assert!(parse_contin_csv("AE,A,B\nx,1,2\ny,3,4\n", true).is_ok());
        assert!(matches!(
            parse_contin_csv(",A,B\nx,1,2\ny,3\n", true),
            Err(IoError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn table_round_trip_with_quoted_label() {
        let counts = Matrix::from_rows(&[vec![1, 2], vec![3, 4]]).unwrap();
        let t = ContinTable::new(counts, vec!["a, b".into(), "c".into()], vec!["X".into(), "Y".into()]).unwrap();
        let text = table_to_csv(&t);
        assert!(text.starts_with(",X,Y\n\"a, b\",1,2\n"));
        assert_eq!(parse_contin_csv(&text, true).unwrap().0, t);
    }

    #[test]
    fn matrix_missing_and_precision() {
        let values = Matrix::from_rows(&[vec![Some(0.1 + 0.2), None], vec![Some(1.0), Some(1e-300)]]).unwrap();
        let m = LabeledMatrix::new(values, vec!["r1".into(), "r2".into()], vec!["c1".into(), "c2".into()]).unwrap();
        let text = m.to_csv(MISSING_TOKEN);
        assert!(text.contains(",NA\n"));
        assert!(text.contains("r2,1,"));
        assert_eq!(parse_matrix_csv(&text).unwrap(), m);
    }
}
