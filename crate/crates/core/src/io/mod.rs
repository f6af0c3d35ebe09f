//! File formats, reports, heatmaps and bundled synthetic fixtures.

mod csv;
mod fixtures;
mod heatmap;
mod report;

pub use self::csv::{
    format_real, parse_contin_csv, parse_matrix_csv, read_cluster_csv, read_contin_csv, read_contin_csv_with,
    read_matrix_csv, table_to_csv, write_contin_csv, write_matrix_csv, LabeledMatrix, MISSING_TOKEN,
};
pub use fixtures::{fixture_info, fixture_names, fixture_request, load_fixture, FixtureInfo};
pub use heatmap::{emit_heatmap_svg, render_heatmap_svg, ColorScheme, HeatmapOptions};
pub use report::{report_drug_ae_pairs, report_to_csv, write_report_csv, ReportRow, REPORT_HEADER};

use thiserror::Error;

use crate::datagen::DatagenError;
use crate::table::TableError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: u64, column: usize, message: String },
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
}

impl IoError {
    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::File {
            path: path.display().to_string(),
            source,
        }
    }
}
