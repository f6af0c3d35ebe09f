//! Modified Detecting Deviating Cells (MDDC) for adverse-event by drug
//! contingency tables.
//!
//! The pipeline flags cells whose standardized Pearson residuals are
//! univariate outliers, then looks for cells that deviate from what
//! correlated adverse events predict. Cutoffs come either from boxplot
//! fences or from a Monte Carlo null of column maxima.
//!
//! ```
//! use mddc_core::{run_mddc, ContinTable, Matrix, MddcOptions};
//!
//! let counts = Matrix::from_rows(&[
//!     vec![40, 5, 6, 300],
//!     vec![4, 6, 5, 310],
//!     vec![6, 5, 4, 290],
//!     vec![5, 6, 6, 305],
//! ])
//! .unwrap();
//! let t = ContinTable::unlabeled(counts).unwrap();
//! let result = run_mddc(&t, &MddcOptions::boxplot()).unwrap();
//! assert_eq!(result.univariate_signal[(0, 0)], Some(1));
//! ```

pub mod cutoff;
pub mod datagen;
pub mod engine;
pub mod io;
pub mod matrix;
mod parallel;
pub mod stats;
pub mod table;

pub use cutoff::{find_optimal_coef, Coef, CoefSearch, CutoffError, CutoffScope, CutoffSet};
pub use datagen::{
    generate_tables, generate_tables_with_tol, relative_total_deviation, ClusterSpec, DatagenError,
    GenerationRequest, SignalStrengthMatrix, WithinCorr,
};
pub use engine::{run_mddc, EngineError, MddcOptions, MddcResult, Method};
pub use io::IoError;
pub use matrix::{Matrix, MaybeMatrix, SignalMatrix};
pub use stats::StatsError;
pub use table::{validate_and_fix, ContinTable, RawTable, TableError};
