//! The MDDC pipeline: univariate masking, Fisher screening of sparse cells,
//! connected-AE regression and standardized-deviation inference.

mod correlation;
mod fisher;
mod inference;
mod mask;

pub use correlation::{
    connect_aes, fit_predictions, pairwise_correlation, ConnectedAeGraph, FittedMatrix, Neighbor, Orientation,
    PairFit, MIN_COMPLETE,
};
pub use fisher::{fisher_screen, DrugClasses, FisherScreen, FISHER_MAX_COUNT, OTHER_COLUMN};
pub use inference::{standardize_and_test, standardized_deviations, BhFamily, Inference};
pub use mask::{build_u_matrix, UMatrix};

use thiserror::Error;

use crate::cutoff::{self, Coef, CutoffError, CutoffScope, CutoffSet, MC_MIN_COUNT};
use crate::matrix::{Matrix, MaybeMatrix, SignalMatrix};
use crate::stats::bh_adjust;
use crate::table::ContinTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("cutoff selection failed for column {column:?}: {source}")]
    ColumnCutoff { column: String, source: CutoffError },
    #[error("cutoff selection failed: {0}")]
    Cutoff(#[from] CutoffError),
    #[error("no comparison columns remain for Fisher tests of column {column:?}")]
    NoComparisonColumns { column: String },
    #[error("drug class list has {got} entries, table has {expected} columns")]
    ClassLabels { expected: usize, got: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

/// How the upper univariate cutoff is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Boxplot,
    #[default]
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MddcOptions {
    pub method: Method,
    /// Boxplot coefficient (boxplot method only).
    pub coef: Coef,
    pub col_specific: bool,
    pub separate: bool,
    pub c_corr: f64,
    pub orientation: Orientation,
    /// Monte Carlo replications.
    pub reps: usize,
    /// Quantile of the null maxima used as the upper cutoff.
    pub quantile: f64,
    pub exclude_same_class: bool,
    pub drug_classes: DrugClasses,
    /// Fisher test level.
    pub alpha: f64,
    /// Monte Carlo p-value threshold for step-2 signals.
    pub mc_signal_level: f64,
    /// Compare BH-adjusted Monte Carlo p-values instead of raw ones.
    pub mc_adjust: bool,
    pub bh_family: BhFamily,
    pub seed: u64,
}

impl Default for MddcOptions {
    fn default() -> Self {
        Self {
            method: Method::MonteCarlo,
            coef: Coef::Scalar(1.5),
            col_specific: true,
            separate: true,
            c_corr: 0.8,
            orientation: Orientation::Rows,
            reps: 10_000,
            quantile: 0.95,
            exclude_same_class: true,
            drug_classes: DrugClasses::Inferred,
            alpha: 0.05,
            mc_signal_level: 0.05,
            mc_adjust: false,
            bh_family: BhFamily::WholeTable,
            seed: 42,
        }
    }
}

impl MddcOptions {
    pub fn boxplot() -> Self {
        Self {
            method: Method::Boxplot,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidOption(msg));
        if !(0.0..=1.0).contains(&self.c_corr) {
            return bad(format!("correlation limit {} outside [0, 1]", self.c_corr));
        }
        if self.method == Method::MonteCarlo {
            if self.reps == 0 {
                return bad("reps must be at least 1".into());
            }
            if !(self.quantile > 0.0 && self.quantile <= 1.0) {
                return bad(format!("quantile {} outside (0, 1]", self.quantile));
            }
            if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.mc_signal_level) {
                return bad("significance levels must lie in [0, 1]".into());
            }
        }
        Ok(())
    }
}

/// Everything MDDC produces for one table.
#[derive(Debug, Clone)]
pub struct MddcResult {
    pub method: Method,
    pub cutoffs: CutoffSet,
    /// Step-2 signals: boxplot upper outliers, or Monte Carlo signals for
    /// cells with count above 5.
    pub univariate_signal: SignalMatrix,
    /// Monte Carlo p-values (count above 5). `None` for the boxplot method.
    pub mc_pval: Option<MaybeMatrix>,
    /// Fisher p-values for counts in 1..=5. `None` for the boxplot method.
    pub fisher_pval: Option<MaybeMatrix>,
    pub fisher_signal: Option<SignalMatrix>,
    pub u_matrix: UMatrix,
    pub graph: ConnectedAeGraph,
    pub fitted: FittedMatrix,
    pub corr_signal_pval: MaybeMatrix,
    pub corr_signal_adj_pval: MaybeMatrix,
    pub column_mean: Vec<Option<f64>>,
    pub column_var: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

impl MddcResult {
    /// Step-2 p-values: Monte Carlo where available, Fisher elsewhere.
    pub fn step2_pval(&self) -> Option<MaybeMatrix> {
        let mc = self.mc_pval.as_ref()?;
        let fisher = self.fisher_pval.as_ref()?;
        Some(Matrix::from_fn(mc.rows(), mc.cols(), |i, j| mc[(i, j)].or(fisher[(i, j)])))
    }

    /// Cells whose step-5 p-value (adjusted or raw) is at most `level`.
    pub fn corr_signal(&self, level: f64, adjusted: bool) -> SignalMatrix {
        let p = if adjusted {
            &self.corr_signal_adj_pval
        } else {
            &self.corr_signal_pval
        };
        p.map(|v| v.map(|p| u8::from(p <= level)))
    }
}

fn with_column(t: &ContinTable, e: CutoffError) -> EngineError {
    match &e {
        CutoffError::AllInfinite { column } => EngineError::ColumnCutoff {
            column: t.col_names()[*column].clone(),
            source: e,
        },
        _ => EngineError::Cutoff(e),
    }
}

/// Runs MDDC end to end.
pub fn run_mddc(t: &ContinTable, opts: &MddcOptions) -> Result<MddcResult, EngineError> {
    opts.validate()?;
    let res = t.std_pearson_residuals();
    let mut warnings = Vec::new();

    let (cutoffs, univariate_signal, u_matrix, mc_pval, fisher) = match opts.method {
        Method::Boxplot => {
            let cut = cutoff::boxplot_cutoffs(&res, t, &opts.coef, opts.col_specific, opts.separate)
                .map_err(|e| with_column(t, e))?;
            let (u, signal) = build_u_matrix(&res, t, &cut);
            (cut, signal, u, None, None)
        }
        Method::MonteCarlo => {
            let scope = CutoffScope::from_col_specific(opts.col_specific);
            let null = cutoff::mc_null_simulation(t, opts.reps, opts.seed).map_err(|e| with_column(t, e))?;
            let cut = cutoff::mc_cutoffs(&null, opts.quantile, &res, t, opts.col_specific, opts.separate)
                .map_err(|e| with_column(t, e))?;
            let (mut u, _) = build_u_matrix(&res, t, &cut);
            let pval = cutoff::mc_pvalues(&null, &res, t, scope);
            let compared = if opts.mc_adjust {
                Matrix::from_vec(pval.rows(), pval.cols(), bh_adjust(pval.as_slice())).expect("shape")
            } else {
                pval.clone()
            };
            let signal = Matrix::from_fn(t.n_rows(), t.n_cols(), |i, j| {
                if t.count(i, j) <= MC_MIN_COUNT {
                    return None;
                }
                compared[(i, j)].map(|p| u8::from(p <= opts.mc_signal_level))
            });
            // A flagged cell is always treated as an outlier in U.
            for ((i, j), s) in signal.indexed_iter() {
                if *s == Some(1) {
                    u[(i, j)] = None;
                }
            }
            let fisher = fisher_screen(t, &opts.drug_classes, opts.exclude_same_class, opts.alpha)?;
            (cut, signal, u, Some(pval), Some(fisher))
        }
    };
    warnings.extend(cutoffs.warnings.iter().cloned());

    let graph = connect_aes(&u_matrix, opts.c_corr, opts.orientation);
    let fitted = fit_predictions(&u_matrix, &graph);
    let inference = standardize_and_test(&res, &fitted, opts.bh_family);
    warnings.extend(inference.warnings.iter().map(|w| {
        // Name the column instead of its index.
        match w.strip_prefix("column ").and_then(|s| s.split_once(':')) {
            Some((idx, rest)) => match idx.parse::<usize>() {
                Ok(j) => format!("column {:?}:{rest}", t.col_names()[j]),
                Err(_) => w.clone(),
            },
            None => w.clone(),
        }
    }));

    let (fisher_pval, fisher_signal) = match fisher {
        Some(f) => {
            warnings.extend(f.warnings);
            (Some(f.pval), Some(f.signal))
        }
        None => (None, None),
    };

    Ok(MddcResult {
        method: opts.method,
        cutoffs,
        univariate_signal,
        mc_pval,
        fisher_pval,
        fisher_signal,
        u_matrix,
        graph,
        fitted,
        corr_signal_pval: inference.pval,
        corr_signal_adj_pval: inference.adj_pval,
        column_mean: inference.column_mean,
        column_var: inference.column_var,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> ContinTable {
        let rows = vec![
            vec![120, 30, 25, 400],
            vec![20, 35, 28, 390],
            vec![22, 31, 90, 410],
            vec![18, 29, 27, 380],
            vec![21, 2, 26, 395],
            vec![25, 33, 30, 405],
        ];
        let counts = Matrix::from_rows(&rows).unwrap();
        let names = (1..=6).map(|i| format!("AE_{i}")).collect();
        let cols = ["A", "B", "C", "Other"].iter().map(|s| s.to_string()).collect();
        ContinTable::new(counts, names, cols).unwrap()
    }

    #[test]
    fn boxplot_run_shapes() {
        let t = small_table();
        let r = run_mddc(&t, &MddcOptions::boxplot()).unwrap();
        assert_eq!(r.univariate_signal.shape(), (6, 4));
        assert!(r.mc_pval.is_none() && r.fisher_signal.is_none());
        assert_eq!(r.univariate_signal[(0, 0)], Some(1));
    }

    #[test]
    fn monte_carlo_run_partitions_cells() {
        let t = small_table();
        let opts = MddcOptions {
            reps: 500,
            ..MddcOptions::default()
        };
        let r = run_mddc(&t, &opts).unwrap();
        let mc = r.mc_pval.as_ref().unwrap();
        let fp = r.fisher_pval.as_ref().unwrap();
        for i in 0..6 {
            for j in 0..4 {
                if t.count(i, j) > 0 {
                    assert!(mc[(i, j)].is_some() ^ fp[(i, j)].is_some());
                }
            }
        }
        assert_eq!(r.univariate_signal[(0, 0)], Some(1));
        assert_eq!(r.univariate_signal[(2, 2)], Some(1));
        assert_eq!(r.univariate_signal[(4, 1)], None);
        assert!(r.step2_pval().unwrap()[(4, 1)].is_some());
    }

    #[test]
    fn bad_options_rejected() {
        let t = small_table();
        let opts = MddcOptions {
            c_corr: 1.5,
            ..MddcOptions::boxplot()
        };
        assert!(matches!(run_mddc(&t, &opts), Err(EngineError::InvalidOption(_))));
    }

    #[test]
    fn all_infinite_names_the_column() {
        let counts = Matrix::from_rows(&[vec![1, 50], vec![2, 60], vec![1, 70]]).unwrap();
        let t = ContinTable::unlabeled(counts).unwrap();
        let opts = MddcOptions {
            reps: 20,
            ..MddcOptions::default()
        };
        match run_mddc(&t, &opts) {
            Err(EngineError::ColumnCutoff { column, .. }) => assert_eq!(column, "drug_1"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
