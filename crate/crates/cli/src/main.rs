mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "mddc", version, about = "Signal detection in adverse-event by drug contingency tables")]
struct Cli {
    /// Worker threads for Monte Carlo and table generation (default: all cores).
    #[arg(long, global = true, env = "MDDC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run MDDC on a contingency table.
    Analyze(AnalyzeArgs),
    /// Generate synthetic tables with clustered adverse events.
    Generate(GenerateArgs),
    /// Search per-column boxplot coefficients that hit a target FDR.
    OptimalCoef(OptimalCoefArgs),
    /// Render a matrix CSV as an SVG heatmap.
    Heatmap(HeatmapArgs),
    /// Tabulate the flagged (drug, AE) pairs of a signal matrix.
    Report(ReportArgs),
    /// Summarize relative total deviation over a directory of tables.
    Rtd(RtdArgs),
    /// Write a bundled synthetic table to CSV.
    Fixture(FixtureArgs),
}

#[derive(Args, Clone)]
pub struct TableInput {
    /// Contingency table CSV.
    #[arg(required_unless_present = "fixture")]
    input: Option<PathBuf>,
    /// Use a bundled synthetic table instead of a file.
    #[arg(long, conflicts_with = "input")]
    fixture: Option<String>,
    /// Round non-integral counts and rename duplicate labels instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Boxplot,
    MonteCarlo,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    table: TableInput,
    #[arg(long, value_enum, default_value = "monte-carlo")]
    method: MethodArg,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    /// Quantile of the null maxima used as cutoff.
    #[arg(long, default_value_t = 0.95)]
    quantile: f64,
    /// Boxplot coefficient: a number, a comma list (one per column) or @FILE.
    #[arg(long, default_value = "1.5")]
    coef: String,
    /// Correlation threshold for connected AEs.
    #[arg(long, default_value_t = 0.8)]
    corr_lim: f64,
    /// Per-column cutoffs (default) or one cutoff for the whole table.
    #[arg(long, overrides_with = "no_col_specific")]
    col_specific: bool,
    #[arg(long)]
    no_col_specific: bool,
    /// Separate fences for zero and nonzero cells (default).
    #[arg(long, overrides_with = "no_separate")]
    separate: bool,
    #[arg(long)]
    no_separate: bool,
    /// Correlate drugs (columns) instead of adverse events.
    #[arg(long)]
    col_corr: bool,
    /// Leave same-class drugs out of the Fisher comparison pool (default).
    #[arg(long, overrides_with = "no_exclude_same_class")]
    exclude_same_class: bool,
    #[arg(long)]
    no_exclude_same_class: bool,
    /// Class label of every drug column, comma separated.
    #[arg(long, value_delimiter = ',')]
    drug_classes: Option<Vec<String>>,
    /// Significance level for Fisher tests and Monte Carlo p-values.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Compare Benjamini-Hochberg adjusted Monte Carlo p-values with alpha.
    #[arg(long)]
    adjust_mc: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write an SVG heatmap of each signal matrix.
    #[arg(long)]
    heatmap: bool,
    #[arg(long, short, default_value = "mddc_out")]
    out: PathBuf,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Reference table; marginals and correlation are taken from it.
    #[arg(long, conflicts_with_all = ["row_marginal", "col_marginal"])]
    table: Option<PathBuf>,
    /// Row marginal: comma list or @FILE (one count, or "name,count", per line).
    #[arg(long, requires = "col_marginal")]
    row_marginal: Option<String>,
    #[arg(long, requires = "row_marginal")]
    col_marginal: Option<String>,
    /// Cluster assignment CSV with columns idx,AE.
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Within-cluster correlation; without it a reference table's estimated
    /// correlation is used, otherwise 0.
    #[arg(long)]
    rho: Option<f64>,
    /// Signal-strength matrix CSV (default all ones).
    #[arg(long)]
    lambda: Option<PathBuf>,
    /// Single signal cell as AE,DRUG,LAMBDA; may be repeated.
    #[arg(long = "signal")]
    signals: Vec<String>,
    #[arg(long, default_value_t = 1)]
    n_rep: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Maximum relative total deviation in percent; regenerates failing tables.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = mddc_core::datagen::DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u32,
    #[arg(long, short, default_value = "mddc_tables")]
    out: PathBuf,
}

#[derive(Args)]
pub struct OptimalCoefArgs {
    #[command(flatten)]
    table: TableInput,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    target_fdr: f64,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 10.0)]
    ceiling: f64,
    #[arg(long)]
    no_col_specific: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output CSV with one coefficient per column.
    #[arg(long, short, default_value = "coef.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Auto,
    Binary,
    Sequential,
}

#[derive(Args)]
pub struct HeatmapArgs {
    /// Matrix CSV (signals or p-values).
    input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    scheme: SchemeArg,
    /// Keep only the first N rows.
    #[arg(long)]
    rows: Option<usize>,
    /// Drop a column by label; may be repeated.
    #[arg(long = "drop")]
    drop_columns: Vec<String>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Contingency table CSV.
    table: PathBuf,
    /// Signal matrix CSV with entries 0, 1 or NA.
    signal: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
pub struct RtdArgs {
    /// Directory of generated table CSVs.
    dir: PathBuf,
    /// Grand total of the original table.
    #[arg(long, required_unless_present = "original")]
    orig_total: Option<u64>,
    /// Original table CSV, as an alternative to --orig-total.
    #[arg(long, conflicts_with = "orig_total")]
    original: Option<PathBuf>,
}

#[derive(Args)]
pub struct FixtureArgs {
    /// Fixture name; omit with --list.
    #[arg(required_unless_present = "list")]
    name: Option<String>,
    #[arg(long)]
    list: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Analyze(a) => commands::analyze(&a, threads),
        Command::Generate(a) => commands::generate(&a, threads),
        Command::OptimalCoef(a) => commands::optimal_coef(&a, threads),
        Command::Heatmap(a) => commands::heatmap(&a),
        Command::Report(a) => commands::report(&a),
        Command::Rtd(a) => commands::rtd(&a),
        Command::Fixture(a) => commands::fixture(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
