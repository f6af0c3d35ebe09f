use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde_json::json;

use mddc_core::cutoff::{find_optimal_coef, Coef, CoefSearch, CutoffScope};
use mddc_core::datagen::{
    estimate_cluster_corr, generate_tables, generate_tables_with_tol, relative_total_deviation, ClusterSpec,
    GenerationRequest, SignalStrengthMatrix, WithinCorr,
};
use mddc_core::engine::{run_mddc, DrugClasses, MddcOptions, Method, Orientation};
use mddc_core::io::{
    emit_heatmap_svg, fixture_names, load_fixture, read_cluster_csv, read_contin_csv_with,
    read_matrix_csv, report_drug_ae_pairs, write_contin_csv, write_matrix_csv, write_report_csv, ColorScheme,
    HeatmapOptions, LabeledMatrix, MISSING_TOKEN,
};
use mddc_core::{ContinTable, Matrix, MaybeMatrix, SignalMatrix};

use crate::manifest::{InputInfo, Manifest};
use crate::{
    AnalyzeArgs, FixtureArgs, GenerateArgs, HeatmapArgs, MethodArg, OptimalCoefArgs, ReportArgs, RtdArgs, SchemeArg,
    TableInput,
};

fn load_table(input: &TableInput) -> Result<(ContinTable, String, Vec<String>)> {
    match (&input.input, &input.fixture) {
        (_, Some(name)) => Ok((load_fixture(name)?, format!("fixture:{name}"), Vec::new())),
        (Some(path), None) => {
            let (t, warnings) = read_contin_csv_with(path, !input.lenient)
                .with_context(|| format!("reading table {}", path.display()))?;
            Ok((t, path.display().to_string(), warnings))
        }
        (None, None) => bail!("no input table given"),
    }
}

fn input_info(t: &ContinTable, source: String) -> InputInfo {
    InputInfo {
        source,
        rows: t.n_rows(),
        cols: t.n_cols(),
        total: t.total(),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Reads `@file` contents or returns the argument itself.
fn inline_or_file(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {path}")),
        None => Ok(arg.to_string()),
    }
}

/// `1.5`, `1.5,2,3` or `@coef.csv` as written by `optimal-coef`.
fn parse_coef(arg: &str, t: &ContinTable) -> Result<Coef> {
    if let Some(path) = arg.strip_prefix('@') {
        let m = read_matrix_csv(path).with_context(|| format!("reading coefficients {path}"))?;
        ensure!(m.col_names.len() == 1, "coefficient file must have exactly one value column");
        ensure!(
            m.row_names.len() == t.n_cols(),
            "coefficient file has {} rows, table has {} columns",
            m.row_names.len(),
            t.n_cols()
        );
        let by_name = t.col_names().iter().all(|c| m.row_names.contains(c));
        let coefs = (0..t.n_cols())
            .map(|j| {
                let r = if by_name {
                    m.row_names.iter().position(|n| n == &t.col_names()[j]).unwrap()
                } else {
                    j
                };
                m.values[(r, 0)].ok_or_else(|| anyhow!("missing coefficient for {:?}", t.col_names()[j]))
            })
            .collect::<Result<Vec<f64>>>()?;
        return Ok(Coef::PerColumn(coefs));
    }
    let values = arg
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("coefficient {s:?} is not a number")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(match values.as_slice() {
        [c] => Coef::Scalar(*c),
        _ => Coef::PerColumn(values),
    })
}

fn signal_to_maybe(s: &SignalMatrix) -> MaybeMatrix {
    s.map(|v| v.map(f64::from))
}

fn maybe_to_signal(m: &LabeledMatrix) -> Result<SignalMatrix> {
    let mut out = Matrix::filled(m.values.rows(), m.values.cols(), None);
    for ((i, j), v) in m.values.indexed_iter() {
        out[(i, j)] = match v {
            None => None,
            Some(x) if *x == 0.0 => Some(0),
            Some(x) if *x == 1.0 => Some(1),
            Some(x) => bail!(
                "signal entry ({}, {}) is {x}, expected 0, 1 or NA",
                m.row_names[i],
                m.col_names[j]
            ),
        };
    }
    Ok(out)
}

struct OutputDir<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl OutputDir<'_> {
    fn matrix(&mut self, name: &str, t: &ContinTable, values: MaybeMatrix) -> Result<()> {
        let file = format!("{name}.csv");
        write_matrix_csv(&LabeledMatrix::like(t, values)?, self.dir.join(&file), MISSING_TOKEN)?;
        self.written.push(file);
        Ok(())
    }

    fn signal(&mut self, name: &str, t: &ContinTable, s: &SignalMatrix, heatmap: bool) -> Result<()> {
        self.matrix(name, t, signal_to_maybe(s))?;
        let report = format!("reports/{name}.csv");
        write_report_csv(&report_drug_ae_pairs(t, s)?, self.dir.join(&report))?;
        self.written.push(report);
        if heatmap {
            let file = format!("{name}.svg");
            let opts = HeatmapOptions {
                scheme: ColorScheme::Binary,
                title: Some(name.to_string()),
                ..HeatmapOptions::default()
            };
            emit_heatmap_svg(&LabeledMatrix::like(t, signal_to_maybe(s))?, self.dir.join(&file), &opts)?;
            self.written.push(file);
        }
        Ok(())
    }
}

pub fn analyze(a: &AnalyzeArgs, threads: usize) -> Result<()> {
    let (t, source, mut warnings) = load_table(&a.table)?;
    let method = match a.method {
        MethodArg::Boxplot => Method::Boxplot,
        MethodArg::MonteCarlo => Method::MonteCarlo,
    };
    let opts = MddcOptions {
        method,
        coef: parse_coef(&a.coef, &t)?,
        col_specific: !a.no_col_specific,
        separate: !a.no_separate,
        c_corr: a.corr_lim,
        orientation: if a.col_corr { Orientation::Columns } else { Orientation::Rows },
        reps: a.reps,
        quantile: a.quantile,
        exclude_same_class: !a.no_exclude_same_class,
        drug_classes: a
            .drug_classes
            .clone()
            .map_or(DrugClasses::Inferred, DrugClasses::Explicit),
        alpha: a.alpha,
        mc_signal_level: a.alpha,
        mc_adjust: a.adjust_mc,
        seed: a.seed,
        ..MddcOptions::default()
    };
    let result = run_mddc(&t, &opts).context("running MDDC")?;
    warnings.extend(result.warnings.iter().cloned());

    create_dir(&a.out.join("reports"))?;
    let mut out = OutputDir {
        dir: &a.out,
        written: Vec::new(),
    };
    match method {
        Method::MonteCarlo => {
            out.matrix("pval", &t, result.step2_pval().expect("Monte Carlo result has p-values"))?;
            out.signal("signal", &t, &result.univariate_signal, a.heatmap)?;
            let fisher = result.fisher_signal.as_ref().expect("Monte Carlo result has Fisher signals");
            out.signal("fisher_signal", &t, fisher, a.heatmap)?;
        }
        Method::Boxplot => out.signal("boxplot_signal", &t, &result.univariate_signal, a.heatmap)?,
    }
    out.matrix("corr_signal_pval", &t, result.corr_signal_pval.clone())?;
    out.matrix("corr_signal_adj_pval", &t, result.corr_signal_adj_pval.clone())?;

    let parameters = json!({
        "method": match method { Method::Boxplot => "boxplot", Method::MonteCarlo => "monte-carlo" },
        "reps": a.reps,
        "quantile": a.quantile,
        "coef": a.coef,
        "corr_lim": a.corr_lim,
        "col_specific": opts.col_specific,
        "separate": opts.separate,
        "col_corr": a.col_corr,
        "exclude_same_class": opts.exclude_same_class,
        "drug_classes": a.drug_classes,
        "alpha": a.alpha,
        "adjust_mc": a.adjust_mc,
        "cutoff_upper": result.cutoffs.upper.iter().map(|c| format_cutoff(*c)).collect::<Vec<_>>(),
        "cutoff_zero_lower": result.cutoffs.zero_lower.iter().map(|c| format_cutoff(*c)).collect::<Vec<_>>(),
    });
    let mut manifest = Manifest::new("analyze", parameters, Some(a.seed), threads);
    manifest.inputs.push(input_info(&t, source));
    manifest.outputs = out.written;
    manifest.warnings = warnings;
    manifest.write(&a.out)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn format_cutoff(c: f64) -> String {
    mddc_core::io::format_real(c)
}

/// Comma list of counts, or `@file` with one count or `name,count` per line.
fn parse_marginal(arg: &str) -> Result<(Vec<u64>, Option<Vec<String>>)> {
    let text = inline_or_file(arg)?;
    let is_file = arg.starts_with('@');
    let mut counts = Vec::new();
    let mut names = Vec::new();
    let items: Vec<&str> = if is_file {
        text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
    } else {
        text.split(',').map(str::trim).collect()
    };
    for (k, item) in items.iter().enumerate() {
        let (name, value) = match item.rsplit_once(',') {
            Some((n, v)) if is_file => (Some(n.trim().trim_matches('"')), v.trim()),
            _ => (None, *item),
        };
        match value.parse::<u64>() {
            Ok(v) => {
                counts.push(v);
                if let Some(n) = name {
                    names.push(n.to_string());
                }
            }
            // A header line in a file.
            Err(_) if is_file && k == 0 => continue,
            Err(_) => bail!("marginal entry {item:?} is not a nonnegative integer"),
        }
    }
    let names = (names.len() == counts.len() && !names.is_empty()).then_some(names);
    Ok((counts, names))
}

pub fn generate(a: &GenerateArgs, threads: usize) -> Result<()> {
    let mut inputs = Vec::new();
    let mut warnings = Vec::new();
    let reference = match &a.table {
        Some(path) => {
            let t = read_contin_csv_with(path, true)
                .with_context(|| format!("reading table {}", path.display()))?
                .0;
            inputs.push(input_info(&t, path.display().to_string()));
            Some(t)
        }
        None => None,
    };
    let mut req = match (&reference, &a.row_marginal, &a.col_marginal) {
        (Some(t), _, _) => GenerationRequest::from_table(t, Some(ClusterSpec::independent(t.n_rows())), a.n_rep, a.seed),
        (None, Some(r), Some(c)) => {
            let (rows, row_names) = parse_marginal(r)?;
            let (cols, col_names) = parse_marginal(c)?;
            let mut req = GenerationRequest::new(rows, cols, a.n_rep, a.seed);
            req.row_names = row_names;
            req.col_names = col_names;
            req
        }
        _ => bail!("give either --table or both --row-marginal and --col-marginal"),
    };
    let rows = req.row_marginal.len();
    let cols = req.column_marginal.len();
    let row_names = req.row_names.clone();

    let assignment = match &a.clusters {
        Some(path) => {
            let entries = read_cluster_csv(path).with_context(|| format!("reading clusters {}", path.display()))?;
            match &row_names {
                Some(names) => names
                    .iter()
                    .map(|n| {
                        entries
                            .iter()
                            .find(|(_, ae)| ae == n)
                            .map(|(g, _)| *g)
                            .ok_or_else(|| anyhow!("AE {n:?} has no cluster assignment"))
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => {
                    ensure!(
                        entries.len() == rows,
                        "cluster file has {} entries for {rows} rows",
                        entries.len()
                    );
                    req.row_names = Some(entries.iter().map(|(_, ae)| ae.clone()).collect());
                    entries.iter().map(|(g, _)| *g).collect()
                }
            }
        }
        None if a.rho.is_some() || reference.is_some() => vec![0; rows],
        None => (0..rows).collect(),
    };
    let within = match (a.rho, &reference) {
        (Some(rho), _) => WithinCorr::Uniform(rho),
        (None, Some(t)) => {
            let (corr, w) = estimate_cluster_corr(t);
            warnings.extend(w);
            WithinCorr::Explicit(corr)
        }
        (None, None) => WithinCorr::Uniform(0.0),
    };
    req.clusters = ClusterSpec { assignment, within };

    let mut lambda = match &a.lambda {
        Some(path) => {
            let m = read_matrix_csv(path).with_context(|| format!("reading lambda matrix {}", path.display()))?;
            ensure!(
                m.values.shape() == (rows, cols),
                "lambda matrix is {:?}, marginals give {rows}x{cols}",
                m.values.shape()
            );
            let values = Matrix::from_fn(rows, cols, |i, j| m.values[(i, j)].unwrap_or(1.0));
            SignalStrengthMatrix::new(values)?
        }
        None => SignalStrengthMatrix::ones(rows, cols),
    };
    let names_r = req.row_names.clone();
    let names_c = req.col_names.clone();
    for spec in &a.signals {
        let parts: Vec<&str> = spec.rsplitn(3, ',').collect();
        ensure!(parts.len() == 3, "--signal expects AE,DRUG,LAMBDA, got {spec:?}");
        let (value, drug, ae) = (parts[0], parts[1], parts[2]);
        let find = |names: &Option<Vec<String>>, key: &str, what: &str| -> Result<usize> {
            if let Some(ns) = names {
                if let Some(k) = ns.iter().position(|n| n == key) {
                    return Ok(k);
                }
            }
            key.parse::<usize>()
                .ok()
                .and_then(|k| k.checked_sub(1))
                .ok_or_else(|| anyhow!("unknown {what} {key:?}"))
        };
        let (i, j) = (find(&names_r, ae, "AE")?, find(&names_c, drug, "drug")?);
        ensure!(i < rows && j < cols, "signal cell {spec:?} is outside the table");
        let v: f64 = value.parse().with_context(|| format!("lambda {value:?} is not a number"))?;
        lambda = lambda.with_signal(i, j, v)?;
    }
    req.signal = lambda;
    req.tolerance = a.tol;
    req.max_attempts = a.max_attempts;

    let tables = if a.tol.is_some() {
        generate_tables_with_tol(&req)?
    } else {
        generate_tables(&req)?
    };
    create_dir(&a.out)?;
    let width = tables.len().to_string().len().max(3);
    let orig_total: u64 = req.row_marginal.iter().sum();
    let mut outputs = Vec::new();
    for (k, t) in tables.iter().enumerate() {
        let file = format!("table_{:0width$}.csv", k + 1);
        write_contin_csv(t, a.out.join(&file))?;
        outputs.push(file);
    }
    let parameters = json!({
        "n_rep": a.n_rep,
        "rho": a.rho,
        "clusters": a.clusters.as_ref().map(|p| p.display().to_string()),
        "lambda": a.lambda.as_ref().map(|p| p.display().to_string()),
        "signals": a.signals,
        "tol": a.tol,
        "max_attempts": a.max_attempts,
        "orig_total": orig_total,
    });
    let mut manifest = Manifest::new("generate", parameters, Some(a.seed), threads);
    manifest.inputs = inputs;
    manifest.outputs = outputs;
    manifest.warnings = warnings;
    manifest.write(&a.out)
}

pub fn optimal_coef(a: &OptimalCoefArgs, threads: usize) -> Result<()> {
    let (t, source, warnings) = load_table(&a.table)?;
    let search = CoefSearch {
        reps: a.reps,
        target_fdr: a.target_fdr,
        step: a.step,
        ceiling: a.ceiling,
        scope: CutoffScope::from_col_specific(!a.no_col_specific),
        seed: a.seed,
        ..CoefSearch::default()
    };
    let coefs = find_optimal_coef(&t, &search).context("searching coefficients")?;
    let values = Matrix::from_vec(coefs.len(), 1, coefs.into_iter().map(Some).collect()).expect("shape");
    let m = LabeledMatrix::new(values, t.col_names().to_vec(), vec!["coef".into()])?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_matrix_csv(&m, &a.out, MISSING_TOKEN)?;
    let parameters = json!({
        "reps": a.reps,
        "target_fdr": a.target_fdr,
        "step": a.step,
        "ceiling": a.ceiling,
        "col_specific": !a.no_col_specific,
    });
    let mut manifest = Manifest::new("optimal-coef", parameters, Some(a.seed), threads);
    manifest.inputs.push(input_info(&t, source));
    manifest.outputs.push(a.out.display().to_string());
    manifest.warnings = warnings;
    let dir = a.out.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    manifest.write(&dir)
}

pub fn heatmap(a: &HeatmapArgs) -> Result<()> {
    let m = read_matrix_csv(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let opts = HeatmapOptions {
        scheme: match a.scheme {
            SchemeArg::Auto => ColorScheme::Auto,
            SchemeArg::Binary => ColorScheme::Binary,
            SchemeArg::Sequential => ColorScheme::Sequential,
        },
        max_rows: a.rows,
        drop_columns: a.drop_columns.clone(),
        title: a.title.clone(),
        ..HeatmapOptions::default()
    };
    emit_heatmap_svg(&m, &a.out, &opts)?;
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let (t, _) = read_contin_csv_with(&a.table, true).with_context(|| format!("reading {}", a.table.display()))?;
    let m = read_matrix_csv(&a.signal).with_context(|| format!("reading {}", a.signal.display()))?;
    ensure!(
        m.row_names == t.row_names() && m.col_names == t.col_names(),
        "signal matrix labels do not match the table"
    );
    write_report_csv(&report_drug_ae_pairs(&t, &maybe_to_signal(&m)?)?, &a.out)?;
    Ok(())
}

/// Min, median, mean, max and sample standard deviation.
pub fn summary(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    [v[0], median, mean, v[n - 1], sd]
}

pub fn rtd(a: &RtdArgs) -> Result<()> {
    let orig = match (a.orig_total, &a.original) {
        (Some(n), _) => n,
        (None, Some(p)) => {
            read_contin_csv_with(p, true)
                .with_context(|| format!("reading {}", p.display()))?
                .0
                .total()
        }
        (None, None) => bail!("give --orig-total or --original"),
    };
    ensure!(orig > 0, "original total must be positive");
    let mut files: Vec<PathBuf> = fs::read_dir(&a.dir)
        .with_context(|| format!("listing {}", a.dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut values = Vec::with_capacity(files.len());
    for f in &files {
        let (t, _) = read_contin_csv_with(f, true).with_context(|| format!("reading {}", f.display()))?;
        values.push(relative_total_deviation(orig, t.total()));
    }
    ensure!(!values.is_empty(), "no CSV tables in {}", a.dir.display());
    let s = summary(&values);
    println!("{:>10} {:>10} {:>10} {:>10} {:>10}", "Min.", "Median", "Mean", "Max.", "SD");
    let cell = |x: f64| if x.is_nan() { "NA".to_string() } else { format!("{x:.3}") };
    println!(
        "{:>10} {:>10} {:>10} {:>10} {:>10}",
        cell(s[0]),
        cell(s[1]),
        cell(s[2]),
        cell(s[3]),
        cell(s[4])
    );
    Ok(())
}

pub fn fixture(a: &FixtureArgs) -> Result<()> {
    if a.list {
        for name in fixture_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let name = a.name.as_deref().expect("clap requires a name");
    let t = load_fixture(name)?;
    match &a.out {
        Some(path) => write_contin_csv(&t, path)?,
        None => print!("{}", mddc_core::io::table_to_csv(&t)),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_hand_values() {
        let s = summary(&[0.0, 2.0, 4.0, 10.0]);
        assert_eq!(&s[..4], &[0.0, 3.0, 4.0, 10.0]);
        assert!((s[4] - (56.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coef_forms() {
        let t = load_fixture("synthetic_statin101").unwrap();
        assert_eq!(parse_coef("2", &t).unwrap(), Coef::Scalar(2.0));
        assert_eq!(parse_coef("1,2,3,4,5", &t).unwrap(), Coef::PerColumn(vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        assert!(parse_coef("x", &t).is_err());
    }

    #[test]
    fn marginal_forms() {
        assert_eq!(parse_marginal("1, 2,3").unwrap(), (vec![1, 2, 3], None));
        assert!(parse_marginal("1,-2").is_err());
    }
}
