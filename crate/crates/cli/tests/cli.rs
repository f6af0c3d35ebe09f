use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mddc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mddc"))
        .args(args)
        .env_remove("MDDC_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mddc(args);
    assert!(
        out.status.success(),
        "mddc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn analyze_defaults_write_five_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc");
    ok(&["analyze", "--fixture", "synthetic_statin49", "--out", p(&out)]);
    assert_eq!(
        csv_files(&out),
        [
            "corr_signal_adj_pval.csv",
            "corr_signal_pval.csv",
            "fisher_signal.csv",
            "pval.csv",
            "signal.csv"
        ]
    );
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["parameters"]["reps"], 10000);
    assert_eq!(manifest["inputs"][0]["rows"], 49);
    assert!(out.join("reports/signal.csv").exists());
}

#[test]
fn boxplot_has_no_mc_or_fisher_files() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    ok(&["fixture", "synthetic_statin101", "-o", p(&table)]);
    let out = dir.path().join("bp");
    ok(&["analyze", p(&table), "--method", "boxplot", "--out", p(&out)]);
    assert_eq!(
        csv_files(&out),
        ["boxplot_signal.csv", "corr_signal_adj_pval.csv", "corr_signal_pval.csv"]
    );
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["1", "8"]
        .iter()
        .map(|threads| {
            let out = dir.path().join(format!("t{threads}"));
            ok(&[
                "--threads",
                threads,
                "analyze",
                "--fixture",
                "synthetic_statin101",
                "--seed",
                "42",
                "--reps",
                "2000",
                "--out",
                p(&out),
            ]);
            out
        })
        .collect();
    let files = csv_files(&runs[0]);
    assert_eq!(files, csv_files(&runs[1]));
    for f in files {
        assert_eq!(fs::read(runs[0].join(&f)).unwrap(), fs::read(runs[1].join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn generate_recipe_and_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("statin49.csv");
    ok(&["fixture", "synthetic_statin49", "-o", p(&table)]);
    let out = dir.path().join("gen");
    ok(&[
        "generate",
        "--table",
        p(&table),
        "--signal",
        "Rhabdomyolysis,Atorvastatin,4",
        "--rho",
        "0.5",
        "--n-rep",
        "3",
        "--out",
        p(&out),
    ]);
    assert_eq!(csv_files(&out), ["table_001.csv", "table_002.csv", "table_003.csv"]);

    let tol = dir.path().join("tol");
    ok(&[
        "generate",
        "--row-marginal",
        "100,200,300,400",
        "--col-marginal",
        "250,250,250,250",
        "--n-rep",
        "20",
        "--tol",
        "5",
        "--out",
        p(&tol),
    ]);
    let summary = ok(&["rtd", p(&tol), "--orig-total", "1000"]);
    let lines: Vec<&str> = summary.lines().collect();
    let header: Vec<&str> = lines[0].split_whitespace().collect();
    assert_eq!(header, ["Min.", "Median", "Mean", "Max.", "SD"]);
    let max: f64 = lines[1].split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(max <= 5.0);
}

#[test]
fn missing_lambda_defaults_to_ones() {
    let dir = tempfile::tempdir().unwrap();
    let ones = dir.path().join("ones.csv");
    fs::write(&ones, ",d1,d2\na1,1,1\na2,1,1\na3,1,1\n").unwrap();
    let base = ["--row-marginal", "30,30,40", "--col-marginal", "60,40", "--n-rep", "2"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = vec!["generate"];
    args.extend(base);
    ok(&[args.as_slice(), &["--out", p(&a)]].concat());
    ok(&[args.as_slice(), &["--lambda", p(&ones), "--out", p(&b)]].concat());
    for f in csv_files(&a) {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap());
    }
}

#[test]
fn optimal_coef_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let coef = dir.path().join("coef.csv");
    ok(&[
        "optimal-coef",
        "--fixture",
        "synthetic_statin101",
        "--target-fdr",
        "1.0",
        "--reps",
        "50",
        "-o",
        p(&coef),
    ]);
    let text = fs::read_to_string(&coef).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.ends_with(",1.5")));
    let arg = format!("@{}", p(&coef));
    ok(&[
        "analyze",
        "--fixture",
        "synthetic_statin101",
        "--method",
        "boxplot",
        "--coef",
        &arg,
        "--out",
        p(&dir.path().join("bp")),
    ]);
}

#[test]
fn rtd_of_identical_tables_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    fs::create_dir(&tables).unwrap();
    for k in 0..3 {
        fs::write(tables.join(format!("t{k}.csv")), ",A,B\nx,1,2\ny,3,4\n").unwrap();
    }
    let out = ok(&["rtd", p(&tables), "--orig-total", "10"]);
    let values: Vec<&str> = out.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(values, ["0.000"; 5]);
}

#[test]
fn report_of_empty_signal_has_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let (table, signal, report) = (dir.path().join("t.csv"), dir.path().join("s.csv"), dir.path().join("r.csv"));
    fs::write(&table, ",A,B\nx,1,2\ny,3,4\n").unwrap();
    fs::write(&signal, ",A,B\nx,0,0\ny,0,NA\n").unwrap();
    ok(&["report", p(&table), p(&signal), "-o", p(&report)]);
    assert_eq!(
        fs::read_to_string(&report).unwrap(),
        "Drug,AE,Observed Count,Expected Count,Std Pearson Resid\n"
    );
}

#[test]
fn heatmap_subsets_rows_and_drops_other() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc");
    ok(&["analyze", "--fixture", "synthetic_statin49", "--reps", "500", "--out", p(&out)]);
    let svg = dir.path().join("h.svg");
    ok(&[
        "heatmap",
        p(&out.join("signal.csv")),
        "--rows",
        "15",
        "--drop",
        "Other",
        "-o",
        p(&svg),
    ]);
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<rect").count(), 15 * 6);
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let out = mddc(&["analyze", "/nonexistent/table.csv"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, ",A,B\nx,1,2\ny,3,oops\n").unwrap();
    let out = mddc(&["analyze", p(&bad), "--method", "boxplot"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"));
}
