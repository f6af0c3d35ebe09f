//! Browser bindings: simulate a table, run MDDC on it and draw heatmaps.
//! Every export takes plain values and returns a JSON or SVG string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mddc_core::datagen::{ClusterSpec, GenerationRequest, SignalStrengthMatrix, TableGenerator, WithinCorr};
use mddc_core::engine::{run_mddc, MddcOptions, Method};
use mddc_core::io::{
    parse_contin_csv, parse_matrix_csv, render_heatmap_svg, report_drug_ae_pairs, table_to_csv, ColorScheme,
    HeatmapOptions, LabeledMatrix,
};
use mddc_core::relative_total_deviation;

#[derive(Serialize)]
struct Simulated {
    csv: String,
    total: u64,
    orig_total: u64,
    rtd: f64,
}

#[derive(Serialize)]
struct Pair {
    drug: String,
    ae: String,
    observed: u64,
    expected: f64,
    residual: Option<f64>,
}

#[derive(Serialize)]
struct Analysis {
    method: &'static str,
    signal_svg: String,
    corr_svg: String,
    signals: Vec<Pair>,
    corr_signals: usize,
    cutoffs: Vec<f64>,
    warnings: Vec<String>,
}

fn even_split(total: u64, parts: usize) -> Vec<u64> {
    let base = total / parts as u64;
    let extra = (total % parts as u64) as usize;
    (0..parts).map(|k| base + u64::from(k < extra)).collect()
}

/// Uniform-marginal table with all rows in one cluster at correlation `rho`
/// and signal strength `lambda` at the first cell.
pub fn simulate_json(rows: usize, cols: usize, total: u64, rho: f64, lambda: f64, seed: u64) -> Result<String, String> {
    if rows < 2 || cols < 2 || rows > 400 || cols > 60 {
        return Err("rows must be in 2..=400 and columns in 2..=60".into());
    }
    let mut req = GenerationRequest::new(even_split(total, rows), even_split(total, cols), 1, seed);
    req.clusters = ClusterSpec::single(rows, WithinCorr::Uniform(rho));
    req.signal = SignalStrengthMatrix::ones(rows, cols)
        .with_signal(0, 0, lambda)
        .map_err(|e| e.to_string())?;
    let t = TableGenerator::new(&req)
        .and_then(|g| g.generate(0, 0))
        .map_err(|e| e.to_string())?;
    let out = Simulated {
        csv: table_to_csv(&t),
        total: t.total(),
        orig_total: total,
        rtd: relative_total_deviation(total, t.total()),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn analyze_json(
    csv: &str,
    method: &str,
    reps: usize,
    quantile: f64,
    corr_lim: f64,
    seed: u64,
) -> Result<String, String> {
    let (t, mut warnings) = parse_contin_csv(csv, false).map_err(|e| e.to_string())?;
    let method = match method {
        "boxplot" => Method::Boxplot,
        "monte-carlo" => Method::MonteCarlo,
        other => return Err(format!("unknown method {other:?}")),
    };
    let opts = MddcOptions {
        method,
        reps,
        quantile,
        c_corr: corr_lim,
        seed,
        ..MddcOptions::default()
    };
    let r = run_mddc(&t, &opts).map_err(|e| e.to_string())?;
    warnings.extend(r.warnings.iter().cloned());

    let signal = LabeledMatrix::like(&t, r.univariate_signal.map(|v| v.map(f64::from))).map_err(|e| e.to_string())?;
    let corr = LabeledMatrix::like(&t, r.corr_signal_adj_pval.clone()).map_err(|e| e.to_string())?;
    let svg = |m: &LabeledMatrix, scheme, title: &str| {
        render_heatmap_svg(
            m,
            &HeatmapOptions {
                scheme,
                max_rows: Some(60),
                title: Some(title.into()),
                ..HeatmapOptions::default()
            },
        )
    };
    let signals = report_drug_ae_pairs(&t, &r.univariate_signal)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| Pair {
            drug: p.drug,
            ae: p.ae,
            observed: p.observed,
            expected: p.expected,
            residual: p.std_pearson_res,
        })
        .collect();
    let out = Analysis {
        method: if method == Method::Boxplot { "boxplot" } else { "monte-carlo" },
        signal_svg: svg(&signal, ColorScheme::Binary, "Step 2 signals"),
        corr_svg: svg(&corr, ColorScheme::Sequential, "Adjusted correlation p-values"),
        signals,
        corr_signals: r.corr_signal(0.05, true).iter().filter(|v| **v == Some(1)).count(),
        cutoffs: r.cutoffs.upper.clone(),
        warnings,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn heatmap_from_csv(csv: &str, max_rows: usize, drop_other: bool) -> Result<String, String> {
    let m = parse_matrix_csv(csv).map_err(|e| e.to_string())?;
    let opts = HeatmapOptions {
        max_rows: (max_rows > 0).then_some(max_rows),
        drop_columns: if drop_other { vec!["Other".into()] } else { Vec::new() },
        ..HeatmapOptions::default()
    };
    Ok(render_heatmap_svg(&m, &opts))
}

#[wasm_bindgen]
pub fn simulate(rows: usize, cols: usize, total: f64, rho: f64, lambda: f64, seed: u32) -> Result<String, JsError> {
    if !(total >= 1.0 && total <= 1e12) {
        return Err(JsError::new("total must be between 1 and 1e12"));
    }
    simulate_json(rows, cols, total as u64, rho, lambda, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn analyze(csv: &str, method: &str, reps: usize, quantile: f64, corr_lim: f64, seed: u32) -> Result<String, JsError> {
    analyze_json(csv, method, reps, quantile, corr_lim, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn heatmap(csv: &str, max_rows: usize, drop_other: bool) -> Result<String, JsError> {
    heatmap_from_csv(csv, max_rows, drop_other).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_then_analyze() {
        let sim: serde_json::Value = serde_json::from_str(&simulate_json(12, 5, 100_000, 0.5, 4.0, 3).unwrap()).unwrap();
        let csv = sim["csv"].as_str().unwrap();
        assert_eq!(csv.lines().count(), 13);
        let out: serde_json::Value = serde_json::from_str(&analyze_json(csv, "monte-carlo", 500, 0.95, 0.8, 1).unwrap()).unwrap();
        assert!(out["signal_svg"].as_str().unwrap().contains("<rect"));
        let first = &out["signals"][0];
        assert_eq!((first["ae"].as_str(), first["drug"].as_str()), (Some("AE_1"), Some("drug_1")));
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(simulate_json(1, 5, 100, 0.0, 1.0, 0).is_err());
        assert!(simulate_json(3, 3, 100, 0.0, 0.5, 0).is_err());
        assert!(analyze_json(",A\nx,1\n", "boxplot", 10, 0.95, 0.8, 0).is_err());
        assert!(analyze_json(",A,B\nx,1,2\ny,3,4\n", "median", 10, 0.95, 0.8, 0).is_err());
    }

    #[test]
    fn heatmap_drops_other() {
        let svg = heatmap_from_csv(",A,Other\nx,1,0\ny,0,NA\n", 0, true).unwrap();
        assert_eq!(svg.matches("<rect").count(), 2);
    }
}
