//! Bundled synthetic tables shaped like common pharmacovigilance extracts.
//!
//! Each fixture is regenerated on load from deterministic marginals, a small
//! set of planted signals, five-row AE clusters at correlation 0.5 and a
//! recorded seed. The last row and column are the "Other" aggregates.

use super::IoError;
use crate::datagen::{ClusterSpec, GenerationRequest, SignalStrengthMatrix, TableGenerator, WithinCorr};
use crate::table::ContinTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureInfo {
    pub name: &'static str,
    pub rows: usize,
    /// Drug columns including "Other".
    pub drugs: &'static [&'static str],
    /// Grand total of the marginals the table is drawn around.
    pub target_total: u64,
    pub seed: u64,
    /// Planted signals `(row, column, lambda)`.
    pub signals: &'static [(usize, usize, f64)],
}

const FIXTURES: &[FixtureInfo] = &[
    FixtureInfo {
        name: "synthetic_statin49",
        rows: 49,
        drugs: &[
            "Atorvastatin",
            "Fluvastatin",
            "Lovastatin",
            "Pravastatin",
            "Rosuvastatin",
            "Simvastatin",
            "Other",
        ],
        target_total: 63_976_610,
        seed: 49,
        signals: &[(0, 0, 4.0), (1, 4, 2.0), (6, 5, 3.0), (3, 2, 2.5)],
    },
    FixtureInfo {
        name: "synthetic_statin101",
        rows: 102,
        drugs: &["Atorvastatin", "Pravastatin", "Rosuvastatin", "Simvastatin", "Other"],
        target_total: 64_016_255,
        seed: 101,
        signals: &[(0, 0, 4.0), (2, 2, 2.0), (9, 3, 3.0), (40, 1, 2.0)],
    },
    FixtureInfo {
        name: "synthetic_betablocker500",
        rows: 501,
        drugs: &[
            "Acebutolol",
            "Atenolol",
            "Bisoprolol",
            "Carvedilol",
            "Metoprolol",
            "Nadolol",
            "Propranolol",
            "Timolol",
            "Other",
        ],
        target_total: 77_367_960,
        seed: 500,
        signals: &[(15, 1, 4.0), (3, 3, 2.0), (120, 4, 3.0), (60, 6, 2.5), (250, 7, 3.0)],
    },
    FixtureInfo {
        name: "synthetic_sedative1000",
        rows: 1001,
        drugs: &[
            "Alprazolam",
            "Clonazepam",
            "Diazepam",
            "Eszopiclone",
            "Lorazepam",
            "Midazolam",
            "Temazepam",
            "Triazolam",
            "Zaleplon",
            "Zolpidem",
            "Other",
        ],
        target_total: 81_244_719,
        seed: 1000,
        signals: &[(0, 9, 4.0), (4, 2, 2.0), (30, 0, 3.0), (300, 5, 2.5), (700, 8, 3.0)],
    },
];

const AE_NAMES: &[&str] = &[
    "Rhabdomyolysis",
    "Myalgia",
    "Myositis",
    "Muscular weakness",
    "Muscle spasms",
    "Blood creatine phosphokinase increased",
    "Myopathy",
    "Pain in extremity",
    "Musculoskeletal pain",
    "Arthralgia",
    "Back pain",
    "Fatigue",
    "Nausea",
    "Dizziness",
    "Headache",
    "Pain",
    "Liver disorder",
    "Hepatic enzyme increased",
    "Diarrhoea",
    "Dyspnoea",
    "Bradycardia",
    "Hypotension",
    "Somnolence",
    "Fall",
    "Insomnia",
];

/// Share of the grand total held by the "Other" row and column.
const OTHER_ROW_SHARE: f64 = 0.95;
const OTHER_COL_SHARE: f64 = 0.98;
const CLUSTER_SIZE: usize = 5;
const CLUSTER_RHO: f64 = 0.5;

pub fn fixture_names() -> Vec<&'static str> {
    FIXTURES.iter().map(|f| f.name).collect()
}

pub fn fixture_info(name: &str) -> Option<&'static FixtureInfo> {
    FIXTURES.iter().find(|f| f.name == name)
}

/// Splits `total` proportionally to `weights` by largest remainder.
fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let short = total - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &k in order.iter().take(short as usize) {
        out[k] += 1;
    }
    out
}

/// Zipf-like weights for named entries followed by one "Other" share.
fn marginal_weights(named: usize, exponent: f64, other_share: f64) -> Vec<f64> {
    let zipf: Vec<f64> = (0..named).map(|k| 1.0 / ((k + 2) as f64).powf(exponent)).collect();
    let z: f64 = zipf.iter().sum();
    zipf.iter()
        .map(|w| w / z * (1.0 - other_share))
        .chain(std::iter::once(other_share))
        .collect()
}

fn ae_names(rows: usize) -> Vec<String> {
    (0..rows - 1)
        .map(|i| AE_NAMES.get(i).map_or_else(|| format!("AE_{:04}", i + 1), |s| s.to_string()))
        .chain(std::iter::once("Other".to_string()))
        .collect()
}

/// Generation request behind a fixture.
pub fn fixture_request(info: &FixtureInfo) -> Result<GenerationRequest, IoError> {
    let (rows, cols) = (info.rows, info.drugs.len());
    let row_marginal = apportion(info.target_total, &marginal_weights(rows - 1, 0.8, OTHER_ROW_SHARE));
    let col_marginal = apportion(info.target_total, &marginal_weights(cols - 1, 0.5, OTHER_COL_SHARE));
    let mut signal = SignalStrengthMatrix::ones(rows, cols);
    for &(i, j, lambda) in info.signals {
        signal = signal.with_signal(i, j, lambda)?;
    }
    let assignment = (0..rows)
        .map(|i| if i == rows - 1 { rows } else { i / CLUSTER_SIZE })
        .collect();
    let mut req = GenerationRequest::new(row_marginal, col_marginal, 1, info.seed);
    req.signal = signal;
    req.clusters = ClusterSpec {
        assignment,
        within: WithinCorr::Uniform(CLUSTER_RHO),
    };
    req.row_names = Some(ae_names(rows));
    req.col_names = Some(info.drugs.iter().map(|s| s.to_string()).collect());
    Ok(req)
}

/// Loads a bundled synthetic table by name.
pub fn load_fixture(name: &str) -> Result<ContinTable, IoError> {
    let info = fixture_info(name).ok_or_else(|| IoError::UnknownFixture(name.to_string()))?;
    let req = fixture_request(info)?;
    Ok(TableGenerator::new(&req)?.generate(0, 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::validate_and_fix;

    #[test]
    fn apportion_exact_total() {
        let parts = apportion(10, &[1.0, 1.0, 1.0]);
        assert_eq!(parts.iter().sum::<u64>(), 10);
        assert_eq!(parts, vec![4, 3, 3]);
    }

    #[test]
    fn unknown_fixture() {
        assert!(matches!(load_fixture("nonexistent"), Err(IoError::UnknownFixture(_))));
    }

    #[test]
    fn shapes_and_strict_validation() {
        for info in FIXTURES {
            let t = load_fixture(info.name).unwrap();
            assert_eq!((t.n_rows(), t.n_cols()), (info.rows, info.drugs.len()));
            assert_eq!(t.row_names().last().unwrap(), "Other");
            assert_eq!(t.col_names().last().unwrap(), "Other");
            let again = validate_and_fix(&t.to_raw(), true).unwrap();
            assert_eq!(again.table, t);
            assert!(again.warnings.is_empty());
        }
    }
}
