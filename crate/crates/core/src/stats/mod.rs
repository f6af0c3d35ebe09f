//! Statistical primitives shared by the cutoff engine, the MDDC steps and the
//! data generator.

mod sampling;

pub use sampling::{sample_multinomial, sample_mvn, MultinomialSampler, MvnSampler, RngStream};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty data")]
    EmptyData,
    #[error("bad probability vector: {0}")]
    BadProbabilityVector(String),
    #[error("covariance matrix is not positive semi-definite (eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("covariance matrix must be square and match the mean ({0})")]
    Dimension(String),
}

/// Quartiles and interquartile range of a sample together with the fence
/// coefficient used to turn them into boxplot limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxplotStats {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub coef: f64,
}

impl BoxplotStats {
    pub fn from_data(data: &[f64], coef: f64) -> Result<Self, StatsError> {
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25)?;
        let q3 = quantile_sorted(&sorted, 0.75)?;
        Ok(Self {
            q1,
            q3,
            iqr: q3 - q1,
            coef,
        })
    }

    pub fn upper(&self) -> f64 {
        self.q3 + self.coef * self.iqr
    }

    pub fn lower(&self) -> f64 {
        self.q1 - self.coef * self.iqr
    }
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(data: &[f64], q: f64) -> Result<f64, StatsError> {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

/// [`quantile`] on data already sorted ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::EmptyData);
    }
    debug_assert!((0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return Ok(sorted[lo.min(sorted.len() - 1)]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// Tukey fences `(Q1 - coef IQR, Q3 + coef IQR)`.
pub fn boxplot_fences(data: &[f64], coef: f64) -> Result<(f64, f64), StatsError> {
    let stats = BoxplotStats::from_data(data, coef)?;
    Ok((stats.lower(), stats.upper()))
}

/// `P(Z >= z)` for a standard normal `Z`.
pub fn normal_upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// One-sided ("greater") Fisher exact test on `[[a, b], [c, d]]`:
/// `P(A >= a)` under the hypergeometric law with the table's margins.
pub fn fisher_exact_greater(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let n = row1 + row2;
    if n == 0 || a == 0 {
        return 1.0;
    }
    let k_max = row1.min(col1);
    // Term k relative to the next: P(k+1)/P(k) = (row1-k)(col1-k) / ((k+1)(row2-col1+k+1)).
    let log_first = ln_choose(row1, a) + ln_choose(row2, col1 - a) - ln_choose(n, col1);
    let mut log_term = log_first;
    let mut log_sum = log_first;
    let mut k = a;
    while k < k_max {
        let num = ((row1 - k) as f64).ln() + ((col1 - k) as f64).ln();
        let den = ((k + 1) as f64).ln() + ((row2 + k + 1 - col1) as f64).ln();
        log_term += num - den;
        k += 1;
        let (hi, lo) = if log_sum >= log_term {
            (log_sum, log_term)
        } else {
            (log_term, log_sum)
        };
        log_sum = hi + (lo - hi).exp().ln_1p();
        // Past the mode the terms only shrink.
        if num < den && log_term < log_sum - 60.0 {
            break;
        }
    }
    log_sum.exp().min(1.0)
}

/// Benjamini-Hochberg step-up adjustment. Missing entries pass through and do
/// not count towards the family size.
pub fn bh_adjust(p: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut present: Vec<(usize, f64)> = p
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let m = present.len();
    let mut out = p.to_vec();
    if m == 0 {
        return out;
    }
    present.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let (idx, pv) = present[rank - 1];
        running = running.min(m as f64 * pv / rank as f64).min(1.0);
        // m * p / m can round one ulp below p.
        running = running.max(pv);
        out[idx] = Some(running);
    }
    out
}

/// Round to the nearest integer, ties to even.
pub fn round_half_even(x: f64) -> i64 {
    x.round_ties_even() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[5.0], 0.5).unwrap(), 5.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap(), 1.75);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.75).unwrap(), 4.0);
        assert_eq!(quantile(&[], 0.5), Err(StatsError::EmptyData));
    }

    #[test]
    fn quantile_unsorted_input() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.25).unwrap(), 1.75);
    }

    #[test]
    fn fence_examples() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(boxplot_fences(&data, 1.5).unwrap(), (-1.0, 7.0));
        assert_eq!(boxplot_fences(&[3.0, 3.0, 3.0], 1.5).unwrap(), (3.0, 3.0));
        assert_eq!(boxplot_fences(&data, 0.0).unwrap(), (2.0, 4.0));
    }

    #[test]
    fn normal_tail_examples() {
        assert_eq!(normal_upper_tail(0.0), 0.5);
        assert_abs_diff_eq!(normal_upper_tail(1.959963985), 0.025, epsilon = 1e-9);
        assert_eq!(normal_upper_tail(-40.0), 1.0);
        assert!(normal_upper_tail(40.0) < 1e-300);
    }

    #[test]
    fn fisher_examples() {
        assert_abs_diff_eq!(fisher_exact_greater(3, 1, 1, 3), 17.0 / 70.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fisher_exact_greater(4, 0, 0, 4), 1.0 / 70.0, epsilon = 1e-12);
        assert_eq!(fisher_exact_greater(0, 5, 7, 2), 1.0);
        assert_eq!(fisher_exact_greater(0, 0, 0, 9), 1.0);
    }

    #[test]
    fn fisher_large_margins_are_finite() {
        let p = fisher_exact_greater(5, 1_074_063, 300, 70_000_000);
        assert!(p > 0.0 && p <= 1.0);
        let p = fisher_exact_greater(5, 10, 3, 70_000_000);
        assert!(p < 1e-20);
    }

    #[test]
    fn bh_examples() {
        let adj = bh_adjust(&[Some(0.005), Some(0.01), Some(0.03), Some(0.04)]);
        let expected = [0.02, 0.02, 0.04, 0.04];
        for (a, e) in adj.iter().zip(expected) {
            assert_abs_diff_eq!(a.unwrap(), e, epsilon = 1e-15);
        }
        assert_eq!(bh_adjust(&[Some(0.5)]), vec![Some(0.5)]);
        let adj = bh_adjust(&[Some(0.03); 3]);
        for a in adj {
            assert_abs_diff_eq!(a.unwrap(), 0.03, epsilon = 1e-15);
        }
    }

    #[test]
    fn bh_skips_missing() {
        let adj = bh_adjust(&[Some(0.01), None, Some(0.04)]);
        assert_eq!(adj[1], None);
        assert_abs_diff_eq!(adj[0].unwrap(), 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(adj[2].unwrap(), 0.04, epsilon = 1e-15);
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_half_even(2.5), 2);
        assert_eq!(round_half_even(3.5), 4);
        assert_eq!(round_half_even(2.3), 2);
        assert_eq!(round_half_even(-0.5), 0);
    }
}
