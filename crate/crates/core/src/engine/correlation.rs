use crate::matrix::{Matrix, MaybeMatrix};
use crate::parallel::map_indices;

use super::mask::UMatrix;

/// Minimum number of pairwise-complete positions for a correlation or fit.
pub const MIN_COMPLETE: usize = 3;

/// Whether connections are sought between AE rows or drug columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    Rows,
    Columns,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub cor: f64,
}

/// For each AE (or drug, by orientation) the others whose masked residuals
/// correlate with it at `|cor| >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectedAeGraph {
    pub neighbors: Vec<Vec<Neighbor>>,
    pub threshold: f64,
    pub orientation: Orientation,
}

impl ConnectedAeGraph {
    pub fn n_pairs(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

/// Intercept and slope of one connected pair, with its static weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFit {
    pub index: usize,
    pub cor: f64,
    pub alpha: f64,
    pub beta: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedMatrix {
    /// Weighted predictions in the original (AE x drug) orientation.
    pub values: MaybeMatrix,
    /// Per node (row, or column under [`Orientation::Columns`]) regressions.
    pub fits: Vec<Vec<PairFit>>,
}

fn oriented(u: &UMatrix, orientation: Orientation) -> std::borrow::Cow<'_, UMatrix> {
    match orientation {
        Orientation::Rows => std::borrow::Cow::Borrowed(u),
        Orientation::Columns => std::borrow::Cow::Owned(u.transpose()),
    }
}

fn complete_pairs(x: &[Option<f64>], y: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .unzip()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation over pairwise-complete positions; `None` with fewer
/// than three such positions or a constant vector.
pub fn pairwise_correlation(x: &[Option<f64>], y: &[Option<f64>]) -> Option<f64> {
    let (a, b) = complete_pairs(x, y);
    if a.len() < MIN_COMPLETE {
        return None;
    }
    let (ma, mb) = (mean(&a), mean(&b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (p, q) in a.iter().zip(&b) {
        let (da, db) = (p - ma, q - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Finds connected AEs: pairs with `|cor| >= c_corr`.
pub fn connect_aes(u: &UMatrix, c_corr: f64, orientation: Orientation) -> ConnectedAeGraph {
    let m = oriented(u, orientation);
    let nodes = m.rows();
    let neighbors = map_indices(nodes, |i| {
        (0..nodes)
            .filter(|&k| k != i)
            .filter_map(|k| {
                let cor = pairwise_correlation(m.row(i), m.row(k))?;
                (cor.abs() >= c_corr).then_some(Neighbor { index: k, cor })
            })
            .collect()
    });
    ConnectedAeGraph {
        neighbors,
        threshold: c_corr,
        orientation,
    }
}

/// Least-squares intercept and slope of `y` on `x` over complete positions.
fn simple_regression(y: &[Option<f64>], x: &[Option<f64>]) -> Option<(f64, f64)> {
    let (ys, xs) = complete_pairs(y, x);
    if xs.len() < MIN_COMPLETE {
        return None;
    }
    let (mx, my) = (mean(&xs), mean(&ys));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx <= 0.0 {
        return None;
    }
    let beta = sxy / sxx;
    Some((my - beta * mx, beta))
}

/// Predicts each cell from connected AEs: every connected `k` contributes
/// `alpha_ik + beta_ik u_kj` weighted by `|cor_ik|`, renormalized over the
/// `k` whose `u_kj` is present.
pub fn fit_predictions(u: &UMatrix, g: &ConnectedAeGraph) -> FittedMatrix {
    let m = oriented(u, g.orientation);
    let (nodes, width) = m.shape();
    let per_node: Vec<(Vec<PairFit>, Vec<Option<f64>>)> = map_indices(nodes, |i| {
        let mut fits: Vec<PairFit> = g.neighbors[i]
            .iter()
            .filter_map(|nb| {
                let (alpha, beta) = simple_regression(m.row(i), m.row(nb.index))?;
                Some(PairFit {
                    index: nb.index,
                    cor: nb.cor,
                    alpha,
                    beta,
                    weight: 0.0,
                })
            })
            .collect();
        let total: f64 = fits.iter().map(|f| f.cor.abs()).sum();
        for f in &mut fits {
            f.weight = f.cor.abs() / total;
        }
        let row = (0..width)
            .map(|j| {
                let (mut num, mut den) = (0.0, 0.0);
                for f in &fits {
                    if let Some(x) = m[(f.index, j)] {
                        num += f.cor.abs() * (f.alpha + f.beta * x);
                        den += f.cor.abs();
                    }
                }
                (den > 0.0).then(|| num / den)
            })
            .collect();
        (fits, row)
    });
    let mut values = Matrix::filled(nodes, width, None);
    let mut fits = Vec::with_capacity(nodes);
    for (i, (f, row)) in per_node.into_iter().enumerate() {
        values.row_mut(i).copy_from_slice(&row);
        fits.push(f);
    }
    let values = match g.orientation {
        Orientation::Rows => values,
        Orientation::Columns => values.transpose(),
    };
    FittedMatrix { values, fits }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(rows: &[Vec<Option<f64>>]) -> UMatrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_rows_fully_connected() {
        let r = vec![Some(1.0), Some(-0.5), Some(2.0), Some(0.3)];
        let g = connect_aes(&u(&[r.clone(), r.clone()]), 1.0, Orientation::Rows);
        assert_eq!(g.neighbors[0], vec![Neighbor { index: 1, cor: 1.0 }]);
        let fit = fit_predictions(&u(&[r.clone(), r.clone()]), &g);
        for j in 0..4 {
            assert!((fit.values[(0, j)].unwrap() - r[j].unwrap()).abs() < 1e-12);
        }
        assert!((fit.fits[0][0].alpha).abs() < 1e-12);
        assert!((fit.fits[0][0].beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_overlaps_not_connected() {
        let m = u(&[
            vec![Some(1.0), Some(2.0), None, Some(4.0)],
            vec![Some(1.0), Some(2.0), Some(3.0), None],
        ]);
        let g = connect_aes(&m, 0.0, Orientation::Rows);
        assert_eq!(g.n_pairs(), 0);
        let fit = fit_predictions(&m, &g);
        assert!(fit.values.iter().all(Option::is_none));
    }

    #[test]
    fn negation_connects_with_abs_rule() {
        let a = vec![Some(1.0), Some(-2.0), Some(0.5)];
        let b: Vec<_> = a.iter().map(|v| v.map(|x| -x)).collect();
        let g = connect_aes(&u(&[a, b]), 0.8, Orientation::Rows);
        assert_eq!(g.neighbors[0][0].cor, -1.0);
        assert_eq!(g.neighbors[1][0].cor, -1.0);
    }

    #[test]
    fn constant_row_skipped() {
        let g = connect_aes(
            &u(&[vec![Some(1.0); 4], vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)]]),
            0.0,
            Orientation::Rows,
        );
        assert_eq!(g.n_pairs(), 0);
    }

    #[test]
    fn opposite_correlations_weighted_equally() {
        // Row 0 is connected to row 1 (cor 0.9-ish) and row 2 (its negation).
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let noise = [0.3, -0.4, 0.5, -0.2, 0.1];
        let r0: Vec<_> = x.iter().zip(noise).map(|(a, n)| Some(a + n)).collect();
        let r1: Vec<_> = x.iter().map(|a| Some(*a)).collect();
        let r2: Vec<_> = x.iter().map(|a| Some(-*a)).collect();
        let m = u(&[r0, r1, r2]);
        let g = connect_aes(&m, 0.8, Orientation::Rows);
        let c1 = g.neighbors[0][0].cor;
        let c2 = g.neighbors[0][1].cor;
        assert!((c1 + c2).abs() < 1e-12);
        let fit = fit_predictions(&m, &g);
        assert_eq!(fit.fits[0][0].weight, 0.5);
        assert_eq!(fit.fits[0][1].weight, 0.5);
    }

    #[test]
    fn unconnected_row_missing() {
        let m = u(&[
            vec![Some(1.0), Some(2.0), Some(3.0)],
            vec![Some(1.0), Some(2.0), Some(3.1)],
            vec![Some(3.0), Some(-1.0), Some(2.9)],
        ]);
        let g = connect_aes(&m, 0.99, Orientation::Rows);
        let fit = fit_predictions(&m, &g);
        assert!(fit.values.row(2).iter().all(Option::is_none));
        assert!(fit.values.row(0).iter().all(Option::is_some));
    }

    #[test]
    fn column_orientation_transposes() {
        let m = u(&[
            vec![Some(1.0), Some(2.0), Some(7.0)],
            vec![Some(2.0), Some(4.0), Some(1.0)],
            vec![Some(3.0), Some(6.0), Some(4.0)],
        ]);
        let g = connect_aes(&m, 0.99, Orientation::Columns);
        assert_eq!(g.neighbors[0], vec![Neighbor { index: 1, cor: 1.0 }]);
        let fit = fit_predictions(&m, &g);
        assert_eq!(fit.values.shape(), (3, 3));
        assert!((fit.values[(2, 0)].unwrap() - 3.0).abs() < 1e-12);
        assert!(fit.values.column(2).iter().all(Option::is_none));
    }
}
