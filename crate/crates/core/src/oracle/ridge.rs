//! Ridge regression on standardized features with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::oracle::OracleError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub lambda: f64,
    pub intercept: f64,
    /// Coefficients on standardized features.
    pub coefficients: Vec<f64>,
    pub feature_means: Vec<f64>,
    /// Population standard deviations; constant columns store 1.
    pub feature_scales: Vec<f64>,
}

impl RidgeModel {
    /// Minimizes `||y - b - Z w||² + lambda ||w||²` where `Z` is the
    /// standardized feature matrix.
    pub fn fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Self, OracleError> {
        let n = x.len();
        let p = x.first().map_or(0, Vec::len);
        let nf = n as f64;
        let mut means = vec![0.0; p];
        for row in x {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= nf);
        let mut scales = vec![0.0; p];
        for row in x {
            for j in 0..p {
                let d = row[j] - means[j];
                scales[j] += d * d;
            }
        }
        for s in scales.iter_mut() {
            let sd = (*s / nf).sqrt();
            *s = if sd > 1e-12 { sd } else { 1.0 };
        }
        let z = DMatrix::from_fn(n, p, |i, j| (x[i][j] - means[j]) / scales[j]);
        let y_mean = y.iter().sum::<f64>() / nf;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = z.transpose() * &z;
        for j in 0..p {
            gram[(j, j)] += lambda;
        }
        let rhs = z.transpose() * yc;
        let chol = gram.cholesky().ok_or(OracleError::Numerical(
            "ridge normal equations are not positive definite",
        ))?;
        let w = chol.solve(&rhs);
        Ok(Self {
            lambda,
            intercept: y_mean,
            coefficients: w.iter().copied().collect(),
            feature_means: means,
            feature_scales: scales,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .zip(self.feature_means.iter().zip(&self.feature_scales))
                .map(|((w, v), (m, s))| w * (v - m) / s)
                .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ordinary least squares by Gaussian elimination on the augmented
    /// normal equations, independent of the standardization path.
    fn ols(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len() + 1;
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, t) in x.iter().zip(y) {
            let mut r = vec![1.0];
            r.extend(row);
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += r[i] * r[j];
                }
                a[i][p] += r[i] * t;
            }
        }
        for c in 0..p {
            let piv = (c..p)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    let pivot = a[c].clone();
                    for (x, y) in a[r][c..].iter_mut().zip(&pivot[c..]) {
                        *x -= f * y;
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    #[test]
    fn approaches_least_squares_as_lambda_vanishes() {
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![i as f64 / 11.0, ((i * 7) % 5) as f64 / 4.0])
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 3.0 * r[0] - 2.0 * r[1] + 0.5 + 0.01 * (r[0] * 13.0).sin())
            .collect();
        let beta = ols(&x, &y);
        let model = RidgeModel::fit(&x, &y, 1e-10).unwrap();
        for probe in [vec![0.3, 0.6], vec![1.0, 0.0], vec![0.0, 1.0]] {
            let expected = beta[0] + beta[1] * probe[0] + beta[2] * probe[1];
            let got = model.predict(&probe);
            assert!(
                ((got - expected) / expected).abs() < 1e-6,
                "{got} vs {expected}"
            );
        }
    }

    #[test]
    fn constant_columns_are_ignored() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 1.0]).collect();
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64).collect();
        let m = RidgeModel::fit(&x, &y, 0.01).unwrap();
        assert_eq!(m.coefficients[1], 0.0);
        assert!((m.predict(&[2.0, 1.0]) - 4.0).abs() < 1e-2);
    }
}
