//! Ridge regression by normal equations.
//!
//! Minimizes `sum (y - Xw - b)^2 + lambda ||w||^2` with an unpenalized
//! intercept, solved in closed form via Cholesky on the augmented system.
//! Deterministic and dependency-free; adequate for the desk-scale feature
//! matrices this crate produces.

use crate::error::{Error, Result};

/// A fitted linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len(), self.weights.len());
        self.intercept
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }
}

/// Fit weights and intercept. `rows` is the feature matrix (one slice per
/// sample), `targets` the responses, `lambda >= 0` the ridge penalty.
pub fn fit_regressor(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<RidgeModel> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty rows/targets, got {} rows and {} targets",
            rows.len(),
            targets.len()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be >= 0".into()));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidArgument("ragged feature matrix".into()));
    }

    // Augmented system over [intercept, w]: (A + lambda D) beta = rhs with
    // A = [1 X]' [1 X] and D zeroing the intercept penalty.
    let dim = p + 1;
    let mut a = vec![0.0f64; dim * dim];
    let mut rhs = vec![0.0f64; dim];
    let n = rows.len() as f64;
    a[0] = n;
    for (row, y) in rows.iter().zip(targets) {
        rhs[0] += y;
        for (i, xi) in row.iter().enumerate() {
            a[i + 1] += xi; // first row/column: sums of each feature
            rhs[i + 1] += xi * y;
            for (j, xj) in row.iter().enumerate().skip(i) {
                a[(i + 1) * dim + (j + 1)] += xi * xj;
            }
        }
    }
    for i in 1..dim {
        a[i * dim] = a[i]; // mirror first row into first column
        a[i * dim + i] += lambda;
        for j in (i + 1)..dim {
            a[j * dim + i] = a[i * dim + j];
        }
    }

    let beta = cholesky_solve(&a, &rhs, dim)?;
    Ok(RidgeModel {
        intercept: beta[0],
        weights: beta[1..].to_vec(),
    })
}

/// Solve the symmetric positive-definite system `A x = b` in place.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 1e-12 {
                    return Err(Error::Singular(format!(
                        "non-positive pivot {sum} at column {i}"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Ok(x)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_fit() {
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|x| vec![*x]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0]).collect();
        let model = fit_regressor(&rows, &y, 0.0).unwrap();
        assert!((model.weights[0] - 2.0).abs() < 1e-6);
        assert!(model.intercept.abs() < 1e-6);
    }

    #[test]
    fn huge_lambda_shrinks_to_mean() {
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0].iter().map(|x| vec![*x]).collect();
        let y = vec![3.0, 5.0, 10.0];
        let model = fit_regressor(&rows, &y, 1e12).unwrap();
        assert!(model.weights[0].abs() < 1e-6);
        assert!((model.intercept - 6.0).abs() < 1e-4);
    }

    #[test]
    fn degenerate_features_without_penalty_fail() {
        let rows = vec![vec![0.0, 0.0]; 4];
        let y = vec![1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            fit_regressor(&rows, &y, 0.0),
            Err(Error::Singular(_))
        ));
        // A positive penalty regularizes the same system.
        assert!(fit_regressor(&rows, &y, 0.5).is_ok());
    }

    #[test]
    fn matches_gaussian_elimination_oracle() {
        // Independent route: solve the same normal equations with plain
        // Gaussian elimination and compare.
        let mut state = 88172645463325252u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let n = 40;
        let p = 5;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| next() * 4.0).collect()).collect();
        let true_w = [1.5, -2.0, 0.3, 0.0, 4.0];
        let y: Vec<f64> = rows
            .iter()
            .map(|r| {
                1.0 + r.iter().zip(true_w).map(|(x, w)| x * w).sum::<f64>() + next() * 0.01
            })
            .collect();
        let lambda = 0.7;
        let model = fit_regressor(&rows, &y, lambda).unwrap();

        // Oracle: build the augmented system and eliminate with pivoting.
        let dim = p + 1;
        let mut a = vec![vec![0.0f64; dim]; dim];
        let mut b = vec![0.0f64; dim];
        let aug: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut v = vec![1.0];
                v.extend_from_slice(r);
                v
            })
            .collect();
        for (row, yv) in aug.iter().zip(&y) {
            for i in 0..dim {
                b[i] += row[i] * yv;
                for j in 0..dim {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        for i in 1..dim {
            a[i][i] += lambda;
        }
        for col in 0..dim {
            let pivot = (col..dim)
                .max_by(|x, y| a[*x][col].abs().partial_cmp(&a[*y][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for r in (col + 1)..dim {
                let f = a[r][col] / a[col][col];
                for c in col..dim {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0f64; dim];
        for i in (0..dim).rev() {
            let mut sum = b[i];
            for j in (i + 1)..dim {
                sum -= a[i][j] * x[j];
            }
            x[i] = sum / a[i][i];
        }

        assert!((model.intercept - x[0]).abs() < 1e-6);
        for (w, expect) in model.weights.iter().zip(&x[1..]) {
            assert!((w - expect).abs() < 1e-6);
        }
    }
}
