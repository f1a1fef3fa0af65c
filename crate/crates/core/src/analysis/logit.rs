//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

pub const GRADIENT_TOL: f64 = 1e-8;
pub const RELATIVE_LL_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100;
pub const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("empty design")]
    Empty,
    #[error("design and outcome have different lengths ({rows} rows, {outcomes} outcomes)")]
    Shape { rows: usize, outcomes: usize },
    #[error("outcome must be 0 or 1 (row {row} has {value})")]
    Outcome { row: usize, value: f64 },
    #[error("design is not full column rank; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("no convergence after {iterations} iterations (max |gradient| {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

impl Coefficient {
    /// `*` for p < 0.001, `‡` for p < 0.01, `†` for p < 0.05.
    pub fn marker(&self) -> &'static str {
        significance_marker(self.p_value)
    }
}

pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.001 {
        "*"
    } else if p < 0.01 {
        "‡"
    } else if p < 0.05 {
        "†"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<Coefficient>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub gradient_max_norm: f64,
    /// Columns whose estimates diverged past the separation bound.
    pub separation: Vec<String>,
    pub n: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }
}

/// Two-sided normal p-value.
pub fn normal_p_value(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^eta)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn log_likelihood(eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    eta.iter()
        .zip(y.iter())
        .map(|(e, yi)| yi * e - softplus(*e))
        .sum()
}

/// Column groups that are linearly dependent, by modified Gram-Schmidt.
/// Each group is a dependent column followed by the earlier columns it is
/// built from.
pub fn collinear_sets(x: &DMatrix<f64>, names: &[String]) -> Vec<Vec<String>> {
    let (n, p) = x.shape();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut basis_cols: Vec<usize> = Vec::new();
    // r[k][j]: coefficient of basis vector k in original column j
    let mut coeffs: Vec<Vec<f64>> = Vec::new();
    let mut sets = Vec::new();
    for j in 0..p {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col.clone();
        let mut r = vec![0.0; basis.len()];
        for (k, q) in basis.iter().enumerate() {
            let c = q.dot(&v);
            r[k] = c;
            v -= q * c;
        }
        let resid = v.norm();
        if norm0 == 0.0 || resid <= 1e-9 * norm0.max(1.0) * (n as f64).sqrt().max(1.0) {
            // express column j in the original independent columns: solve R c = r
            let m = basis.len();
            let mut c = vec![0.0; m];
            for k in (0..m).rev() {
                let mut s = r[k];
                for l in k + 1..m {
                    s -= coeffs[k][l] * c[l];
                }
                c[k] = s / coeffs[k][k];
            }
            let mut set = vec![names[j].clone()];
            for (k, ck) in c.iter().enumerate() {
                if ck.abs() > 1e-8 {
                    set.push(names[basis_cols[k]].clone());
                }
            }
            sets.push(set);
            continue;
        }
        let q = v / resid;
        for (k, row) in coeffs.iter_mut().enumerate() {
            row.push(r[k]);
        }
        let mut new_row = vec![0.0; basis.len()];
        new_row.push(resid);
        coeffs.push(new_row);
        basis.push(q);
        basis_cols.push(j);
    }
    sets
}

/// Maximises the Bernoulli log-likelihood with logit link. Standard errors
/// come from the inverse observed information at the optimum, p-values from
/// the two-sided normal approximation.
pub fn fit_logistic_matrix(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
) -> Result<FitResult, FitError> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(FitError::Empty);
    }
    if y.len() != n {
        return Err(FitError::Shape {
            rows: n,
            outcomes: y.len(),
        });
    }
    assert_eq!(names.len(), p, "one name per column");
    if let Some((row, value)) = y.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
        return Err(FitError::Outcome { row, value: *value });
    }
    let sets = collinear_sets(x, names);
    if !sets.is_empty() {
        let mut columns: Vec<String> = Vec::new();
        for s in sets {
            for c in s {
                if !columns.contains(&c) {
                    columns.push(c);
                }
            }
        }
        return Err(FitError::RankDeficient { columns });
    }

    let mut beta = DVector::<f64>::zeros(p);
    let mut eta = x * &beta;
    let mut ll = log_likelihood(&eta, y);
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut hessian = DMatrix::<f64>::zeros(p, p);
    while iterations < MAX_ITERATIONS {
        let mu = eta.map(sigmoid);
        let grad = x.tr_mul(&(y - &mu));
        grad_norm = grad.amax();
        hessian = information(x, &mu);
        if grad_norm < GRADIENT_TOL {
            converged = true;
            break;
        }
        let Some(chol) = hessian.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        iterations += 1;
        let mut t = 1.0;
        let mut next_beta = &beta + &step;
        let mut next_eta = x * &next_beta;
        let mut next_ll = log_likelihood(&next_eta, y);
        let mut halvings = 0;
        while next_ll < ll - 1e-12 * ll.abs() && halvings < 30 {
            t *= 0.5;
            next_beta = &beta + &step * t;
            next_eta = x * &next_beta;
            next_ll = log_likelihood(&next_eta, y);
            halvings += 1;
        }
        let rel = (next_ll - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        beta = next_beta;
        eta = next_eta;
        ll = next_ll;
        if rel < RELATIVE_LL_TOL {
            let mu = eta.map(sigmoid);
            grad_norm = x.tr_mul(&(y - &mu)).amax();
            hessian = information(x, &mu);
            converged = true;
            break;
        }
    }

    // Constant columns are exempt from the bound.
    let constant = |j: usize| x.nrows() > 0 && x.column(j).iter().all(|v| *v == x[(0, j)]);
    let separation: Vec<String> = beta
        .iter()
        .zip(names)
        .enumerate()
        .filter(|(j, (b, _))| b.abs() > SEPARATION_BOUND && !constant(*j))
        .map(|(_, (_, n))| n.clone())
        .collect();
    if !converged && separation.is_empty() {
        return Err(FitError::NonConvergence {
            iterations,
            gradient_norm: grad_norm,
        });
    }
    if !separation.is_empty() {
        tracing::warn!(columns = ?separation, "estimates diverge, data look separated");
    }
    let cov = hessian.clone().cholesky().map(|c| c.inverse());
    let coefficients = (0..p)
        .map(|j| {
            let se = cov.as_ref().map_or(f64::NAN, |c| c[(j, j)].sqrt());
            let z = beta[j] / se;
            Coefficient {
                name: names[j].clone(),
                estimate: beta[j],
                std_error: se,
                z,
                p_value: normal_p_value(z),
            }
        })
        .collect();
    Ok(FitResult {
        coefficients,
        converged,
        iterations,
        log_likelihood: ll,
        gradient_max_norm: grad_norm,
        separation,
        n,
    })
}

/// `X' W X` with `W = diag(mu (1 - mu))`.
fn information(x: &DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, m) in mu.iter().enumerate() {
        let w = (m * (1.0 - m)).sqrt();
        xw.row_mut(i).scale_mut(w);
    }
    xw.tr_mul(&xw)
}

/// Fitted probabilities for a coefficient vector.
pub fn fitted(x: &DMatrix<f64>, beta: &[f64]) -> DVector<f64> {
    (x * DVector::from_column_slice(beta)).map(sigmoid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    /// Plain Newton-Raphson with Gaussian elimination on nested vectors.
    fn newton_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len();
        let mut b = vec![0.0; p];
        for _ in 0..200 {
            let mut g = vec![0.0; p];
            let mut h = vec![vec![0.0; p]; p];
            for (row, yi) in x.iter().zip(y) {
                let eta: f64 = row.iter().zip(&b).map(|(a, c)| a * c).sum();
                let m = 1.0 / (1.0 + (-eta).exp());
                for j in 0..p {
                    g[j] += row[j] * (yi - m);
                    for k in 0..p {
                        h[j][k] += row[j] * row[k] * m * (1.0 - m);
                    }
                }
            }
            // solve h d = g
            let mut a: Vec<Vec<f64>> = h
                .iter()
                .zip(&g)
                .map(|(r, gi)| r.iter().cloned().chain([*gi]).collect())
                .collect();
            for c in 0..p {
                let piv = (c..p)
                    .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                    .unwrap();
                a.swap(c, piv);
                for r in 0..p {
                    if r != c {
                        let f = a[r][c] / a[c][c];
                        for k in c..=p {
                            a[r][k] -= f * a[c][k];
                        }
                    }
                }
            }
            let d: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
            for j in 0..p {
                b[j] += d[j];
            }
            if d.iter().all(|v| v.abs() < 1e-14) {
                break;
            }
        }
        b
    }

    fn simulate(n: usize, beta: &[f64], seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = beta.len();
        let mut x = DMatrix::zeros(n, p);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for j in 1..p {
                x[(i, j)] = rng.sample(StandardNormal);
            }
            let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
            y[i] = if rng.gen::<f64>() < sigmoid(eta) {
                1.0
            } else {
                0.0
            };
        }
        (x, y)
    }

    #[test]
    fn recovers_known_coefficients() {
        let truth = [-0.5, 0.8, -0.3];
        let (x, y) = simulate(5_000, &truth, 7);
        let fit = fit_logistic_matrix(&x, &y, &names(3)).unwrap();
        assert!(fit.converged);
        for (b, t) in fit.estimates().iter().zip(truth) {
            assert!((b - t).abs() < 0.1, "{b} vs {t}");
        }
        assert!(fit.gradient_max_norm < 1e-6);
        let mean_fit = fitted(&x, &fit.estimates()).mean();
        assert!((mean_fit - y.mean()).abs() < 1e-9);
    }

    #[test]
    fn intercept_only_is_log_odds() {
        let y = DVector::from_iterator(400, (0..400).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }));
        let x = DMatrix::from_element(400, 1, 1.0);
        let fit = fit_logistic_matrix(&x, &y, &names(1)).unwrap();
        assert!((fit.coefficients[0].estimate - (0.25f64 / 0.75).ln()).abs() < 1e-9);
        assert!((fit.coefficients[0].estimate + 1.0986).abs() < 1e-4);
    }

    #[test]
    fn matches_newton_oracle() {
        for seed in 0..5 {
            let (x, y) = simulate(300, &[0.2, -1.0, 0.5, 0.3], seed);
            let fit = fit_logistic_matrix(&x, &y, &names(4)).unwrap();
            let rows: Vec<Vec<f64>> = (0..x.nrows())
                .map(|i| x.row(i).iter().cloned().collect())
                .collect();
            let oracle = newton_oracle(&rows, y.as_slice());
            for (a, b) in fit.estimates().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn collinear_columns_named() {
        let (mut x, y) = simulate(100, &[0.0, 1.0, 1.0], 1);
        x = x.insert_column(3, 0.0);
        for i in 0..100 {
            x[(i, 3)] = 2.0 * x[(i, 1)] - x[(i, 2)];
        }
        let err = fit_logistic_matrix(&x, &y, &names(4)).unwrap_err();
        assert_eq!(
            err,
            FitError::RankDeficient {
                columns: vec!["x3".into(), "x1".into(), "x2".into()]
            }
        );
    }

    #[test]
    fn separation_flagged() {
        let n = 60;
        let mut x = DMatrix::zeros(n, 2);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = i as f64 - 29.5;
            y[i] = if i >= 30 { 1.0 } else { 0.0 };
        }
        let fit = fit_logistic_matrix(&x, &y, &names(2)).unwrap();
        assert_eq!(fit.separation, vec!["x1".to_string()]);
    }

    #[test]
    fn markers_and_p_values() {
        assert_eq!(significance_marker(0.0005), "*");
        assert_eq!(significance_marker(0.005), "‡");
        assert_eq!(significance_marker(0.03), "†");
        assert_eq!(significance_marker(0.2), "");
        let p = normal_p_value(1.959963984540054);
        assert!((p - 0.05).abs() < 1e-10, "{p:e}");
        assert!(normal_p_value(30.0) > 0.0);
    }

    #[test]
    fn bad_outcome_rejected() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_vec(vec![0.0, 0.5]);
        assert_eq!(
            fit_logistic_matrix(&x, &y, &names(1)),
            Err(FitError::Outcome { row: 1, value: 0.5 })
        );
    }
}
