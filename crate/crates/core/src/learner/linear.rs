use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::softmax;
use crate::error::{Error, Result};

pub const RIDGE_DAMPING: f64 = 1e-8;
pub const LOGISTIC_L2: f64 = 1e-3;
pub const LOGISTIC_TOL: f64 = 1e-6;
pub const LOGISTIC_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub feature_names: Vec<String>,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

fn check_finite(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Invalid(format!("{} rows vs {} targets", x.len(), y.len())));
    }
    Ok(())
}

/// Least squares on centred data with a small ridge term so rank-deficient
/// designs still give finite coefficients.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64], feature_names: Vec<String>) -> Result<LinearModel> {
    check_finite(x, y)?;
    let n = x.len();
    let p = x[0].len();
    let mx: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let my = y.iter().sum::<f64>() / n as f64;
    let a = DMatrix::from_fn(n, p, |i, j| x[i][j] - mx[j]);
    let b = DVector::from_iterator(n, y.iter().map(|v| v - my));
    let mut gram = a.transpose() * &a;
    for j in 0..p {
        gram[(j, j)] += RIDGE_DAMPING;
    }
    let rhs = a.transpose() * b;
    let beta = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Invalid("singular normal equations".into()))?,
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("linear coefficients"));
    }
    let intercept = my - coefficients.iter().zip(&mx).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel { coefficients, intercept, feature_names })
}

/// Multinomial logistic regression; `weights[k]` are the class scores'
/// coefficient rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub feature_names: Vec<String>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores(x))
    }
}

struct Objective<'a> {
    x: &'a [Vec<f64>],
    labels: &'a [usize],
    w: &'a [f64],
    total: f64,
    k: usize,
    p: usize,
}

impl Objective<'_> {
    /// Parameters are laid out class-major: `[w_k (p values), b_k]` per class.
    fn value(&self, theta: &[f64]) -> f64 {
        let stride = self.p + 1;
        let mut loss = 0.0;
        for ((row, &l), wi) in self.x.iter().zip(self.labels).zip(self.w) {
            let s: Vec<f64> = (0..self.k)
                .map(|c| {
                    let t = &theta[c * stride..(c + 1) * stride];
                    t[self.p] + t[..self.p].iter().zip(row).map(|(a, v)| a * v).sum::<f64>()
                })
                .collect();
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += wi * (lse - s[l]);
        }
        let reg: f64 = (0..self.k).map(|c| theta[c * stride..c * stride + self.p].iter().map(|a| a * a).sum::<f64>()).sum();
        loss / self.total + 0.5 * LOGISTIC_L2 * reg
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let stride = self.p + 1;
        let mut g = vec![0.0; theta.len()];
        for ((row, &l), wi) in self.x.iter().zip(self.labels).zip(self.w) {
            let s: Vec<f64> = (0..self.k)
                .map(|c| {
                    let t = &theta[c * stride..(c + 1) * stride];
                    t[self.p] + t[..self.p].iter().zip(row).map(|(a, v)| a * v).sum::<f64>()
                })
                .collect();
            let prob = softmax(&s);
            for c in 0..self.k {
                let d = wi * (prob[c] - if c == l { 1.0 } else { 0.0 }) / self.total;
                let gc = &mut g[c * stride..(c + 1) * stride];
                for (gj, v) in gc[..self.p].iter_mut().zip(row) {
                    *gj += d * v;
                }
                gc[self.p] += d;
            }
        }
        for c in 0..self.k {
            for j in 0..self.p {
                g[c * stride + j] += LOGISTIC_L2 * theta[c * stride + j];
            }
        }
        g
    }
}

/// Full-batch gradient descent with backtracking line search on the
/// weighted cross-entropy plus a small L2 penalty on the coefficients.
pub fn fit_logistic(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    weights: &[f64],
    feature_names: Vec<String>,
) -> Result<LogisticModel> {
    let yf: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    check_finite(x, &yf)?;
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::NonFinite("sample weights"));
    }
    let k = n_classes.max(2);
    let p = x[0].len();
    let obj = Objective { x, labels, w: weights, total: weights.iter().sum(), k, p };
    let mut theta = vec![0.0; k * (p + 1)];
    let mut f = obj.value(&theta);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < LOGISTIC_MAX_ITER {
        let g = obj.gradient(&theta);
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < LOGISTIC_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            let fc = obj.value(&cand);
            if fc <= f - 0.5 * step * gnorm2 {
                theta = cand;
                f = fc;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                // No further decrease representable; treat as converged.
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
    }
    let stride = p + 1;
    Ok(LogisticModel {
        weights: (0..k).map(|c| theta[c * stride..c * stride + p].to_vec()).collect(),
        intercepts: (0..k).map(|c| theta[c * stride + p]).collect(),
        feature_names,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let m = fit_linear(&x, &y, vec!["x".into()]).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-6);
        assert!(m.intercept.abs() < 1e-6);
    }

    #[test]
    fn duplicate_column_stays_finite() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 + 1.0).collect();
        let m = fit_linear(&x, &y, vec!["a".into(), "b".into()]).unwrap();
        assert!(m.coefficients.iter().all(|c| c.is_finite()));
        assert!((m.predict(&[4.0, 4.0]) - 13.0).abs() < 1e-4);
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(fit_linear(&[vec![f64::NAN]], &[1.0], vec!["x".into()]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn separable_classes() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let m = fit_logistic(&x, &labels, 2, &[1.0; 20], vec!["x".into()]).unwrap();
        let correct = x.iter().zip(&labels).filter(|(r, l)| {
            let p = m.proba(r);
            usize::from(p[1] > p[0]) == **l
        });
        assert_eq!(correct.count(), 20);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = vec![vec![0.3, -1.0], vec![1.2, 0.4], vec![-0.7, 0.9], vec![0.1, 0.1]];
        let labels = vec![0, 2, 1, 2];
        let w = vec![1.0, 2.0, 0.5, 1.0];
        let obj = Objective { x: &x, labels: &labels, w: &w, total: 4.5, k: 3, p: 2 };
        let theta: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = obj.gradient(&theta);
        for i in 0..9 {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (obj.value(&a) - obj.value(&b)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
    }
}
