//! Class-balanced, ℓ₂-penalized binary logistic regression.
//!
//! Training minimizes the class-balanced mean cross-entropy plus
//! `λ/2 ‖w‖²` (the bias is not penalized) with damped Newton steps. The
//! balanced objective makes the two classes count equally; the returned
//! probabilities are then recalibrated to the empirical positive rate by
//! shifting the logit by `ln(π / (1 − π))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1e-4,
            max_iter: 500,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Logit shift mapping balanced scores to the training prior.
    pub prior_shift: f64,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Balanced-objective logit, before prior calibration.
    pub fn raw_logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Calibrated probability of the positive class, in (0, 1).
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_logit(x) + self.prior_shift)
            .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }

    pub fn predict_rows(&self, rows: &[f64]) -> Vec<f64> {
        rows.chunks(self.dim().max(1)).map(|r| self.predict(r)).collect()
    }
}

/// Fits on `rows` (`n × dim`, row-major) with positives at `positive`.
pub fn fit_logistic(rows: &[f64], dim: usize, positive: &[usize], cfg: &LogisticConfig) -> Result<LogisticModel> {
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(Error::validation(format!(
            "{} values do not form rows of dimension {dim}",
            rows.len()
        )));
    }
    let n = rows.len() / dim;
    let mut label = vec![false; n];
    for &i in positive {
        if i >= n {
            return Err(Error::validation(format!("positive index {i} out of range {n}")));
        }
        label[i] = true;
    }
    let n_pos = label.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::validation(
            "logistic regression needs both positive and negative samples",
        ));
    }
    let n_neg = n - n_pos;
    let w_pos = n as f64 / (2.0 * n_pos as f64);
    let w_neg = n as f64 / (2.0 * n_neg as f64);
    let p = dim + 1;

    let objective = |theta: &DVector<f64>| -> f64 {
        let mut loss = 0.0;
        for i in 0..n {
            let x = &rows[i * dim..(i + 1) * dim];
            let z = theta[dim] + (0..dim).map(|j| theta[j] * x[j]).sum::<f64>();
            loss += if label[i] { w_pos * softplus(-z) } else { w_neg * softplus(z) };
        }
        let reg: f64 = (0..dim).map(|j| theta[j] * theta[j]).sum();
        loss / n as f64 + 0.5 * cfg.lambda * reg
    };

    let mut theta = DVector::<f64>::zeros(p);
    let mut value = objective(&theta);
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        let mut xt = vec![0.0; p];
        for i in 0..n {
            let x = &rows[i * dim..(i + 1) * dim];
            xt[..dim].copy_from_slice(x);
            xt[dim] = 1.0;
            let z: f64 = (0..p).map(|j| theta[j] * xt[j]).sum();
            let prob = sigmoid(z);
            let (s, y) = if label[i] { (w_pos, 1.0) } else { (w_neg, 0.0) };
            let r = s * (prob - y);
            let h = s * prob * (1.0 - prob);
            for a in 0..p {
                grad[a] += r * xt[a];
                if h > 0.0 {
                    let ha = h * xt[a];
                    for b in a..p {
                        hess[(a, b)] += ha * xt[b];
                    }
                }
            }
        }
        grad /= n as f64;
        hess /= n as f64;
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for j in 0..dim {
            grad[j] += cfg.lambda * theta[j];
            hess[(j, j)] += cfg.lambda;
        }
        if grad.norm() < cfg.grad_tol {
            iterations = it;
            break;
        }
        let step = newton_direction(&hess, &grad).unwrap_or_else(|| grad.clone());
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta - &step * t;
            let v = objective(&cand);
            if v <= value - 1e-4 * t * slope {
                theta = cand;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("logistic regression diverged".into()));
    }
    let prior = n_pos as f64 / n as f64;
    Ok(LogisticModel {
        weights: theta.as_slice()[..dim].to_vec(),
        bias: theta[dim],
        prior_shift: (prior / (1.0 - prior)).ln(),
        iterations,
    })
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let mut h = hess.clone();
    let mut jitter = 0.0;
    for _ in 0..8 {
        if let Some(chol) = h.clone().cholesky() {
            return Some(chol.solve(grad));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
        for i in 0..h.nrows() {
            h[(i, i)] = hess[(i, i)] + jitter;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_one_dimensional() {
        let rows: Vec<f64> = (0..40).map(|i| if i < 15 { 1.0 } else { -1.0 }).collect();
        let pos: Vec<usize> = (0..15).collect();
        let m = fit_logistic(&rows, 1, &pos, &LogisticConfig::default()).unwrap();
        for (i, &x) in rows.iter().enumerate() {
            let p = m.predict(&[x]);
            if i < 15 {
                assert!(p > 0.9, "{p}");
            } else {
                assert!(p < 0.1, "{p}");
            }
        }
    }

    #[test]
    fn no_signal_gives_prior() {
        let rows = vec![0.3; 2 * 50];
        let pos: Vec<usize> = (0..12).collect();
        let m = fit_logistic(&rows, 2, &pos, &LogisticConfig::default()).unwrap();
        let p = m.predict(&[0.3, 0.3]);
        assert!((p - 12.0 / 50.0).abs() < 0.05, "{p}");
    }

    #[test]
    fn single_class_rejected() {
        let rows = vec![0.0; 10];
        assert!(fit_logistic(&rows, 1, &[], &LogisticConfig::default()).is_err());
        let all: Vec<usize> = (0..10).collect();
        assert!(fit_logistic(&rows, 1, &all, &LogisticConfig::default()).is_err());
        assert!(fit_logistic(&rows, 1, &[10], &LogisticConfig::default()).is_err());
    }
}
