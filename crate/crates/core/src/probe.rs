//! Embedding probes: logistic classification scored by AUC, and
//! graph-edit-distance regression scored by RMSE.
//!
//! The regression is ridge (closed form) rather than a kernel SVR: the probe
//! only asks whether embeddings preserve structural similarity, and a
//! deterministic dependency-free solver answers that.

#![allow(clippy::needless_range_loop)]

use crate::numeric::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("need both classes present")]
    SingleClass,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("singular system (lambda too small for this data)")]
    Singular,
}

/// How a molecule pair's two embeddings combine into regression features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    Concat,
    Subtract,
}

impl FeatureMode {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureMode::Concat => "concat",
            FeatureMode::Subtract => "subtract",
        }
    }
}

pub fn ged_features(a: &[f64], b: &[f64], mode: FeatureMode) -> Result<Vec<f64>, ProbeError> {
    if a.len() != b.len() {
        return Err(ProbeError::ShapeMismatch(format!(
            "{} vs {} dims",
            a.len(),
            b.len()
        )));
    }
    Ok(match mode {
        FeatureMode::Concat => a.iter().chain(b).copied().collect(),
        FeatureMode::Subtract => a.iter().zip(b).map(|(&x, &y)| x - y).collect(),
    })
}

/// L2-regularized logistic regression trained by full-batch gradient descent
/// from zero initialization with a backtracking step, so the loss never
/// increases across iterations. Returns the weights with the intercept last
/// (the intercept is not regularized).
pub fn logistic_fit(
    features: &Matrix,
    labels: &[bool],
    l2: f64,
    iters: usize,
) -> Result<Vec<f64>, ProbeError> {
    if labels.len() != features.rows() {
        return Err(ProbeError::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            features.rows()
        )));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(ProbeError::SingleClass);
    }
    let n = features.rows();
    let d = features.cols();
    let mut w = vec![0.0; d + 1];
    let loss_of = |w: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let z = dot_with_intercept(features.row(i), w);
            let y = if labels[i] { 1.0 } else { -1.0 };
            // log(1 + exp(-y z)), stably
            let m = -y * z;
            total += if m > 0.0 {
                m + (1.0 + (-m).exp()).ln()
            } else {
                (1.0 + m.exp()).ln()
            };
        }
        total / n as f64 + 0.5 * l2 * w[..d].iter().map(|v| v * v).sum::<f64>()
    };
    let mut current = loss_of(&w);
    let mut step = 1.0;
    for _ in 0..iters {
        // gradient
        let mut grad = vec![0.0; d + 1];
        for i in 0..n {
            let z = dot_with_intercept(features.row(i), &w);
            let y = if labels[i] { 1.0 } else { -1.0 };
            let s = -y * sigmoid(-y * z) / n as f64;
            for (g, &x) in grad.iter_mut().zip(features.row(i)) {
                *g += s * x;
            }
            grad[d] += s;
        }
        for j in 0..d {
            grad[j] += l2 * w[j];
        }
        // backtracking line search
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = w.iter().zip(&grad).map(|(&wi, &g)| wi - step * g).collect();
            let candidate_loss = loss_of(&candidate);
            if candidate_loss <= current {
                w = candidate;
                current = candidate_loss;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(w)
}

fn dot_with_intercept(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(&a, &b)| a * b).sum::<f64>() + w[x.len()]
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logistic_predict(features: &Matrix, weights: &[f64]) -> Vec<f64> {
    (0..features.rows())
        .map(|i| sigmoid(dot_with_intercept(features.row(i), weights)))
        .collect()
}

/// ROC AUC as the Mann-Whitney rank statistic; score ties contribute 1/2.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, ProbeError> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ProbeError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tie groups (1-based)
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            rank[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&rank)
        .filter(|(&l, _)| l)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Closed-form ridge regression; the intercept (last weight) is not
/// regularized. Requires lambda > 0.
pub fn ridge_fit(features: &Matrix, targets: &[f64], lambda: f64) -> Result<Vec<f64>, ProbeError> {
    if targets.len() != features.rows() {
        return Err(ProbeError::ShapeMismatch(format!(
            "{} targets for {} rows",
            targets.len(),
            features.rows()
        )));
    }
    let n = features.rows();
    let d = features.cols() + 1; // intercept column appended
    // normal equations: (X^T X + lambda I') w = X^T y
    let mut a = Matrix::zeros(d, d);
    let mut b = vec![0.0; d];
    for i in 0..n {
        let row = features.row(i);
        for p in 0..d {
            let xp = if p + 1 == d { 1.0 } else { row[p] };
            b[p] += xp * targets[i];
            for q in 0..d {
                let xq = if q + 1 == d { 1.0 } else { row[q] };
                let v = a.get(p, q) + xp * xq;
                a.set(p, q, v);
            }
        }
    }
    for p in 0..d - 1 {
        let v = a.get(p, p) + lambda;
        a.set(p, p, v);
    }
    solve_linear(a, b)
}

pub fn ridge_predict(features: &Matrix, weights: &[f64]) -> Vec<f64> {
    (0..features.rows())
        .map(|i| dot_with_intercept(features.row(i), weights))
        .collect()
}

pub fn rmse(predicted: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(predicted.len(), truth.len());
    let mse: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / predicted.len() as f64;
    mse.sqrt()
}

/// Gaussian elimination with partial pivoting; dimensions here are tiny.
fn solve_linear(mut a: Matrix, mut b: Vec<f64>) -> Result<Vec<f64>, ProbeError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| {
                a.get(p, col)
                    .abs()
                    .partial_cmp(&a.get(q, col).abs())
                    .expect("finite")
            })
            .expect("non-empty range");
        if a.get(pivot, col).abs() < 1e-12 {
            return Err(ProbeError::Singular);
        }
        if pivot != col {
            for c in 0..n {
                let tmp = a.get(col, c);
                a.set(col, c, a.get(pivot, c));
                a.set(pivot, c, tmp);
            }
            b.swap(col, pivot);
        }
        let diag = a.get(col, col);
        for r in col + 1..n {
            let factor = a.get(r, col) / diag;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let v = a.get(r, c) - factor * a.get(col, c);
                a.set(r, c, v);
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a.get(r, c) * x[c];
        }
        x[r] = acc / a.get(r, r);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_separates_two_points() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let w = logistic_fit(&x, &[false, true], 1e-4, 200).unwrap();
        let p = logistic_predict(&x, &w);
        assert!(p[0] < 0.5 && p[1] > 0.5);
    }

    #[test]
    fn logistic_identical_features_predict_class_prior() {
        let x = Matrix::from_rows(&vec![vec![1.0]; 4]).unwrap();
        let labels = [true, true, true, false];
        let w = logistic_fit(&x, &labels, 1e-6, 500).unwrap();
        let p = logistic_predict(&x, &w);
        assert!((p[0] - 0.75).abs() < 1e-3, "got {}", p[0]);
    }

    #[test]
    fn logistic_descends_from_zero() {
        let x = Matrix::from_rows(&[
            vec![0.0, 1.0],
            vec![1.0, 0.5],
            vec![-1.0, 0.2],
            vec![0.3, -1.0],
        ])
        .unwrap();
        let labels = [true, true, false, false];
        let w = logistic_fit(&x, &labels, 1e-3, 100).unwrap();
        // loss at fit <= loss at zero weights (which is ln 2)
        let p = logistic_predict(&x, &w);
        let loss: f64 = labels
            .iter()
            .zip(&p)
            .map(|(&l, &pi)| if l { -pi.ln() } else { -(1.0 - pi).ln() })
            .sum::<f64>()
            / 4.0;
        assert!(loss <= std::f64::consts::LN_2 + 1e-12);
        assert!(matches!(
            logistic_fit(&x, &[true, true, true, true], 1e-3, 10),
            Err(ProbeError::SingleClass)
        ));
    }

    #[test]
    fn logistic_is_deterministic() {
        let x = Matrix::glorot(20, 3, 4);
        let labels: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let a = logistic_fit(&x, &labels, 1e-3, 50).unwrap();
        let b = logistic_fit(&x, &labels, 1e-3, 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auc_examples() {
        let labels = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.4, 0.3, 0.2, 0.1], &labels).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(ProbeError::SingleClass)
        ));
    }

    #[test]
    fn auc_invariant_under_monotone_transforms() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let n = rng.random_range(4..40);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_range(0..2) == 1).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            let base = auc(&scores, &labels).unwrap();
            let exp_scores: Vec<f64> = scores.iter().map(|&s| s.exp()).collect();
            let affine_scores: Vec<f64> = scores.iter().map(|&s| 3.0 * s + 11.0).collect();
            assert!((auc(&exp_scores, &labels).unwrap() - base).abs() < 1e-12);
            assert!((auc(&affine_scores, &labels).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn ged_feature_modes() {
        let a = [1.0, 2.0];
        let b = [0.5, 5.0];
        assert_eq!(
            ged_features(&a, &b, FeatureMode::Concat).unwrap(),
            vec![1.0, 2.0, 0.5, 5.0]
        );
        assert_eq!(
            ged_features(&a, &b, FeatureMode::Subtract).unwrap(),
            vec![0.5, -3.0]
        );
        assert_eq!(
            ged_features(&a, &a, FeatureMode::Subtract).unwrap(),
            vec![0.0, 0.0]
        );
        // antisymmetry
        let fab = ged_features(&a, &b, FeatureMode::Subtract).unwrap();
        let fba = ged_features(&b, &a, FeatureMode::Subtract).unwrap();
        for (x, y) in fab.iter().zip(&fba) {
            assert_eq!(*x, -*y);
        }
        assert!(ged_features(&a, &[1.0], FeatureMode::Concat).is_err());
    }

    #[test]
    fn ridge_recovers_exact_linear_data() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [1.0, 3.0, 5.0, 7.0]; // y = 2x + 1
        let w = ridge_fit(&x, &y, 1e-10).unwrap();
        let pred = ridge_predict(&x, &w);
        assert!(rmse(&pred, &y) < 1e-6);

        let constant = [4.0, 4.0, 4.0, 4.0];
        let w = ridge_fit(&x, &constant, 1e-6).unwrap();
        let pred = ridge_predict(&x, &w);
        for p in pred {
            assert!((p - 4.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rmse_hand_case() {
        assert!((rmse(&[1.0, 2.0], &[1.0, 4.0]) - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[3.0], &[3.0]), 0.0);
    }
}
