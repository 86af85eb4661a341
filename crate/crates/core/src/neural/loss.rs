//! Binned ISTI decoding and the combined classification + regression loss.

use crate::error::{Error, Result};

/// Which classification term the bin loss uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinLoss {
    /// Categorical cross-entropy over the softmax bins.
    #[default]
    CrossEntropy,
    /// Independent binary cross-entropy on every softmax output.
    BinaryPerBin,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Center of bin `j` when `[0, 1]` is split into `n` equal bins.
pub fn bin_center(j: usize, n: usize) -> f64 {
    (j as f64 + 0.5) / n as f64
}

/// Bin index holding a value in `[0, 1]`.
pub fn target_bin(target: f64, n: usize) -> usize {
    ((target * n as f64).floor() as usize).min(n - 1)
}

fn expectation(probs: &[f64]) -> f64 {
    let n = probs.len();
    probs.iter().enumerate().map(|(j, p)| p * bin_center(j, n)).sum()
}

/// Probability-weighted mean of the bin centers.
pub fn bins_expectation(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        return Err(Error::ShapeMismatch(format!("need at least 2 bins, got {}", probs.len())));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::NotADistribution(sum));
    }
    Ok(expectation(probs))
}

/// Value and pieces of the per-frame loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub classification: f64,
    pub regression: f64,
    pub target_bin: usize,
    pub prediction: f64,
}

/// Loss from already-normalized bin probabilities:
/// classification term + `alpha * (pred - target)^2`.
pub fn multi_loss(probs: &[f64], pred: f64, target: f64, alpha: f64, kind: BinLoss) -> Result<LossParts> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::TargetOutOfRange(target));
    }
    let n = probs.len();
    let tb = target_bin(target, n);
    let classification = match kind {
        BinLoss::CrossEntropy => -probs[tb].ln(),
        BinLoss::BinaryPerBin => probs
            .iter()
            .enumerate()
            .map(|(j, &p)| if j == tb { -p.ln() } else { -(1.0 - p).ln() })
            .sum(),
    };
    let regression = (pred - target).powi(2);
    Ok(LossParts {
        loss: classification + alpha * regression,
        classification,
        regression,
        target_bin: tb,
        prediction: pred,
    })
}

/// Loss from logits plus its gradient with respect to the logits.
pub fn multi_loss_from_logits(logits: &[f64], target: f64, alpha: f64, kind: BinLoss) -> Result<(LossParts, Vec<f64>)> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::TargetOutOfRange(target));
    }
    let n = logits.len();
    let p = softmax(logits);
    let pred = expectation(&p);
    let tb = target_bin(target, n);

    // Log-probabilities straight from the logits keep -ln p finite.
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();

    let mut grad = vec![0.0; n];
    let classification = match kind {
        BinLoss::CrossEntropy => {
            for j in 0..n {
                grad[j] = p[j] - if j == tb { 1.0 } else { 0.0 };
            }
            lse - logits[tb]
        }
        BinLoss::BinaryPerBin => {
            // dL/dp_j, then through the softmax Jacobian.
            let mut loss = 0.0;
            let mut dp = vec![0.0; n];
            for j in 0..n {
                if j == tb {
                    loss += lse - logits[j];
                    dp[j] = -1.0 / p[j].max(1e-300);
                } else {
                    let q = (1.0 - p[j]).max(1e-300);
                    loss -= q.ln();
                    dp[j] = 1.0 / q;
                }
            }
            let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for j in 0..n {
                grad[j] = p[j] * (dp[j] - dot);
            }
            loss
        }
    };
    let regression = (pred - target).powi(2);
    let scale = 2.0 * alpha * (pred - target);
    for j in 0..n {
        grad[j] += scale * p[j] * (bin_center(j, n) - pred);
    }
    Ok((
        LossParts { loss: classification + alpha * regression, classification, regression, target_bin: tb, prediction: pred },
        grad,
    ))
}

/// Binary cross-entropy of `sigmoid(logit)` against a 0/1 label, and its
/// derivative with respect to the logit.
pub fn sigmoid_bce(logit: f64, label: f64) -> (f64, f64) {
    // ln(1 + e^z) - y z, evaluated without overflow.
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    let loss = softplus - label * logit;
    (loss, super::layers::sigmoid(logit) - label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectation_fixtures() {
        let n = 33;
        assert!((bins_expectation(&vec![1.0 / 33.0; n]).unwrap() - 0.5).abs() < 1e-12);
        let mut one = vec![0.0; n];
        one[0] = 1.0;
        assert!((bins_expectation(&one).unwrap() - 0.5 / 33.0).abs() < 1e-15);
        let mut pair = vec![0.0; n];
        pair[0] = 0.5;
        pair[32] = 0.5;
        assert!((bins_expectation(&pair).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(bins_expectation(&[0.5, 0.2]), Err(Error::NotADistribution(_))));
    }

    #[test]
    fn softmax_properties() {
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
        let z = [0.3, -1.2, 4.0, 0.0];
        let a = softmax(&z);
        let b = softmax(&z.map(|v| v + 123.0));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_loss_fixtures() {
        let n = 33;
        let t = 0.5;
        let tb = target_bin(t, n);
        let mut one = vec![0.0; n];
        one[tb] = 1.0;
        let l = multi_loss(&one, t, t, 1.0, BinLoss::CrossEntropy).unwrap();
        assert_eq!(l.loss, 0.0);

        let uni = vec![1.0 / 33.0; n];
        let l = multi_loss(&uni, t, t, 1.0, BinLoss::CrossEntropy).unwrap();
        assert!((l.loss - 33f64.ln()).abs() < 1e-12);
        assert!((l.loss - 3.4965).abs() < 1e-4);

        let l0 = multi_loss(&uni, 0.9, t, 0.0, BinLoss::CrossEntropy).unwrap();
        assert_eq!(l0.loss, l0.classification);
        assert!(matches!(multi_loss(&uni, 0.5, 1.5, 1.0, BinLoss::CrossEntropy), Err(Error::TargetOutOfRange(_))));
    }

    #[test]
    fn sigmoid_bce_values() {
        assert!((sigmoid_bce(0.0, 1.0).0 - 2f64.ln()).abs() < 1e-15);
        assert!((sigmoid_bce(0.0, 0.0).1 - 0.5).abs() < 1e-15);
        let (l, _) = sigmoid_bce(800.0, 0.0);
        assert!((l - 800.0).abs() < 1e-9);
        let (a, _) = sigmoid_bce(1.3, 1.0);
        let (b, _) = sigmoid_bce(-1.3, 0.0);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn target_bin_edges() {
        assert_eq!(target_bin(0.0, 33), 0);
        assert_eq!(target_bin(1.0, 33), 32);
        assert_eq!(target_bin(0.5, 33), 16);
    }

    #[test]
    fn logit_loss_agrees_with_probability_loss() {
        let z: Vec<f64> = (0..9).map(|j| ((j * 7 % 5) as f64 - 2.0) * 0.4).collect();
        for kind in [BinLoss::CrossEntropy, BinLoss::BinaryPerBin] {
            let (parts, _) = multi_loss_from_logits(&z, 0.37, 0.7, kind).unwrap();
            let p = softmax(&z);
            let pred = bins_expectation(&p).unwrap();
            let direct = multi_loss(&p, pred, 0.37, 0.7, kind).unwrap();
            assert!((parts.loss - direct.loss).abs() < 1e-12);
        }
    }
}
