use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};

/// Node-classification score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NcMetric {
    #[default]
    Accuracy,
    F1,
}

impl fmt::Display for NcMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NcMetric::Accuracy => "accuracy",
            NcMetric::F1 => "f1",
        })
    }
}

impl FromStr for NcMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Self::Accuracy),
            "f1" => Ok(Self::F1),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Multi-class F1 averaging. Two-class problems always use binary F1 of class 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    #[default]
    Micro,
    Macro,
}

/// Row-wise arg-max; the first maximum wins.
pub fn argmax_rows(logits: &Mat) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
                    if x > best.1 {
                        (i, x)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

fn check_mask(mask: &[usize], n: usize) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::Empty("evaluation mask is empty".into()));
    }
    if mask.iter().any(|&v| v >= n) {
        return Err(Error::Shape(format!("mask refers to nodes outside 0..{n}")));
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], labels: &[usize], mask: &[usize]) -> Result<f64> {
    check_mask(mask, pred.len().min(labels.len()))?;
    let hits = mask.iter().filter(|&&v| pred[v] == labels[v]).count();
    Ok(hits as f64 / mask.len() as f64)
}

pub fn f1_score(
    pred: &[usize],
    labels: &[usize],
    mask: &[usize],
    classes: usize,
    average: F1Average,
) -> Result<f64> {
    check_mask(mask, pred.len().min(labels.len()))?;
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for &v in mask {
        let (p, y) = (pred[v], labels[v]);
        if p >= classes || y >= classes {
            return Err(Error::Shape(format!("class id outside 0..{classes}")));
        }
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    Ok(match (classes, average) {
        (2, _) => f1(tp[1], fp[1], fn_[1]),
        (_, F1Average::Micro) => f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum()),
        (_, F1Average::Macro) => {
            (0..classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / classes as f64
        }
    })
}

/// Accuracy or F1 of arg-max predictions on the masked rows.
pub fn evaluate_nc(
    logits: &Mat,
    labels: &[usize],
    mask: &[usize],
    metric: NcMetric,
    average: F1Average,
) -> Result<f64> {
    let pred = argmax_rows(logits);
    match metric {
        NcMetric::Accuracy => accuracy(&pred, labels, mask),
        NcMetric::F1 => f1_score(&pred, labels, mask, logits.ncols(), average),
    }
}

/// Area under the ROC curve as the Mann–Whitney rank statistic; tied scores
/// share their average rank, so equal scores give 0.5.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain("ROC AUC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&k| truth[order[k]]).count() as f64 * avg;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Link-prediction score: ROC AUC.
pub fn evaluate_lp(scores: &[f64], truth: &[bool]) -> Result<f64> {
    roc_auc(scores, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn perfect_predictions() {
        let logits = arr2(&[[2.0, 0.0], [0.0, 1.0], [3.0, 1.0]]);
        let labels = [0, 1, 0];
        for m in [NcMetric::Accuracy, NcMetric::F1] {
            assert_eq!(
                evaluate_nc(&logits, &labels, &[0, 1, 2], m, F1Average::Micro).unwrap(),
                1.0
            );
        }
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
    }

    #[test]
    fn auc_ties_and_hand_case() {
        assert_eq!(
            roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(),
            0.5
        );
        assert_eq!(
            roc_auc(&[0.9, 0.2, 0.6], &[true, false, true]).unwrap(),
            1.0
        );
        // one inverted pair out of four
        let auc = roc_auc(&[0.9, 0.5, 0.6, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(auc, 0.75);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn auc_matches_pair_count() {
        let scores = [0.1, 0.4, 0.4, 0.35, 0.8, 0.4, 0.05];
        let truth = [false, true, false, true, true, true, false];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                if truth[i] && !truth[j] {
                    pairs += 1.0;
                    wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        assert!((roc_auc(&scores, &truth).unwrap() - wins / pairs).abs() < 1e-15);
    }

    #[test]
    fn f1_variants() {
        let labels = [1, 1, 0, 0, 1];
        let pred = [1, 0, 0, 1, 1];
        // class 1: tp 2, fp 1, fn 1
        let f = f1_score(&pred, &labels, &[0, 1, 2, 3, 4], 2, F1Average::Micro).unwrap();
        assert!((f - 4.0 / 6.0).abs() < 1e-15);

        let labels = [0, 1, 2, 2, 1, 0];
        let pred = [0, 2, 2, 2, 1, 1];
        let mask = [0, 1, 2, 3, 4, 5];
        let micro = f1_score(&pred, &labels, &mask, 3, F1Average::Micro).unwrap();
        assert!((micro - accuracy(&pred, &labels, &mask).unwrap()).abs() < 1e-15);
        let macro_ = f1_score(&pred, &labels, &mask, 3, F1Average::Macro).unwrap();
        let expected = (2.0 / 3.0 + 0.5 + 0.8) / 3.0;
        assert!((macro_ - expected).abs() < 1e-15);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(accuracy(&[0], &[0], &[]).is_err());
    }
}
