//! Class weights, utterance-level aggregation and WA/UWA confusion reports.

use serde::{Deserialize, Serialize};

use super::manifest::Emotion;
use crate::error::{Error, Result};

/// Inverse-frequency weights normalized so a balanced set gets all ones:
/// `w_c = (total / C) / count_c`.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::Config("no classes to weight".into()));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!("class {c} has no training samples")));
    }
    let total: usize = counts.iter().sum();
    let mean = total as f64 / counts.len() as f64;
    Ok(counts.iter().map(|&n| mean / n as f64).collect())
}

/// Mean of the segment posteriors, then argmax; ties go to the lowest index.
pub fn aggregate_utterance(posteriors: &[Vec<f64>]) -> Result<usize> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::InsufficientData("no segment posteriors to aggregate".into()))?;
    let c = first.len();
    if c == 0 || posteriors.iter().any(|p| p.len() != c) {
        return Err(Error::shape(
            "aggregate",
            "posterior vectors differ in length",
        ));
    }
    let mut mean = vec![0.0; c];
    for p in posteriors {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    let n = posteriors.len() as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut best = 0;
    for (i, &v) in mean.iter().enumerate().skip(1) {
        if v > mean[best] {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized percentages; rows of absent classes are all zero.
    pub percentages: Vec<Vec<f64>>,
    pub wa: f64,
    /// Mean recall over the classes that occur in the labels.
    pub uwa: f64,
    pub total: u64,
}

/// Confusion matrix, WA and UWA for aligned label/prediction lists.
pub fn evaluate(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(
            "evaluate",
            format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            ),
        ));
    }
    if labels.is_empty() {
        return Err(Error::InsufficientData("nothing to evaluate".into()));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if l >= num_classes || p >= num_classes {
            return Err(Error::Domain(format!(
                "label {l} / prediction {p} outside {num_classes} classes"
            )));
        }
        counts[l][p] += 1;
    }
    let classes = (0..num_classes)
        .map(|i| {
            Emotion::from_index(i).map_or_else(|| format!("class{i}"), |e| e.name().to_string())
        })
        .collect();
    Ok(EvalReport::from_counts(classes, counts))
}

impl EvalReport {
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        let total: u64 = counts.iter().flatten().sum();
        let trace: u64 = (0..counts.len()).map(|i| counts[i][i]).sum();
        let percentages: Vec<Vec<f64>> = counts
            .iter()
            .map(|row| {
                let n: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if n == 0 {
                            0.0
                        } else {
                            100.0 * c as f64 / n as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let present: Vec<usize> = (0..counts.len())
            .filter(|&i| counts[i].iter().sum::<u64>() > 0)
            .collect();
        let uwa = if present.is_empty() {
            0.0
        } else {
            present.iter().map(|&i| percentages[i][i]).sum::<f64>() / present.len() as f64
        };
        let wa = if total == 0 {
            0.0
        } else {
            100.0 * trace as f64 / total as f64
        };
        Self {
            classes,
            counts,
            percentages,
            wa,
            uwa,
            total,
        }
    }

    /// Sums the confusion counts of several reports.
    pub fn pooled(reports: &[EvalReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::InsufficientData("no reports to pool".into()))?;
        let c = first.counts.len();
        let mut counts = vec![vec![0u64; c]; c];
        for r in reports {
            if r.counts.len() != c {
                return Err(Error::shape("pool reports", "class counts differ"));
            }
            for (dst, src) in counts.iter_mut().zip(&r.counts) {
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        Ok(Self::from_counts(first.classes.clone(), counts))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Percent confusion table with per-class sample counts, then WA and UWA.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<10}{:>6}", "true\\pred", "n");
        for c in &self.classes {
            s.push_str(&format!("{c:>10}"));
        }
        s.push('\n');
        for (i, c) in self.classes.iter().enumerate() {
            let n: u64 = self.counts[i].iter().sum();
            s.push_str(&format!("{c:<10}{n:>6}"));
            for p in &self.percentages[i] {
                s.push_str(&format!("{p:>10.2}"));
            }
            s.push('\n');
        }
        s.push_str(&format!("WA  {:.2}\nUWA {:.2}\n", self.wa, self.uwa));
        s
    }
}

/// Per-fold reports together with their pooled and averaged summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub folds: Vec<EvalReport>,
    pub pooled: EvalReport,
    pub mean_fold_wa: f64,
    pub mean_fold_uwa: f64,
}

impl CrossValidationReport {
    pub fn new(folds: Vec<EvalReport>) -> Result<Self> {
        let pooled = EvalReport::pooled(&folds)?;
        let n = folds.len() as f64;
        let mean_fold_wa = folds.iter().map(|r| r.wa).sum::<f64>() / n;
        let mean_fold_uwa = folds.iter().map(|r| r.uwa).sum::<f64>() / n;
        Ok(Self {
            folds,
            pooled,
            mean_fold_wa,
            mean_fold_uwa,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (i, f) in self.folds.iter().enumerate() {
            s.push_str(&format!("fold {i}: WA {:.2}  UWA {:.2}\n", f.wa, f.uwa));
        }
        s.push_str(&format!(
            "mean over folds: WA {:.2}  UWA {:.2}\n\npooled:\n",
            self.mean_fold_wa, self.mean_fold_uwa
        ));
        s.push_str(&self.pooled.to_table());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn expand(rows: &[[u64; 4]]) -> (Vec<usize>, Vec<usize>) {
        let (mut p, mut l) = (Vec::new(), Vec::new());
        for (t, row) in rows.iter().enumerate() {
            for (c, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    l.push(t);
                    p.push(c);
                }
            }
        }
        (p, l)
    }

    #[test]
    fn weight_examples() {
        assert_eq!(class_weights(&[10, 10, 10, 10]).unwrap(), vec![1.0; 4]);
        assert_eq!(class_weights(&[100, 50]).unwrap(), vec![0.75, 1.5]);
        assert!(class_weights(&[3, 0]).is_err());
        let w = class_weights(&[289, 284, 1099, 608]).unwrap();
        // 570 / count, computed independently
        let want = [
            1.972318339100346,
            2.007042253521127,
            0.5186533212010919,
            0.9375,
        ];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_examples() {
        assert_eq!(aggregate_utterance(&[vec![0.1, 0.7, 0.1, 0.1]]).unwrap(), 1);
        let two = [vec![0.6, 0.4, 0.0, 0.0], vec![0.2, 0.8, 0.0, 0.0]];
        assert_eq!(aggregate_utterance(&two).unwrap(), 1);
        assert_eq!(aggregate_utterance(&[vec![0.5, 0.5, 0.0, 0.0]]).unwrap(), 0);
        assert!(aggregate_utterance(&[]).is_err());
    }

    #[test]
    fn perfect_predictions() {
        let l = vec![0, 1, 2, 3, 3, 2];
        let r = evaluate(&l, &l, 4).unwrap();
        assert_eq!(r.wa, 100.0);
        assert_eq!(r.uwa, 100.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.percentages[i][j], if i == j { 100.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn stft_confusion_fixture() {
        let (p, l) = expand(&[[11, 0, 0, 1], [9, 0, 11, 2], [20, 4, 59, 29], [0, 0, 8, 71]]);
        let r = evaluate(&p, &l, 4).unwrap();
        assert!((r.uwa - 58.55).abs() < 0.01, "{}", r.uwa);
        for (i, n) in [12u64, 22, 112, 79].iter().enumerate() {
            assert_eq!(r.counts[i].iter().sum::<u64>(), *n);
        }
    }

    #[test]
    fn unseen_label_rejected() {
        assert!(evaluate(&[0], &[4], 4).is_err());
    }

    #[test]
    fn uwa_duplication_invariance() {
        let (p, l) = expand(&[[3, 1, 0, 0], [1, 2, 1, 0], [0, 0, 5, 1], [0, 1, 0, 4]]);
        let a = evaluate(&p, &l, 4).unwrap();
        let (mut p2, mut l2) = (p.clone(), l.clone());
        for (pp, ll) in p.iter().zip(&l) {
            if *ll == 2 {
                for _ in 0..3 {
                    p2.push(*pp);
                    l2.push(*ll);
                }
            }
        }
        let b = evaluate(&p2, &l2, 4).unwrap();
        assert!((a.uwa - b.uwa).abs() < 1e-12);
        assert!((a.wa - b.wa).abs() > 1e-6);
    }

    proptest! {
        #[test]
        fn matches_counting_oracle(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (p, l): (Vec<usize>, Vec<usize>) = pairs.iter().cloned().unzip();
            let r = evaluate(&p, &l, 4).unwrap();
            let correct = pairs.iter().filter(|(a, b)| a == b).count();
            prop_assert!((r.wa - 100.0 * correct as f64 / pairs.len() as f64).abs() < 1e-9);
            let mut recalls = Vec::new();
            for c in 0..4 {
                let n = l.iter().filter(|&&x| x == c).count();
                if n > 0 {
                    let hit = pairs.iter().filter(|(pp, ll)| *ll == c && *pp == c).count();
                    recalls.push(100.0 * hit as f64 / n as f64);
                }
            }
            let uwa = recalls.iter().sum::<f64>() / recalls.len() as f64;
            prop_assert!((r.uwa - uwa).abs() < 1e-9);
            for (i, row) in r.counts.iter().enumerate() {
                prop_assert_eq!(row.iter().sum::<u64>() as usize, l.iter().filter(|&&x| x == i).count());
            }
        }

        #[test]
        fn aggregation_scale_invariant(
            segs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..6),
            k in 0.01f64..100.0,
        ) {
            let scaled: Vec<Vec<f64>> = segs.iter().map(|s| s.iter().map(|v| v * k).collect()).collect();
            prop_assert_eq!(aggregate_utterance(&segs).unwrap(), aggregate_utterance(&scaled).unwrap());
        }
    }
}
