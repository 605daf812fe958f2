//! Per-class precision, recall and F1, macro-F, accuracy and confusion
//! counts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_class: Vec<ClassScores>,
    /// Unweighted mean of the per-class F1 over all classes.
    pub macro_f: f64,
    pub accuracy: f64,
    /// `confusion[gold][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Scores predictions against gold labels for `m` classes. Precision and
/// recall are 0 when their denominator is 0, and F1 is 0 when both are.
pub fn evaluate(pred: &[usize], gold: &[usize], m: usize) -> Result<ClassReport> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if let Some(&bad) = pred.iter().chain(gold).find(|&&y| y >= m) {
        return Err(Error::Config(format!("label {bad} out of range for {m} classes")));
    }
    let mut confusion = vec![vec![0usize; m]; m];
    for (&p, &g) in pred.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_class: Vec<ClassScores> = (0..m)
        .map(|y| {
            let tp = confusion[y][y];
            let predicted: usize = (0..m).map(|g| confusion[g][y]).sum();
            let actual: usize = confusion[y].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores { precision, recall, f1 }
        })
        .collect();
    let macro_f = if m == 0 {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / m as f64
    };
    let correct: usize = (0..m).map(|y| confusion[y][y]).sum();
    Ok(ClassReport {
        per_class,
        macro_f,
        accuracy: ratio(correct, gold.len()),
        confusion,
    })
}

impl fmt::Display for ClassReport {
    /// Key-value text rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "macro_f = {:.6}", self.macro_f)?;
        writeln!(f, "accuracy = {:.6}", self.accuracy)?;
        for (y, c) in self.per_class.iter().enumerate() {
            writeln!(
                f,
                "class.{y} = precision {:.6} recall {:.6} f1 {:.6}",
                c.precision, c.recall, c.f1
            )?;
        }
        for (g, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            writeln!(f, "confusion.{g} = {}", cells.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let r = evaluate(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.macro_f, 1.0);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn all_wrong_binary() {
        let r = evaluate(&[1, 1, 0], &[0, 0, 1], 2).unwrap();
        assert_eq!(r.macro_f, 0.0);
        assert_eq!(r.accuracy, 0.0);
    }

    #[test]
    fn hand_computed_binary() {
        let r = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.per_class[0].precision, 1.0);
        assert_eq!(r.per_class[0].recall, 0.5);
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_class[1].precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[1].recall, 1.0);
        assert!((r.per_class[1].f1 - 0.8).abs() < 1e-15);
        assert!((r.macro_f - 11.0 / 15.0).abs() < 1e-15);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let r = evaluate(&[0, 1], &[0, 1], 3).unwrap();
        assert!((r.macro_f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatch() {
        assert!(matches!(evaluate(&[0], &[0, 1], 2), Err(Error::LengthMismatch(_))));
        assert!(evaluate(&[2], &[0], 2).is_err());
    }

    #[test]
    fn renders_key_values() {
        let text = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap().to_string();
        assert!(text.contains("macro_f = 0.733333"));
        assert!(text.contains("confusion.0 = 1 1"));
    }

    fn pairs() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..40).prop_flat_map(|n| (proptest::collection::vec(0usize..4, n), proptest::collection::vec(0usize..4, n)))
    }

    proptest! {
        #[test]
        fn invariants((pred, gold) in pairs(), rot in 0usize..4) {
            let r = evaluate(&pred, &gold, 4).unwrap();
            let trace: usize = (0..4).map(|y| r.confusion[y][y]).sum();
            prop_assert_eq!(r.accuracy, trace as f64 / gold.len() as f64);
            for y in 0..4 {
                let gold_count = gold.iter().filter(|&&g| g == y).count();
                prop_assert_eq!(r.confusion[y].iter().sum::<usize>(), gold_count);
                for v in [r.per_class[y].precision, r.per_class[y].recall, r.per_class[y].f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }

            // joint permutation of the pairs
            let mut idx: Vec<usize> = (0..pred.len()).collect();
            idx.reverse();
            let p2: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
            let g2: Vec<usize> = idx.iter().map(|&i| gold[i]).collect();
            prop_assert_eq!(evaluate(&p2, &g2, 4).unwrap(), r.clone());

            // relabeling classes
            let perm = |y: usize| (y + rot) % 4;
            let p3: Vec<usize> = pred.iter().map(|&y| perm(y)).collect();
            let g3: Vec<usize> = gold.iter().map(|&y| perm(y)).collect();
            let r3 = evaluate(&p3, &g3, 4).unwrap();
            prop_assert!((r3.macro_f - r.macro_f).abs() < 1e-12);
            for y in 0..4 {
                prop_assert_eq!(&r3.per_class[perm(y)], &r.per_class[y]);
            }
        }
    }
}
