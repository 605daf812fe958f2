use crate::data::LabelCounts;
use crate::error::{Error, Result};
use crate::matrix::{CostMatrix, ScoreMatrix};

use super::Assignment;

/// Count-feasible starting labels from classifier scores.
///
/// Each round, every unallocated example takes its best-scoring class
/// among the classes that still have room. Examples are visited in
/// decreasing order of that best score (lower index first on ties) and
/// allocated while their class has room; the rest wait for the next round,
/// which rescores them over the remaining classes. Classes with a zero
/// count are saturated from the start.
pub fn greedy_init(scores: &ScoreMatrix, counts: &LabelCounts) -> Result<Assignment> {
    let n = scores.rows();
    let m = scores.cols();
    if counts.num_classes() != m {
        return Err(Error::LengthMismatch(format!(
            "score matrix has {m} classes, counts have {}",
            counts.num_classes()
        )));
    }
    counts.check_total(n)?;

    let mut label_of = vec![usize::MAX; n];
    let mut filled = vec![0usize; m];
    let mut open: Vec<usize> = (0..m).filter(|&y| counts.get(y) > 0).collect();
    let mut pending: Vec<usize> = (0..n).collect();
    let mut ranked: Vec<(usize, usize, f64)> = Vec::with_capacity(n);

    while !open.is_empty() {
        ranked.clear();
        for &i in &pending {
            let row = scores.row(i);
            let mut best_y = open[0];
            for &y in &open[1..] {
                if row[y] > row[best_y] {
                    best_y = y;
                }
            }
            ranked.push((i, best_y, row[best_y]));
        }
        // Stable: equal scores keep ascending example order.
        ranked.sort_by(|a, b| b.2.total_cmp(&a.2));
        for &(i, y, _) in &ranked {
            if filled[y] < counts.get(y) {
                label_of[i] = y;
                filled[y] += 1;
            }
        }
        pending.retain(|&i| label_of[i] == usize::MAX);
        open.retain(|&y| filled[y] < counts.get(y));
    }
    debug_assert!(pending.is_empty());
    Ok(Assignment::from_labels(label_of, m))
}

/// [`greedy_init`] on the scores `−c_iy`.
pub fn greedy_init_from_costs(costs: &CostMatrix, counts: &LabelCounts) -> Result<Assignment> {
    let a = greedy_init(&costs.map(|c| -c), counts)?;
    Ok(a.with_objective(costs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_scores_give_identity_assignment() {
        let n = 5;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let a = greedy_init(&ScoreMatrix::from_rows(&rows), &LabelCounts::new(vec![1; n])).unwrap();
        assert_eq!(a.labels(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_open_class_takes_everything() {
        let s = ScoreMatrix::from_rows(&[vec![0.0, 9.0, 1.0], vec![-1.0, 3.0, 2.0]]);
        let a = greedy_init(&s, &LabelCounts::new(vec![2, 0, 0])).unwrap();
        assert_eq!(a.labels(), &[0, 0]);
    }

    #[test]
    fn saturated_class_pushes_rest_to_next_round() {
        let s = ScoreMatrix::from_rows(&[vec![0.9, 0.1], vec![0.8, 0.2], vec![0.7, 0.3], vec![0.6, 0.4]]);
        let a = greedy_init(&s, &LabelCounts::new(vec![2, 2])).unwrap();
        assert_eq!(a.labels(), &[0, 0, 1, 1]);
    }

    #[test]
    fn allocation_follows_decreasing_best_score() {
        // Example 2 has the highest best score and claims the only slot of
        // class 0 even though example 0 also prefers it.
        let s = ScoreMatrix::from_rows(&[vec![0.5, 0.0, 0.1], vec![0.0, 0.3, 0.2], vec![0.9, 0.0, 0.0]]);
        let a = greedy_init(&s, &LabelCounts::new(vec![1, 1, 1])).unwrap();
        assert_eq!(a.labels(), &[2, 1, 0]);
    }

    #[test]
    fn rejects_count_mismatch() {
        let s = ScoreMatrix::zeros(3, 2);
        assert!(greedy_init(&s, &LabelCounts::new(vec![1, 1])).is_err());
        assert!(greedy_init(&s, &LabelCounts::new(vec![1, 1, 1])).is_err());
    }
}
