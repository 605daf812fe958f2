use crate::data::LabelCounts;
use crate::error::{Error, Result};
use crate::matrix::CostMatrix;

use super::{check_instance, Assignment};

/// Largest number of count-feasible assignments [`brute_force`] will visit.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Multinomial coefficient `n! / Π n(y)!`, as a float.
pub fn feasible_assignment_count(counts: &LabelCounts) -> f64 {
    let mut remaining = counts.total();
    let mut total = 1.0f64;
    for &c in counts.counts() {
        // binomial(remaining, c)
        let mut b = 1.0f64;
        for k in 0..c {
            b = b * (remaining - k) as f64 / (k + 1) as f64;
        }
        total *= b;
        remaining -= c;
    }
    total.round()
}

/// Exact optimum by enumerating every count-feasible label vector in
/// lexicographic order; the first vector reaching the minimum wins ties.
pub fn brute_force(costs: &CostMatrix, counts: &LabelCounts) -> Result<Assignment> {
    check_instance(costs, counts)?;
    let size = feasible_assignment_count(counts);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(size));
    }
    let mut search = Search {
        costs,
        remaining: counts.counts().to_vec(),
        current: vec![0; costs.rows()],
        best: Vec::new(),
        best_obj: f64::INFINITY,
    };
    search.descend(0, 0.0);
    Ok(Assignment::scored(search.best, costs))
}

struct Search<'a> {
    costs: &'a CostMatrix,
    remaining: Vec<usize>,
    current: Vec<usize>,
    best: Vec<usize>,
    best_obj: f64,
}

impl Search<'_> {
    // Partial sums accumulate in ascending example order, matching
    // `assignment_objective` exactly.
    fn descend(&mut self, i: usize, partial: f64) {
        if i == self.costs.rows() {
            if partial < self.best_obj || self.best.is_empty() {
                self.best_obj = partial;
                self.best = self.current.clone();
            }
            return;
        }
        for y in 0..self.remaining.len() {
            if self.remaining[y] == 0 {
                continue;
            }
            self.remaining[y] -= 1;
            self.current[i] = y;
            self.descend(i + 1, partial + self.costs.get(i, y));
            self.remaining[y] += 1;
        }
    }
}
