//! Label-count-constrained assignment of unlabeled examples to classes:
//!
//! ```text
//! min Σ_iy c_iy z_iy   s.t.   Σ_y z_iy = 1 ∀i,   Σ_i z_iy = n(y) ∀y,   z_iy ∈ {0, 1}
//! ```
//!
//! This is a transportation problem with unit supplies. [`solve_simplex`]
//! solves it exactly, [`solve_switching`] runs the greedy multiple pairwise
//! switching heuristic, and [`brute_force`] enumerates small instances for
//! verification. [`greedy_init`] builds the count-feasible starting labels
//! from classifier scores.

mod brute;
mod greedy;
mod simplex;
mod switching;

pub use brute::{brute_force, feasible_assignment_count, BRUTE_FORCE_LIMIT};
pub use greedy::{greedy_init, greedy_init_from_costs};
pub use simplex::{solve_simplex, solve_simplex_from, SimplexConfig, SimplexStats};
pub use switching::{solve_switching, solve_switching_with, AppliedSwitch, SwitchConfig, SwitchReport, SwitchTuple};

use serde::{Deserialize, Serialize};

use crate::data::LabelCounts;
use crate::error::{Error, Result};
use crate::matrix::CostMatrix;

/// Class label for every unlabeled example, with per-class member lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    label_of: Vec<usize>,
    class_members: Vec<Vec<usize>>,
    /// `Σ_i c_{i, label_of[i]}` for the cost matrix the assignment was
    /// scored against; `None` for an unscored assignment.
    objective: Option<f64>,
}

impl Assignment {
    /// Unscored assignment. Panics if a label is `>= num_classes`.
    pub fn from_labels(label_of: Vec<usize>, num_classes: usize) -> Self {
        let mut class_members = vec![Vec::new(); num_classes];
        for (i, &y) in label_of.iter().enumerate() {
            class_members[y].push(i);
        }
        Assignment {
            label_of,
            class_members,
            objective: None,
        }
    }

    /// Assignment scored against `costs`.
    pub fn scored(label_of: Vec<usize>, costs: &CostMatrix) -> Self {
        let mut a = Self::from_labels(label_of, costs.cols());
        a.objective = Some(assignment_objective(costs, &a));
        a
    }

    pub fn with_objective(mut self, costs: &CostMatrix) -> Self {
        self.objective = Some(assignment_objective(costs, &self));
        self
    }

    pub fn labels(&self) -> &[usize] {
        &self.label_of
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.label_of
    }

    pub fn label(&self, i: usize) -> usize {
        self.label_of[i]
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.class_members[class]
    }

    pub fn num_examples(&self) -> usize {
        self.label_of.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_members.len()
    }

    pub fn objective(&self) -> Option<f64> {
        self.objective
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.class_members.iter().map(Vec::len).collect()
    }

    /// True when every class holds exactly its required count.
    pub fn satisfies(&self, counts: &LabelCounts) -> bool {
        self.num_classes() == counts.num_classes()
            && self
                .class_members
                .iter()
                .zip(counts.counts())
                .all(|(members, &c)| members.len() == c)
    }

    /// Number of examples whose label differs from `other`.
    pub fn hamming(&self, other: &Assignment) -> usize {
        self.label_of
            .iter()
            .zip(&other.label_of)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// `Σ_i c_{i, label_of[i]}`, summed in ascending `i`.
pub fn assignment_objective(costs: &CostMatrix, a: &Assignment) -> f64 {
    let mut sum = 0.0;
    for (i, &y) in a.labels().iter().enumerate() {
        sum += costs.get(i, y);
    }
    sum
}

pub(crate) fn check_instance(costs: &CostMatrix, counts: &LabelCounts) -> Result<()> {
    if costs.cols() != counts.num_classes() {
        return Err(Error::LengthMismatch(format!(
            "cost matrix has {} classes, counts have {}",
            costs.cols(),
            counts.num_classes()
        )));
    }
    counts.check_total(costs.rows())?;
    if !costs.is_finite() {
        return Err(Error::Config("cost matrix has non-finite entries".into()));
    }
    Ok(())
}

pub(crate) fn check_init(costs: &CostMatrix, counts: &LabelCounts, init: &Assignment) -> Result<()> {
    if init.num_examples() != costs.rows() {
        return Err(Error::LengthMismatch(format!(
            "initial assignment has {} examples, cost matrix {}",
            init.num_examples(),
            costs.rows()
        )));
    }
    if !init.satisfies(counts) {
        return Err(Error::Config(format!(
            "initial assignment has class counts {:?}, required {:?}",
            init.class_counts(),
            counts.counts()
        )));
    }
    Ok(())
}

/// Which solver handles the label step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentSolver {
    #[default]
    Switching,
    Simplex,
}

impl std::str::FromStr for AssignmentSolver {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "switching" => Ok(AssignmentSolver::Switching),
            "simplex" => Ok(AssignmentSolver::Simplex),
            other => Err(format!("unknown solver `{other}` (expected switching or simplex)")),
        }
    }
}

impl AssignmentSolver {
    pub fn name(self) -> &'static str {
        match self {
            AssignmentSolver::Switching => "switching",
            AssignmentSolver::Simplex => "simplex",
        }
    }

    /// Solves starting from `init`, which must be feasible.
    pub fn solve_from(self, costs: &CostMatrix, counts: &LabelCounts, init: &Assignment) -> Result<Assignment> {
        match self {
            AssignmentSolver::Switching => solve_switching(costs, counts, init),
            AssignmentSolver::Simplex => {
                solve_simplex_from(costs, counts, init, &SimplexConfig::default()).map(|(a, _)| a)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_examples() {
        let zero = CostMatrix::zeros(3, 2);
        assert_eq!(assignment_objective(&zero, &Assignment::from_labels(vec![0, 1, 1], 2)), 0.0);
        let one = CostMatrix::from_rows(&[vec![0.25, 0.75]]);
        assert_eq!(Assignment::scored(vec![1], &one).objective(), Some(0.75));
        let c = CostMatrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]]);
        let a = Assignment::scored(vec![1, 0, 1], &c);
        assert_eq!(a.objective(), Some(0.2 + 0.3 + 0.6));
        assert_eq!(a.members(1), &[0, 2]);
        assert!(a.satisfies(&LabelCounts::new(vec![1, 2])));
        assert!(!a.satisfies(&LabelCounts::new(vec![2, 1])));
    }
}
