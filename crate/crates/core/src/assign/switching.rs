//! Greedy multiple pairwise switching.
//!
//! Moving example `i` from class `y` to `ȳ` changes the objective by
//! `δc(i, y, ȳ) = c_iȳ − c_iy`. Exchanging `i ∈ y` with `ī ∈ ȳ` changes it
//! by `ρ = δc(i, y, ȳ) + δc(ī, ȳ, y)`. One major iteration builds, for every
//! class pair, the two member lists sorted by `δc`, pairs them up rank by
//! rank, keeps tuples with `ρ < 0`, then applies the merged tuples in
//! increasing `ρ` order, skipping any tuple that touches an example already
//! moved in this iteration. Iterations repeat until no improving tuple is
//! left.

use serde::{Deserialize, Serialize};

use crate::data::LabelCounts;
use crate::error::Result;
use crate::matrix::CostMatrix;

use super::{assignment_objective, check_init, check_instance, Assignment};

/// A candidate exchange: `i` leaves `y` for `ȳ`, `ī` leaves `ȳ` for `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchTuple {
    pub i: usize,
    pub y: usize,
    pub i_bar: usize,
    pub y_bar: usize,
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct SwitchConfig {
    pub max_major_iterations: usize,
    /// Record every applied switch with the recomputed objective around it.
    pub record: bool,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            max_major_iterations: 50,
            record: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AppliedSwitch {
    pub tuple: SwitchTuple,
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SwitchReport {
    pub major_iterations: usize,
    pub switches: usize,
    /// True when the iteration cap stopped the search before the switch
    /// list ran empty.
    pub hit_cap: bool,
    /// Filled only when [`SwitchConfig::record`] is set.
    pub applied: Vec<AppliedSwitch>,
    /// Class counts checked after every major iteration.
    pub feasibility_checks: usize,
}

/// Runs the switching heuristic from a feasible `init` with default
/// settings.
pub fn solve_switching(costs: &CostMatrix, counts: &LabelCounts, init: &Assignment) -> Result<Assignment> {
    solve_switching_with(costs, counts, init, &SwitchConfig::default()).map(|(a, _)| a)
}

pub fn solve_switching_with(
    costs: &CostMatrix,
    counts: &LabelCounts,
    init: &Assignment,
    cfg: &SwitchConfig,
) -> Result<(Assignment, SwitchReport)> {
    check_instance(costs, counts)?;
    check_init(costs, counts, init)?;
    let m = costs.cols();
    let mut label_of = init.labels().to_vec();
    let mut members: Vec<Vec<usize>> = (0..m).map(|y| init.members(y).to_vec()).collect();
    let mut report = SwitchReport::default();
    let mut tuples: Vec<SwitchTuple> = Vec::new();
    let mut moved = vec![false; costs.rows()];
    let mut left: Vec<(f64, usize)> = Vec::new();
    let mut right: Vec<(f64, usize)> = Vec::new();
    let mut objective = cfg.record.then(|| sum_objective(costs, &label_of));

    loop {
        if report.major_iterations == cfg.max_major_iterations {
            report.hit_cap = true;
            break;
        }
        report.major_iterations += 1;

        tuples.clear();
        for y in 0..m {
            for y_bar in y + 1..m {
                sorted_deltas(costs, &members[y], y, y_bar, &mut left);
                sorted_deltas(costs, &members[y_bar], y_bar, y, &mut right);
                for (&(d1, i), &(d2, i_bar)) in left.iter().zip(&right) {
                    let rho = d1 + d2;
                    // Both lists ascend, so ρ never decreases further down.
                    if rho >= 0.0 {
                        break;
                    }
                    tuples.push(SwitchTuple { i, y, i_bar, y_bar, rho });
                }
            }
        }
        if tuples.is_empty() {
            break;
        }
        tuples.sort_by(|a, b| a.rho.total_cmp(&b.rho));

        moved.iter_mut().for_each(|m| *m = false);
        for t in &tuples {
            if moved[t.i] || moved[t.i_bar] {
                continue;
            }
            moved[t.i] = true;
            moved[t.i_bar] = true;
            label_of[t.i] = t.y_bar;
            label_of[t.i_bar] = t.y;
            report.switches += 1;
            if let Some(before) = objective {
                let after = sum_objective(costs, &label_of);
                report.applied.push(AppliedSwitch {
                    tuple: *t,
                    objective_before: before,
                    objective_after: after,
                });
                objective = Some(after);
            }
        }

        for list in &mut members {
            list.clear();
        }
        for (i, &y) in label_of.iter().enumerate() {
            members[y].push(i);
        }
        let feasible = members.iter().zip(counts.counts()).all(|(l, &c)| l.len() == c);
        assert!(feasible, "switching broke the class counts");
        report.feasibility_checks += 1;
    }

    Ok((Assignment::scored(label_of, costs), report))
}

/// `(δc(i, from, to), i)` for members of `from`, sorted by `δc`; equal
/// values keep ascending example order.
fn sorted_deltas(costs: &CostMatrix, members: &[usize], from: usize, to: usize, out: &mut Vec<(f64, usize)>) {
    out.clear();
    out.extend(members.iter().map(|&i| (costs.get(i, to) - costs.get(i, from), i)));
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
}

fn sum_objective(costs: &CostMatrix, labels: &[usize]) -> f64 {
    assignment_objective(costs, &Assignment::from_labels(labels.to_vec(), costs.cols()))
}
