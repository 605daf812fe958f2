//! Alternating optimization of weights and unlabeled labels.
//!
//! 1. Train on the labeled set alone.
//! 2. Turn the supervised scores on the unlabeled set into count-feasible
//!    labels with [`greedy_init`].
//! 3. For each `C^u` of the annealing schedule, alternate a warm-started
//!    weight step with a label step on a fresh cost matrix until the label
//!    step leaves the labels unchanged (or the inner cap is hit).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assign::{
    assignment_objective, greedy_init, solve_simplex_from, solve_switching_with, Assignment, AssignmentSolver,
    SimplexConfig, SwitchConfig, SwitchReport,
};
use crate::data::{Dataset, LabelCounts, Taxonomy};
use crate::error::{Error, Result};
use crate::losses::{cost_matrix, score_matrix, LossKind};
use crate::model::WeightVector;
use crate::solver::{mean_loss, train, PseudoLabeled, SolverConfig};

/// Increasing sequence of unlabeled-term weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    values: Vec<f64>,
}

/// 1e-4, 3e-4, 1e-3, …, 3e-1, 1.
pub const DEFAULT_SCHEDULE: [f64; 9] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0];

impl AnnealSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("annealing schedule is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("schedule values must be finite and non-negative".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("schedule must be strictly increasing".into()));
        }
        Ok(AnnealSchedule { values })
    }

    /// The default ladder truncated below `target`, ending at `target`.
    pub fn ending_at(target: f64) -> Result<Self> {
        let mut values: Vec<f64> = DEFAULT_SCHEDULE.iter().copied().filter(|&v| v < target).collect();
        values.push(target);
        Self::new(values)
    }

    pub fn single(cu: f64) -> Result<Self> {
        Self::new(vec![cu])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn target(&self) -> f64 {
        *self.values.last().expect("schedule is non-empty")
    }
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            values: DEFAULT_SCHEDULE.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemisupConfig {
    pub kind: LossKind,
    /// Weight-step settings; `cu` is overridden by each schedule value.
    pub solver: SolverConfig,
    pub schedule: AnnealSchedule,
    pub assignment_solver: AssignmentSolver,
    pub max_inner_iterations: usize,
    /// Keep every applied switch of the label steps in the trace.
    pub record_switches: bool,
}

impl SemisupConfig {
    pub fn new(kind: LossKind) -> Self {
        SemisupConfig {
            kind,
            solver: SolverConfig::for_loss(kind),
            schedule: AnnealSchedule::default(),
            assignment_solver: AssignmentSolver::Switching,
            max_inner_iterations: 20,
            record_switches: false,
        }
    }
}

/// One weight step followed by one label step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cu: f64,
    pub inner_iteration: usize,
    pub objective_before_w: f64,
    pub objective_after_w: f64,
    pub objective_before_y: f64,
    pub objective_after_y: f64,
    pub labels_changed: usize,
    pub epochs: usize,
    pub wall_time_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switches: Option<SwitchReport>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SemisupTrace {
    pub supervised_objective: f64,
    pub records: Vec<TraceRecord>,
    pub warnings: Vec<String>,
}

impl SemisupTrace {
    /// Schedule values in the order they were visited, without repeats.
    pub fn stages(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.cu) {
                out.push(r.cu);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SemisupResult {
    pub weights: WeightVector,
    pub assignment: Assignment,
    pub supervised_weights: WeightVector,
    pub trace: SemisupTrace,
    /// Full objective at the final schedule value, final weights and labels.
    pub final_objective: f64,
}

/// Runs the full alternating scheme. `counts` must sum to the number of
/// unlabeled examples; labels attached to `unlabeled` are ignored.
pub fn train_semisup(
    taxonomy: &Taxonomy,
    labeled: &Dataset,
    unlabeled: &Dataset,
    counts: &LabelCounts,
    cfg: &SemisupConfig,
) -> Result<SemisupResult> {
    let m = taxonomy.num_leaves();
    if counts.num_classes() != m {
        return Err(Error::LengthMismatch(format!(
            "{} label counts for {m} classes",
            counts.num_classes()
        )));
    }
    counts.check_total(unlabeled.len())?;
    if cfg.max_inner_iterations == 0 {
        return Err(Error::Config("max_inner_iterations must be at least 1".into()));
    }
    let dim = labeled.feature_dim().max(unlabeled.feature_dim());
    let labeled = labeled.clone().with_feature_dim(dim);
    let unlabeled = unlabeled.without_labels().with_feature_dim(dim);
    let paths = taxonomy.paths();
    let kind = cfg.kind;
    let labels_s = labeled
        .labels()
        .ok_or_else(|| Error::Config("labeled set has no labels".into()))?;

    let supervised_cfg = SolverConfig { cu: 0.0, ..cfg.solver.clone() };
    let supervised = train(taxonomy, &labeled, None, &supervised_cfg, kind, None)?;
    let mut trace = SemisupTrace {
        supervised_objective: supervised.objective,
        ..Default::default()
    };

    let scores = score_matrix(paths, &supervised.weights, &unlabeled);
    let mut assignment = greedy_init(&scores, counts)?;
    let mut w = supervised.weights.clone();
    let mut step: u64 = 0;

    // λ/2‖w‖² + labeled mean loss; the unlabeled term is added from the
    // cost matrix so the label step compares values on one matrix.
    let labeled_part = |w: &WeightVector, lambda: f64| 0.5 * lambda * w.norm_sq() + mean_loss(paths, w, &labeled, labels_s, kind);
    let n = unlabeled.len().max(1) as f64;

    for &cu in cfg.schedule.values() {
        let stage_cfg = SolverConfig { cu, ..cfg.solver.clone() };
        let mut settled = false;
        for inner in 0..cfg.max_inner_iterations {
            let started = Instant::now();
            let pseudo = PseudoLabeled {
                data: &unlabeled,
                labels: assignment.labels(),
            };
            let before_w = crate::solver::objective(taxonomy, &w, &labeled, Some(pseudo), &stage_cfg, kind);
            let (after_w, epochs) = if cu == 0.0 {
                // Without the unlabeled term the weight step is the
                // supervised problem, already solved.
                (before_w, 0)
            } else {
                let seeded = SolverConfig {
                    seed: cfg.solver.seed.wrapping_add(step + 1),
                    ..stage_cfg.clone()
                };
                let res = train(taxonomy, &labeled, Some(pseudo), &seeded, kind, Some(&w))?;
                w = res.weights;
                (res.objective, res.epochs_used)
            };
            step += 1;

            let costs = cost_matrix(kind, paths, &w, &unlabeled);
            let base = labeled_part(&w, stage_cfg.lambda);
            let old_sum = assignment_objective(&costs, &assignment);
            let before_y = base + cu * (old_sum / n);
            let (candidate, switches) = match cfg.assignment_solver {
                AssignmentSolver::Switching => {
                    let scfg = SwitchConfig {
                        record: cfg.record_switches,
                        ..Default::default()
                    };
                    let (a, report) = solve_switching_with(&costs, counts, &assignment, &scfg)?;
                    if report.hit_cap {
                        trace.warnings.push(format!(
                            "switching hit its iteration cap at C^u = {cu}, inner iteration {inner}"
                        ));
                    }
                    (a, Some(report))
                }
                AssignmentSolver::Simplex => {
                    let (a, _) = solve_simplex_from(&costs, counts, &assignment, &SimplexConfig::default())?;
                    (a, None)
                }
            };
            let new_sum = assignment_objective(&costs, &candidate);
            let candidate = if new_sum <= old_sum { candidate } else { assignment.clone() };
            let after_y = base + cu * (assignment_objective(&costs, &candidate) / n);
            let changed = candidate.hamming(&assignment);
            debug_assert!(candidate.satisfies(counts));
            assignment = candidate.with_objective(&costs);

            trace.records.push(TraceRecord {
                cu,
                inner_iteration: inner,
                objective_before_w: before_w,
                objective_after_w: after_w,
                objective_before_y: before_y,
                objective_after_y: after_y,
                labels_changed: changed,
                epochs,
                wall_time_secs: started.elapsed().as_secs_f64(),
                switches: switches.filter(|_| cfg.record_switches),
            });
            if changed == 0 {
                settled = true;
                break;
            }
        }
        if !settled {
            trace.warnings.push(format!(
                "labels still changing after {} inner iterations at C^u = {cu}",
                cfg.max_inner_iterations
            ));
        }
    }

    let final_cfg = SolverConfig {
        cu: cfg.schedule.target(),
        ..cfg.solver.clone()
    };
    let final_objective = crate::solver::objective(
        taxonomy,
        &w,
        &labeled,
        Some(PseudoLabeled {
            data: &unlabeled,
            labels: assignment.labels(),
        }),
        &final_cfg,
        kind,
    );
    Ok(SemisupResult {
        weights: w,
        assignment,
        supervised_weights: supervised.weights,
        trace,
        final_objective,
    })
}

/// [`train_semisup`] with the schedule collapsed to its final value.
pub fn run_no_anneal(
    taxonomy: &Taxonomy,
    labeled: &Dataset,
    unlabeled: &Dataset,
    counts: &LabelCounts,
    cfg: &SemisupConfig,
) -> Result<SemisupResult> {
    let single = SemisupConfig {
        schedule: AnnealSchedule::single(cfg.schedule.target())?,
        ..cfg.clone()
    };
    train_semisup(taxonomy, labeled, unlabeled, counts, &single)
}
