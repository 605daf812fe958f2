//! Weight step: minimizes
//!
//! ```text
//! F(w) = λ/2 ‖w‖² + (1/l) Σ_labeled ξ(w, x, y) + (C^u/n) Σ_unlabeled ξ(w, x, ŷ)
//! ```
//!
//! with the unlabeled labels `ŷ` held fixed, by stochastic subgradient
//! descent. Each step draws one labeled and (when the unlabeled term is
//! active) one unlabeled example from independently shuffled streams, so the
//! step direction is an unbiased estimate of the full subgradient. Step
//! sizes are `1/(λ(t + t0))` and the returned weights are a polynomially
//! decaying average of the iterates, which concentrates on the tail.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Taxonomy};
use crate::error::{Error, Result};
use crate::losses::{gradient_coefficients, loss_from_scores, LossKind};
use crate::model::{accumulate_feature, score_all_into, PathSet, WeightVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Weight of the unlabeled term.
    pub cu: f64,
    pub max_epochs: usize,
    /// Relative objective decrease per epoch below which training stops.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 10.0,
            cu: 1.0,
            max_epochs: 30,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl SolverConfig {
    /// Default regularization for a loss: 10 for the margin loss, 1e-3 for
    /// maxent.
    pub fn default_lambda(kind: LossKind) -> f64 {
        match kind {
            LossKind::LargeMargin => 10.0,
            LossKind::Maxent => 1e-3,
        }
    }

    pub fn for_loss(kind: LossKind) -> Self {
        SolverConfig {
            lambda: Self::default_lambda(kind),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.cu.is_finite() && self.cu >= 0.0) {
            return Err(Error::Config(format!("cu must be non-negative, got {}", self.cu)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Unlabeled examples with their current pseudo labels.
#[derive(Clone, Copy, Debug)]
pub struct PseudoLabeled<'a> {
    pub data: &'a Dataset,
    pub labels: &'a [usize],
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub weights: WeightVector,
    pub objective: f64,
    pub epochs_used: usize,
    /// Objective of the averaged weights at the start and after each epoch.
    pub objective_trace: Vec<f64>,
    /// False when `max_epochs` ran out before the tolerance was met.
    pub converged: bool,
}

/// Exact objective value. The unlabeled term is skipped when there are no
/// pseudo-labeled examples or `cu == 0`.
pub fn objective(
    taxonomy: &Taxonomy,
    w: &WeightVector,
    labeled: &Dataset,
    pseudo: Option<PseudoLabeled<'_>>,
    cfg: &SolverConfig,
    kind: LossKind,
) -> f64 {
    let paths = taxonomy.paths();
    let mut total = 0.5 * cfg.lambda * w.norm_sq();
    if let Some(labels) = labeled.labels() {
        if !labeled.is_empty() {
            total += mean_loss(paths, w, labeled, labels, kind);
        }
    }
    if let Some(p) = pseudo {
        if cfg.cu > 0.0 && !p.data.is_empty() {
            total += cfg.cu * mean_loss(paths, w, p.data, p.labels, kind);
        }
    }
    total
}

/// Mean loss over a dataset, summed in example order.
pub fn mean_loss(paths: &PathSet, w: &WeightVector, data: &Dataset, labels: &[usize], kind: LossKind) -> f64 {
    let mut scores = vec![0.0; paths.num_leaves()];
    let mut dots = Vec::new();
    let mut sum = 0.0;
    for (x, &y) in data.examples().iter().zip(labels) {
        score_all_into(paths, w, x, &mut dots, &mut scores);
        sum += loss_from_scores(kind, &scores, y);
    }
    sum / data.len() as f64
}

/// Iterate `w = α·u` and running average `ŵ = β·u + γ·r`, so that the
/// shrink from the regularizer and the averaging step are O(1) and only the
/// sparse loss gradient touches memory.
struct AveragedIterate {
    u: WeightVector,
    alpha: f64,
    r: WeightVector,
    beta: f64,
    gamma: f64,
}

impl AveragedIterate {
    fn new(start: WeightVector) -> Self {
        let r = WeightVector::zeros(start.num_nodes(), start.feature_dim());
        AveragedIterate {
            u: start,
            alpha: 1.0,
            r,
            beta: 1.0,
            gamma: 1.0,
        }
    }

    fn shrink(&mut self, factor: f64) {
        self.alpha *= factor;
        if self.alpha < 1e-9 {
            let a = self.alpha;
            self.u.as_mut_slice().iter_mut().for_each(|v| *v *= a);
            self.beta /= a;
            self.alpha = 1.0;
        }
    }

    /// `w += scale · f(leaf; x)` leaving the average untouched.
    fn add_feature(&mut self, paths: &PathSet, x: &crate::data::SparseVector, leaf: usize, scale: f64) {
        let du = scale / self.alpha;
        accumulate_feature(paths, &mut self.u, x, leaf, du);
        let dr = -du * self.beta / self.gamma;
        accumulate_feature(paths, &mut self.r, x, leaf, dr);
    }

    /// `ŵ ← (1 − μ)ŵ + μw`.
    fn average(&mut self, mu: f64) {
        self.beta = (1.0 - mu) * self.beta + mu * self.alpha;
        self.gamma *= 1.0 - mu;
        if self.gamma < 1e-6 {
            let (b, g) = (self.beta, self.gamma);
            for (r, &u) in self.r.as_mut_slice().iter_mut().zip(self.u.as_slice()) {
                *r = b * u + g * *r;
            }
            self.beta = 0.0;
            self.gamma = 1.0;
        }
    }

    fn averaged(&self) -> WeightVector {
        let mut out = self.r.clone();
        let (b, g) = (self.beta, self.gamma);
        for (o, &u) in out.as_mut_slice().iter_mut().zip(self.u.as_slice()) {
            *o = b * u + g * *o;
        }
        out
    }
}

/// Shuffled pass over `0..len`, reshuffled each time it is exhausted.
struct Stream {
    order: Vec<usize>,
    pos: usize,
}

impl Stream {
    fn new(len: usize) -> Self {
        Stream {
            order: (0..len).collect(),
            pos: len,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

// Tiny training sets still get this many updates between objective checks.
const MIN_EPOCH_STEPS: usize = 1000;

// Averaging weight μ_t = (c + 1)/(t + c).
const AVERAGING_POWER: f64 = 3.0;

/// Minimizes the objective over `w` with labels fixed.
///
/// Training stops when an epoch lowers the best objective seen by a relative
/// amount of at most `cfg.tolerance`, or after `cfg.max_epochs`.
/// A warm start resumes the step-size schedule one epoch in, as if it were
/// the average of an earlier epoch, so small steps refine it instead of
/// large early steps scattering it.
/// The lowest-objective point seen, including the starting point, is
/// returned, so the result never scores worse than `warm_start` (or zero).
pub fn train(
    taxonomy: &Taxonomy,
    labeled: &Dataset,
    pseudo: Option<PseudoLabeled<'_>>,
    cfg: &SolverConfig,
    kind: LossKind,
    warm_start: Option<&WeightVector>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let labels = labeled
        .labels()
        .ok_or_else(|| Error::Config("labeled set has no labels".into()))?;
    if labeled.is_empty() {
        return Err(Error::Config("labeled set is empty".into()));
    }
    let m = taxonomy.num_leaves();
    labeled.validate_labels(m)?;
    if let Some(p) = pseudo {
        if p.labels.len() != p.data.len() {
            return Err(Error::LengthMismatch(format!(
                "{} pseudo labels for {} unlabeled examples",
                p.labels.len(),
                p.data.len()
            )));
        }
        if p.labels.iter().any(|&y| y >= m) {
            return Err(Error::Config("pseudo label out of range".into()));
        }
    }
    let dim = labeled
        .feature_dim()
        .max(pseudo.map_or(0, |p| p.data.feature_dim()));
    let start = match warm_start {
        Some(w) => {
            if w.num_nodes() != taxonomy.num_nodes() || w.feature_dim() != dim {
                return Err(Error::Config(format!(
                    "warm start has shape {}x{}, expected {}x{dim}",
                    w.num_nodes(),
                    w.feature_dim(),
                    taxonomy.num_nodes()
                )));
            }
            w.clone()
        }
        None => WeightVector::zeros(taxonomy.num_nodes(), dim),
    };

    let paths = taxonomy.paths();
    let active_pseudo = pseudo.filter(|p| cfg.cu > 0.0 && !p.data.is_empty());
    let eval = |w: &WeightVector| objective(taxonomy, w, labeled, pseudo, cfg, kind);

    let start_obj = eval(&start);
    if !start_obj.is_finite() {
        return Err(Error::Diverged("objective at the starting point is not finite".into()));
    }
    let mut best = start.clone();
    let mut best_obj = start_obj;
    let mut trace = vec![start_obj];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labeled_stream = Stream::new(labeled.len());
    let mut pseudo_stream = Stream::new(active_pseudo.map_or(0, |p| p.data.len()));
    let steps_per_epoch = labeled
        .len()
        .max(active_pseudo.map_or(0, |p| p.data.len()))
        .max(MIN_EPOCH_STEPS);

    let lambda = cfg.lambda;
    let t0 = (1.0 / lambda).max(1.0);
    let mut iterate = AveragedIterate::new(start);
    let mut scores = vec![0.0; m];
    let mut dots = Vec::new();
    let mut coef_s = Vec::new();
    let mut coef_u = Vec::new();
    let mut t: u64 = if warm_start.is_some() { steps_per_epoch as u64 } else { 0 };
    let mut converged = false;
    let mut epochs_used = 0;

    for _ in 0..cfg.max_epochs {
        for _ in 0..steps_per_epoch {
            t += 1;
            let eta = 1.0 / (lambda * (t as f64 + t0));

            let j = labeled_stream.next(&mut rng);
            let xs = &labeled.examples()[j];
            score_all_into(paths, &iterate.u, xs, &mut dots, &mut scores);
            scores.iter_mut().for_each(|s| *s *= iterate.alpha);
            gradient_coefficients(kind, &scores, labels[j], &mut coef_s);

            let unlabeled_pick = active_pseudo.map(|p| {
                let k = pseudo_stream.next(&mut rng);
                let xu = &p.data.examples()[k];
                score_all_into(paths, &iterate.u, xu, &mut dots, &mut scores);
                scores.iter_mut().for_each(|s| *s *= iterate.alpha);
                gradient_coefficients(kind, &scores, p.labels[k], &mut coef_u);
                xu
            });

            iterate.shrink(1.0 - eta * lambda);
            for &(leaf, c) in &coef_s {
                iterate.add_feature(paths, xs, leaf, -eta * c);
            }
            if let Some(xu) = unlabeled_pick {
                for &(leaf, c) in &coef_u {
                    iterate.add_feature(paths, xu, leaf, -eta * cfg.cu * c);
                }
            }
            let mu = (AVERAGING_POWER + 1.0) / (t as f64 + AVERAGING_POWER);
            iterate.average(mu);
        }
        epochs_used += 1;

        let avg = iterate.averaged();
        let obj = eval(&avg);
        if !obj.is_finite() || !avg.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite objective after epoch {epochs_used} (lambda = {lambda})"
            )));
        }
        trace.push(obj);
        let rel_gain = (best_obj - obj) / best_obj.abs().max(1e-12);
        if obj < best_obj {
            best_obj = obj;
            best = avg;
        }
        // From a cold start the first epochs can overshoot; nothing has
        // converged while zero is still the best point.
        let moved = warm_start.is_some() || best_obj < start_obj;
        if moved && rel_gain <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(TrainResult {
        weights: best,
        objective: best_obj,
        epochs_used,
        objective_trace: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseVector;
    use crate::losses::loss;
    use rand::{Rng, SeedableRng};

    fn separable() -> Dataset {
        let xs = [[1.0, 0.2], [0.8, -0.1], [0.1, 1.0], [-0.2, 0.9]]
            .iter()
            .map(|r| SparseVector::from_dense(r))
            .collect();
        Dataset::new(xs, Some(vec![0, 0, 1, 1]), 2).unwrap()
    }

    /// Grid search over v = b0 − b1 for the flat 2-class margin objective,
    /// λ/4 ‖v‖² + mean hinge(±v·x).
    fn grid_optimum(data: &Dataset, lambda: f64) -> f64 {
        let labels = data.labels().unwrap();
        let f = |v: [f64; 2]| {
            let mut loss = 0.0;
            for (x, &y) in data.examples().iter().zip(labels) {
                let sign = if y == 0 { 1.0 } else { -1.0 };
                let margin = sign * x.dot(&v);
                loss += (1.0 - margin).max(0.0);
            }
            lambda / 4.0 * (v[0] * v[0] + v[1] * v[1]) + loss / labels.len() as f64
        };
        let mut best = f64::INFINITY;
        for i in 0..=1000 {
            for j in 0..=1000 {
                let v = [-5.0 + i as f64 * 0.01, -5.0 + j as f64 * 0.01];
                best = best.min(f(v));
            }
        }
        best
    }

    // Optimum of the separable problem at λ = 0.01, from a grid search
    // refined by Nelder-Mead; the hinge term is zero there.
    const SEPARABLE_OPTIMUM: f64 = 0.006_898_167_430_249_936;

    fn random_data(seed: u64, n: usize, d: usize, m: usize, labeled: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<SparseVector> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..d)
                    .map(|_| if rng.gen_bool(0.5) { rng.gen_range(-1.0..1.0) } else { 0.0 })
                    .collect();
                SparseVector::from_dense(&v)
            })
            .collect();
        let labels = labeled.then(|| (0..n).map(|_| rng.gen_range(0..m)).collect());
        Dataset::new(xs, labels, d).unwrap()
    }

    #[test]
    fn zero_weight_objective() {
        let tax = Taxonomy::flat(3);
        let l = random_data(1, 10, 4, 3, true);
        let u = random_data(2, 6, 4, 3, false);
        let pl = vec![0, 1, 2, 0, 1, 2];
        let w = WeightVector::zeros(4, 4);
        let cfg = SolverConfig { cu: 0.7, ..Default::default() };
        let pseudo = PseudoLabeled { data: &u, labels: &pl };
        let f = objective(&tax, &w, &l, Some(pseudo), &cfg, LossKind::LargeMargin);
        assert!((f - 1.7).abs() < 1e-15);
        let cfg0 = SolverConfig { cu: 0.0, ..cfg };
        assert_eq!(
            objective(&tax, &w, &l, Some(pseudo), &cfg0, LossKind::LargeMargin),
            objective(&tax, &w, &l, None, &cfg0, LossKind::LargeMargin)
        );
    }

    #[test]
    fn objective_matches_term_by_term() {
        let tax = Taxonomy::from_parents(vec![0, 0, 1, 1, 0], vec![false, false, true, true, true]).unwrap();
        let l = random_data(3, 12, 5, 3, true);
        let u = random_data(4, 9, 5, 3, false);
        let pl: Vec<usize> = (0..9).map(|i| i % 3).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = WeightVector::from_blocks(5, 5, (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let cfg = SolverConfig { lambda: 0.3, cu: 0.5, ..Default::default() };
        for kind in [LossKind::LargeMargin, LossKind::Maxent] {
            let reg: f64 = w.as_slice().iter().map(|v| v * v).sum::<f64>() * 0.15;
            let ls: f64 = l
                .examples()
                .iter()
                .zip(l.labels().unwrap())
                .map(|(x, &y)| loss(kind, tax.paths(), &w, x, y))
                .sum::<f64>()
                / 12.0;
            let lu: f64 = u
                .examples()
                .iter()
                .zip(&pl)
                .map(|(x, &y)| loss(kind, tax.paths(), &w, x, y))
                .sum::<f64>()
                * 0.5
                / 9.0;
            let got = objective(&tax, &w, &l, Some(PseudoLabeled { data: &u, labels: &pl }), &cfg, kind);
            assert!((got - (reg + ls + lu)).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_lambda_keeps_weights_near_zero() {
        let tax = Taxonomy::flat(3);
        let l = random_data(5, 30, 6, 3, true);
        let cfg = SolverConfig { lambda: 1e6, ..Default::default() };
        let res = train(&tax, &l, None, &cfg, LossKind::LargeMargin, None).unwrap();
        let at_zero = objective(&tax, &WeightVector::zeros(4, 6), &l, None, &cfg, LossKind::LargeMargin);
        assert!((res.objective - at_zero).abs() < 1e-3);
    }

    #[test]
    fn grid_oracle_reproduces_frozen_optimum() {
        let got = grid_optimum(&separable(), 0.01);
        // grid spacing 0.01 bounds the gap to the refined optimum
        assert!(got >= SEPARABLE_OPTIMUM - 1e-12 && got - SEPARABLE_OPTIMUM < 2e-4);
    }

    #[test]
    fn separable_problem_reaches_near_zero_hinge() {
        let tax = Taxonomy::flat(2);
        let data = separable();
        let cfg = SolverConfig {
            lambda: 0.01,
            max_epochs: 5000,
            tolerance: 1e-9,
            ..Default::default()
        };
        let res = train(&tax, &data, None, &cfg, LossKind::LargeMargin, None).unwrap();
        let hinge = mean_loss(tax.paths(), &res.weights, &data, data.labels().unwrap(), LossKind::LargeMargin);
        assert!(hinge < 0.05, "hinge term {hinge}");
        assert!(res.objective >= SEPARABLE_OPTIMUM - 1e-12);
        assert!(res.objective < SEPARABLE_OPTIMUM + 0.01, "objective {}", res.objective);
    }

    #[test]
    fn warm_start_at_solution_stops_after_one_epoch() {
        let tax = Taxonomy::flat(3);
        let l = random_data(6, 40, 6, 3, true);
        let tight = SolverConfig { lambda: 0.1, max_epochs: 500, tolerance: 1e-8, ..Default::default() };
        let first = train(&tax, &l, None, &tight, LossKind::LargeMargin, None).unwrap();
        assert!(first.weights.norm_sq() > 0.0);
        let cfg = SolverConfig { tolerance: 1e-4, ..tight };
        let again = train(&tax, &l, None, &cfg, LossKind::LargeMargin, Some(&first.weights)).unwrap();
        assert!(again.epochs_used <= 1, "{:?}", again.objective_trace);
        assert!(again.objective <= first.objective);
    }

    #[test]
    fn objective_never_exceeds_start() {
        let tax = Taxonomy::flat(4);
        let l = random_data(7, 25, 8, 4, true);
        let u = random_data(8, 50, 8, 4, false);
        let pl: Vec<usize> = (0..50).map(|i| i % 4).collect();
        for kind in [LossKind::LargeMargin, LossKind::Maxent] {
            let cfg = SolverConfig { lambda: 1.0, ..Default::default() };
            let pseudo = Some(PseudoLabeled { data: &u, labels: &pl });
            let res = train(&tax, &l, pseudo, &cfg, kind, None).unwrap();
            let at_zero = objective(&tax, &WeightVector::zeros(5, 8), &l, pseudo, &cfg, kind);
            assert!(res.objective <= at_zero);
            assert_eq!(res.objective_trace[0], at_zero);
            assert_eq!(res.objective, objective(&tax, &res.weights, &l, pseudo, &cfg, kind));
        }
    }

    #[test]
    fn seeds_and_order_agree() {
        let tax = Taxonomy::from_parents(vec![0, 0, 1, 1, 0], vec![false, false, true, true, true]).unwrap();
        let l = random_data(10, 60, 10, 3, true);
        let u = random_data(11, 120, 10, 3, false);
        let pl: Vec<usize> = (0..120).map(|i| i % 3).collect();
        let pseudo = Some(PseudoLabeled { data: &u, labels: &pl });
        let cfg = SolverConfig { max_epochs: 100, tolerance: 1e-6, ..Default::default() };
        let a = train(&tax, &l, pseudo, &cfg, LossKind::LargeMargin, None).unwrap();
        let b = train(&tax, &l, pseudo, &SolverConfig { seed: 99, ..cfg.clone() }, LossKind::LargeMargin, None).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-3 * a.objective);

        let rev: Vec<usize> = (0..60).rev().collect();
        let l_rev = l.subset(&rev);
        let c = train(&tax, &l_rev, pseudo, &cfg, LossKind::LargeMargin, None).unwrap();
        assert!((a.objective - c.objective).abs() <= 1e-3 * a.objective);

        // same seed, same result
        let again = train(&tax, &l, pseudo, &cfg, LossKind::LargeMargin, None).unwrap();
        assert_eq!(again.weights, a.weights);
    }

    #[test]
    fn zero_cu_ignores_pseudo_labels() {
        let tax = Taxonomy::flat(3);
        let l = random_data(12, 20, 5, 3, true);
        let u = random_data(13, 30, 5, 3, false);
        let pl = vec![1; 30];
        let cfg = SolverConfig { cu: 0.0, ..Default::default() };
        let a = train(&tax, &l, Some(PseudoLabeled { data: &u, labels: &pl }), &cfg, LossKind::Maxent, None).unwrap();
        let b = train(&tax, &l, None, &cfg, LossKind::Maxent, None).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let tax = Taxonomy::flat(2);
        let l = separable();
        for cfg in [
            SolverConfig { lambda: 0.0, ..Default::default() },
            SolverConfig { cu: -1.0, ..Default::default() },
            SolverConfig { max_epochs: 0, ..Default::default() },
            SolverConfig { tolerance: 0.0, ..Default::default() },
        ] {
            assert!(matches!(train(&tax, &l, None, &cfg, LossKind::LargeMargin, None), Err(Error::Config(_))));
        }
    }
}
