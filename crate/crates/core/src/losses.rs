//! Per-example losses `ξ(w, x, y)`, their (sub)gradients, and the cost
//! matrix fed to the label-assignment step.
//!
//! Both losses are computed from the vector of leaf scores, so the scalar
//! entry points and [`cost_matrix`] share one arithmetic path and agree bit
//! for bit.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SparseVector};
use crate::matrix::CostMatrix;
use crate::model::{accumulate_feature, score_all, score_all_into, PathSet, WeightVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Multi-class hinge loss with 0/1 label loss.
    #[serde(rename = "margin")]
    LargeMargin,
    /// Negative log-likelihood of a softmax model.
    Maxent,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::LargeMargin => "margin",
            LossKind::Maxent => "maxent",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "margin" => Ok(LossKind::LargeMargin),
            "maxent" => Ok(LossKind::Maxent),
            other => Err(format!("unknown loss `{other}` (expected margin or maxent)")),
        }
    }
}

/// `max_y [L(y, y_true) + s_y] − s_true` with `L = 1 − δ`, and the
/// maximizing label (lowest index on ties).
pub fn margin_loss_from_scores(scores: &[f64], y_true: usize) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut y_star = 0;
    for (y, &s) in scores.iter().enumerate() {
        let v = if y == y_true { s } else { s + 1.0 };
        if v > best {
            best = v;
            y_star = y;
        }
    }
    (best - scores[y_true], y_star)
}

/// `log Σ_y exp(s_y)` with the maximum factored out.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|&s| (s - max).exp()).sum();
    max + sum.ln()
}

pub fn maxent_loss_from_scores(scores: &[f64], y_true: usize) -> f64 {
    log_sum_exp(scores) - scores[y_true]
}

pub fn loss_from_scores(kind: LossKind, scores: &[f64], y_true: usize) -> f64 {
    match kind {
        LossKind::LargeMargin => margin_loss_from_scores(scores, y_true).0,
        LossKind::Maxent => maxent_loss_from_scores(scores, y_true),
    }
}

pub fn margin_loss(paths: &PathSet, w: &WeightVector, x: &SparseVector, y_true: usize) -> (f64, usize) {
    margin_loss_from_scores(&score_all(paths, w, x), y_true)
}

pub fn maxent_loss(paths: &PathSet, w: &WeightVector, x: &SparseVector, y_true: usize) -> f64 {
    maxent_loss_from_scores(&score_all(paths, w, x), y_true)
}

pub fn loss(kind: LossKind, paths: &PathSet, w: &WeightVector, x: &SparseVector, y_true: usize) -> f64 {
    loss_from_scores(kind, &score_all(paths, w, x), y_true)
}

/// Writes the loss gradient as per-leaf coefficients: the gradient with
/// respect to `w` is `Σ coef_y · f(y; x)`. Leaves with zero coefficient may
/// be omitted.
pub fn gradient_coefficients(kind: LossKind, scores: &[f64], y_true: usize, out: &mut Vec<(usize, f64)>) {
    out.clear();
    match kind {
        LossKind::LargeMargin => {
            let (_, y_star) = margin_loss_from_scores(scores, y_true);
            if y_star != y_true {
                out.push((y_star, 1.0));
                out.push((y_true, -1.0));
            }
        }
        LossKind::Maxent => {
            let lse = log_sum_exp(scores);
            for (y, &s) in scores.iter().enumerate() {
                let p = (s - lse).exp();
                let coef = if y == y_true { p - 1.0 } else { p };
                out.push((y, coef));
            }
        }
    }
}

/// Adds `scale · ∇ξ(w, x, y_true)` into `acc`. For the margin loss this is
/// the subgradient `f(y*;x) − f(y_true;x)` at the maximizer `y*`.
pub fn loss_subgradient(
    kind: LossKind,
    paths: &PathSet,
    w: &WeightVector,
    x: &SparseVector,
    y_true: usize,
    scale: f64,
    acc: &mut WeightVector,
) {
    let scores = score_all(paths, w, x);
    let mut coefs = Vec::new();
    gradient_coefficients(kind, &scores, y_true, &mut coefs);
    for (y, c) in coefs {
        accumulate_feature(paths, acc, x, y, scale * c);
    }
}

/// Fills `row[y] = ξ(w, x, y)` from the leaf scores.
pub fn cost_row(kind: LossKind, scores: &[f64], row: &mut [f64]) {
    match kind {
        LossKind::LargeMargin => {
            for (y, c) in row.iter_mut().enumerate() {
                *c = margin_loss_from_scores(scores, y).0;
            }
        }
        LossKind::Maxent => {
            let lse = log_sum_exp(scores);
            for (c, &s) in row.iter_mut().zip(scores) {
                *c = lse - s;
            }
        }
    }
}

/// `c_iy = ξ(w, x_i, y)` for every unlabeled example and candidate label.
pub fn cost_matrix(kind: LossKind, paths: &PathSet, w: &WeightVector, unlabeled: &Dataset) -> CostMatrix {
    let m = paths.num_leaves();
    let mut costs = CostMatrix::zeros(unlabeled.len(), m);
    let mut scores = vec![0.0; m];
    let mut dots = Vec::new();
    for (i, x) in unlabeled.examples().iter().enumerate() {
        score_all_into(paths, w, x, &mut dots, &mut scores);
        cost_row(kind, &scores, costs.row_mut(i));
    }
    costs
}

/// Classifier scores for every example, one row per example.
pub fn score_matrix(paths: &PathSet, w: &WeightVector, data: &Dataset) -> crate::matrix::ScoreMatrix {
    let m = paths.num_leaves();
    let mut out = crate::matrix::ScoreMatrix::zeros(data.len(), m);
    let mut dots = Vec::new();
    for (i, x) in data.examples().iter().enumerate() {
        score_all_into(paths, w, x, &mut dots, out.row_mut(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Taxonomy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(rng: &mut ChaCha8Rng, nodes: usize, d: usize, scale: f64) -> WeightVector {
        let data = (0..nodes * d).map(|_| rng.gen_range(-scale..scale)).collect();
        WeightVector::from_blocks(nodes, d, data).unwrap()
    }

    fn random_x(rng: &mut ChaCha8Rng, d: usize) -> SparseVector {
        let v: Vec<f64> = (0..d)
            .map(|_| if rng.gen_bool(0.6) { rng.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();
        SparseVector::from_dense(&v)
    }

    fn combine(a: &WeightVector, b: &WeightVector, t: f64) -> WeightVector {
        let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        WeightVector::from_blocks(a.num_nodes(), a.feature_dim(), data).unwrap()
    }

    fn inner(a: &WeightVector, b: &WeightVector) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin_loss_from_scores(&[0.0, 0.0, 0.0], 1), (1.0, 0));
        assert_eq!(margin_loss_from_scores(&[2.0, 0.5], 0), (0.0, 0));
        assert_eq!(margin_loss_from_scores(&[0.5, 2.0], 0), (2.5, 1));
    }

    #[test]
    fn maxent_examples() {
        assert!((maxent_loss_from_scores(&[0.0; 4], 2) - 4f64.ln()).abs() < 1e-15);
        assert!((maxent_loss_from_scores(&[1.0, 0.0], 0) - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!((maxent_loss_from_scores(&[0.0, 0.0, 0.0], 2) - 1.098_612_288_668_109_8).abs() < 1e-12);
        // no overflow for large scores
        let xi = maxent_loss_from_scores(&[1000.0, 999.0], 1);
        assert!((xi - (1.0 + (-1f64).exp().ln_1p())).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_gradients() {
        let tax = Taxonomy::flat(2);
        let w = WeightVector::zeros(3, 2);
        let x = SparseVector::from_dense(&[1.0, -2.0]);
        let mut acc = WeightVector::zeros(3, 2);
        loss_subgradient(LossKind::Maxent, tax.paths(), &w, &x, 0, 1.0, &mut acc);
        assert_eq!(acc.block(1), &[-0.5, 1.0]);
        assert_eq!(acc.block(2), &[0.5, -1.0]);

        // margin loss at a confident correct prediction contributes nothing
        let mut w = WeightVector::zeros(3, 2);
        w.block_mut(1).copy_from_slice(&[5.0, 0.0]);
        let mut acc = WeightVector::zeros(3, 2);
        loss_subgradient(LossKind::LargeMargin, tax.paths(), &w, &x, 0, 1.0, &mut acc);
        assert_eq!(acc.norm_sq(), 0.0);
    }

    #[test]
    fn zero_weight_cost_matrix() {
        let tax = Taxonomy::flat(3);
        let w = WeightVector::zeros(4, 2);
        let xs = vec![SparseVector::from_dense(&[1.0, 2.0]), SparseVector::from_dense(&[0.0, -1.0])];
        let data = Dataset::new(xs, None, 2).unwrap();
        let c = cost_matrix(LossKind::LargeMargin, tax.paths(), &w, &data);
        assert!(c.values().iter().all(|&v| v == 1.0));
        let c = cost_matrix(LossKind::Maxent, tax.paths(), &w, &data);
        assert!(c.values().iter().all(|&v| v == 3f64.ln()));
    }

    #[test]
    fn cost_matrix_matches_per_entry_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tax = Taxonomy::from_parents(vec![0, 0, 1, 1, 0, 0], vec![false, false, true, true, true, true]).unwrap();
        for kind in [LossKind::LargeMargin, LossKind::Maxent] {
            let w = random_weights(&mut rng, 6, 5, 2.0);
            let xs: Vec<SparseVector> = (0..20).map(|_| random_x(&mut rng, 5)).collect();
            let data = Dataset::new(xs, None, 5).unwrap();
            let c = cost_matrix(kind, tax.paths(), &w, &data);
            for (i, x) in data.examples().iter().enumerate() {
                for y in 0..4 {
                    assert_eq!(c.get(i, y).to_bits(), loss(kind, tax.paths(), &w, x, y).to_bits());
                }
            }
        }
    }

    #[test]
    fn losses_are_non_negative_and_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tax = Taxonomy::from_parents(vec![0, 0, 1, 1, 0], vec![false, false, true, true, true]).unwrap();
        for _ in 0..300 {
            let w1 = random_weights(&mut rng, 5, 4, 3.0);
            let w2 = random_weights(&mut rng, 5, 4, 3.0);
            let x = random_x(&mut rng, 4);
            let y = rng.gen_range(0..3);
            let t: f64 = rng.gen();
            for kind in [LossKind::LargeMargin, LossKind::Maxent] {
                let l1 = loss(kind, tax.paths(), &w1, &x, y);
                let l2 = loss(kind, tax.paths(), &w2, &x, y);
                let lt = loss(kind, tax.paths(), &combine(&w1, &w2, t), &x, y);
                assert!(l1 >= 0.0);
                assert!(lt <= t * l1 + (1.0 - t) * l2 + 1e-9);
            }
            assert!(maxent_loss(tax.paths(), &w1, &x, y) > 0.0);
        }
    }

    #[test]
    fn margin_subgradient_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tax = Taxonomy::flat(4);
        for _ in 0..300 {
            let w = random_weights(&mut rng, 5, 6, 1.0);
            let x = random_x(&mut rng, 6);
            let y = rng.gen_range(0..4);
            let mut g = WeightVector::zeros(5, 6);
            loss_subgradient(LossKind::LargeMargin, tax.paths(), &w, &x, y, 1.0, &mut g);
            let delta = random_weights(&mut rng, 5, 6, 0.3);
            let w2 = combine(&w, &delta, 1.0);
            let w2 = WeightVector::from_blocks(
                5,
                6,
                w2.as_slice().iter().zip(delta.as_slice()).map(|(a, b)| a + b).collect(),
            )
            .unwrap();
            let lhs = margin_loss(tax.paths(), &w2, &x, y).0;
            let rhs = margin_loss(tax.paths(), &w, &x, y).0 + inner(&g, &delta);
            assert!(lhs >= rhs - 1e-9, "{lhs} < {rhs}");
        }
    }
}
