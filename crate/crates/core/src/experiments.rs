//! Reusable experiment drivers: assignment-solver benchmarks, the three
//! comparison arms and learning-curve sweeps.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::{
    brute_force, feasible_assignment_count, greedy_init_from_costs, solve_simplex_from, solve_switching,
    SimplexConfig,
};
use crate::data::{derive_label_counts, Dataset, LabelCounts, Split, Taxonomy};
use crate::error::{Error, Result};
use crate::matrix::CostMatrix;
use crate::metrics::evaluate;
use crate::model::{predict, WeightVector};
use crate::semisup::{train_semisup, SemisupConfig, SemisupResult};
use crate::solver::{train, SolverConfig};
use crate::synth::stratified_sample;

/// Cost entries for random assignment instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostDistribution {
    /// U[0, 1).
    Uniform,
    /// Integers 0..=9, which produce many ties.
    Integer,
}

impl std::str::FromStr for CostDistribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(CostDistribution::Uniform),
            "integer" => Ok(CostDistribution::Integer),
            other => Err(format!("unknown distribution `{other}` (expected uniform or integer)")),
        }
    }
}

/// How class counts of random instances are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountShape {
    Balanced,
    /// Proportional to independent U[0.2, 1) weights.
    Random,
}

pub fn random_costs(n: usize, m: usize, dist: CostDistribution, rng: &mut ChaCha8Rng) -> CostMatrix {
    let values = (0..n * m)
        .map(|_| match dist {
            CostDistribution::Uniform => rng.gen::<f64>(),
            CostDistribution::Integer => rng.gen_range(0..10) as f64,
        })
        .collect();
    CostMatrix::from_vec(n, m, values)
}

pub fn random_counts(n: usize, m: usize, shape: CountShape, rng: &mut ChaCha8Rng) -> LabelCounts {
    let phi: Vec<f64> = match shape {
        CountShape::Balanced => vec![1.0 / m as f64; m],
        CountShape::Random => {
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
            let s: f64 = w.iter().sum();
            let mut phi: Vec<f64> = w.iter().map(|v| v / s).collect();
            // Absorb rounding so the fractions sum to one.
            let rest: f64 = phi[..m - 1].iter().sum();
            phi[m - 1] = 1.0 - rest;
            phi
        }
    };
    derive_label_counts(&phi, n).expect("fractions are valid")
}

/// One solver run on one instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub m: usize,
    pub distribution: CostDistribution,
    pub seed: u64,
    pub solver: String,
    pub wall_secs: f64,
    pub objective: f64,
    /// Simplex pivots or switching's applied exchanges.
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchSummary {
    pub records: Vec<BenchRecord>,
    /// Per seed, `(switching − simplex) / max(|simplex|, 1e-12)`.
    pub relative_gaps: Vec<f64>,
    /// Per seed, simplex time over switching time.
    pub speed_ratios: Vec<f64>,
    pub median_gap: f64,
    pub max_gap: f64,
    pub median_speed_ratio: f64,
}

/// Runs both solvers on one random instance per seed. Both start from the
/// greedy assignment on `−c`, which is included in their timings. Small
/// instances also get a brute-force record.
pub fn bench_assign(n: usize, m: usize, dist: CostDistribution, seeds: &[u64]) -> Result<BenchSummary> {
    if n == 0 || m == 0 {
        return Err(Error::Config("bench needs n ≥ 1 and m ≥ 1".into()));
    }
    let mut records = Vec::new();
    let mut relative_gaps = Vec::new();
    let mut speed_ratios = Vec::new();
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let costs = random_costs(n, m, dist, &mut rng);
        let counts = random_counts(n, m, CountShape::Balanced, &mut rng);
        let record = |solver: &str, wall_secs: f64, objective: f64, iterations: usize| BenchRecord {
            n,
            m,
            distribution: dist,
            seed,
            solver: solver.into(),
            wall_secs,
            objective,
            iterations,
        };

        let started = Instant::now();
        let init = greedy_init_from_costs(&costs, &counts)?;
        let switched = solve_switching(&costs, &counts, &init)?;
        let t_switch = started.elapsed().as_secs_f64();
        let switches = switched.hamming(&init) / 2;

        let started = Instant::now();
        let init = greedy_init_from_costs(&costs, &counts)?;
        let (optimal, stats) = solve_simplex_from(&costs, &counts, &init, &SimplexConfig::default())?;
        let t_simplex = started.elapsed().as_secs_f64();

        let s_obj = switched.objective().expect("scored");
        let p_obj = optimal.objective().expect("scored");
        records.push(record("switching", t_switch, s_obj, switches));
        records.push(record("simplex", t_simplex, p_obj, stats.iterations));
        if feasible_assignment_count(&counts) <= 1e6 {
            let started = Instant::now();
            let best = brute_force(&costs, &counts)?;
            records.push(record("brute", started.elapsed().as_secs_f64(), best.objective().expect("scored"), 0));
        }
        relative_gaps.push((s_obj - p_obj) / p_obj.abs().max(1e-12));
        speed_ratios.push(t_simplex / t_switch.max(1e-9));
    }
    Ok(BenchSummary {
        median_gap: median(&relative_gaps),
        max_gap: relative_gaps.iter().copied().fold(0.0, f64::max),
        median_speed_ratio: median(&speed_ratios),
        records,
        relative_gaps,
        speed_ratios,
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn macro_f(taxonomy: &Taxonomy, w: &WeightVector, test: &Dataset) -> Result<f64> {
    let gold = test
        .labels()
        .ok_or_else(|| Error::Config("test set has no labels".into()))?;
    let pred: Vec<usize> = test
        .examples()
        .iter()
        .map(|x| predict(taxonomy.paths(), w, x))
        .collect();
    Ok(evaluate(&pred, gold, taxonomy.num_leaves())?.macro_f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Supervised,
    Semisup,
    /// Supervised on the labeled and unlabeled sets with gold labels.
    Ceiling,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Supervised, Arm::Semisup, Arm::Ceiling];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Supervised => "supervised",
            Arm::Semisup => "semisup",
            Arm::Ceiling => "ceiling",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ArmScores {
    pub supervised: f64,
    pub semisup: f64,
    pub ceiling: f64,
    pub semisup_run: SemisupResult,
}

impl ArmScores {
    pub fn get(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Supervised => self.supervised,
            Arm::Semisup => self.semisup,
            Arm::Ceiling => self.ceiling,
        }
    }
}

/// Test macro-F of the three arms on one split. The counts come from the
/// gold labels of the unlabeled part.
pub fn run_arms(taxonomy: &Taxonomy, split: &Split, cfg: &SemisupConfig) -> Result<ArmScores> {
    let m = taxonomy.num_leaves();
    let counts = LabelCounts::from_labels(&split.unlabeled_gold, m);
    let run = train_semisup(taxonomy, &split.labeled, &split.unlabeled, &counts, cfg)?;
    let dim = run.weights.feature_dim();
    let test = split.test.clone().with_feature_dim(dim);

    let all = split
        .labeled
        .concat(&split.unlabeled.with_labels(split.unlabeled_gold.clone())?)
        .with_feature_dim(dim);
    let ceiling_cfg = SolverConfig { cu: 0.0, ..cfg.solver.clone() };
    let ceiling = train(taxonomy, &all, None, &ceiling_cfg, cfg.kind, None)?;

    Ok(ArmScores {
        supervised: macro_f(taxonomy, &run.supervised_weights, &test)?,
        semisup: macro_f(taxonomy, &run.weights, &test)?,
        ceiling: macro_f(taxonomy, &ceiling.weights, &test)?,
        semisup_run: run,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveConfig {
    pub labeled_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Fraction of the data held out as the unlabeled set.
    pub unlabeled_frac: f64,
    /// Fraction used as the labeled pool the sizes are drawn from.
    pub labeled_frac: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveRow {
    pub labeled_size: usize,
    pub arm: Arm,
    pub mean_macro_f: f64,
    pub std_macro_f: f64,
    pub runs: Vec<f64>,
}

/// For every seed the data is split once into pool, unlabeled and test
/// parts; every labeled size is a class-stratified sample from the pool.
/// Rows come out size-major in [`Arm::ALL`] order.
pub fn learning_curve(
    taxonomy: &Taxonomy,
    data: &Dataset,
    curve: &CurveConfig,
    cfg: &SemisupConfig,
) -> Result<Vec<CurveRow>> {
    if curve.labeled_sizes.is_empty() || curve.seeds.is_empty() {
        return Err(Error::Config("learning curve needs labeled sizes and seeds".into()));
    }
    let m = taxonomy.num_leaves();
    let mut scores = vec![[Vec::new(), Vec::new(), Vec::new()]; curve.labeled_sizes.len()];
    for &seed in &curve.seeds {
        let split = crate::data::split_dataset(data, curve.unlabeled_frac, curve.labeled_frac, seed)?;
        let pool_labels = split.labeled.labels().expect("split keeps labels");
        for (k, &size) in curve.labeled_sizes.iter().enumerate() {
            if size == 0 || size > split.labeled.len() {
                return Err(Error::TooSmall(format!(
                    "labeled size {size} outside 1..={}",
                    split.labeled.len()
                )));
            }
            let pick = stratified_sample(pool_labels, m, size, seed);
            let sub = Split {
                labeled: split.labeled.subset(&pick),
                ..split.clone()
            };
            let run_cfg = SemisupConfig {
                solver: SolverConfig { seed, ..cfg.solver.clone() },
                ..cfg.clone()
            };
            let arms = run_arms(taxonomy, &sub, &run_cfg)?;
            for (a, arm) in Arm::ALL.iter().enumerate() {
                scores[k][a].push(arms.get(*arm));
            }
        }
    }
    let mut rows = Vec::new();
    for (k, &size) in curve.labeled_sizes.iter().enumerate() {
        for (a, &arm) in Arm::ALL.iter().enumerate() {
            let (mean, std) = mean_std(&scores[k][a]);
            rows.push(CurveRow {
                labeled_size: size,
                arm,
                mean_macro_f: mean,
                std_macro_f: std,
                runs: scores[k][a].clone(),
            });
        }
    }
    Ok(rows)
}
