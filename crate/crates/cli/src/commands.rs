use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use tsvm_core::data::{
    class_fractions, derive_label_counts, load_dataset, write_dataset, DataFormat, Dataset, LabelCounts, Taxonomy,
};
use tsvm_core::experiments::{self, Arm, CostDistribution, CurveConfig};
use tsvm_core::model::predict as predict_one;
use tsvm_core::semisup::{train_semisup, AnnealSchedule, SemisupConfig, DEFAULT_SCHEDULE};
use tsvm_core::synth::{self, ClusterParams, TextParams};
use tsvm_core::{evaluate, train as train_weights, AssignmentSolver, LossKind, Model, SolverConfig};

use crate::config::{json_lines, Output, RunConfig};
use crate::{
    BenchArgs, CliError, CurveArgs, DistributionArg, EvalArgs, LossArg, ModelOpts, PredictArgs, SemisupArgs,
    SemisupOpts, SolverArg, SynthArgs, SynthKind, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn loss_kind(arg: LossArg) -> LossKind {
    match arg {
        LossArg::Margin => LossKind::LargeMargin,
        LossArg::Maxent => LossKind::Maxent,
    }
}

fn solver_kind(arg: SolverArg) -> AssignmentSolver {
    match arg {
        SolverArg::Switching => AssignmentSolver::Switching,
        SolverArg::Simplex => AssignmentSolver::Simplex,
    }
}

/// Loads a dataset without a class bound; labels are checked later against
/// the resolved number of classes.
fn load(path: &Path) -> Result<Dataset> {
    Ok(load_dataset(path, DataFormat::SparseLabel, usize::MAX)?)
}

/// One integer label per non-comment line.
fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let y = line
            .parse()
            .map_err(|_| config_error(format!("{}:{}: expected a label, got `{line}`", path.display(), i + 1)))?;
        labels.push(y);
    }
    Ok(labels)
}

fn write_labels(w: &mut dyn Write, labels: &[usize]) -> std::io::Result<()> {
    for y in labels {
        writeln!(w, "{y}")?;
    }
    Ok(())
}

/// Taxonomy from `--taxonomy`, else a flat problem with `--classes` or one
/// class per observed label.
fn resolve_taxonomy(opts: &ModelOpts, labels: &[&[usize]]) -> Result<Taxonomy> {
    let observed = labels.iter().flat_map(|l| l.iter()).max().map_or(0, |&y| y + 1);
    let tax = match &opts.taxonomy {
        Some(path) => Taxonomy::load(path)?,
        None => Taxonomy::flat(opts.classes.unwrap_or(observed).max(2)),
    };
    let m = tax.num_leaves();
    if let Some(c) = opts.classes {
        if c != m {
            return Err(config_error(format!("--classes {c} but the taxonomy has {m} leaves")));
        }
    }
    if observed > m {
        return Err(config_error(format!("label {} out of range for {m} classes", observed - 1)));
    }
    Ok(tax)
}

fn solver_config(opts: &ModelOpts, kind: LossKind) -> SolverConfig {
    SolverConfig {
        lambda: opts.lambda.unwrap_or_else(|| SolverConfig::default_lambda(kind)),
        max_epochs: opts.max_epochs,
        seed: opts.seed,
        ..SolverConfig::for_loss(kind)
    }
}

fn record_model(cfg: &mut RunConfig, opts: &ModelOpts, solver: &SolverConfig, tax: &Taxonomy) {
    cfg.taxonomy = opts.taxonomy.clone();
    cfg.classes = Some(tax.num_leaves());
    cfg.loss = Some(loss_kind(opts.loss).name().into());
    cfg.lambda = Some(solver.lambda);
    cfg.seed = Some(opts.seed);
    cfg.param("max_epochs", opts.max_epochs);
}

fn semisup_config(opts: &ModelOpts, semi: &SemisupOpts, tax: &Taxonomy, cfg: &mut RunConfig) -> Result<SemisupConfig> {
    let kind = loss_kind(opts.loss);
    let solver = solver_config(opts, kind);
    record_model(cfg, opts, &solver, tax);
    let schedule = match &semi.schedule {
        Some(values) => AnnealSchedule::new(values.clone())?,
        None => AnnealSchedule::ending_at(semi.cu.unwrap_or(1.0))?,
    };
    if semi.schedule.is_none() && semi.cu.is_none() {
        println!("schedule (default): {:?}", DEFAULT_SCHEDULE);
    } else {
        println!("schedule: {:?}", schedule.values());
    }
    cfg.cu = Some(schedule.target());
    cfg.schedule = Some(schedule.values().to_vec());
    cfg.solver = Some(solver_kind(semi.solver).name().into());
    cfg.param("max_inner", semi.max_inner);
    Ok(SemisupConfig {
        kind,
        solver,
        schedule,
        assignment_solver: solver_kind(semi.solver),
        max_inner_iterations: semi.max_inner,
        record_switches: false,
    })
}

pub fn train(a: TrainArgs) -> Result<()> {
    let data = load(&a.train)?;
    let labels = data
        .labels()
        .ok_or_else(|| config_error(format!("{} has no labels", a.train.display())))?;
    let tax = resolve_taxonomy(&a.model, &[labels])?;
    let kind = loss_kind(a.model.loss);
    let solver = solver_config(&a.model, kind);
    let mut cfg = RunConfig::new("train", &a.out);
    cfg.input("train", &a.train);
    record_model(&mut cfg, &a.model, &solver, &tax);
    cfg.param("text_model", a.text);

    let res = train_weights(&tax, &data, None, &SolverConfig { cu: 0.0, ..solver }, kind, None)?;
    let model = Model::new(tax, res.weights)?;
    let out = Output::new(&cfg)?;
    let path = if a.text {
        out.raw("model.txt", |w| model.write_text(w, &cfg.header()))?
    } else {
        out.raw("model.bin", |w| model.write_binary(w, &cfg.header()))?
    };
    println!(
        "objective = {:.6}\nepochs = {}\nconverged = {}\nmodel = {}",
        res.objective,
        res.epochs_used,
        res.converged,
        path.display()
    );
    Ok(())
}

fn read_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let (model, _) = if bytes.starts_with(b"TSVMMODL") {
        Model::read_binary(bytes.as_slice())?
    } else {
        Model::read_text(bytes.as_slice())?
    };
    Ok(model)
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let data = load(&a.data)?;
    let mut cfg = RunConfig::new("predict", &a.out);
    cfg.input("model", &a.model);
    cfg.input("data", &a.data);
    cfg.classes = Some(model.taxonomy.num_leaves());
    let pred: Vec<usize> = data.examples().iter().map(|x| model.predict(x)).collect();
    let path = Output::new(&cfg)?.text("predictions.txt", |w| write_labels(w, &pred))?;
    println!("{} predictions written to {}", pred.len(), path.display());
    Ok(())
}

/// Gold labels from a one-label-per-line file or a labeled dataset.
fn read_gold(path: &Path) -> Result<Vec<usize>> {
    if let Ok(labels) = read_labels(path) {
        return Ok(labels);
    }
    let data = load(path)?;
    data.labels()
        .map(<[usize]>::to_vec)
        .ok_or_else(|| config_error(format!("{} has no labels", path.display())))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let pred = read_labels(&a.pred)?;
    let gold = read_gold(&a.gold)?;
    let observed = pred.iter().chain(&gold).max().map_or(0, |&y| y + 1);
    let m = a.classes.unwrap_or(observed);
    let report = evaluate(&pred, &gold, m)?;
    print!("{report}");
    if let Some(dir) = &a.out {
        let mut cfg = RunConfig::new("eval", dir);
        cfg.input("pred", &a.pred);
        cfg.input("gold", &a.gold);
        cfg.classes = Some(m);
        let out = Output::new(&cfg)?;
        out.text("report.txt", |w| write!(w, "{report}"))?;
        out.text("report.json", |w| {
            writeln!(w, "{}", serde_json::to_string(&report).expect("report serializes"))
        })?;
    }
    Ok(())
}

pub fn semisup(a: SemisupArgs) -> Result<()> {
    let labeled = load(&a.labeled)?;
    let labels = labeled
        .labels()
        .ok_or_else(|| config_error(format!("{} has no labels", a.labeled.display())))?
        .to_vec();
    let unlabeled = load(&a.unlabeled)?.without_labels();
    let gold = a.unlabeled_gold.as_deref().map(read_labels).transpose()?;
    if let Some(g) = &gold {
        if g.len() != unlabeled.len() {
            return Err(config_error(format!(
                "{} gold labels for {} unlabeled examples",
                g.len(),
                unlabeled.len()
            )));
        }
    }
    let test = a.test.as_deref().map(load).transpose()?;
    let test_labels: Vec<usize> = test.as_ref().and_then(|t| t.labels()).map_or(Vec::new(), <[usize]>::to_vec);
    let tax = resolve_taxonomy(&a.model, &[&labels, gold.as_deref().unwrap_or(&[]), &test_labels])?;
    let m = tax.num_leaves();
    labeled.validate_labels(m)?;

    let mut cfg = RunConfig::new("semisup", &a.out);
    cfg.input("labeled", &a.labeled);
    cfg.input("unlabeled", &a.unlabeled);
    if let Some(p) = &a.test {
        cfg.input("test", p);
    }
    if let Some(p) = &a.unlabeled_gold {
        cfg.input("unlabeled_gold", p);
    }
    let n = unlabeled.len();
    let counts = if let Some(c) = &a.counts {
        let counts = LabelCounts::new(c.clone());
        if counts.num_classes() != m {
            return Err(config_error(format!("{} counts for {m} classes", counts.num_classes())));
        }
        counts.check_total(n)?;
        counts
    } else if let Some(phi) = &a.phi {
        if phi.len() != m {
            return Err(config_error(format!("{} fractions for {m} classes", phi.len())));
        }
        cfg.phi = Some(phi.clone());
        derive_label_counts(phi, n)?
    } else if a.phi_from_labeled {
        let phi = class_fractions(&labels, m);
        cfg.phi = Some(phi.clone());
        derive_label_counts(&phi, n)?
    } else if let Some(g) = &gold {
        let counts = LabelCounts::from_labels(g, m);
        cfg.phi = Some(class_fractions(g, m));
        counts
    } else {
        return Err(config_error(
            "the unlabeled class counts need --counts, --phi, --phi-from-labeled or --unlabeled-gold",
        ));
    };
    cfg.counts = Some(counts.counts().to_vec());
    let scfg = semisup_config(&a.model, &a.semi, &tax, &mut cfg)?;

    let run = train_semisup(&tax, &labeled, &unlabeled, &counts, &scfg)?;
    for w in &run.trace.warnings {
        eprintln!("warning: {w}");
    }
    let out = Output::new(&cfg)?;
    let model = Model::new(tax.clone(), run.weights.clone())?;
    out.raw("model.bin", |w| model.write_binary(w, &cfg.header()))?;
    out.text("labels.txt", |w| write_labels(w, run.assignment.labels()))?;
    out.text("trace.jsonl", |w| json_lines(w, &run.trace.records))?;

    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    if let Some(g) = &gold {
        let sup_pred: Vec<usize> = unlabeled
            .examples()
            .iter()
            .map(|x| predict_one(tax.paths(), &run.supervised_weights, x))
            .collect();
        let sup = evaluate(&sup_pred, g, m)?.macro_f;
        let semi = evaluate(run.assignment.labels(), g, m)?.macro_f;
        rows.push(("unlabeled_macro_f".into(), sup, semi));
    }
    if let Some(t) = &test {
        if t.labels().is_some() {
            let t = t.clone().with_feature_dim(run.weights.feature_dim());
            let sup = experiments::macro_f(&tax, &run.supervised_weights, &t)?;
            let semi = experiments::macro_f(&tax, &run.weights, &t)?;
            rows.push(("test_macro_f".into(), sup, semi));
        }
    }
    let table = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "{:<20} {:>10} {:>10}", "metric", "supervised", "semisup")?;
        for (name, sup, semi) in &rows {
            writeln!(w, "{name:<20} {sup:>10.4} {semi:>10.4}")?;
        }
        writeln!(w, "final_objective = {:.6}", run.final_objective)?;
        writeln!(w, "weight_steps = {}", run.trace.records.len())
    };
    table(&mut std::io::stdout())?;
    out.text("report.txt", table)?;
    Ok(())
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub fn bench_assign(a: BenchArgs) -> Result<()> {
    let dist = match a.distribution {
        DistributionArg::Uniform => CostDistribution::Uniform,
        DistributionArg::Integer => CostDistribution::Integer,
    };
    if a.seeds == 0 {
        return Err(config_error("--seeds must be at least 1"));
    }
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let mut cfg = RunConfig::new("bench-assign", &a.out);
    cfg.seed = Some(a.seed);
    cfg.param("n", a.n);
    cfg.param("m", a.m);
    cfg.param("distribution", dist);
    cfg.param("seeds", &seeds);
    let summary = experiments::bench_assign(a.n, a.m, dist, &seeds)?;
    let out = Output::new(&cfg)?;
    out.text("bench.jsonl", |w| json_lines(w, &summary.records))?;
    let table = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "{:>6} {:>10} {:>12} {:>12} {:>14} {:>14}", "seed", "solver", "wall_secs", "iterations", "objective", "rel_gap")?;
        for r in &summary.records {
            let opt = summary
                .records
                .iter()
                .find(|o| o.seed == r.seed && o.solver == "simplex")
                .map_or(f64::NAN, |o| o.objective);
            let gap = (r.objective - opt) / opt.abs().max(1e-12);
            writeln!(
                w,
                "{:>6} {:>10} {:>12.6} {:>12} {:>14.6} {:>14.3e}",
                r.seed, r.solver, r.wall_secs, r.iterations, r.objective, gap
            )?;
        }
        writeln!(w, "median_gap = {:.6e}", summary.median_gap)?;
        writeln!(w, "max_gap = {:.6e}", summary.max_gap)?;
        writeln!(w, "median_speed_ratio = {:.2}", summary.median_speed_ratio)
    };
    table(&mut std::io::stdout())?;
    out.text("summary.txt", table)?;
    Ok(())
}

pub fn learning_curve(a: CurveArgs) -> Result<()> {
    let data = load(&a.data)?;
    let labels = data
        .labels()
        .ok_or_else(|| config_error(format!("{} has no labels", a.data.display())))?;
    let tax = resolve_taxonomy(&a.model, &[labels])?;
    if a.seeds == 0 {
        return Err(config_error("--seeds must be at least 1"));
    }
    let mut cfg = RunConfig::new("learning-curve", &a.out);
    cfg.input("data", &a.data);
    let scfg = semisup_config(&a.model, &a.semi, &tax, &mut cfg)?;
    let curve = CurveConfig {
        labeled_sizes: a.sizes.clone(),
        seeds: (a.model.seed..a.model.seed + a.seeds).collect(),
        unlabeled_frac: a.unlabeled_frac,
        labeled_frac: a.labeled_frac,
    };
    cfg.param("curve", &curve);
    let rows = experiments::learning_curve(&tax, &data, &curve, &scfg)?;
    let out = Output::new(&cfg)?;
    out.text("curve.jsonl", |w| json_lines(w, &rows))?;
    let table = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "{:>8} {:>12} {:>10} {:>10}", "labeled", "arm", "mean_f", "std_f")?;
        for r in &rows {
            writeln!(
                w,
                "{:>8} {:>12} {:>10.4} {:>10.4}",
                r.labeled_size,
                r.arm.name(),
                r.mean_macro_f,
                r.std_macro_f
            )?;
        }
        Ok(())
    };
    table(&mut std::io::stdout())?;
    out.text("curve.txt", table)?;
    debug_assert_eq!(rows.len(), a.sizes.len() * Arm::ALL.len());
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = RunConfig::new("synth", &a.out);
    cfg.seed = Some(a.seed);
    cfg.classes = Some(a.classes);
    let data = match a.kind {
        SynthKind::Clusters => {
            let mut p = ClusterParams {
                classes: a.classes,
                per_class: a.per_class,
                ..Default::default()
            };
            if let Some(v) = a.noise_dims {
                p.noise_dims = v;
            }
            if let Some(v) = a.noise_sd {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(config_error("--noise-sd must be finite and non-negative"));
                }
                p.noise_sd = v;
            }
            cfg.param("kind", "clusters");
            cfg.param("params", &p);
            synth::clusters(&p, a.seed)
        }
        SynthKind::SparseText => {
            let mut p = TextParams {
                classes: a.classes,
                per_class: a.per_class,
                ..Default::default()
            };
            if let Some(v) = a.vocab {
                p.vocab = v;
            }
            cfg.param("kind", "sparse-text");
            cfg.param("params", &p);
            synth::sparse_text(&p, a.seed)?
        }
    };
    if a.classes < 2 || a.per_class == 0 {
        return Err(config_error("need at least 2 classes and 1 example per class"));
    }
    cfg.param("labeled_per_class", a.labeled_per_class);
    cfg.param("unlabeled_per_class", a.unlabeled_per_class);
    let split = synth::stratified_split(&data, a.classes, a.labeled_per_class, a.unlabeled_per_class, a.seed)?;
    let phi = class_fractions(&split.unlabeled_gold, a.classes);
    cfg.phi = Some(phi.clone());

    let out = Output::new(&cfg)?;
    let header = cfg.header();
    let dataset = |name: &str, d: &Dataset| out.raw(name, |w| write_dataset(w, d, Some(&header)));
    dataset("full.txt", &data)?;
    dataset("labeled.txt", &split.labeled)?;
    dataset("unlabeled.txt", &split.unlabeled)?;
    dataset("test.txt", &split.test)?;
    out.text("unlabeled.gold", |w| write_labels(w, &split.unlabeled_gold))?;
    println!(
        "{} examples: labeled {}, unlabeled {}, test {}; unlabeled phi {:?}; written to {}",
        data.len(),
        split.labeled.len(),
        split.unlabeled.len(),
        split.test.len(),
        phi,
        a.out.display()
    );
    Ok(())
}
