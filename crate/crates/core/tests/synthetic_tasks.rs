use tsvm_core::data::LabelCounts;
use tsvm_core::experiments::macro_f;
use tsvm_core::losses::LossKind;
use tsvm_core::synth::{clusters, sparse_text, stratified_split, ClusterParams, TextParams};
use tsvm_core::{train, train_semisup, SemisupConfig, SolverConfig, Taxonomy};

fn fit_all_macro_f(data: &tsvm_core::Dataset, kind: LossKind, lambda: f64) -> f64 {
    let tax = Taxonomy::flat(4);
    let cfg = SolverConfig { lambda, ..SolverConfig::for_loss(kind) };
    let w = train(&tax, data, None, &cfg, kind, None).unwrap().weights;
    macro_f(&tax, &w, data).unwrap()
}

#[test]
fn clusters_are_linearly_separable() {
    let data = clusters(&ClusterParams::default(), 11);
    assert!(fit_all_macro_f(&data, LossKind::LargeMargin, 0.1) >= 0.95);
    assert!(fit_all_macro_f(&data, LossKind::Maxent, 1e-3) >= 0.95);
}

#[test]
fn sparse_text_is_linearly_separable() {
    let data = sparse_text(&TextParams::default(), 12).unwrap();
    assert!(fit_all_macro_f(&data, LossKind::LargeMargin, 0.01) >= 0.95);
}

#[test]
fn hierarchical_semisup_on_clusters() {
    // classes {0, 1} under node 1 and {2, 3} under node 2
    let tax = Taxonomy::from_parents(vec![0, 0, 0, 1, 1, 2, 2], vec![false, false, false, true, true, true, true]).unwrap();
    let data = clusters(&ClusterParams { per_class: 80, ..Default::default() }, 5);
    let split = stratified_split(&data, 4, 2, 40, 5).unwrap();
    let counts = LabelCounts::from_labels(&split.unlabeled_gold, 4);
    let mut cfg = SemisupConfig::new(LossKind::LargeMargin);
    cfg.solver.lambda = 0.1;
    let run = train_semisup(&tax, &split.labeled, &split.unlabeled, &counts, &cfg).unwrap();
    assert!(run.assignment.satisfies(&counts));
    let semi = macro_f(&tax, &run.weights, &split.test).unwrap();
    let sup = macro_f(&tax, &run.supervised_weights, &split.test).unwrap();
    assert!(semi >= sup, "semisup {semi} supervised {sup}");
    for r in &run.trace.records {
        assert!(r.objective_after_y <= r.objective_before_y);
        assert!(r.objective_after_w <= r.objective_before_w);
    }
}

#[test]
fn maxent_semisup_runs_and_is_feasible() {
    let data = sparse_text(&TextParams { per_class: 60, ..Default::default() }, 6).unwrap();
    let split = stratified_split(&data, 4, 3, 40, 6).unwrap();
    let counts = LabelCounts::from_labels(&split.unlabeled_gold, 4);
    let cfg = SemisupConfig::new(LossKind::Maxent);
    let run = train_semisup(&Taxonomy::flat(4), &split.labeled, &split.unlabeled, &counts, &cfg).unwrap();
    assert!(run.assignment.satisfies(&counts));
    assert!(run.final_objective.is_finite());
}
