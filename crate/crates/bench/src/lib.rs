//! Criterion benchmarks for the assignment solvers and the weight step.
//! Run with `cargo bench -p tsvm-bench`.
