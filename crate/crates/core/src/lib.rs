//! Semi-supervised linear multi-class and hierarchical classifiers trained by
//! alternating between a weight step and a constrained label-assignment step.

pub mod assign;
pub mod data;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod semisup;
pub mod solver;
pub mod synth;

pub use assign::{Assignment, AssignmentSolver};
pub use data::{Dataset, LabelCounts, SparseVector, Split, Taxonomy};
pub use error::{Error, Result};
pub use losses::LossKind;
pub use matrix::{CostMatrix, Matrix, ScoreMatrix};
pub use metrics::{evaluate, ClassReport};
pub use model::{Model, WeightVector};
pub use semisup::{train_semisup, AnnealSchedule, SemisupConfig, SemisupResult};
pub use solver::{train, SolverConfig, TrainResult};
