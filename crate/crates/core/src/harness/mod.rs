//! Data generators, constraint fixtures, experiment drivers, gradient checks
//! and the command-line front end.

pub mod cli;
pub mod experiments;
pub mod fixtures;
pub mod gradcheck;
pub mod graphs;
pub mod shortcut;

use serde::Serialize;
use thiserror::Error;

use crate::encoder::toy::{
    dual_descent, dl2_descent, fuzzy_descent, DescentConfig, DescentReport, DisjunctionEscape, PointDisjunction,
    ScalarProblem, StepSchedule,
};
use crate::encoder::EncoderError;
use crate::formula::FormulaError;
use crate::model::ModelError;
use crate::trainer::TrainError;
use crate::variational::VariationalError;

pub use experiments::{prepare, run_experiment, run_id, run_to_dir, ExperimentConfig, RunArtifacts, Task};
pub use fixtures::fixture_constraints;
pub use gradcheck::{all_suites, GradCheckReport};
pub use graphs::{gen_graphs, shortest_path_constraints, GraphInstance};
pub use shortcut::{gen_shortcut_task, ShortcutDataset};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Formula(#[from] FormulaError),

    #[error(transparent)]
    Encoder(#[from] EncoderError),

    #[error(transparent)]
    Variational(#[from] VariationalError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Train(#[from] TrainError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// 2 for bad input or configuration, 3 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Formula(_) | HarnessError::Json(_) => 2,
            HarnessError::Train(TrainError::Config(_) | TrainError::Formula(_)) => 2,
            HarnessError::Model(ModelError::InvalidSpec(_) | ModelError::Checkpoint(_)) => 2,
            HarnessError::Numeric(_) | HarnessError::Encoder(_) | HarnessError::Variational(_) => 3,
            HarnessError::Train(
                TrainError::NonFiniteLoss { .. }
                | TrainError::Encoder(_)
                | TrainError::Variational(_)
                | TrainError::Model(ModelError::NonFiniteGradient),
            ) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchExample {
    /// `(v^2 <= -1) | (3v >= 2)` from `v = 0`.
    DisjunctionEscape,
    /// `(v == 1) | (v == 2) | (v == 3)` from `v = 1.5`.
    ProductStationary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub example: String,
    pub encoder: String,
    pub start: f64,
    /// Derivative of the encoded cost at the start.
    pub start_grad: f64,
    pub final_v: f64,
    pub final_cost: f64,
    pub reached_at: Option<usize>,
    pub max_displacement: f64,
}

fn row(example: &str, encoder: &str, start_grad: f64, r: &DescentReport) -> BenchRow {
    BenchRow {
        example: example.into(),
        encoder: encoder.into(),
        start: r.start,
        start_grad,
        final_v: r.final_v,
        final_cost: r.final_cost,
        reached_at: r.reached_at,
        max_displacement: r.max_displacement,
    }
}

/// Schedule for the point-disjunction runs: constant steps oscillate around
/// a target at the granularity of the step, so they shrink geometrically.
pub fn point_schedule() -> DescentConfig {
    DescentConfig {
        step: StepSchedule::Geometric {
            initial: 0.05,
            ratio: 0.995,
        },
        max_steps: 5000,
        target: 1e-7,
        ..DescentConfig::default()
    }
}

pub fn escape_schedule() -> DescentConfig {
    DescentConfig {
        target: 1e-7,
        ..DescentConfig::default()
    }
}

/// Runs the dual, fuzzy min-max and product encoders on one example.
pub fn bench_encoders(example: BenchExample) -> Result<Vec<BenchRow>, HarnessError> {
    use crate::encoder::{baseline_grad, grad_outputs, DualOwner, DualState, EncoderKind};
    let (name, problem, v0, cfg): (&str, Box<dyn ScalarProblem>, f64, DescentConfig) = match example {
        BenchExample::DisjunctionEscape => ("disjunction-escape", Box::new(DisjunctionEscape), 0.0, escape_schedule()),
        BenchExample::ProductStationary => {
            ("product-stationary", Box::new(PointDisjunction::new()), 1.5, point_schedule())
        }
    };
    let m = problem.matrix(v0)?;
    let uniform = DualState::uniform(&m.shape(), DualOwner::Global);
    Ok(vec![
        row(name, "dual", grad_outputs(&m, &uniform)?[0], &dual_descent(&*problem, v0, &cfg)?),
        row(
            name,
            "fuzzy_min_max",
            baseline_grad(&m, EncoderKind::FuzzyMinMax)?[0],
            &fuzzy_descent(&*problem, v0, &cfg)?,
        ),
        row(
            name,
            "dl2",
            baseline_grad(&m, EncoderKind::Dl2Baseline)?[0],
            &dl2_descent(&*problem, v0, &cfg)?,
        ),
    ])
}
