//! One-dimensional problems where a single scalar `v` is optimized directly
//! against a constraint cost, for comparing encodings.

use crate::formula::{compile, ground, CnfTemplate, CompileOptions};

use super::baseline::{baseline_grad, EncoderKind};
use super::duals::{closed_form_cost, dual_step, grad_outputs, DualOwner, DualState};
use super::matrix::CostMatrix;
use super::EncoderError;

pub trait ScalarProblem {
    /// Literal costs and their derivatives in `v`.
    fn matrix(&self, v: f64) -> Result<CostMatrix, EncoderError>;

    fn closed_form(&self, v: f64) -> Result<f64, EncoderError> {
        Ok(closed_form_cost(&self.matrix(v)?)?.value)
    }
}

/// `(v^2 <= -1) | (3v >= 2)`: the first disjunct can never hold, and at
/// `v = 0` it is also the cheaper one.
#[derive(Debug, Clone, Copy, Default)]
pub struct DisjunctionEscape;

impl ScalarProblem for DisjunctionEscape {
    fn matrix(&self, v: f64) -> Result<CostMatrix, EncoderError> {
        let s0 = v * v + 1.0;
        let s1 = (2.0 - 3.0 * v).max(0.0);
        let g0 = vec![(0, 2.0 * v)];
        let g1 = if s1 > 0.0 { vec![(0, -3.0)] } else { Vec::new() };
        CostMatrix::new(vec![vec![s0, s1]], vec![vec![g0, g1]], 1)
    }
}

/// `(v == 1) | (v == 2) | (v == 3)` compiled through the constraint language.
#[derive(Debug, Clone)]
pub struct PointDisjunction {
    template: CnfTemplate,
}

impl PointDisjunction {
    pub const SOURCE: &'static str = "v.out[0] == 1 | v.out[0] == 2 | v.out[0] == 3";

    pub fn new() -> Self {
        let template =
            compile(Self::SOURCE, &CompileOptions::default()).expect("fixed source compiles");
        PointDisjunction { template }
    }

    pub fn template(&self) -> &CnfTemplate {
        &self.template
    }
}

impl Default for PointDisjunction {
    fn default() -> Self {
        Self::new()
    }
}

impl ScalarProblem for PointDisjunction {
    fn matrix(&self, v: f64) -> Result<CostMatrix, EncoderError> {
        let out = [v];
        let bind: [(&str, &[f64]); 1] = [("v", &out)];
        let g = ground(&self.template, &bind[..])
            .map_err(|e| EncoderError::ShapeMismatch(e.to_string()))?;
        let all: Vec<usize> = (0..self.template.clauses.len()).collect();
        CostMatrix::from_grounding(&self.template, &g, &all)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `initial * ratio^t`
    Geometric { initial: f64, ratio: f64 },
}

impl StepSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::Geometric { initial, ratio } => initial * ratio.powi(t as i32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub step: StepSchedule,
    pub eta_conj: f64,
    pub eta_disj: f64,
    pub max_steps: usize,
    /// Stop once the closed-form cost is at or below this value.
    pub target: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            step: StepSchedule::Constant(0.05),
            eta_conj: 0.1,
            eta_disj: 0.1,
            max_steps: 2000,
            target: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    pub start: f64,
    pub final_v: f64,
    pub final_cost: f64,
    /// Steps taken before the cost first reached the target.
    pub reached_at: Option<usize>,
    pub steps: usize,
    /// Largest `|v_t - v_0|` seen.
    pub max_displacement: f64,
    pub duals: Option<DualState>,
}

/// Gradient descent on `v` against the dual-weighted cost, with one projected
/// dual step per iteration taken at the same costs.
pub fn dual_descent<P: ScalarProblem + ?Sized>(
    problem: &P,
    v0: f64,
    cfg: &DescentConfig,
) -> Result<DescentReport, EncoderError> {
    let shape = problem.matrix(v0)?.shape();
    let mut duals = DualState::uniform(&shape, DualOwner::Global);
    run(problem, v0, cfg, |m, t| {
        let g = grad_outputs(m, &duals)?[0];
        dual_step(m, &mut duals, cfg.eta_conj, cfg.eta_disj)?;
        Ok(cfg.step.at(t) * g)
    })
    .map(|mut r| {
        r.duals = Some(duals);
        r
    })
}

/// Gradient descent on `v` against a dual-free encoding.
pub fn baseline_descent<P: ScalarProblem + ?Sized>(
    problem: &P,
    v0: f64,
    kind: EncoderKind,
    cfg: &DescentConfig,
) -> Result<DescentReport, EncoderError> {
    run(problem, v0, cfg, |m, t| {
        Ok(cfg.step.at(t) * baseline_grad(m, kind)?[0])
    })
}

pub fn fuzzy_descent<P: ScalarProblem + ?Sized>(
    problem: &P,
    v0: f64,
    cfg: &DescentConfig,
) -> Result<DescentReport, EncoderError> {
    baseline_descent(problem, v0, EncoderKind::FuzzyMinMax, cfg)
}

pub fn dl2_descent<P: ScalarProblem + ?Sized>(
    problem: &P,
    v0: f64,
    cfg: &DescentConfig,
) -> Result<DescentReport, EncoderError> {
    baseline_descent(problem, v0, EncoderKind::Dl2Baseline, cfg)
}

fn run<P, F>(problem: &P, v0: f64, cfg: &DescentConfig, mut delta: F) -> Result<DescentReport, EncoderError>
where
    P: ScalarProblem + ?Sized,
    F: FnMut(&CostMatrix, usize) -> Result<f64, EncoderError>,
{
    let mut v = v0;
    let mut reached_at = None;
    let mut max_displacement: f64 = 0.0;
    let mut steps = 0;
    let mut cost = problem.closed_form(v)?;
    while steps < cfg.max_steps {
        if cost <= cfg.target {
            reached_at = Some(steps);
            break;
        }
        let m = problem.matrix(v)?;
        v -= delta(&m, steps)?;
        if !v.is_finite() {
            return Err(EncoderError::NonFinite(v));
        }
        max_displacement = max_displacement.max((v - v0).abs());
        steps += 1;
        cost = problem.closed_form(v)?;
    }
    if reached_at.is_none() && cost <= cfg.target {
        reached_at = Some(steps);
    }
    Ok(DescentReport {
        start: v0,
        final_v: v,
        final_cost: cost,
        reached_at,
        steps,
        max_displacement,
        duals: None,
    })
}

/// Derivative of the scalar DL2 encoding at `v`, from the product rule.
pub fn dl2_derivative<P: ScalarProblem + ?Sized>(problem: &P, v: f64) -> Result<f64, EncoderError> {
    Ok(baseline_grad(&problem.matrix(v)?, EncoderKind::Dl2Baseline)?[0])
}
