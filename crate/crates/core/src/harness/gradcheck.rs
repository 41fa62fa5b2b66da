//! Central finite-difference checks of every analytic gradient.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoder::{cnf_cost, grad_outputs, project_simplex, CostMatrix, DualOwner, DualState};
use crate::formula::{compile, ground, CnfTemplate, CompileOptions};
use crate::model::{Head, MlpSpec};
use crate::trainer::{objective_and_grad, Dataset, Label, Method, Sample, TrainConfig, TrainState};
use crate::variational::{logic_loss, logic_loss_grad, DeltaState};

use super::HarnessError;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub suite: String,
    pub points: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// `|a - b| / max(|a|, |b|, 1e-3)`; the floor keeps vanishing gradients
/// from turning rounding noise into large ratios.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn central<F: FnMut(f64) -> f64>(mut f: F, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

const ENCODER_RULES: [&str; 4] = [
    "x.out[0] >= 1 | x.out[1] - x.out[2] <= -0.5",
    "(x.out[0] + 2 * x.out[3] <= 1 | x.out[2] >= 0.3) & (x.out[1] <= 0.2 | x.out[0] - x.out[1] >= 1 | x.out[3] >= 2)",
    "x.out[0] == 1 | x.out[1] == 2",
    "x.out[2] >= x.out[3] -> x.out[0] <= -1",
];

fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let s: f64 = raw.iter().sum();
    project_simplex(&raw.iter().map(|x| x / s).collect::<Vec<_>>()).expect("finite input")
}

fn dual_cost(t: &CnfTemplate, outs: &BTreeMap<String, Vec<f64>>, d: &DualState) -> Result<f64, HarnessError> {
    let g = ground(t, outs)?;
    let all: Vec<usize> = (0..t.clauses.len()).collect();
    Ok(cnf_cost(&CostMatrix::from_grounding(t, &g, &all)?, d)?)
}

/// Output gradient of the dual-weighted cost at random states whose atoms
/// all sit at least `1e-3` from their kinks.
pub fn encoder_suite(points: usize, seed: u64) -> Result<GradCheckReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates = ENCODER_RULES
        .iter()
        .map(|r| compile(r, &CompileOptions::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < points {
        let t = &templates[done % templates.len()];
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let outs: BTreeMap<String, Vec<f64>> = [("x".to_string(), v.clone())].into_iter().collect();
        let g = ground(t, &outs)?;
        if t.atoms().zip(&g.values).any(|(a, &x)| (x - a.cost_bound()).abs() < 1e-3) {
            continue;
        }
        let shape: Vec<usize> = t.clauses.iter().map(Vec::len).collect();
        let mut d = DualState::uniform(&shape, DualOwner::Global);
        d.conj = random_simplex(shape.len(), &mut rng);
        for (nu, &n) in d.disj.iter_mut().zip(&shape) {
            *nu = random_simplex(n, &mut rng);
        }
        let all: Vec<usize> = (0..t.clauses.len()).collect();
        let analytic = grad_outputs(&CostMatrix::from_grounding(t, &g, &all)?, &d)?;
        for (k, &an) in analytic.iter().enumerate() {
            let mut err = None;
            let fd = central(
                |x| {
                    let mut w = v.clone();
                    w[k] = x;
                    let o = [("x".to_string(), w)].into_iter().collect();
                    dual_cost(t, &o, &d).unwrap_or_else(|e| {
                        err = Some(e.to_string());
                        f64::NAN
                    })
                },
                v[k],
            );
            if let Some(e) = err {
                return Err(HarnessError::Numeric(e));
            }
            worst = worst.max(rel_err(fd, an));
        }
        done += 1;
    }
    Ok(GradCheckReport {
        suite: "encoder".into(),
        points,
        max_rel_err: worst,
        tolerance: 1e-5,
    })
}

/// Partial derivatives of the distributional loss in every cost and
/// deviation at random positive points.
pub fn variational_suite(points: usize, seed: u64) -> Result<GradCheckReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let m = rng.gen_range(1..4);
        let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..5.0)).collect();
        let delta: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..2.0)).collect();
        let ds = |delta: Vec<f64>| DeltaState {
            delta,
            variance_floor: 0.01,
        };
        let (g_mu, g_delta) = logic_loss_grad(&mu, &ds(delta.clone()))?;
        for k in 0..m {
            let fd_mu = central(
                |x| {
                    let mut u = mu.clone();
                    u[k] = x;
                    logic_loss(&u, &ds(delta.clone())).map_or(f64::NAN, |t| t.total())
                },
                mu[k],
            );
            let fd_delta = central(
                |x| {
                    let mut s = delta.clone();
                    s[k] = x;
                    logic_loss(&mu, &ds(s)).map_or(f64::NAN, |t| t.total())
                },
                delta[k],
            );
            worst = worst.max(rel_err(fd_mu, g_mu[k])).max(rel_err(fd_delta, g_delta[k]));
        }
    }
    Ok(GradCheckReport {
        suite: "variational".into(),
        points,
        max_rel_err: worst,
        tolerance: 1e-5,
    })
}

fn e2e_instance(seed: u64, head: Head, method: Method) -> Result<(Dataset, MlpSpec, TrainConfig), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rule, n_out) = match head {
        Head::Softmax => ("rx.p[1] >= 0.6 -> x.p[2] >= 0.6", 3),
        Head::ReluRegression => ("x.d[0] - x.d[1] - rx.d[1] <= 0 & x.d[1] == rx.d[0]", 2),
    };
    let t = compile(rule, &CompileOptions::default())?;
    let samples = (0..6)
        .map(|i| {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rx: Vec<f64> = x.iter().map(|v| -v).collect();
            let label = match head {
                Head::Softmax => (i % 2 == 0).then(|| Label::Class(rng.gen_range(0..n_out))),
                Head::ReluRegression => Some(Label::Values((0..n_out).map(|_| rng.gen_range(0.0..2.0)).collect())),
            };
            Sample {
                id: i,
                inputs: [("x".to_string(), x), ("rx".to_string(), rx)].into_iter().collect(),
                label,
                truth: None,
                constraint: Some(0),
            }
        })
        .collect();
    let spec = MlpSpec {
        layer_widths: vec![3, 5, 4, n_out],
        head,
        seed,
    };
    let cfg = TrainConfig {
        method,
        threads: 1,
        ..TrainConfig::default()
    };
    Ok((Dataset::new(samples, vec![t]), spec, cfg))
}

/// Weight gradient of the full batch objective (task loss plus logic loss)
/// against central differences. Coordinates where the one-sided quotients
/// differ by more than `1e-3` straddle a ReLU or hinge kink and are redrawn.
pub fn end_to_end_suite(points: usize, seed: u64) -> Result<GradCheckReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut instance = 0u64;
    let configs = [
        (Head::Softmax, Method::Dual),
        (Head::ReluRegression, Method::Dual),
        (Head::Softmax, Method::Dl2 { weight: 0.5 }),
    ];
    while done < points {
        let (head, method) = configs[instance as usize % configs.len()];
        let (data, spec, cfg) = e2e_instance(seed.wrapping_add(instance), head, method)?;
        instance += 1;
        let m = data.n_groups().unwrap_or(0);
        let mut st = TrainState::new(&spec, m, &cfg)?;
        st.delta = DeltaState {
            delta: (0..m).map(|_| rng.gen_range(0.3..1.5)).collect(),
            variance_floor: cfg.variance_floor,
        };
        let batch: Vec<usize> = (0..data.len()).collect();
        let (_, grads) = objective_and_grad(&mut st, &data, &batch, &cfg)?;
        let analytic = grads.flat();
        let w0 = st.params.flat();
        let mut probe = st.clone();
        let mut f = |w: &[f64]| -> Result<f64, HarnessError> {
            probe.params.set_flat(w)?;
            Ok(objective_and_grad(&mut probe, &data, &batch, &cfg)?.0)
        };
        let f0 = f(&w0)?;
        for _ in 0..10 {
            if done >= points {
                break;
            }
            let k = rng.gen_range(0..w0.len());
            let mut w = w0.clone();
            w[k] += FD_STEP;
            let up = f(&w)?;
            w[k] -= 2.0 * FD_STEP;
            let dn = f(&w)?;
            let (fwd, bwd) = ((up - f0) / FD_STEP, (f0 - dn) / FD_STEP);
            if (fwd - bwd).abs() > 1e-3 {
                continue;
            }
            worst = worst.max(rel_err((up - dn) / (2.0 * FD_STEP), analytic[k]));
            done += 1;
        }
    }
    Ok(GradCheckReport {
        suite: "end_to_end".into(),
        points,
        max_rel_err: worst,
        tolerance: 1e-4,
    })
}

pub fn all_suites(points: usize, seed: u64) -> Result<Vec<GradCheckReport>, HarnessError> {
    Ok(vec![
        encoder_suite(points, seed)?,
        variational_suite(points, seed)?,
        end_to_end_suite(points, seed)?,
    ])
}
