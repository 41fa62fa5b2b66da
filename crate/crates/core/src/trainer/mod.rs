//! Stochastic gradient descent-ascent over model weights and dual variables,
//! and the evaluation metrics.

mod data;
mod metrics;
mod step;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{DualState, EncoderError};
use crate::formula::{FormulaError, TolMode};
use crate::model::{init, MlpSpec, ModelError, ModelParameters, Optimizer, UpdateRule};
use crate::variational::{DeltaState, VariationalError, DEFAULT_VARIANCE_FLOOR};

pub use data::{Dataset, Label, LiteralTag, Sample};
pub use metrics::{evaluate, format_g9, metrics_csv, metrics_header, MetricsRow};
pub use step::{objective_and_grad, sgda_step, StepStats};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Formula(#[from] FormulaError),

    #[error(transparent)]
    Encoder(#[from] EncoderError),

    #[error(transparent)]
    Variational(#[from] VariationalError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    Global,
    #[default]
    PerSample,
}

/// How the constraint enters the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    /// Dual-weighted costs under the distributional loss.
    #[default]
    Dual,
    /// Summed clause products added to the task loss with a fixed weight.
    Dl2 { weight: f64 },
    /// Task loss only.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub eta_w: f64,
    pub eta_conj: f64,
    pub eta_disj: f64,
    /// Enables `eta_w(t) = gamma / sqrt(t + 1)`.
    pub gamma: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub tol: f64,
    pub tol_mode: TolMode,
    pub margin: f64,
    pub seed: u64,
    pub dual_mode: DualMode,
    pub optimizer: UpdateRule,
    pub variance_floor: f64,
    pub method: Method,
    pub weight_decay: f64,
    /// Worker threads for per-sample work; results are reduced in sample
    /// order, so the count does not change the outcome.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta_w: 1e-3,
            eta_conj: 0.1,
            eta_disj: 0.1,
            gamma: None,
            batch_size: 64,
            epochs: 20,
            tol: 0.01,
            tol_mode: TolMode::All,
            margin: 0.01,
            seed: 0,
            dual_mode: DualMode::PerSample,
            optimizer: UpdateRule::AdaptiveMoments,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            method: Method::Dual,
            weight_decay: 0.0,
            threads: threads_from_env(),
        }
    }
}

/// `LOGICLOSS_THREADS`, defaulting to one.
pub fn threads_from_env() -> usize {
    std::env::var("LOGICLOSS_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("eta_w", self.eta_w),
            ("eta_conj", self.eta_conj),
            ("eta_disj", self.eta_disj),
            ("variance_floor", self.variance_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{} must be positive", name)));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(TrainError::Config("gamma must be positive".into()));
            }
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !(self.tol >= 0.0) || !(self.margin >= 0.0) {
            return Err(TrainError::Config("tol and margin must be nonnegative".into()));
        }
        if let Method::Dl2 { weight } = self.method {
            if !(weight >= 0.0) {
                return Err(TrainError::Config("dl2 weight must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Weight step size at iteration `t`.
pub fn stepsize(t: u64, cfg: &TrainConfig) -> f64 {
    match cfg.gamma {
        Some(g) => g / ((t + 1) as f64).sqrt(),
        None => cfg.eta_w,
    }
}

/// Dual variables, one [`DualState`] per cost dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DualStore {
    Global(Option<Vec<DualState>>),
    PerSample(BTreeMap<u64, Vec<DualState>>),
}

impl DualStore {
    pub fn new(mode: DualMode) -> Self {
        match mode {
            DualMode::Global => DualStore::Global(None),
            DualMode::PerSample => DualStore::PerSample(BTreeMap::new()),
        }
    }

    pub fn all(&self) -> Vec<&DualState> {
        match self {
            DualStore::Global(g) => g.iter().flatten().collect(),
            DualStore::PerSample(m) => m.values().flatten().collect(),
        }
    }

    pub fn mean_entropy(&self) -> f64 {
        let all = self.all();
        if all.is_empty() {
            0.0
        } else {
            all.iter().map(|d| d.entropy()).sum::<f64>() / all.len() as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParameters,
    pub optimizer: Optimizer,
    pub delta: DeltaState,
    pub duals: DualStore,
    pub t: u64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(spec: &MlpSpec, n_groups: usize, cfg: &TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        Ok(TrainState {
            params: init(spec)?,
            optimizer: Optimizer::new(cfg.optimizer).with_weight_decay(cfg.weight_decay),
            delta: DeltaState::new(n_groups, cfg.variance_floor),
            duals: DualStore::new(cfg.dual_mode),
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }
}

/// Runs `cfg.epochs` epochs of seeded, shuffled mini-batch SGDA on `train`,
/// evaluating on `eval` before training and after every epoch.
pub fn train<F>(
    train: &Dataset,
    eval: &Dataset,
    spec: &MlpSpec,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(TrainState, Vec<MetricsRow>), TrainError>
where
    F: FnMut(&MetricsRow),
{
    let n_groups = train
        .n_groups()
        .or(eval.n_groups())
        .unwrap_or(0);
    if train.n_groups().is_none() && !train.templates.is_empty() {
        return Err(TrainError::Config(
            "templates disagree on the number of cost dimensions".into(),
        ));
    }
    let mut state = TrainState::new(spec, n_groups, cfg)?;
    let mut rows = Vec::with_capacity(cfg.epochs + 1);
    let row = evaluate(&state, eval, 0, cfg)?;
    on_epoch(&row);
    rows.push(row);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut state.rng);
        for batch in order.chunks(cfg.batch_size) {
            sgda_step(&mut state, train, batch, cfg)?;
        }
        let row = evaluate(&state, eval, epoch, cfg)?;
        on_epoch(&row);
        rows.push(row);
    }
    Ok((state, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepsize_examples() {
        let mut cfg = TrainConfig {
            gamma: Some(1.0),
            ..TrainConfig::default()
        };
        assert_eq!(stepsize(0, &cfg), 1.0);
        assert_eq!(stepsize(3, &cfg), 0.5);
        cfg.gamma = None;
        assert_eq!(stepsize(7, &cfg), cfg.eta_w);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            eta_w: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
        let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "method": {"kind": "dl2", "weight": 0.5}}"#).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.method, Method::Dl2 { weight: 0.5 });
    }
}
