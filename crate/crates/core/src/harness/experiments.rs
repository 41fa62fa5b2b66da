//! Desk-scale experiment drivers and the on-disk run layout.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::formula::TolMode;
use crate::model::{save_checkpoint, Head, MlpSpec};
use crate::trainer::{
    metrics_csv, train, Dataset, DualStore, Label, Method, MetricsRow, Sample, TrainConfig, TrainState,
};
use crate::variational::DeltaState;

use super::graphs::{gen_graphs, path_inputs, shortest_path_constraints, GraphInstance};
use super::shortcut::{gen_shortcut_task, shortcut_datasets, RULE};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum Task {
    Shortcut {
        #[serde(default = "default_shortcut_count")]
        count: usize,
    },
    ShortestPath {
        #[serde(default = "default_vertices")]
        n_vertices: usize,
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        #[serde(default = "default_triples")]
        triples: usize,
    },
}

fn default_shortcut_count() -> usize {
    2000
}
fn default_vertices() -> usize {
    8
}
fn default_n_train() -> usize {
    2000
}
fn default_n_test() -> usize {
    500
}
fn default_triples() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub task: Task,
    /// Hidden layer widths; input and output widths follow from the task.
    /// Empty means the task's default widths.
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Seeds data generation; `train.seed` seeds initialisation and shuffling.
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn shortcut(method: Method, seed: u64) -> Self {
        ExperimentConfig {
            task: Task::Shortcut {
                count: default_shortcut_count(),
            },
            hidden: vec![32, 32],
            data_seed: seed,
            train: TrainConfig {
                eta_w: 3e-3,
                eta_conj: 0.1,
                eta_disj: 0.1,
                batch_size: 32,
                epochs: 30,
                tol: 0.01,
                seed,
                method,
                ..TrainConfig::default()
            },
        }
    }

    pub fn shortest_path(method: Method, seed: u64) -> Self {
        ExperimentConfig {
            task: Task::ShortestPath {
                n_vertices: default_vertices(),
                n_train: default_n_train(),
                n_test: default_n_test(),
                triples: default_triples(),
            },
            hidden: vec![128, 128],
            data_seed: seed,
            train: TrainConfig {
                eta_w: 1e-3,
                eta_conj: 0.1,
                eta_disj: 0.1,
                batch_size: 32,
                epochs: 30,
                tol: 1.0,
                tol_mode: TolMode::Relaxed,
                seed,
                method,
                ..TrainConfig::default()
            },
        }
    }

    fn spec(&self, n_in: usize, n_out: usize, head: Head) -> MlpSpec {
        let mut layer_widths = vec![n_in];
        match (&self.task, self.hidden.is_empty()) {
            (Task::Shortcut { .. }, true) => layer_widths.extend([32, 32]),
            (Task::ShortestPath { .. }, true) => layer_widths.extend([128, 128]),
            _ => layer_widths.extend(&self.hidden),
        }
        layer_widths.push(n_out);
        MlpSpec {
            layer_widths,
            head,
            seed: self.train.seed,
        }
    }
}

/// Everything a run needs: datasets, network shape and the constraint text
/// (one representative source for per-sample constraints).
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub spec: MlpSpec,
    pub constraint_source: String,
}

pub fn path_dataset(
    graphs: &[GraphInstance],
    triples: usize,
    rng: &mut ChaCha8Rng,
    id_offset: u64,
) -> Result<(Dataset, Vec<String>), HarnessError> {
    let mut samples = Vec::with_capacity(graphs.len());
    let mut templates = Vec::with_capacity(graphs.len());
    let mut sources = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        let c = shortest_path_constraints(g.n, triples, rng)?;
        let labels: Vec<f64> = g.labels.iter().map(|&d| d as f64).collect();
        samples.push(Sample {
            id: id_offset + i as u64,
            inputs: path_inputs(g, &c),
            label: Some(Label::Values(labels.clone())),
            truth: Some(Label::Values(labels)),
            constraint: Some(i),
        });
        templates.push(c.template);
        sources.push(c.source);
    }
    Ok((Dataset::new(samples, templates), sources))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    match cfg.task {
        Task::Shortcut { count } => {
            let (data, template) = gen_shortcut_task(count, cfg.data_seed)?;
            let (train, test) = shortcut_datasets(&data, &template);
            Ok(Prepared {
                train,
                test,
                spec: cfg.spec(2, 4, Head::Softmax),
                constraint_source: RULE.to_string(),
            })
        }
        Task::ShortestPath {
            n_vertices,
            n_train,
            n_test,
            triples,
        } => {
            let graphs = gen_graphs(n_vertices, n_train + n_test, cfg.data_seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed ^ 0x9e37_79b9_7f4a_7c15);
            let (train, sources) = path_dataset(&graphs[..n_train], triples, &mut rng, 0)?;
            let (test, _) = path_dataset(&graphs[n_train..], triples, &mut rng, n_train as u64)?;
            Ok(Prepared {
                train,
                test,
                spec: cfg.spec(n_vertices * n_vertices, n_vertices, Head::ReluRegression),
                constraint_source: sources.into_iter().next().unwrap_or_default(),
            })
        }
    }
}

/// Trains per `cfg`, returning the final state and one metrics row per epoch
/// (plus the initial row).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Prepared, TrainState, Vec<MetricsRow>), HarnessError> {
    let p = prepare(cfg)?;
    let (state, rows) = train(&p.train, &p.test, &p.spec, &cfg.train, |_| {})?;
    Ok((p, state, rows))
}

pub fn tag_names(d: &Dataset) -> Vec<String> {
    d.literal_tags.iter().map(|t| t.name.clone()).collect()
}

/// Short hex digest of the config and constraint text.
pub fn run_id(cfg: &ExperimentConfig, constraint: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(cfg).expect("config serialises").as_bytes());
    h.update(b"\0");
    h.update(constraint.as_bytes());
    let digest = h.finalize();
    digest.iter().take(6).map(|b| format!("{:02x}", b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub metrics_csv: PathBuf,
    pub checkpoint: PathBuf,
    /// Deviations and dual variables at the end of training.
    pub train_state: PathBuf,
    pub constraint_source: String,
}

/// The non-weight part of a [`TrainState`] that metrics depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedState {
    pub delta: DeltaState,
    pub duals: DualStore,
    pub t: u64,
}

/// Runs an experiment and writes `metrics.csv`, `model.ckpt` and
/// `state.json` and `manifest.json` under `out/<run id>/`.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<RunArtifacts, HarnessError> {
    let (p, state, rows) = run_experiment(cfg)?;
    let id = run_id(cfg, &p.constraint_source);
    let dir = out.join(&id);
    std::fs::create_dir_all(&dir)?;
    let metrics = dir.join("metrics.csv");
    std::fs::write(&metrics, metrics_csv(&tag_names(&p.test), &rows))?;
    let checkpoint = dir.join("model.ckpt");
    save_checkpoint(&state.params, &checkpoint)?;
    let train_state = dir.join("state.json");
    let saved = SavedState {
        delta: state.delta.clone(),
        duals: state.duals.clone(),
        t: state.t,
    };
    std::fs::write(&train_state, serde_json::to_string(&saved)?)?;
    let art = RunArtifacts {
        run_id: id,
        config: cfg.clone(),
        metrics_csv: metrics,
        checkpoint,
        train_state,
        constraint_source: p.constraint_source,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&art)?)?;
    Ok(art)
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_ids_differ() {
        let a = ExperimentConfig::shortcut(Method::Dual, 1);
        let text = serde_json::to_string(&a).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(a, back);
        let b = ExperimentConfig::shortcut(Method::Plain, 1);
        assert_ne!(run_id(&a, RULE), run_id(&b, RULE));
        assert_eq!(run_id(&a, RULE), run_id(&back, RULE));
        assert_eq!(run_id(&a, RULE).len(), 12);
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"task": "shortest_path", "hidden": [16], "data_seed": 3, "train": {"epochs": 1}}"#,
        )
        .unwrap();
        assert_eq!(
            cfg.task,
            Task::ShortestPath {
                n_vertices: 8,
                n_train: 2000,
                n_test: 500,
                triples: 10
            }
        );
        let bare: ExperimentConfig = serde_json::from_str(r#"{"task": "shortcut"}"#).unwrap();
        assert_eq!(bare.data_seed, 0);
        assert_eq!(bare.spec(2, 4, Head::Softmax).layer_widths, vec![2, 32, 32, 4]);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_run_writes_artifacts() {
        let mut cfg = ExperimentConfig::shortest_path(Method::Dual, 2);
        cfg.task = Task::ShortestPath {
            n_vertices: 5,
            n_train: 40,
            n_test: 10,
            triples: 4,
        };
        cfg.hidden = vec![8];
        cfg.train.epochs = 2;
        let dir = tempfile::tempdir().unwrap();
        let art = run_to_dir(&cfg, dir.path()).unwrap();
        let csv = std::fs::read_to_string(&art.metrics_csv).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(art.checkpoint.exists());
        assert!(art.train_state.exists());
        let manifest: RunArtifacts =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(&art.run_id).join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest, art);
    }
}
