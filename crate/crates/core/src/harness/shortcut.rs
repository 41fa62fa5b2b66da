//! Four Gaussian clusters in the plane with one class left unlabeled in
//! training. A reflection through the origin maps the hidden class onto a
//! labeled one, so the rule "if R(x) looks like class 1 then x is class 3"
//! can be satisfied either properly (predict 3 on x) or vacuously (stop
//! predicting 1 on R(x)).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::formula::{compile, CnfTemplate, CompileOptions};
use crate::trainer::{Dataset, Label, LiteralTag, Sample};

use super::HarnessError;

pub const CENTROIDS: [[f64; 2]; 4] = [[0.0, 3.0], [3.0, 0.0], [0.0, -3.0], [-3.0, 0.0]];
pub const SPREAD: f64 = 0.6;
pub const HIDDEN_CLASS: usize = 3;
pub const RULE: &str = "rx.p[1] >= 0.95 -> x.p[3] >= 0.95";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutPoint {
    pub x: [f64; 2],
    pub rx: [f64; 2],
    /// Visible label; `None` for the hidden class in the training split.
    pub label: Option<usize>,
    pub truth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutDataset {
    pub train: Vec<ShortcutPoint>,
    pub test: Vec<ShortcutPoint>,
    /// Always the point reflection `x -> -x`.
    pub transform: String,
    pub hidden_class: usize,
}

pub fn reflect(x: [f64; 2]) -> [f64; 2] {
    [-x[0], -x[1]]
}

fn draw(count: usize, rng: &mut ChaCha8Rng, hide: bool) -> Vec<ShortcutPoint> {
    let noise = Normal::new(0.0, SPREAD).expect("positive spread");
    (0..count)
        .map(|i| {
            let c = i % CENTROIDS.len();
            let x = [
                CENTROIDS[c][0] + noise.sample(rng),
                CENTROIDS[c][1] + noise.sample(rng),
            ];
            ShortcutPoint {
                x,
                rx: reflect(x),
                label: (!hide || c != HIDDEN_CLASS).then_some(c),
                truth: c,
            }
        })
        .collect()
}

/// `count` training points and `count / 4` test points, classes in equal
/// proportion, plus the compiled rule (one clause, literals `!P` and `Q`).
pub fn gen_shortcut_task(count: usize, seed: u64) -> Result<(ShortcutDataset, CnfTemplate), HarnessError> {
    if count < 100 {
        return Err(HarnessError::Config(format!("shortcut task needs at least 100 points, got {}", count)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = draw(count, &mut rng, true);
    let test = draw(count / 4, &mut rng, false);
    let template = compile(RULE, &CompileOptions::default())?;
    Ok((
        ShortcutDataset {
            train,
            test,
            transform: "point reflection through the origin".into(),
            hidden_class: HIDDEN_CLASS,
        },
        template,
    ))
}

pub fn literal_tags() -> Vec<LiteralTag> {
    vec![
        LiteralTag {
            name: "not_p".into(),
            clause: 0,
            literal: 0,
        },
        LiteralTag {
            name: "q".into(),
            clause: 0,
            literal: 1,
        },
    ]
}

fn to_samples(points: &[ShortcutPoint], offset: u64) -> Vec<Sample> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| Sample {
            id: offset + i as u64,
            inputs: [("x".to_string(), p.x.to_vec()), ("rx".to_string(), p.rx.to_vec())]
                .into_iter()
                .collect(),
            label: p.label.map(Label::Class),
            truth: Some(Label::Class(p.truth)),
            constraint: Some(0),
        })
        .collect()
}

/// Training set, and an evaluation set scoped to the hidden class.
pub fn shortcut_datasets(d: &ShortcutDataset, template: &CnfTemplate) -> (Dataset, Dataset) {
    let mut train = Dataset::new(to_samples(&d.train, 0), vec![template.clone()]);
    train.literal_tags = literal_tags();
    let mut test = Dataset::new(to_samples(&d.test, d.train.len() as u64), vec![template.clone()]);
    test.literal_tags = literal_tags();
    test.metric_scope = Some(d.hidden_class);
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{ground, TolMode};
    use std::collections::BTreeMap;

    fn nearest(x: [f64; 2]) -> usize {
        (0..4)
            .min_by(|&a, &b| {
                let d = |c: usize| (x[0] - CENTROIDS[c][0]).powi(2) + (x[1] - CENTROIDS[c][1]).powi(2);
                d(a).total_cmp(&d(b))
            })
            .unwrap()
    }

    #[test]
    fn shape_and_hidden_labels() {
        let (d, t) = gen_shortcut_task(2000, 1).unwrap();
        assert_eq!(t.clauses.len(), 1);
        assert_eq!(t.clauses[0].len(), 2);
        assert!(d.train.iter().all(|p| (p.label.is_none()) == (p.truth == HIDDEN_CLASS)));
        assert!(d.test.iter().all(|p| p.label == Some(p.truth)));
        assert!(d.train.iter().chain(&d.test).all(|p| p.rx == reflect(p.x)));
        assert!(gen_shortcut_task(99, 1).is_err());
    }

    #[test]
    fn centroid_oracle_separates_clusters() {
        let (d, _) = gen_shortcut_task(2000, 7).unwrap();
        let all: Vec<_> = d.train.iter().chain(&d.test).collect();
        let hits = all.iter().filter(|p| nearest(p.x) == p.truth).count();
        assert!(hits as f64 / all.len() as f64 >= 0.99);
        // the reflection maps the hidden class onto class 1
        let hidden: Vec<_> = all.iter().filter(|p| p.truth == HIDDEN_CLASS).collect();
        let mapped = hidden.iter().filter(|p| nearest(p.rx) == 1).count();
        assert!(mapped as f64 / hidden.len() as f64 >= 0.99);
    }

    #[test]
    fn ideal_labels_satisfy_with_p_and_q_true() {
        let (_, t) = gen_shortcut_task(100, 0).unwrap();
        // one-hot on the true classes: R(x) is class 1, x is class 3
        let outs: BTreeMap<String, Vec<f64>> = [
            ("rx".to_string(), vec![0.0, 1.0, 0.0, 0.0]),
            ("x".to_string(), vec![0.0, 0.0, 0.0, 1.0]),
        ]
        .into_iter()
        .collect();
        let g = ground(&t, &outs).unwrap();
        assert!(t.eval_bool_with(&g.values, 0.01, TolMode::All).unwrap());
        let c = &t.clauses[0];
        assert!(!CnfTemplate::atom_satisfied(&c[0], g.values[0], 0.01, TolMode::All));
        assert!(CnfTemplate::atom_satisfied(&c[1], g.values[1], 0.01, TolMode::All));
    }
}
