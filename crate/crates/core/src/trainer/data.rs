use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::formula::CnfTemplate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Class(usize),
    Values(Vec<f64>),
}

/// One training or evaluation record. `inputs` holds one input vector per
/// slot; the dataset's primary slot carries the task loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub inputs: BTreeMap<String, Vec<f64>>,
    /// Supervision seen by training; `None` for unlabeled samples.
    pub label: Option<Label>,
    /// Ground truth used only for evaluation.
    pub truth: Option<Label>,
    /// Index into [`Dataset::templates`].
    pub constraint: Option<usize>,
}

impl Sample {
    pub fn truth_class(&self) -> Option<usize> {
        match self.truth {
            Some(Label::Class(c)) => Some(c),
            _ => None,
        }
    }
}

/// A literal whose satisfaction rate is reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteralTag {
    pub name: String,
    pub clause: usize,
    pub literal: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub templates: Vec<CnfTemplate>,
    pub primary_slot: String,
    pub literal_tags: Vec<LiteralTag>,
    /// When set, evaluation metrics only count samples of this true class.
    pub metric_scope: Option<usize>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, templates: Vec<CnfTemplate>) -> Self {
        Dataset {
            samples,
            templates,
            primary_slot: "x".into(),
            literal_tags: Vec::new(),
            metric_scope: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of cost dimensions; every template must agree.
    pub fn n_groups(&self) -> Option<usize> {
        let mut it = self.templates.iter().map(|t| t.n_groups);
        let first = it.next()?;
        it.all(|g| g == first).then_some(first)
    }
}
