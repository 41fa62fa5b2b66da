use std::collections::BTreeMap;

use crate::encoder::{closed_form_cost, CostMatrix};
use crate::formula::{ground, CnfTemplate};

use super::step::{forward_slots, task_term};
use super::{Dataset, Label, TrainConfig, TrainError, TrainState};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub task_loss: f64,
    /// Accuracy for class labels, mean squared error for value labels.
    pub acc_or_mse: f64,
    /// Mean absolute error; NaN for classification.
    pub mae: f64,
    pub sat: f64,
    /// One rate per tag, in the dataset's tag order.
    pub lit_sat: Vec<(String, f64)>,
    pub mean_mu: f64,
    pub mean_delta: f64,
    pub dual_entropy: f64,
}

/// Metrics over the in-scope samples of `data`, using their ground truth.
pub fn evaluate(
    state: &TrainState,
    data: &Dataset,
    epoch: usize,
    cfg: &TrainConfig,
) -> Result<MetricsRow, TrainError> {
    let mut n = 0usize;
    let (mut loss, mut correct, mut sq, mut abs, mut n_values, mut regression) = (0.0, 0usize, 0.0, 0.0, 0usize, false);
    let (mut n_con, mut n_sat, mut mu) = (0usize, 0usize, 0.0);
    let mut lit = vec![0usize; data.literal_tags.len()];
    for s in &data.samples {
        if data.metric_scope.is_some() && s.truth_class() != data.metric_scope {
            continue;
        }
        n += 1;
        let passes = forward_slots(&state.params, s)?;
        if let Some(truth) = s.truth.as_ref().or(s.label.as_ref()) {
            let (pred, _) = passes
                .get(&data.primary_slot)
                .ok_or_else(|| TrainError::Config(format!("sample {} lacks slot {}", s.id, data.primary_slot)))?;
            loss += task_term(pred, truth)?.0;
            match truth {
                Label::Class(c) => {
                    let arg = argmax(pred);
                    correct += usize::from(arg == Some(*c));
                }
                Label::Values(v) => {
                    regression = true;
                    for (p, t) in pred.iter().zip(v) {
                        sq += (p - t) * (p - t);
                        abs += (p - t).abs();
                        n_values += 1;
                    }
                }
            }
        }
        let Some(k) = s.constraint else { continue };
        let t: &CnfTemplate = data
            .templates
            .get(k)
            .ok_or_else(|| TrainError::Config(format!("sample {} names missing template {}", s.id, k)))?;
        let outputs: BTreeMap<String, Vec<f64>> = passes.into_iter().map(|(k, (o, _))| (k, o)).collect();
        let g = ground(t, &outputs)?;
        n_con += 1;
        n_sat += usize::from(t.eval_bool_with(&g.values, cfg.tol, cfg.tol_mode)?);
        let offsets = t.clause_offsets();
        for (count, tag) in lit.iter_mut().zip(&data.literal_tags) {
            let atom = t
                .clauses
                .get(tag.clause)
                .and_then(|c| c.get(tag.literal))
                .ok_or_else(|| TrainError::Config(format!("literal tag {} out of range", tag.name)))?;
            let v = g.values[offsets[tag.clause] + tag.literal];
            *count += usize::from(CnfTemplate::atom_satisfied(atom, v, cfg.tol, cfg.tol_mode));
        }
        let all: Vec<usize> = (0..t.clauses.len()).collect();
        mu += closed_form_cost(&CostMatrix::from_grounding(t, &g, &all)?)?.value;
    }
    let rate = |k: usize, of: usize| if of == 0 { 0.0 } else { k as f64 / of as f64 };
    let (acc_or_mse, mae) = if regression {
        (rate_f(sq, n_values), rate_f(abs, n_values))
    } else {
        (rate(correct, n), f64::NAN)
    };
    Ok(MetricsRow {
        epoch,
        task_loss: rate_f(loss, n),
        acc_or_mse,
        mae,
        sat: rate(n_sat, n_con),
        lit_sat: data
            .literal_tags
            .iter()
            .zip(&lit)
            .map(|(t, &c)| (t.name.clone(), rate(c, n_con)))
            .collect(),
        mean_mu: rate_f(mu, n_con),
        mean_delta: state.delta.mean(),
        dual_entropy: state.duals.mean_entropy(),
    })
}

fn rate_f(x: f64, of: usize) -> f64 {
    if of == 0 {
        0.0
    } else {
        x / of as f64
    }
}

fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

/// `printf("%.9g")`.
pub fn format_g9(x: f64) -> String {
    const P: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= P {
        let mant = trim_zeros(mant);
        format!("{}e{}{:02}", mant, if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn metrics_header(row_tags: &[String]) -> String {
    let mut h = String::from("epoch,task_loss,acc_or_mse,mae,sat");
    for t in row_tags {
        h.push_str(",lit_sat_");
        h.push_str(t);
    }
    h.push_str(",mean_mu,mean_delta,dual_entropy");
    h
}

/// Header plus one line per row.
pub fn metrics_csv(tags: &[String], rows: &[MetricsRow]) -> String {
    let mut out = metrics_header(tags);
    out.push('\n');
    for r in rows {
        out.push_str(&r.epoch.to_string());
        for v in [r.task_loss, r.acc_or_mse, r.mae, r.sat]
            .into_iter()
            .chain(r.lit_sat.iter().map(|(_, v)| *v))
            .chain([r.mean_mu, r.mean_delta, r.dual_entropy])
        {
            out.push(',');
            out.push_str(&format_g9(v));
        }
        out.push('\n');
    }
    out
}
