use std::collections::BTreeMap;

use crate::encoder::{
    apply_dual_grads, baseline_cost, baseline_grad, closed_form_cost, cnf_cost, dual_step, grad_duals, grad_outputs,
    CostMatrix, DualOwner, DualState, EncoderKind,
};
use crate::formula::{ground, CnfTemplate};
use crate::model::{cross_entropy, mse, ForwardTrace, Gradients, HeadGrad, ModelParameters};
use crate::variational::{delta_oracle, logic_loss, logic_loss_grad, DeltaState};

use super::{stepsize, Dataset, DualStore, Label, Method, Sample, TrainConfig, TrainError, TrainState};

/// Batch averages reported by one [`sgda_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub task_loss: f64,
    pub logic_loss: f64,
    pub mean_mu: f64,
    pub lr: f64,
}

struct SampleOut {
    grads: Gradients,
    task_loss: f64,
    logic_loss: f64,
    /// Per-group costs; empty when the sample has no constraint.
    mu: Vec<f64>,
    mats: Vec<CostMatrix>,
}

pub(super) fn group_shapes(t: &CnfTemplate) -> Vec<Vec<usize>> {
    t.groups()
        .iter()
        .map(|g| g.iter().map(|&i| t.clauses[i].len()).collect())
        .collect()
}

pub(super) fn forward_slots(
    params: &ModelParameters,
    sample: &Sample,
) -> Result<BTreeMap<String, (Vec<f64>, ForwardTrace)>, TrainError> {
    let mut out = BTreeMap::new();
    for (name, x) in &sample.inputs {
        out.insert(name.clone(), params.forward(x)?);
    }
    Ok(out)
}

/// Task loss and head gradient against `label`.
pub(super) fn task_term(pred: &[f64], label: &Label) -> Result<(f64, HeadGrad), TrainError> {
    Ok(match label {
        Label::Class(c) => {
            let (l, g) = cross_entropy(pred, *c)?;
            (l, HeadGrad::Logits(g))
        }
        Label::Values(v) => {
            let (l, g) = mse(pred, v)?;
            (l, HeadGrad::Outputs(g))
        }
    })
}

fn scaled(g: HeadGrad, k: f64) -> HeadGrad {
    match g {
        HeadGrad::Logits(v) => HeadGrad::Logits(v.into_iter().map(|x| x * k).collect()),
        HeadGrad::Outputs(v) => HeadGrad::Outputs(v.into_iter().map(|x| x * k).collect()),
    }
}

fn sample_work(
    params: &ModelParameters,
    delta: &DeltaState,
    duals: Option<&[DualState]>,
    data: &Dataset,
    sample: &Sample,
    cfg: &TrainConfig,
    inv_n: f64,
) -> Result<SampleOut, TrainError> {
    let passes = forward_slots(params, sample)?;
    let mut grads = Gradients::zeros_like(&params.layers);
    let mut task_loss = 0.0;
    if let Some(label) = &sample.label {
        let (pred, trace) = passes
            .get(&data.primary_slot)
            .ok_or_else(|| TrainError::Config(format!("sample {} lacks slot {}", sample.id, data.primary_slot)))?;
        let (l, g) = task_term(pred, label)?;
        task_loss = l;
        params.backward_into(trace, &scaled(g, inv_n), &mut grads)?;
    }

    let template = match (cfg.method, sample.constraint) {
        (Method::Plain, _) | (_, None) => None,
        (_, Some(k)) => Some(
            data.templates
                .get(k)
                .ok_or_else(|| TrainError::Config(format!("sample {} names missing template {}", sample.id, k)))?,
        ),
    };
    let Some(template) = template else {
        return Ok(SampleOut {
            grads,
            task_loss,
            logic_loss: 0.0,
            mu: Vec::new(),
            mats: Vec::new(),
        });
    };

    let outputs: BTreeMap<String, Vec<f64>> = passes.iter().map(|(k, (o, _))| (k.clone(), o.clone())).collect();
    let grounding = ground(template, &outputs)?;
    let mats = template
        .groups()
        .iter()
        .map(|g| CostMatrix::from_grounding(template, &grounding, g))
        .collect::<Result<Vec<_>, _>>()?;

    let mut flat = vec![0.0; grounding.layout.len()];
    let mut mu = Vec::with_capacity(mats.len());
    let logic = match cfg.method {
        Method::Dual => {
            let duals = duals.ok_or_else(|| TrainError::Config("duals not initialised".into()))?;
            for (m, d) in mats.iter().zip(duals) {
                mu.push(cnf_cost(m, d)?);
            }
            let (g_mu, _) = logic_loss_grad(&mu, delta)?;
            for ((m, d), &w) in mats.iter().zip(duals).zip(&g_mu) {
                for (acc, g) in flat.iter_mut().zip(grad_outputs(m, d)?) {
                    *acc += w * g;
                }
            }
            logic_loss(&mu, delta)?.total()
        }
        Method::Dl2 { weight } => {
            let mut total = 0.0;
            for m in &mats {
                mu.push(closed_form_cost(m)?.value);
                total += baseline_cost(m, EncoderKind::Dl2Baseline)?;
                for (acc, g) in flat.iter_mut().zip(baseline_grad(m, EncoderKind::Dl2Baseline)?) {
                    *acc += weight * g;
                }
            }
            weight * total
        }
        Method::Plain => unreachable!(),
    };

    for (slot, piece) in grounding.layout.split(&flat) {
        if piece.iter().all(|&g| g == 0.0) {
            continue;
        }
        let (_, trace) = &passes[slot];
        let g = HeadGrad::Outputs(piece.iter().map(|&x| x * inv_n).collect());
        params.backward_into(trace, &g, &mut grads)?;
    }
    Ok(SampleOut {
        grads,
        task_loss,
        logic_loss: logic,
        mu,
        mats,
    })
}

fn ensure_duals(state: &mut TrainState, data: &Dataset, batch: &[usize]) -> Result<(), TrainError> {
    for &i in batch {
        let s = &data.samples[i];
        let Some(k) = s.constraint else { continue };
        let t = data
            .templates
            .get(k)
            .ok_or_else(|| TrainError::Config(format!("sample {} names missing template {}", s.id, k)))?;
        let shapes = group_shapes(t);
        match &mut state.duals {
            DualStore::Global(g) => {
                let g = g.get_or_insert_with(|| {
                    shapes.iter().map(|sh| DualState::uniform(sh, DualOwner::Global)).collect()
                });
                if g.iter().map(DualState::shape).ne(shapes.iter().cloned()) {
                    return Err(TrainError::Config(
                        "global duals need every template to have the same clause shape".into(),
                    ));
                }
            }
            DualStore::PerSample(map) => {
                map.entry(s.id).or_insert_with(|| {
                    shapes
                        .iter()
                        .map(|sh| DualState::uniform(sh, DualOwner::PerSample(s.id)))
                        .collect()
                });
            }
        }
    }
    Ok(())
}

/// Dual updates on the pre-step cost matrices. Per-sample duals take one
/// projected step each; global duals take one step on the batch-averaged
/// gradient.
pub(super) fn update_duals(
    store: &mut DualStore,
    batch: &[(u64, &[CostMatrix])],
    eta_conj: f64,
    eta_disj: f64,
) -> Result<(), TrainError> {
    match store {
        DualStore::PerSample(map) => {
            for (id, mats) in batch {
                if mats.is_empty() {
                    continue;
                }
                let duals = map
                    .get_mut(id)
                    .ok_or_else(|| TrainError::Config(format!("no duals for sample {}", id)))?;
                for (m, d) in mats.iter().zip(duals.iter_mut()) {
                    dual_step(m, d, eta_conj, eta_disj)?;
                }
            }
        }
        DualStore::Global(slot) => {
            let Some(duals) = slot.as_mut() else { return Ok(()) };
            let active: Vec<&[CostMatrix]> = batch.iter().map(|(_, m)| *m).filter(|m| !m.is_empty()).collect();
            if active.is_empty() {
                return Ok(());
            }
            let inv = 1.0 / active.len() as f64;
            for (g, d) in duals.iter_mut().enumerate() {
                let mut gc = vec![0.0; d.conj.len()];
                let mut gd: Vec<Vec<f64>> = d.disj.iter().map(|v| vec![0.0; v.len()]).collect();
                for mats in &active {
                    let (c, n) = grad_duals(&mats[g], d)?;
                    gc.iter_mut().zip(c).for_each(|(a, b)| *a += inv * b);
                    for (row, r) in gd.iter_mut().zip(n) {
                        row.iter_mut().zip(r).for_each(|(a, b)| *a += inv * b);
                    }
                }
                apply_dual_grads(d, &gc, &gd, eta_conj, eta_disj)?;
            }
        }
    }
    Ok(())
}

fn batch_outputs(
    state: &TrainState,
    data: &Dataset,
    batch: &[usize],
    cfg: &TrainConfig,
    inv_n: f64,
) -> Result<Vec<SampleOut>, TrainError> {
    let work = |i: usize| {
        let s = &data.samples[i];
        let duals = match &state.duals {
            DualStore::Global(g) => g.as_deref(),
            DualStore::PerSample(m) => m.get(&s.id).map(Vec::as_slice),
        };
        sample_work(&state.params, &state.delta, duals, data, s, cfg, inv_n)
    };
    let threads = cfg.threads.clamp(1, batch.len().max(1));
    if threads == 1 {
        return batch.iter().map(|&i| work(i)).collect();
    }
    let chunk = batch.len().div_ceil(threads);
    let parts: Vec<Result<Vec<SampleOut>, TrainError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .map(|c| scope.spawn(|| c.iter().map(|&i| work(i)).collect::<Result<Vec<_>, _>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut all = Vec::with_capacity(batch.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

/// Batch objective (mean task loss plus mean logic loss) and its weight
/// gradient at the current duals and deviations, without updating anything.
/// Missing duals are initialised uniformly.
pub fn objective_and_grad(
    state: &mut TrainState,
    data: &Dataset,
    batch: &[usize],
    cfg: &TrainConfig,
) -> Result<(f64, Gradients), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if cfg.method == Method::Dual {
        ensure_duals(state, data, batch)?;
    }
    let inv_n = 1.0 / batch.len() as f64;
    let outs = batch_outputs(state, data, batch, cfg, inv_n)?;
    let mut total = Gradients::zeros_like(&state.params.layers);
    let mut f = 0.0;
    for o in &outs {
        total.add(&o.grads);
        f += o.task_loss + o.logic_loss;
    }
    Ok((f * inv_n, total))
}

/// One iteration over `batch` (indices into `data.samples`), in the order
/// weights, deviations, conjunction duals, disjunction duals. All four use
/// costs evaluated before the weight update.
pub fn sgda_step(
    state: &mut TrainState,
    data: &Dataset,
    batch: &[usize],
    cfg: &TrainConfig,
) -> Result<StepStats, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= data.len()) {
        return Err(TrainError::Config(format!("batch index {} beyond {} samples", i, data.len())));
    }
    if cfg.method == Method::Dual {
        ensure_duals(state, data, batch)?;
    }
    let inv_n = 1.0 / batch.len() as f64;
    let outs = batch_outputs(state, data, batch, cfg, inv_n)?;

    let mut total = Gradients::zeros_like(&state.params.layers);
    let (mut task, mut logic, mut mu_sum, mut mu_count) = (0.0, 0.0, 0.0, 0usize);
    for o in &outs {
        total.add(&o.grads);
        task += o.task_loss;
        logic += o.logic_loss;
        mu_sum += o.mu.iter().sum::<f64>();
        mu_count += o.mu.len();
    }
    let (task, logic) = (task * inv_n, logic * inv_n);
    if !task.is_finite() || !logic.is_finite() || !total.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            step: state.t,
            detail: format!(
                "task={} logic={} delta={:?} batch={:?}",
                task,
                logic,
                state.delta.delta,
                batch.iter().map(|&i| data.samples[i].id).collect::<Vec<_>>()
            ),
        });
    }

    let lr = stepsize(state.t, cfg);
    state.params.grads = total;
    state.optimizer.apply_update(&mut state.params, lr)?;

    if cfg.method == Method::Dual {
        let batch_mu: Vec<Vec<f64>> = outs.iter().filter(|o| !o.mu.is_empty()).map(|o| o.mu.clone()).collect();
        if !batch_mu.is_empty() {
            state.delta = delta_oracle(&batch_mu, cfg.variance_floor)?;
        }
        let per: Vec<(u64, &[CostMatrix])> = batch
            .iter()
            .zip(&outs)
            .map(|(&i, o)| (data.samples[i].id, o.mats.as_slice()))
            .collect();
        update_duals(&mut state.duals, &per, cfg.eta_conj, cfg.eta_disj)?;
    }
    state.t += 1;
    Ok(StepStats {
        task_loss: task,
        logic_loss: logic,
        mean_mu: if mu_count == 0 { 0.0 } else { mu_sum / mu_count as f64 },
        lr,
    })
}
