use serde::{Deserialize, Serialize};

use super::{Gradients, ModelError, ModelParameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    PlainSgd,
    AdaptiveMoments,
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub rule: UpdateRule,
    /// L2 penalty added to the gradient before the update.
    pub weight_decay: f64,
    m: Option<Gradients>,
    v: Option<Gradients>,
    t: u64,
}

impl Optimizer {
    pub fn new(rule: UpdateRule) -> Self {
        Optimizer {
            rule,
            weight_decay: 0.0,
            m: None,
            v: None,
            t: 0,
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates parameters from their accumulated gradients, then clears the
    /// gradients and bumps the parameter version.
    pub fn apply_update(&mut self, p: &mut ModelParameters, lr: f64) -> Result<(), ModelError> {
        if !p.grads.is_finite() {
            return Err(ModelError::NonFiniteGradient);
        }
        if self.weight_decay != 0.0 {
            let wd = self.weight_decay;
            for (g, l) in p.grads.layers.iter_mut().zip(&p.layers) {
                g.w.iter_mut().zip(&l.w).for_each(|(g, w)| *g += wd * w);
            }
        }
        self.t += 1;
        match self.rule {
            UpdateRule::PlainSgd => {
                for (l, g) in p.layers.iter_mut().zip(&p.grads.layers) {
                    l.w.iter_mut().zip(&g.w).for_each(|(w, g)| *w -= lr * g);
                    l.b.iter_mut().zip(&g.b).for_each(|(b, g)| *b -= lr * g);
                }
            }
            UpdateRule::AdaptiveMoments => {
                let m = self.m.get_or_insert_with(|| Gradients::zeros_like(&p.layers));
                let v = self.v.get_or_insert_with(|| Gradients::zeros_like(&p.layers));
                let c1 = 1.0 - BETA1.powi(self.t as i32);
                let c2 = 1.0 - BETA2.powi(self.t as i32);
                let step = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                };
                for (((l, g), ml), vl) in p
                    .layers
                    .iter_mut()
                    .zip(&p.grads.layers)
                    .zip(&mut m.layers)
                    .zip(&mut v.layers)
                {
                    for k in 0..l.w.len() {
                        step(&mut l.w[k], g.w[k], &mut ml.w[k], &mut vl.w[k]);
                    }
                    for k in 0..l.b.len() {
                        step(&mut l.b[k], g.b[k], &mut ml.b[k], &mut vl.b[k]);
                    }
                }
            }
        }
        p.grads.clear();
        p.version += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{init, Head, MlpSpec};
    use super::*;

    fn params() -> ModelParameters {
        init(&MlpSpec {
            layer_widths: vec![2, 3, 2],
            head: Head::Softmax,
            seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn zero_grad_no_change() {
        for rule in [UpdateRule::PlainSgd, UpdateRule::AdaptiveMoments] {
            let mut p = params();
            let before = p.flat();
            Optimizer::new(rule).apply_update(&mut p, 0.1).unwrap();
            assert_eq!(p.flat(), before);
        }
    }

    #[test]
    fn sgd_unit_step() {
        let mut p = params();
        let before = p.flat();
        p.grads.layers[0].w[1] = 0.25;
        p.grads.layers[1].b[0] = -2.0;
        let g = p.grads.flat();
        Optimizer::new(UpdateRule::PlainSgd).apply_update(&mut p, 1.0).unwrap();
        for ((a, b), g) in p.flat().iter().zip(&before).zip(&g) {
            assert_eq!(*a, b - g);
        }
        assert!(p.grads.flat().iter().all(|&x| x == 0.0));
    }

    // First step: m = (1-b1) g, v = (1-b2) g^2, bias correction restores g and
    // g^2, so the displacement is lr * |g| / (|g| + eps).
    #[test]
    fn adam_first_step() {
        let mut p = params();
        let before = p.flat();
        p.grads.layers[0].w[0] = 3.0;
        p.grads.layers[1].w[2] = -1e-3;
        let g = p.grads.flat();
        let lr = 0.01;
        Optimizer::new(UpdateRule::AdaptiveMoments).apply_update(&mut p, lr).unwrap();
        for ((a, b), g) in p.flat().iter().zip(&before).zip(&g) {
            let want = if *g == 0.0 { 0.0 } else { lr * g.abs() / (g.abs() + ADAM_EPS) };
            assert!(((a - b).abs() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut p = params();
        p.grads.layers[0].b[0] = f64::NAN;
        assert!(matches!(
            Optimizer::new(UpdateRule::PlainSgd).apply_update(&mut p, 0.1),
            Err(ModelError::NonFiniteGradient)
        ));
    }
}
