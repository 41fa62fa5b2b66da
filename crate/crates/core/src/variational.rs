//! Distributional logic loss over truncated normals.
//!
//! The cost vector `mu` of a sample is modelled as a normal with mean `mu`
//! and standard deviation `delta`, truncated to `[0, inf)`, and pulled
//! towards a point mass at zero. Per dimension the loss is
//! `log delta + (mu/delta)^2 / 2 + log Phi(mu/delta)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariationalError {
    #[error("negative cost {0}")]
    NegativeCost(f64),

    #[error("empty batch")]
    EmptyBatch,

    #[error("standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("expected {expected} dimensions, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

pub const DEFAULT_VARIANCE_FLOOR: f64 = 0.01;

/// Tolerance below zero accepted for costs before they count as negative.
const COST_SLACK: f64 = 1e-12;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Per-dimension standard deviations with a floor on the variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaState {
    pub delta: Vec<f64>,
    pub variance_floor: f64,
}

impl DeltaState {
    /// All deviations start at one.
    pub fn new(m: usize, variance_floor: f64) -> Self {
        DeltaState {
            delta: vec![1.0; m],
            variance_floor,
        }
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn mean(&self) -> f64 {
        if self.delta.is_empty() {
            0.0
        } else {
            self.delta.iter().sum::<f64>() / self.delta.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogicLossTerms {
    pub log_det: f64,
    pub quad: f64,
    pub tail: f64,
}

impl LogicLossTerms {
    pub fn total(&self) -> f64 {
        self.log_det + self.quad + self.tail
    }
}

fn check(mu: &[f64], d: &DeltaState) -> Result<(), VariationalError> {
    if mu.len() != d.dim() {
        return Err(VariationalError::ShapeMismatch {
            expected: d.dim(),
            got: mu.len(),
        });
    }
    if let Some(&bad) = mu.iter().find(|&&m| m < -COST_SLACK) {
        return Err(VariationalError::NegativeCost(bad));
    }
    if let Some(&bad) = d.delta.iter().find(|&&s| !(s > 0.0)) {
        return Err(VariationalError::NonPositiveSigma(bad));
    }
    Ok(())
}

pub fn logic_loss(mu: &[f64], d: &DeltaState) -> Result<LogicLossTerms, VariationalError> {
    check(mu, d)?;
    let mut t = LogicLossTerms::default();
    for (&m, &s) in mu.iter().zip(&d.delta) {
        let a = m.max(0.0) / s;
        t.log_det += s.ln();
        t.quad += 0.5 * a * a;
        t.tail += std_normal_cdf(a).ln();
    }
    Ok(t)
}

/// Partial derivatives of [`logic_loss`] total in `mu` and in `delta`.
pub fn logic_loss_grad(
    mu: &[f64],
    d: &DeltaState,
) -> Result<(Vec<f64>, Vec<f64>), VariationalError> {
    check(mu, d)?;
    let mut g_mu = Vec::with_capacity(mu.len());
    let mut g_delta = Vec::with_capacity(mu.len());
    for (&m, &s) in mu.iter().zip(&d.delta) {
        let m = m.max(0.0);
        let a = m / s;
        // Mills-type ratio phi(a) / Phi(a)
        let r = std_normal_pdf(a) / std_normal_cdf(a);
        g_mu.push(m / (s * s) + r / s);
        g_delta.push(1.0 / s - m * m / (s * s * s) - r * m / (s * s));
    }
    Ok((g_mu, g_delta))
}

/// Replaces the deviations by `sqrt(max(mean_i mu_i, floor))` per dimension.
pub fn delta_oracle(batch_mu: &[Vec<f64>], floor: f64) -> Result<DeltaState, VariationalError> {
    let first = batch_mu.first().ok_or(VariationalError::EmptyBatch)?;
    let m = first.len();
    let mut sum = vec![0.0; m];
    for mu in batch_mu {
        if mu.len() != m {
            return Err(VariationalError::ShapeMismatch {
                expected: m,
                got: mu.len(),
            });
        }
        for (acc, &v) in sum.iter_mut().zip(mu) {
            if v < -COST_SLACK {
                return Err(VariationalError::NegativeCost(v));
            }
            *acc += v.max(0.0);
        }
    }
    let n = batch_mu.len() as f64;
    Ok(DeltaState {
        delta: sum.into_iter().map(|s| (s / n).max(floor).sqrt()).collect(),
        variance_floor: floor,
    })
}

fn positive(sigma: f64) -> Result<(), VariationalError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(VariationalError::NonPositiveSigma(sigma))
    }
}

/// KL divergence between two normals truncated to `[0, inf)`.
pub fn truncated_kl(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<f64, VariationalError> {
    positive(sigma1)?;
    positive(sigma2)?;
    let r = sigma1 * sigma1 / (sigma2 * sigma2);
    let gauss = 0.5 * ((r - 1.0) - r.ln() + (mu1 - mu2).powi(2) / (sigma2 * sigma2));
    // 1 - erf(-x) is erfc(-x)
    let z1 = erfc(-mu1 * FRAC_1_SQRT_2 / sigma1);
    let z2 = erfc(-mu2 * FRAC_1_SQRT_2 / sigma2);
    let coef = (1.0 / (sigma1 * sigma1) + 1.0 / (sigma2 * sigma2)) * mu1 - 2.0 * mu2 / (sigma2 * sigma2);
    let mean_shift =
        coef * sigma1 / (2.0 * PI).sqrt() / ((mu1 * mu1 / (2.0 * sigma1 * sigma1)).exp() * z1);
    Ok(gauss + mean_shift + (z2 / z1).ln())
}

/// The part of `truncated_kl(0, sigma1, ..)` that diverges as `sigma1 -> 0`.
pub fn dirac_divergence(sigma1: f64) -> f64 {
    -sigma1.ln() - 0.5
}

/// Finite part of `truncated_kl(0, sigma1, mu2, sigma2)` as `sigma1 -> 0`.
pub fn dirac_limit_kl(mu2: f64, sigma2: f64) -> Result<f64, VariationalError> {
    positive(sigma2)?;
    Ok(sigma2.ln()
        + mu2 * mu2 / (2.0 * sigma2 * sigma2)
        + erfc(-mu2 * FRAC_1_SQRT_2 / sigma2).ln())
}

/// Task loss plus logic loss, unweighted.
pub fn total_loss(task_loss: f64, logic: &LogicLossTerms) -> f64 {
    task_loss + logic.total()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Values from 40-digit quadrature of the standard normal density.
    #[test]
    fn cdf_oracle_values() {
        let cases = [
            (-1.0, 0.15865525393145705141),
            (-3.0, 0.0013498980316300945267),
            (2.5, 0.99379033467422386483),
            (-8.0, 6.2209605742717841235e-16),
            (0.3, 0.61791142218895263307),
        ];
        for (x, want) in cases {
            assert!((std_normal_cdf(x) - want).abs() <= 1e-10, "{}", x);
        }
        assert_eq!(std_normal_cdf(0.0), 0.5);
    }

    #[test]
    fn cdf_symmetry_and_monotone() {
        let mut prev = 0.0;
        for k in -800..=800 {
            let x = k as f64 * 0.01;
            let p = std_normal_cdf(x);
            assert!((p + std_normal_cdf(-x) - 1.0).abs() <= 1e-12);
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn loss_examples() {
        let d = DeltaState::new(1, DEFAULT_VARIANCE_FLOOR);
        let t = logic_loss(&[0.0], &d).unwrap();
        assert_eq!((t.log_det, t.quad), (0.0, 0.0));
        assert!((t.tail - 0.5f64.ln()).abs() < 1e-15);
        // 0.5 + ln Phi(1), 40-digit reference
        let t = logic_loss(&[1.0], &d).unwrap();
        assert!((t.total() - 0.327246220976550).abs() < 1e-12, "{:.17}", t.total());
        let d2 = DeltaState {
            delta: vec![2.0],
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        };
        assert!(logic_loss(&[0.0], &d2).unwrap().total().abs() < 1e-15);
        assert!(matches!(
            logic_loss(&[-0.1], &d),
            Err(VariationalError::NegativeCost(_))
        ));
    }

    #[test]
    fn grad_at_zero() {
        let d = DeltaState::new(1, DEFAULT_VARIANCE_FLOOR);
        let (g, _) = logic_loss_grad(&[0.0], &d).unwrap();
        assert!((g[0] - 0.797884560802865).abs() < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let h = 1e-5;
        for i in 1..=10 {
            let m = i as f64 * 0.5;
            for s in [0.5, 0.75, 1.0, 1.5, 2.0] {
                let d = DeltaState {
                    delta: vec![s],
                    variance_floor: DEFAULT_VARIANCE_FLOOR,
                };
                let f = |m: f64, s: f64| {
                    let d = DeltaState {
                        delta: vec![s],
                        variance_floor: DEFAULT_VARIANCE_FLOOR,
                    };
                    logic_loss(&[m], &d).unwrap().total()
                };
                let (gm, gd) = logic_loss_grad(&[m], &d).unwrap();
                let fm = (f(m + h, s) - f(m - h, s)) / (2.0 * h);
                let fd = (f(m, s + h) - f(m, s - h)) / (2.0 * h);
                assert!((fm - gm[0]).abs() <= 1e-6 * gm[0].abs().max(1.0));
                assert!((fd - gd[0]).abs() <= 1e-6 * gd[0].abs().max(1.0));
                assert!(gm[0] > 0.0);
            }
        }
    }

    #[test]
    fn oracle_examples() {
        let d = delta_oracle(&[vec![1.0], vec![3.0]], DEFAULT_VARIANCE_FLOOR).unwrap();
        assert_eq!(d.delta, vec![2f64.sqrt()]);
        let d = delta_oracle(&[vec![0.0001], vec![0.0003]], DEFAULT_VARIANCE_FLOOR).unwrap();
        assert_eq!(d.delta[0] * d.delta[0], 0.010000000000000002);
        assert_eq!(d.delta, vec![0.1]);
        let d = delta_oracle(&[vec![0.0, 0.0]], DEFAULT_VARIANCE_FLOOR).unwrap();
        assert_eq!(d.delta, vec![0.1, 0.1]);
        assert_eq!(delta_oracle(&[], 0.01), Err(VariationalError::EmptyBatch));
    }

    // Values from quadrature of the truncated densities (40 digits).
    #[test]
    fn truncated_kl_matches_quadrature() {
        let cases = [
            ((0.5, 1.0, 1.0, 2.0), 0.38121970767475990228),
            ((0.0, 0.3, 2.0, 0.5), 6.9690181866556817438),
            ((1.5, 0.7, -0.5, 1.2), 0.59940488210387777749),
        ];
        for ((a, b, c, d), want) in cases {
            let got = truncated_kl(a, b, c, d).unwrap();
            assert!((got - want).abs() < 1e-10, "{} vs {}", got, want);
        }
        assert_eq!(truncated_kl(1.0, 0.5, 1.0, 0.5).unwrap(), 0.0);
        assert!(matches!(
            truncated_kl(0.0, 0.0, 1.0, 1.0),
            Err(VariationalError::NonPositiveSigma(_))
        ));
    }

    #[test]
    fn dirac_limit_examples() {
        assert_eq!(dirac_limit_kl(0.0, 1.0).unwrap(), 0.0);
        let big = dirac_limit_kl(10.0, 1.0).unwrap();
        assert!((big - 50.0).abs() < 1.0);
        // finite part converges at first order in sigma1
        for s1 in [1e-3, 1e-4, 1e-5] {
            let r = truncated_kl(0.0, s1, 1.0, 1.0).unwrap() - dirac_divergence(s1);
            let slope = (2.0 / PI).sqrt();
            assert!((r - dirac_limit_kl(1.0, 1.0).unwrap() + slope * s1).abs() < 10.0 * s1 * s1);
        }
    }

    #[test]
    fn total_loss_examples() {
        let t = LogicLossTerms {
            log_det: 0.0,
            quad: 0.5,
            tail: 0.0,
        };
        assert_eq!(total_loss(1.0, &t), 1.5);
        assert_eq!(total_loss(0.0, &LogicLossTerms::default()), 0.0);
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(
            m1 in -2.0f64..3.0, s1 in 0.2f64..3.0,
            m2 in -2.0f64..3.0, s2 in 0.2f64..3.0,
        ) {
            prop_assert!(truncated_kl(m1, s1, m2, s2).unwrap() >= -1e-12);
        }

        #[test]
        fn loss_increases_in_mu(m in 0.0f64..5.0, s in 0.1f64..3.0, dm in 1e-3f64..1.0) {
            let d = DeltaState { delta: vec![s], variance_floor: 0.01 };
            let a = logic_loss(&[m], &d).unwrap().total();
            let b = logic_loss(&[m + dm], &d).unwrap().total();
            prop_assert!(b > a);
        }

        #[test]
        fn term_ranges(mu in prop::collection::vec(0.0f64..5.0, 1..6)) {
            let d = DeltaState::new(mu.len(), 0.01);
            let t = logic_loss(&mu, &d).unwrap();
            prop_assert!(t.quad >= 0.0);
            prop_assert!(t.tail <= 0.0 && t.tail >= 0.5f64.ln() * mu.len() as f64 - 1e-12);
        }

        #[test]
        fn differences_match_dirac_limit(
            a in 0.0f64..5.0, sa in 0.1f64..2.0,
            b in 0.0f64..5.0, sb in 0.1f64..2.0,
        ) {
            let la = logic_loss(&[a], &DeltaState { delta: vec![sa], variance_floor: 0.01 }).unwrap();
            let lb = logic_loss(&[b], &DeltaState { delta: vec![sb], variance_floor: 0.01 }).unwrap();
            let ka = dirac_limit_kl(a, sa).unwrap();
            let kb = dirac_limit_kl(b, sb).unwrap();
            prop_assert!(((la.total() - lb.total()) - (ka - kb)).abs() <= 1e-8);
        }

        // The oracle minimizes log delta + mean(mu) / (2 delta^2) per dimension.
        #[test]
        fn oracle_beats_perturbations(
            batch in prop::collection::vec(prop::collection::vec(0.05f64..4.0, 2), 1..8),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let d = delta_oracle(&batch, 0.01).unwrap();
            let n = batch.len() as f64;
            let mean: Vec<f64> = (0..2).map(|k| batch.iter().map(|m| m[k]).sum::<f64>() / n).collect();
            let bound = |delta: &[f64]| {
                delta.iter().zip(&mean).map(|(s, m)| s.ln() + m / (2.0 * s * s)).sum::<f64>()
            };
            let best = bound(&d.delta);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let cand: Vec<f64> = d.delta.iter().map(|s| s * rng.gen_range(0.5..1.5)).collect();
                prop_assert!(best <= bound(&cand) + 1e-12);
            }
        }
    }
}
