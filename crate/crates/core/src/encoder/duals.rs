use serde::{Deserialize, Serialize};

use super::matrix::CostMatrix;
use super::simplex::{on_simplex, project_simplex};
use super::EncoderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualOwner {
    Global,
    PerSample(u64),
}

/// Conjunction weights `conj` (one per clause) and disjunction weights
/// `disj[i]` (one per literal of clause `i`), each on its simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub conj: Vec<f64>,
    pub disj: Vec<Vec<f64>>,
    pub owner: DualOwner,
}

impl DualState {
    /// Uniform weights for a matrix with the given clause widths.
    pub fn uniform(shape: &[usize], owner: DualOwner) -> Self {
        let u = |n: usize| vec![1.0 / n as f64; n];
        DualState {
            conj: if shape.is_empty() { Vec::new() } else { u(shape.len()) },
            disj: shape.iter().map(|&n| u(n)).collect(),
            owner,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.disj.iter().map(Vec::len).collect()
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        (self.conj.is_empty() && self.disj.is_empty())
            || (on_simplex(&self.conj, tol) && self.disj.iter().all(|v| on_simplex(v, tol)))
    }

    /// Mean Shannon entropy (nats) over the conjunction vector and every
    /// disjunction vector.
    pub fn entropy(&self) -> f64 {
        fn h(p: &[f64]) -> f64 {
            -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
        }
        let n = 1 + self.disj.len();
        if self.conj.is_empty() {
            return 0.0;
        }
        (h(&self.conj) + self.disj.iter().map(|v| h(v)).sum::<f64>()) / n as f64
    }
}

fn check_shape(m: &CostMatrix, d: &DualState) -> Result<(), EncoderError> {
    if d.conj.len() != m.n_clauses() || d.shape() != m.shape() {
        return Err(EncoderError::ShapeMismatch(format!(
            "duals {:?} vs costs {:?}",
            d.shape(),
            m.shape()
        )));
    }
    Ok(())
}

/// `sum_i mu_i sum_j nu_ij S_ij`.
pub fn cnf_cost(m: &CostMatrix, d: &DualState) -> Result<f64, EncoderError> {
    check_shape(m, d)?;
    Ok(m.costs
        .iter()
        .zip(&d.conj)
        .zip(&d.disj)
        .map(|((s, &mu), nu)| mu * s.iter().zip(nu).map(|(a, b)| a * b).sum::<f64>())
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub value: f64,
    /// Clauses attaining the maximum.
    pub argmax_clauses: Vec<usize>,
    /// Per clause, the literals attaining its minimum.
    pub argmin_literals: Vec<Vec<usize>>,
}

/// `max_i min_j S_ij` with exhaustive tie sets. A matrix with no clauses has
/// value zero.
pub fn closed_form_cost(m: &CostMatrix) -> Result<ClosedForm, EncoderError> {
    let mut mins = Vec::with_capacity(m.n_clauses());
    let mut argmin_literals = Vec::with_capacity(m.n_clauses());
    for (i, s) in m.costs.iter().enumerate() {
        let lo = s
            .iter()
            .copied()
            .reduce(f64::min)
            .ok_or(EncoderError::EmptyClause(i))?;
        argmin_literals.push((0..s.len()).filter(|&j| s[j] == lo).collect());
        mins.push(lo);
    }
    let value = mins.iter().copied().fold(0.0, f64::max);
    let argmax_clauses = (0..mins.len()).filter(|&i| mins[i] == value).collect();
    Ok(ClosedForm {
        value,
        argmax_clauses,
        argmin_literals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Spread weight evenly over tied indices.
    #[default]
    Uniform,
    /// Put all weight on the first tied index.
    First,
}

/// Duals supported on the extremal indices of the closed form.
pub fn optimal_duals(m: &CostMatrix, rule: TieRule) -> Result<DualState, EncoderError> {
    let cf = closed_form_cost(m)?;
    let weights = |n: usize, support: &[usize]| {
        let mut w = vec![0.0; n];
        match rule {
            TieRule::Uniform => {
                let p = 1.0 / support.len() as f64;
                support.iter().for_each(|&k| w[k] = p);
            }
            TieRule::First => w[support[0]] = 1.0,
        }
        w
    };
    let conj = if m.n_clauses() == 0 {
        Vec::new()
    } else {
        weights(m.n_clauses(), &cf.argmax_clauses)
    };
    let disj = m
        .costs
        .iter()
        .zip(&cf.argmin_literals)
        .map(|(s, a)| weights(s.len(), a))
        .collect();
    Ok(DualState {
        conj,
        disj,
        owner: DualOwner::Global,
    })
}

/// Gradient of the dual-weighted cost with respect to the flat outputs.
pub fn grad_outputs(m: &CostMatrix, d: &DualState) -> Result<Vec<f64>, EncoderError> {
    check_shape(m, d)?;
    let mut g = vec![0.0; m.n_outputs];
    for ((rows, &mu), nu) in m.grads.iter().zip(&d.conj).zip(&d.disj) {
        for (row, &w) in rows.iter().zip(nu) {
            let scale = mu * w;
            if scale == 0.0 {
                continue;
            }
            for &(k, coef) in row {
                g[k] += scale * coef;
            }
        }
    }
    Ok(g)
}

/// `(d/d mu_i, d/d nu_ij) = (sum_j nu_ij S_ij, mu_i S_ij)`.
pub fn grad_duals(
    m: &CostMatrix,
    d: &DualState,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), EncoderError> {
    check_shape(m, d)?;
    let g_conj = m
        .costs
        .iter()
        .zip(&d.disj)
        .map(|(s, nu)| s.iter().zip(nu).map(|(a, b)| a * b).sum())
        .collect();
    let g_disj = m
        .costs
        .iter()
        .zip(&d.conj)
        .map(|(s, &mu)| s.iter().map(|&a| mu * a).collect())
        .collect();
    Ok((g_conj, g_disj))
}

/// One projected step: ascent on the conjunction weights, descent on the
/// disjunction weights. Both gradients are taken at the incoming duals.
pub fn dual_step(
    m: &CostMatrix,
    d: &mut DualState,
    eta_conj: f64,
    eta_disj: f64,
) -> Result<(), EncoderError> {
    let (g_conj, g_disj) = grad_duals(m, d)?;
    apply_dual_grads(d, &g_conj, &g_disj, eta_conj, eta_disj)
}

/// Projected update from precomputed dual gradients. A vector whose gradient
/// is identically zero is left untouched.
pub fn apply_dual_grads(
    d: &mut DualState,
    g_conj: &[f64],
    g_disj: &[Vec<f64>],
    eta_conj: f64,
    eta_disj: f64,
) -> Result<(), EncoderError> {
    if g_conj.len() != d.conj.len()
        || g_disj.len() != d.disj.len()
        || g_disj.iter().zip(&d.disj).any(|(g, v)| g.len() != v.len())
    {
        return Err(EncoderError::ShapeMismatch("dual gradient shape".into()));
    }
    if g_conj.iter().any(|&g| g != 0.0) {
        let x: Vec<f64> = d.conj.iter().zip(g_conj).map(|(a, g)| a + eta_conj * g).collect();
        d.conj = project_simplex(&x)?;
    }
    for (nu, g) in d.disj.iter_mut().zip(g_disj) {
        if g.iter().any(|&v| v != 0.0) {
            let x: Vec<f64> = nu.iter().zip(g).map(|(a, g)| a - eta_disj * g).collect();
            *nu = project_simplex(&x)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> CostMatrix {
        CostMatrix::from_costs(vec![vec![1.0, 3.0], vec![2.0]]).unwrap()
    }

    #[test]
    fn cnf_cost_example() {
        let d = DualState {
            conj: vec![0.5, 0.5],
            disj: vec![vec![0.5, 0.5], vec![1.0]],
            owner: DualOwner::Global,
        };
        assert_eq!(cnf_cost(&sample(), &d).unwrap(), 2.0);
        let zero = CostMatrix::from_costs(vec![vec![0.0, 0.0], vec![0.0]]).unwrap();
        assert_eq!(cnf_cost(&zero, &d).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let d = DualState::uniform(&[2], DualOwner::Global);
        assert!(matches!(cnf_cost(&sample(), &d), Err(EncoderError::ShapeMismatch(_))));
    }

    #[test]
    fn closed_form_examples() {
        let cf = closed_form_cost(&sample()).unwrap();
        assert_eq!(cf.value, 2.0);
        assert_eq!(cf.argmax_clauses, vec![1]);
        assert_eq!(cf.argmin_literals, vec![vec![0], vec![0]]);

        let cf = closed_form_cost(&CostMatrix::from_costs(vec![vec![0.0, 5.0]]).unwrap()).unwrap();
        assert_eq!(cf.value, 0.0);

        let tie = CostMatrix::from_costs(vec![vec![2.0, 2.0], vec![2.0]]).unwrap();
        let cf = closed_form_cost(&tie).unwrap();
        assert_eq!(cf.value, 2.0);
        assert_eq!(cf.argmax_clauses, vec![0, 1]);

        let empty = CostMatrix::from_costs(vec![vec![]]).unwrap();
        assert_eq!(closed_form_cost(&empty), Err(EncoderError::EmptyClause(0)));
    }

    #[test]
    fn optimal_dual_examples() {
        let d = optimal_duals(&sample(), TieRule::Uniform).unwrap();
        assert_eq!(d.conj, vec![0.0, 1.0]);
        assert_eq!(d.disj, vec![vec![1.0, 0.0], vec![1.0]]);
        let tie = CostMatrix::from_costs(vec![vec![2.0, 2.0]]).unwrap();
        assert_eq!(optimal_duals(&tie, TieRule::Uniform).unwrap().disj, vec![vec![0.5, 0.5]]);
        assert_eq!(optimal_duals(&tie, TieRule::First).unwrap().disj, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn grad_examples() {
        let m = CostMatrix::new(vec![vec![1.0]], vec![vec![vec![(0, 1.0)]]], 1).unwrap();
        let d = DualState::uniform(&[1], DualOwner::Global);
        assert_eq!(grad_outputs(&m, &d).unwrap(), vec![1.0]);
        let inactive = CostMatrix::new(vec![vec![0.0]], vec![vec![vec![]]], 1).unwrap();
        assert_eq!(grad_outputs(&inactive, &d).unwrap(), vec![0.0]);

        let m = CostMatrix::from_costs(vec![vec![1.0, 3.0]]).unwrap();
        let d = DualState::uniform(&[2], DualOwner::Global);
        let (gm, gn) = grad_duals(&m, &d).unwrap();
        assert_eq!(gm, vec![2.0]);
        assert_eq!(gn, vec![vec![1.0, 3.0]]);
    }

    #[test]
    fn satisfied_clause_does_not_drift() {
        let m = CostMatrix::from_costs(vec![vec![0.0, 0.0], vec![0.0]]).unwrap();
        let mut d = DualState {
            conj: vec![0.3, 0.7],
            disj: vec![vec![0.2, 0.8], vec![1.0]],
            owner: DualOwner::Global,
        };
        let before = d.clone();
        dual_step(&m, &mut d, 0.5, 0.5).unwrap();
        assert_eq!(d, before);
    }

    #[test]
    fn dual_grads_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let shape: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(1..4)).collect();
            let costs: Vec<Vec<f64>> = shape
                .iter()
                .map(|&n| (0..n).map(|_| rng.gen_range(0.0..3.0)).collect())
                .collect();
            let m = CostMatrix::from_costs(costs).unwrap();
            let d = DualState::uniform(&shape, DualOwner::Global);
            let (gm, gn) = grad_duals(&m, &d).unwrap();
            let h = 1e-5;
            for i in 0..shape.len() {
                let mut p = d.clone();
                let mut q = d.clone();
                p.conj[i] += h;
                q.conj[i] -= h;
                let fd = (cnf_cost(&m, &p).unwrap() - cnf_cost(&m, &q).unwrap()) / (2.0 * h);
                assert!((fd - gm[i]).abs() <= 1e-8 * gm[i].abs().max(1.0));
                for j in 0..shape[i] {
                    let mut p = d.clone();
                    let mut q = d.clone();
                    p.disj[i][j] += h;
                    q.disj[i][j] -= h;
                    let fd = (cnf_cost(&m, &p).unwrap() - cnf_cost(&m, &q).unwrap()) / (2.0 * h);
                    assert!((fd - gn[i][j]).abs() <= 1e-8 * gn[i][j].abs().max(1.0));
                }
            }
        }
    }

    fn matrix_strategy() -> impl Strategy<Value = CostMatrix> {
        prop::collection::vec(prop::collection::vec(0.0f64..5.0, 1..4), 1..5)
            .prop_map(|c| CostMatrix::from_costs(c).unwrap())
    }

    fn simplex_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    // Exhaustive oracle: the saddle value over simplex vertices is
    // max over clause vertex of min over literal vertex.
    fn vertex_oracle(m: &CostMatrix) -> f64 {
        m.costs
            .iter()
            .map(|s| s.iter().copied().fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    proptest! {
        #[test]
        fn optimal_duals_attain_closed_form(m in matrix_strategy()) {
            let d = optimal_duals(&m, TieRule::Uniform).unwrap();
            prop_assert!(d.is_feasible(1e-12));
            let c = cnf_cost(&m, &d).unwrap();
            prop_assert!((c - closed_form_cost(&m).unwrap().value).abs() <= 1e-12);
            prop_assert!((c - vertex_oracle(&m)).abs() <= 1e-12);
        }

        #[test]
        fn saddle_bound(
            (m, mu) in matrix_strategy().prop_flat_map(|m| {
                let n = m.n_clauses();
                (Just(m), simplex_vec(n))
            })
        ) {
            let inner: f64 = m.costs.iter().zip(&mu)
                .map(|(s, &w)| w * s.iter().copied().fold(f64::INFINITY, f64::min))
                .sum();
            prop_assert!(inner <= closed_form_cost(&m).unwrap().value + 1e-12);
        }

        #[test]
        fn dual_step_stays_feasible(m in matrix_strategy(), eta in 0.01f64..2.0) {
            let mut d = DualState::uniform(&m.shape(), DualOwner::Global);
            for _ in 0..50 {
                dual_step(&m, &mut d, eta, eta).unwrap();
                prop_assert!(d.is_feasible(1e-12));
            }
        }
    }
}
