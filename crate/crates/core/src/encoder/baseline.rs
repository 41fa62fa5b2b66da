use serde::{Deserialize, Serialize};

use super::duals::closed_form_cost;
use super::matrix::CostMatrix;
use super::EncoderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    DualVariable,
    /// Max over clauses of min over literals, differentiated through the
    /// first maximizing clause and its first minimizing literal.
    FuzzyMinMax,
    /// Sum over clauses of the product of literal costs.
    Dl2Baseline,
}

fn check_nonempty(m: &CostMatrix) -> Result<(), EncoderError> {
    match m.costs.iter().position(Vec::is_empty) {
        Some(i) => Err(EncoderError::EmptyClause(i)),
        None => Ok(()),
    }
}

/// Dual-free encodings of a cost matrix. `DualVariable` reports the closed
/// form, i.e. the cost at optimal duals.
pub fn baseline_cost(m: &CostMatrix, kind: EncoderKind) -> Result<f64, EncoderError> {
    check_nonempty(m)?;
    match kind {
        EncoderKind::DualVariable | EncoderKind::FuzzyMinMax => Ok(closed_form_cost(m)?.value),
        EncoderKind::Dl2Baseline => Ok(m.costs.iter().map(|s| s.iter().product::<f64>()).sum()),
    }
}

/// Gradient of [`baseline_cost`] with respect to the flat outputs.
pub fn baseline_grad(m: &CostMatrix, kind: EncoderKind) -> Result<Vec<f64>, EncoderError> {
    check_nonempty(m)?;
    let mut g = vec![0.0; m.n_outputs];
    match kind {
        EncoderKind::DualVariable | EncoderKind::FuzzyMinMax => {
            let cf = closed_form_cost(m)?;
            if let Some(&i) = cf.argmax_clauses.first() {
                let j = cf.argmin_literals[i][0];
                for &(k, c) in &m.grads[i][j] {
                    g[k] += c;
                }
            }
        }
        EncoderKind::Dl2Baseline => {
            for (s, rows) in m.costs.iter().zip(&m.grads) {
                for (j, row) in rows.iter().enumerate() {
                    let others: f64 = s
                        .iter()
                        .enumerate()
                        .filter(|&(l, _)| l != j)
                        .map(|(_, &v)| v)
                        .product();
                    if others == 0.0 {
                        continue;
                    }
                    for &(k, c) in row {
                        g[k] += others * c;
                    }
                }
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::super::duals::{cnf_cost, DualOwner, DualState};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let m = CostMatrix::from_costs(vec![vec![1.0, 3.0], vec![2.0]]).unwrap();
        assert_eq!(baseline_cost(&m, EncoderKind::Dl2Baseline).unwrap(), 5.0);
        assert_eq!(baseline_cost(&m, EncoderKind::FuzzyMinMax).unwrap(), 2.0);
        let empty = CostMatrix::from_costs(vec![vec![1.0], vec![]]).unwrap();
        assert_eq!(
            baseline_cost(&empty, EncoderKind::Dl2Baseline),
            Err(EncoderError::EmptyClause(1))
        );
    }

    proptest! {
        // With both conjunction weights fixed at one half, a two-clause
        // conjunction of unit clauses costs half the summed encoding.
        #[test]
        fn fixed_half_weights_match_sum(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let m = CostMatrix::from_costs(vec![vec![a], vec![b]]).unwrap();
            let d = DualState::uniform(&[1, 1], DualOwner::Global);
            let lhs = cnf_cost(&m, &d).unwrap();
            let rhs = 0.5 * baseline_cost(&m, EncoderKind::Dl2Baseline).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}
