use crate::formula::{CnfTemplate, Grounding};

use super::EncoderError;

/// `max(v - c, 0)`.
pub fn atom_cost(v: f64, c: f64) -> Result<f64, EncoderError> {
    if !v.is_finite() {
        return Err(EncoderError::NonFinite(v));
    }
    if !c.is_finite() {
        return Err(EncoderError::NonFinite(c));
    }
    Ok((v - c).max(0.0))
}

/// Sparse gradient row over a flat output vector.
pub type GradRow = Vec<(usize, f64)>;

/// Literal costs `S[i][j]` for clause `i`, literal `j`, with their gradients
/// with respect to the flattened model outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub costs: Vec<Vec<f64>>,
    pub grads: Vec<Vec<GradRow>>,
    pub n_outputs: usize,
}

impl CostMatrix {
    pub fn new(
        costs: Vec<Vec<f64>>,
        grads: Vec<Vec<GradRow>>,
        n_outputs: usize,
    ) -> Result<Self, EncoderError> {
        if costs.len() != grads.len()
            || costs.iter().zip(&grads).any(|(c, g)| c.len() != g.len())
        {
            return Err(EncoderError::ShapeMismatch(
                "costs and gradient rows differ in shape".into(),
            ));
        }
        for &s in costs.iter().flatten() {
            if !s.is_finite() {
                return Err(EncoderError::NonFinite(s));
            }
            if s < 0.0 {
                return Err(EncoderError::NegativeCost(s));
            }
        }
        for &(k, d) in grads.iter().flatten().flatten() {
            if !d.is_finite() {
                return Err(EncoderError::NonFinite(d));
            }
            if k >= n_outputs {
                return Err(EncoderError::ShapeMismatch(format!(
                    "gradient index {} beyond {} outputs",
                    k, n_outputs
                )));
            }
        }
        Ok(CostMatrix {
            costs,
            grads,
            n_outputs,
        })
    }

    /// A matrix with no output dependence; useful for dual-only problems.
    pub fn from_costs(costs: Vec<Vec<f64>>) -> Result<Self, EncoderError> {
        let grads = costs.iter().map(|c| vec![Vec::new(); c.len()]).collect();
        Self::new(costs, grads, 0)
    }

    /// Hinge costs of the given clauses of a grounded template. The gradient
    /// row of a literal is the atom's linear row when the hinge is active and
    /// empty otherwise (zero subgradient at the kink).
    pub fn from_grounding(
        template: &CnfTemplate,
        grounding: &Grounding,
        clauses: &[usize],
    ) -> Result<Self, EncoderError> {
        if grounding.values.len() != template.atom_count() {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} atom values for {} atoms",
                grounding.values.len(),
                template.atom_count()
            )));
        }
        let offsets = template.clause_offsets();
        let mut costs = Vec::with_capacity(clauses.len());
        let mut grads = Vec::with_capacity(clauses.len());
        for &i in clauses {
            let clause = template.clauses.get(i).ok_or_else(|| {
                EncoderError::ShapeMismatch(format!("clause {} out of range", i))
            })?;
            let mut cs = Vec::with_capacity(clause.len());
            let mut gs = Vec::with_capacity(clause.len());
            for (j, atom) in clause.iter().enumerate() {
                let k = offsets[i] + j;
                let v = grounding.values[k];
                let s = atom_cost(v, atom.cost_bound())?;
                gs.push(if s > 0.0 {
                    grounding.rows[k].clone()
                } else {
                    Vec::new()
                });
                cs.push(s);
            }
            costs.push(cs);
            grads.push(gs);
        }
        Self::new(costs, grads, grounding.layout.len())
    }

    pub fn n_clauses(&self) -> usize {
        self.costs.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.costs.iter().map(Vec::len).collect()
    }
}
