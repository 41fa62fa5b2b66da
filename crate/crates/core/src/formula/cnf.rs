use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Atom, FormulaNode};
use super::FormulaError;

pub type Clause = Vec<Atom>;

/// How clauses are mapped onto the dimensions of the cost vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMode {
    /// One dimension per clause.
    #[default]
    PerClause,
    /// All clauses share a single dimension.
    Single,
}

/// Which atoms the satisfaction tolerance applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TolMode {
    /// `v <= c - tol` for every atom.
    #[default]
    All,
    /// `v <= c - tol` for strict atoms, `v <= c` otherwise.
    StrictOnly,
    /// `v <= c + tol` for every atom (tolerance read as slack).
    Relaxed,
}

/// A constraint in conjunctive normal form over `term <= bound` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct CnfTemplate {
    pub clauses: Vec<Clause>,
    pub slot_names: BTreeSet<String>,
    /// `group_map[i]` is the cost dimension of clause `i`.
    pub group_map: Vec<usize>,
    pub n_groups: usize,
}

impl CnfTemplate {
    pub fn new(clauses: Vec<Clause>, mode: GroupMode) -> Self {
        let slot_names = clauses
            .iter()
            .flatten()
            .flat_map(|a| a.term.refs.iter().map(|r| r.slot.clone()))
            .collect();
        let mut t = CnfTemplate {
            clauses,
            slot_names,
            group_map: Vec::new(),
            n_groups: 0,
        };
        t.regroup(mode);
        t
    }

    pub fn regroup(&mut self, mode: GroupMode) {
        let n = self.clauses.len();
        match mode {
            GroupMode::PerClause => {
                self.group_map = (0..n).collect();
                self.n_groups = n;
            }
            GroupMode::Single => {
                self.group_map = vec![0; n];
                self.n_groups = usize::from(n > 0);
            }
        }
    }

    pub fn with_grouping(mut self, mode: GroupMode) -> Self {
        self.regroup(mode);
        self
    }

    /// Clause indices for each cost dimension.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_groups];
        for (clause, &g) in self.group_map.iter().enumerate() {
            out[g].push(clause);
        }
        out
    }

    pub fn atom_count(&self) -> usize {
        self.clauses.iter().map(Vec::len).sum()
    }

    /// Atoms in clause-major order; the order used by grounded value vectors.
    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.clauses.iter().flatten()
    }

    /// Offset of each clause's first atom in the flat atom order.
    pub fn clause_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.clauses
            .iter()
            .map(|c| {
                let o = acc;
                acc += c.len();
                o
            })
            .collect()
    }

    /// Whether a single atom counts as satisfied at value `v`.
    pub fn atom_satisfied(atom: &Atom, v: f64, tol: f64, mode: TolMode) -> bool {
        match mode {
            TolMode::All => v <= atom.bound - tol && (!atom.strict || v < atom.bound),
            TolMode::StrictOnly => {
                if atom.strict {
                    v <= atom.bound - tol && v < atom.bound
                } else {
                    v <= atom.bound
                }
            }
            TolMode::Relaxed => {
                if tol > 0.0 {
                    v <= atom.bound + tol
                } else {
                    atom.holds(v)
                }
            }
        }
    }

    /// Satisfaction under `v <= bound - tol` for every atom.
    pub fn eval_bool(&self, state: &[f64], tol: f64) -> Result<bool, FormulaError> {
        self.eval_bool_with(state, tol, TolMode::All)
    }

    pub fn eval_bool_with(
        &self,
        state: &[f64],
        tol: f64,
        mode: TolMode,
    ) -> Result<bool, FormulaError> {
        let per_clause = self.clause_satisfaction(state, tol, mode)?;
        Ok(per_clause.into_iter().all(|s| s))
    }

    pub fn clause_satisfaction(
        &self,
        state: &[f64],
        tol: f64,
        mode: TolMode,
    ) -> Result<Vec<bool>, FormulaError> {
        let expected = self.atom_count();
        if state.len() != expected {
            return Err(FormulaError::ArityMismatch {
                expected,
                got: state.len(),
            });
        }
        let mut k = 0;
        Ok(self
            .clauses
            .iter()
            .map(|clause| {
                let sat = clause
                    .iter()
                    .zip(&state[k..k + clause.len()])
                    .any(|(a, &v)| Self::atom_satisfied(a, v, tol, mode));
                k += clause.len();
                sat
            })
            .collect())
    }

    /// Rebuilds an `And` of `Or`s; used for round trips.
    pub fn to_formula(&self) -> FormulaNode {
        let clause = |c: &Clause| {
            let mut lits: Vec<FormulaNode> = c.iter().cloned().map(FormulaNode::Atom).collect();
            if lits.len() == 1 {
                lits.pop().unwrap()
            } else {
                FormulaNode::Or(lits)
            }
        };
        let mut cs: Vec<FormulaNode> = self.clauses.iter().map(clause).collect();
        match cs.len() {
            0 => FormulaNode::Atom(Atom::le(super::ast::TermExpr::constant(0.0), 1.0)),
            1 => cs.pop().unwrap(),
            _ => FormulaNode::And(cs),
        }
    }

    /// Canonical atoms per clause (constant parts folded into bounds, margin
    /// dropped); two templates with equal canonical clauses are equivalent.
    pub fn canonical_clauses(&self) -> Vec<Vec<Atom>> {
        self.clauses
            .iter()
            .map(|c| {
                c.iter()
                    .map(|a| {
                        let mut a = a.canonical();
                        a.margin = 0.0;
                        a
                    })
                    .collect()
            })
            .collect()
    }
}

impl fmt::Display for CnfTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.clauses.is_empty() {
            return f.write_str("0 <= 1");
        }
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" &\n")?;
            }
            f.write_str("(")?;
            for (j, a) in clause.iter().enumerate() {
                if j > 0 {
                    f.write_str(" | ")?;
                }
                write!(f, "{}", a)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::ast::TermExpr;
    use super::*;

    fn single(bound: f64) -> CnfTemplate {
        CnfTemplate::new(
            vec![vec![Atom::le(TermExpr::output("v", 0), bound)]],
            GroupMode::PerClause,
        )
    }

    #[test]
    fn tolerance_applies_below_bound() {
        let t = single(1.0);
        assert!(t.eval_bool(&[0.99], 0.01).unwrap());
        assert!(!t.eval_bool(&[0.995], 0.01).unwrap());
    }

    #[test]
    fn empty_conjunction_is_true() {
        let t = CnfTemplate::new(vec![], GroupMode::PerClause);
        assert!(t.eval_bool(&[], 0.01).unwrap());
        assert_eq!(t.n_groups, 0);
    }

    #[test]
    fn arity_mismatch() {
        let t = single(1.0);
        assert!(matches!(
            t.eval_bool(&[1.0, 2.0], 0.0),
            Err(FormulaError::ArityMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn tol_modes() {
        let t = single(1.0);
        assert!(t.eval_bool_with(&[0.995], 0.01, TolMode::StrictOnly).unwrap());
        assert!(t.eval_bool_with(&[1.5], 1.0, TolMode::Relaxed).unwrap());
        assert!(!t.eval_bool_with(&[2.5], 1.0, TolMode::Relaxed).unwrap());
        let strict = CnfTemplate::new(
            vec![vec![Atom::lt(TermExpr::output("v", 0), 1.0)]],
            GroupMode::PerClause,
        );
        assert!(!strict.eval_bool(&[1.0], 0.0).unwrap());
        assert!(strict.eval_bool(&[0.999], 0.0).unwrap());
        assert!(!strict.eval_bool_with(&[0.995], 0.01, TolMode::StrictOnly).unwrap());
    }

    #[test]
    fn grouping() {
        let c = |i| vec![Atom::le(TermExpr::output("v", i), 0.0)];
        let t = CnfTemplate::new(vec![c(0), c(1), c(2)], GroupMode::PerClause);
        assert_eq!(t.n_groups, 3);
        assert_eq!(t.groups(), vec![vec![0], vec![1], vec![2]]);
        let t = t.with_grouping(GroupMode::Single);
        assert_eq!(t.n_groups, 1);
        assert_eq!(t.groups(), vec![vec![0, 1, 2]]);
    }
}
