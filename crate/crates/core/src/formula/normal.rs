use super::ast::{Atom, FormulaNode};
use super::cnf::{CnfTemplate, GroupMode};
use super::FormulaError;

/// Default cap on the number of clauses produced by distribution.
pub const DEFAULT_CLAUSE_CAP: usize = 4096;

/// Rewrites implications and (in)equalities so only `And`, `Or`, `Not` and
/// atoms remain.
pub fn desugar(f: &FormulaNode) -> FormulaNode {
    match f {
        FormulaNode::Atom(a) => FormulaNode::Atom(a.clone()),
        FormulaNode::Not(c) => FormulaNode::not(desugar(c)),
        FormulaNode::And(cs) => FormulaNode::And(cs.iter().map(desugar).collect()),
        FormulaNode::Or(cs) => FormulaNode::Or(cs.iter().map(desugar).collect()),
        FormulaNode::Implies(a, b) => {
            FormulaNode::Or(vec![FormulaNode::not(desugar(a)), desugar(b)])
        }
        FormulaNode::CompareEq(t, c) => FormulaNode::And(vec![
            FormulaNode::Atom(Atom::le(t.clone(), *c)),
            FormulaNode::Atom(Atom::le(t.neg(), neg0(*c))),
        ]),
        FormulaNode::CompareNeq(t, c) => FormulaNode::Or(vec![
            FormulaNode::Atom(Atom::lt(t.clone(), *c)),
            FormulaNode::Atom(Atom::lt(t.neg(), neg0(*c))),
        ]),
    }
}

fn neg0(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        -x
    }
}

/// Pushes negations down to the atoms and flattens nested connectives of the
/// same kind. Strict atoms receive `margin` as their cost gap.
///
/// Expects a desugared formula; any remaining sugar is desugared first.
pub fn to_nnf(f: &FormulaNode, margin: f64) -> FormulaNode {
    nnf(f, false, margin)
}

fn nnf(f: &FormulaNode, negate: bool, margin: f64) -> FormulaNode {
    match f {
        FormulaNode::Atom(a) => {
            let mut a = if negate { a.negated() } else { a.clone() };
            a.margin = if a.strict { margin } else { 0.0 };
            FormulaNode::Atom(a)
        }
        FormulaNode::Not(c) => nnf(c, !negate, margin),
        FormulaNode::And(cs) | FormulaNode::Or(cs) => {
            let is_and = matches!(f, FormulaNode::And(_)) != negate;
            let mut flat = Vec::with_capacity(cs.len());
            for c in cs {
                match nnf(c, negate, margin) {
                    FormulaNode::And(inner) if is_and => flat.extend(inner),
                    FormulaNode::Or(inner) if !is_and => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            if flat.len() == 1 {
                flat.pop().unwrap()
            } else if is_and {
                FormulaNode::And(flat)
            } else {
                FormulaNode::Or(flat)
            }
        }
        sugar => nnf(&desugar(sugar), negate, margin),
    }
}

/// Distributes disjunction over conjunction and folds constant atoms.
pub fn to_cnf(f: &FormulaNode) -> Result<CnfTemplate, FormulaError> {
    to_cnf_capped(f, DEFAULT_CLAUSE_CAP)
}

pub fn to_cnf_capped(f: &FormulaNode, cap: usize) -> Result<CnfTemplate, FormulaError> {
    let raw = distribute(f, cap)?;
    let mut clauses = Vec::with_capacity(raw.len());
    for clause in raw {
        let mut kept = Vec::with_capacity(clause.len());
        let mut satisfied = false;
        for atom in clause {
            if atom.term.is_constant() {
                if atom.holds(atom.term.offset) {
                    satisfied = true;
                    break;
                }
            } else {
                kept.push(atom);
            }
        }
        if satisfied {
            continue;
        }
        if kept.is_empty() {
            return Err(FormulaError::UnsatisfiableConstant);
        }
        clauses.push(kept);
    }
    Ok(CnfTemplate::new(clauses, GroupMode::PerClause))
}

fn distribute(f: &FormulaNode, cap: usize) -> Result<Vec<Vec<Atom>>, FormulaError> {
    match f {
        FormulaNode::Atom(a) => Ok(vec![vec![a.clone()]]),
        FormulaNode::And(cs) => {
            let mut out = Vec::new();
            for c in cs {
                out.extend(distribute(c, cap)?);
                if out.len() > cap {
                    return Err(FormulaError::Blowup { cap });
                }
            }
            Ok(out)
        }
        FormulaNode::Or(cs) => {
            let mut acc: Vec<Vec<Atom>> = vec![Vec::new()];
            for c in cs {
                let part = distribute(c, cap)?;
                if acc.len().saturating_mul(part.len()) > cap {
                    return Err(FormulaError::Blowup { cap });
                }
                let mut next = Vec::with_capacity(acc.len() * part.len());
                for left in &acc {
                    for right in &part {
                        let mut clause = left.clone();
                        clause.extend(right.iter().cloned());
                        next.push(clause);
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
        // not in NNF yet; normalize with a zero margin
        other => distribute(&to_nnf(other, 0.0), cap),
    }
}
