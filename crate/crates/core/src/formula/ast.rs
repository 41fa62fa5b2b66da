use std::fmt;

/// One scaled reference to a model output: `coef * slot.out[index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRef {
    pub slot: String,
    pub index: usize,
    pub coef: f64,
}

/// A linear expression over named model outputs plus a constant offset.
///
/// An expression with no references is a constant term; constants are folded
/// away when the formula is brought to clausal form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermExpr {
    pub refs: Vec<OutputRef>,
    pub offset: f64,
}

impl TermExpr {
    pub fn constant(value: f64) -> Self {
        TermExpr {
            refs: Vec::new(),
            offset: value,
        }
    }

    pub fn output(slot: impl Into<String>, index: usize) -> Self {
        TermExpr {
            refs: vec![OutputRef {
                slot: slot.into(),
                index,
                coef: 1.0,
            }],
            offset: 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn scaled(&self, k: f64) -> Self {
        TermExpr {
            refs: self
                .refs
                .iter()
                .map(|r| OutputRef {
                    coef: r.coef * k,
                    ..r.clone()
                })
                .collect(),
            offset: self.offset * k,
        }
        .simplified()
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn plus(&self, other: &TermExpr) -> Self {
        let mut refs = self.refs.clone();
        refs.extend(other.refs.iter().cloned());
        TermExpr {
            refs,
            offset: self.offset + other.offset,
        }
        .simplified()
    }

    pub fn minus(&self, other: &TermExpr) -> Self {
        self.plus(&other.neg())
    }

    /// Merges repeated references (first occurrence keeps its position) and
    /// drops references whose coefficient cancels to zero.
    pub fn simplified(mut self) -> Self {
        let mut merged: Vec<OutputRef> = Vec::with_capacity(self.refs.len());
        for r in self.refs.drain(..) {
            match merged
                .iter_mut()
                .find(|m| m.slot == r.slot && m.index == r.index)
            {
                Some(m) => m.coef += r.coef,
                None => merged.push(r),
            }
        }
        merged.retain(|r| r.coef != 0.0);
        self.refs = merged;
        // -0.0 prints as "-0"; keep offsets canonical
        if self.offset == 0.0 {
            self.offset = 0.0;
        }
        self
    }

    /// Evaluates the term given a lookup for `slot.out[index]`.
    pub fn eval_with<F>(&self, mut lookup: F) -> f64
    where
        F: FnMut(&str, usize) -> f64,
    {
        self.refs
            .iter()
            .fold(self.offset, |acc, r| acc + r.coef * lookup(&r.slot, r.index))
    }

    pub fn mentions_slot(&self, slot: &str) -> bool {
        self.refs.iter().any(|r| r.slot == slot)
    }
}

/// The canonical atomic formula `term <= bound` (or `term < bound` when
/// `strict`).
///
/// `margin` is the gap used by the cost encoding for strict atoms: a strict
/// atom costs `max(term - (bound - margin), 0)`. It is zero until negation
/// normal form assigns it.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub term: TermExpr,
    pub bound: f64,
    pub strict: bool,
    pub margin: f64,
}

impl Atom {
    pub fn le(term: TermExpr, bound: f64) -> Self {
        Atom {
            term,
            bound,
            strict: false,
            margin: 0.0,
        }
    }

    pub fn lt(term: TermExpr, bound: f64) -> Self {
        Atom {
            term,
            bound,
            strict: true,
            margin: 0.0,
        }
    }

    /// `!(t <= c)` is `-t < -c`; `!(t < c)` is `-t <= -c`.
    pub fn negated(&self) -> Atom {
        Atom {
            term: self.term.neg(),
            bound: -self.bound,
            strict: !self.strict,
            margin: 0.0,
        }
    }

    /// The threshold used by the hinge cost.
    pub fn cost_bound(&self) -> f64 {
        if self.strict {
            self.bound - self.margin
        } else {
            self.bound
        }
    }

    /// Exact boolean semantics of the comparison.
    pub fn holds(&self, value: f64) -> bool {
        if self.strict {
            value < self.bound
        } else {
            value <= self.bound
        }
    }

    /// Same atom with the constant part of the term moved into the bound.
    pub fn canonical(&self) -> Atom {
        Atom {
            term: TermExpr {
                refs: self.term.refs.clone(),
                offset: 0.0,
            },
            bound: self.bound - self.term.offset,
            strict: self.strict,
            margin: self.margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormulaNode {
    Atom(Atom),
    Not(Box<FormulaNode>),
    And(Vec<FormulaNode>),
    Or(Vec<FormulaNode>),
    Implies(Box<FormulaNode>, Box<FormulaNode>),
    CompareEq(TermExpr, f64),
    CompareNeq(TermExpr, f64),
}

impl FormulaNode {
    pub fn not(child: FormulaNode) -> Self {
        FormulaNode::Not(Box::new(child))
    }

    pub fn implies(lhs: FormulaNode, rhs: FormulaNode) -> Self {
        FormulaNode::Implies(Box::new(lhs), Box::new(rhs))
    }

    /// Recursive boolean evaluation with exact comparison semantics.
    pub fn eval<F>(&self, lookup: &F) -> bool
    where
        F: Fn(&str, usize) -> f64,
    {
        match self {
            FormulaNode::Atom(a) => a.holds(a.term.eval_with(lookup)),
            FormulaNode::Not(c) => !c.eval(lookup),
            FormulaNode::And(cs) => cs.iter().all(|c| c.eval(lookup)),
            FormulaNode::Or(cs) => cs.iter().any(|c| c.eval(lookup)),
            FormulaNode::Implies(a, b) => !a.eval(lookup) || b.eval(lookup),
            FormulaNode::CompareEq(t, c) => t.eval_with(lookup) == *c,
            FormulaNode::CompareNeq(t, c) => t.eval_with(lookup) != *c,
        }
    }

    /// Visits every term in the tree.
    pub fn for_each_term<F: FnMut(&TermExpr)>(&self, f: &mut F) {
        match self {
            FormulaNode::Atom(a) => f(&a.term),
            FormulaNode::Not(c) => c.for_each_term(f),
            FormulaNode::And(cs) | FormulaNode::Or(cs) => {
                cs.iter().for_each(|c| c.for_each_term(f))
            }
            FormulaNode::Implies(a, b) => {
                a.for_each_term(f);
                b.for_each_term(f);
            }
            FormulaNode::CompareEq(t, _) | FormulaNode::CompareNeq(t, _) => f(t),
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    // `{}` on f64 is the shortest representation that round-trips exactly.
    write!(f, "{}", x)
}

impl fmt::Display for TermExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for r in &self.refs {
            let (sign, mag) = if r.coef < 0.0 {
                ("-", -r.coef)
            } else {
                ("+", r.coef)
            };
            if first {
                if sign == "-" {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {} ", sign)?;
            }
            if mag != 1.0 {
                write_number(f, mag)?;
                f.write_str("*")?;
            }
            write!(f, "{}.out[{}]", r.slot, r.index)?;
            first = false;
        }
        if first {
            write_number(f, self.offset)?;
        } else if self.offset != 0.0 {
            let sign = if self.offset < 0.0 { '-' } else { '+' };
            write!(f, " {} ", sign)?;
            write_number(f, self.offset.abs())?;
        }
        Ok(())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.term, if self.strict { "<" } else { "<=" })?;
        write_number(f, self.bound)
    }
}

impl fmt::Display for FormulaNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn joined(
            f: &mut fmt::Formatter<'_>,
            cs: &[FormulaNode],
            op: &str,
        ) -> fmt::Result {
            f.write_str("(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {} ", op)?;
                }
                write!(f, "{}", c)?;
            }
            f.write_str(")")
        }
        match self {
            FormulaNode::Atom(a) => write!(f, "{}", a),
            FormulaNode::Not(c) => write!(f, "!({})", c),
            FormulaNode::And(cs) => joined(f, cs, "&"),
            FormulaNode::Or(cs) => joined(f, cs, "|"),
            FormulaNode::Implies(a, b) => write!(f, "({} -> {})", a, b),
            FormulaNode::CompareEq(t, c) => {
                write!(f, "{} == ", t)?;
                write_number(f, *c)
            }
            FormulaNode::CompareNeq(t, c) => {
                write!(f, "{} != ", t)?;
                write_number(f, *c)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negation_flips_strictness() {
        let a = Atom::le(TermExpr::output("v", 0), 3.0);
        let n = a.negated();
        assert!(n.strict);
        assert_eq!(n.bound, -3.0);
        assert_eq!(n.term.refs[0].coef, -1.0);
        assert_eq!(n.negated().term, a.term);
        assert!(!n.negated().strict);
    }

    #[test]
    fn simplify_merges_and_cancels() {
        let t = TermExpr::output("x", 1)
            .plus(&TermExpr::output("x", 2))
            .minus(&TermExpr::output("x", 1));
        assert_eq!(t.refs.len(), 1);
        assert_eq!(t.refs[0].index, 2);
    }

    #[test]
    fn term_display() {
        let t = TermExpr::output("a", 1)
            .minus(&TermExpr::output("a", 2).scaled(2.5))
            .plus(&TermExpr::constant(-0.5));
        assert_eq!(t.to_string(), "a.out[1] - 2.5*a.out[2] - 0.5");
        assert_eq!(TermExpr::output("x", 6).neg().to_string(), "-x.out[6]");
    }
}
