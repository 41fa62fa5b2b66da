//! Constraint language: parsing, normal forms and grounding.
//!
//! Atoms are kept in the canonical form `term <= bound`. A formula goes
//! through [`parse`], [`desugar`], [`to_nnf`] and [`to_cnf`]; [`compile`]
//! runs the whole chain.

mod ast;
mod cnf;
mod ground;
mod normal;
mod parser;

use thiserror::Error;

pub use ast::{Atom, FormulaNode, OutputRef, TermExpr};
pub use cnf::{Clause, CnfTemplate, GroupMode, TolMode};
pub use ground::{ground, Bindings, Grounding, OutputLayout};
pub use normal::{desugar, to_cnf, to_cnf_capped, to_nnf, DEFAULT_CLAUSE_CAP};
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulaError {
    #[error("syntax error at {line}:{column}: found {found}, expected one of {}", .expected.join(", "))]
    Syntax {
        line: usize,
        column: usize,
        found: String,
        expected: Vec<String>,
    },

    #[error("no binding for slot `{0}`")]
    UnknownSlot(String),

    #[error("{slot}.out[{index}] is out of range for arity {arity}")]
    IndexOutOfRange {
        slot: String,
        index: usize,
        arity: usize,
    },

    #[error("clausal form exceeds {cap} clauses")]
    Blowup { cap: usize },

    #[error("constant folding produced an empty clause")]
    UnsatisfiableConstant,

    #[error("expected {expected} atom values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
}

/// Options for [`compile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileOptions {
    /// Cost gap for strict atoms.
    pub margin: f64,
    pub cap: usize,
    pub grouping: GroupMode,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            margin: 0.01,
            cap: DEFAULT_CLAUSE_CAP,
            grouping: GroupMode::PerClause,
        }
    }
}

/// Parses and normalizes a constraint in one go.
pub fn compile(text: &str, opts: &CompileOptions) -> Result<CnfTemplate, FormulaError> {
    let f = parse(text)?;
    compile_formula(&f, opts)
}

pub fn compile_formula(f: &FormulaNode, opts: &CompileOptions) -> Result<CnfTemplate, FormulaError> {
    let nnf = to_nnf(&desugar(f), opts.margin);
    Ok(to_cnf_capped(&nnf, opts.cap)?.with_grouping(opts.grouping))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compile_confidence_rule() {
        let t = compile("rx.p[1] >= 0.95 -> x.p[3] >= 0.95", &CompileOptions::default()).unwrap();
        assert_eq!(t.clauses.len(), 1);
        assert_eq!(t.clauses[0].len(), 2);
        // !(−rx.p1 <= −0.95) is rx.p1 < 0.95
        let first = &t.clauses[0][0];
        assert!(first.strict);
        assert_eq!(first.bound, 0.95);
        assert_eq!(first.margin, 0.01);
        assert_eq!(t.slot_names.iter().cloned().collect::<Vec<_>>(), vec!["rx", "x"]);
    }

    #[test]
    fn error_messages_render() {
        let e = parse("a.d[1] <= a.d[2] + a.d[3] ->").unwrap_err();
        let msg = e.to_string();
        assert!(msg.starts_with("syntax error at 1:"), "{}", msg);
        assert!(msg.contains("term"), "{}", msg);
    }
}
