//! Recursive-descent parser for the constraint language.
//!
//! ```text
//! formula := impld
//! impld   := disj ("->" disj)*          right associative
//! disj    := conj ("|" conj)*
//! conj    := lit ("&" lit)*
//! lit     := "!" lit | "(" formula ")" | atom
//! atom    := term cmp term              cmp: <= < >= > == !=
//! term    := ["-"] addend (("+" | "-") addend)*
//! addend  := [number "*"] slotref
//! slotref := ident "." ("out" | "p" | "d") "[" int "]" | number
//! ```
//!
//! The right-hand side of a comparison may be any term; it is moved to the
//! left so every atom ends up as `linear term <= constant`. `#` starts a
//! comment that runs to the end of the line.

use super::ast::{Atom, FormulaNode, OutputRef, TermExpr};
use super::FormulaError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Dot,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Plus,
    Minus,
    Star,
    Cmp(CmpOp),
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::Number(s) => format!("number `{}`", s),
            Tok::Dot => "`.`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Cmp(_) => "comparison".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, FormulaError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, found: String, expected: &[&str]| FormulaError::Syntax {
        line,
        column,
        found,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    };
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        let mut push = |tok: Tok, width: usize, i: &mut usize, col: &mut usize| {
            out.push(Spanned {
                tok,
                line: tline,
                column: tcol,
            });
            *i += width;
            *col += width;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '.' => push(Tok::Dot, 1, &mut i, &mut col),
            '[' => push(Tok::LBracket, 1, &mut i, &mut col),
            ']' => push(Tok::RBracket, 1, &mut i, &mut col),
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            '&' => push(Tok::Amp, 1, &mut i, &mut col),
            '|' => push(Tok::Pipe, 1, &mut i, &mut col),
            '+' => push(Tok::Plus, 1, &mut i, &mut col),
            '*' => push(Tok::Star, 1, &mut i, &mut col),
            '-' if chars.get(i + 1) == Some(&'>') => push(Tok::Arrow, 2, &mut i, &mut col),
            '-' => push(Tok::Minus, 1, &mut i, &mut col),
            '!' if chars.get(i + 1) == Some(&'=') => {
                push(Tok::Cmp(CmpOp::Ne), 2, &mut i, &mut col)
            }
            '!' => push(Tok::Bang, 1, &mut i, &mut col),
            '<' if chars.get(i + 1) == Some(&'=') => {
                push(Tok::Cmp(CmpOp::Le), 2, &mut i, &mut col)
            }
            '<' => push(Tok::Cmp(CmpOp::Lt), 1, &mut i, &mut col),
            '>' if chars.get(i + 1) == Some(&'=') => {
                push(Tok::Cmp(CmpOp::Ge), 2, &mut i, &mut col)
            }
            '>' => push(Tok::Cmp(CmpOp::Gt), 1, &mut i, &mut col),
            '=' if chars.get(i + 1) == Some(&'=') => {
                push(Tok::Cmp(CmpOp::Eq), 2, &mut i, &mut col)
            }
            c if c.is_ascii_digit() => {
                let start = i;
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text: String = chars[start..j].iter().collect();
                push(Tok::Number(text), j - start, &mut i, &mut col);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let text: String = chars[start..j].iter().collect();
                push(Tok::Ident(text), j - start, &mut i, &mut col);
            }
            other => {
                return Err(err(
                    line,
                    col,
                    format!("character `{}`", other),
                    &["term", "connective", "comparison"],
                ))
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> FormulaError {
        let t = &self.toks[self.pos];
        FormulaError::Syntax {
            line: t.line,
            column: t.column,
            found: t.tok.describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<(), FormulaError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[name]))
        }
    }

    fn formula(&mut self) -> Result<FormulaNode, FormulaError> {
        self.implication()
    }

    fn implication(&mut self) -> Result<FormulaNode, FormulaError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.implication()?;
            Ok(FormulaNode::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn disjunction(&mut self) -> Result<FormulaNode, FormulaError> {
        let mut parts = vec![self.conjunction()?];
        while *self.peek() == Tok::Pipe {
            self.bump();
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            FormulaNode::Or(parts)
        })
    }

    fn conjunction(&mut self) -> Result<FormulaNode, FormulaError> {
        let mut parts = vec![self.literal()?];
        while *self.peek() == Tok::Amp {
            self.bump();
            parts.push(self.literal()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            FormulaNode::And(parts)
        })
    }

    fn literal(&mut self) -> Result<FormulaNode, FormulaError> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                Ok(FormulaNode::not(self.literal()?))
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Ident(_) | Tok::Number(_) | Tok::Minus => self.atom(),
            _ => Err(self.error(&["`!`", "`(`", "term"])),
        }
    }

    fn atom(&mut self) -> Result<FormulaNode, FormulaError> {
        let lhs = self.term()?;
        let op = match self.peek() {
            Tok::Cmp(op) => *op,
            _ => {
                return Err(self.error(&["`<=`", "`<`", "`>=`", "`>`", "`==`", "`!=`", "`+`", "`-`"]))
            }
        };
        self.bump();
        let rhs = self.term()?;
        // lhs op rhs  <=>  (lhs - rhs) op 0  <=>  refs op -constant
        let diff = lhs.minus(&rhs);
        let bound = if diff.offset == 0.0 { 0.0 } else { -diff.offset };
        let refs_only = TermExpr {
            refs: diff.refs,
            offset: 0.0,
        };
        let neg_bound = if bound == 0.0 { 0.0 } else { -bound };
        Ok(match op {
            CmpOp::Le => FormulaNode::Atom(Atom::le(refs_only, bound)),
            CmpOp::Lt => FormulaNode::Atom(Atom::lt(refs_only, bound)),
            CmpOp::Ge => FormulaNode::Atom(Atom::le(refs_only.neg(), neg_bound)),
            CmpOp::Gt => FormulaNode::Atom(Atom::lt(refs_only.neg(), neg_bound)),
            CmpOp::Eq => FormulaNode::CompareEq(refs_only, bound),
            CmpOp::Ne => FormulaNode::CompareNeq(refs_only, bound),
        })
    }

    fn term(&mut self) -> Result<TermExpr, FormulaError> {
        let mut negate = false;
        if *self.peek() == Tok::Minus {
            self.bump();
            negate = true;
        }
        let first = self.addend()?;
        let mut acc = if negate { first.neg() } else { first };
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = acc.plus(&self.addend()?);
                }
                Tok::Minus => {
                    self.bump();
                    acc = acc.minus(&self.addend()?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn addend(&mut self) -> Result<TermExpr, FormulaError> {
        match self.peek().clone() {
            Tok::Number(text) => {
                self.bump();
                let value = parse_number(&text);
                if *self.peek() == Tok::Star {
                    self.bump();
                    Ok(self.slotref()?.scaled(value))
                } else {
                    Ok(TermExpr::constant(value))
                }
            }
            Tok::Ident(_) => self.slotref(),
            _ => Err(self.error(&["number", "slot reference"])),
        }
    }

    fn slotref(&mut self) -> Result<TermExpr, FormulaError> {
        match self.peek().clone() {
            Tok::Number(text) => {
                self.bump();
                Ok(TermExpr::constant(parse_number(&text)))
            }
            Tok::Ident(slot) => {
                self.bump();
                self.expect(Tok::Dot, "`.`")?;
                match self.peek() {
                    Tok::Ident(h) if h == "out" || h == "p" || h == "d" => {
                        self.bump();
                    }
                    _ => return Err(self.error(&["`out`", "`p`", "`d`"])),
                }
                self.expect(Tok::LBracket, "`[`")?;
                let index = match self.peek().clone() {
                    Tok::Number(text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                        self.bump();
                        text.parse::<usize>()
                            .map_err(|_| self.error(&["output index"]))?
                    }
                    _ => return Err(self.error(&["output index"])),
                };
                self.expect(Tok::RBracket, "`]`")?;
                Ok(TermExpr {
                    refs: vec![OutputRef {
                        slot,
                        index,
                        coef: 1.0,
                    }],
                    offset: 0.0,
                })
            }
            _ => Err(self.error(&["number", "slot reference"])),
        }
    }
}

fn parse_number(text: &str) -> f64 {
    // The lexer only produces well-formed decimal literals.
    text.parse::<f64>().expect("lexer produced a malformed number")
}

/// Parses constraint source text into a formula tree.
pub fn parse(src: &str) -> Result<FormulaNode, FormulaError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error(&["`&`", "`|`", "`->`", "end of input"]));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(f: &FormulaNode) -> &Atom {
        match f {
            FormulaNode::Atom(a) => a,
            other => panic!("expected atom, got {:?}", other),
        }
    }

    #[test]
    fn ge_is_canonicalized_by_sign_flip() {
        let f = parse("x.p[6] >= 0.95").unwrap();
        let a = atom(&f);
        assert_eq!(a.term, TermExpr::output("x", 6).neg());
        assert_eq!(a.bound, -0.95);
        assert!(!a.strict);
    }

    #[test]
    fn softened_rule_is_a_disjunction() {
        let f = parse("rx.p[9] <= 0.05 | x.p[6] >= 0.95").unwrap();
        match f {
            FormulaNode::Or(cs) => {
                assert_eq!(cs.len(), 2);
                assert_eq!(atom(&cs[0]).bound, 0.05);
                assert_eq!(atom(&cs[1]).bound, -0.95);
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn dangling_implication_is_a_syntax_error() {
        let err = parse("a.d[1] <= a.d[2] + a.d[3] ->").unwrap_err();
        match err {
            FormulaError::Syntax {
                line,
                column,
                expected,
                ..
            } => {
                assert_eq!(line, 1);
                assert_eq!(column, 29);
                assert!(expected.iter().any(|e| e == "term"));
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn term_on_the_right_moves_left() {
        let f = parse("a.d[1] <= a.d[2] + a.d[3] + 2").unwrap();
        let a = atom(&f);
        assert_eq!(a.bound, 2.0);
        let coefs: Vec<f64> = a.term.refs.iter().map(|r| r.coef).collect();
        assert_eq!(coefs, vec![1.0, -1.0, -1.0]);
    }

    #[test]
    fn precedence_and_associativity() {
        let f = parse("a.p[0] <= 1 | a.p[1] <= 1 & a.p[2] <= 1 -> b.p[0] <= 1 -> b.p[1] <= 1")
            .unwrap();
        match f {
            FormulaNode::Implies(lhs, rhs) => {
                assert!(matches!(*lhs, FormulaNode::Or(ref cs) if cs.len() == 2));
                assert!(matches!(*rhs, FormulaNode::Implies(_, _)));
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn comments_and_multiline_positions() {
        let f = parse("# header\n x.out[0] <= 1 &\n  x.out[1] == 2").unwrap();
        assert!(matches!(f, FormulaNode::And(ref cs) if cs.len() == 2));
        let err = parse("x.out[0] <= 1 &\n  x.q[1] == 2").unwrap_err();
        match err {
            FormulaError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 5)),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn coefficients_and_aliases() {
        let f = parse("-2*x.d[1] + 0.5*x.out[1] - x.p[3] > -1e-2").unwrap();
        let a = atom(&f);
        assert!(a.strict);
        assert_eq!(a.bound, 1e-2);
        assert_eq!(a.term.refs.len(), 2);
        assert_eq!(a.term.refs[0].coef, 1.5);
        assert_eq!(a.term.refs[1].coef, 1.0);
    }

    #[test]
    fn neq_and_eq() {
        assert!(matches!(parse("v.out[0] != 2").unwrap(), FormulaNode::CompareNeq(_, b) if b == 2.0));
        assert!(matches!(parse("v.out[0] == 2").unwrap(), FormulaNode::CompareEq(_, b) if b == 2.0));
    }

    #[test]
    fn trailing_garbage() {
        assert!(parse("x.out[0] <= 1 )").is_err());
        assert!(parse("x.out[0] <=").is_err());
        assert!(parse("x.out[1.5] <= 1").is_err());
        assert!(parse("").is_err());
    }
}
