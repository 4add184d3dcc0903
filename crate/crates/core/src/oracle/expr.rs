//! Mini expression grammar with exact rational evaluation.
//!
//! Covers rational literals, variables, the binary operators
//! + - * / ^ (integer exponent), unary negation, and parentheses.
//! Anything outside the grammar is an abstention, never an error.

use std::collections::{BTreeMap, BTreeSet};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{Pow, ToPrimitive, Zero};

use crate::oracle::token::{is_number, tokenize};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(BigRational),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i64),
    Neg(Box<Expr>),
}

const MAX_EXPONENT: i64 = 32;

fn rat_pow(base: &BigRational, exp: i64) -> Option<BigRational> {
    if exp.abs() > MAX_EXPONENT {
        return None;
    }
    if exp == 0 {
        return Some(BigRational::from_integer(BigInt::from(1)));
    }
    if base.is_zero() && exp < 0 {
        return None;
    }
    let k = exp.unsigned_abs() as u32;
    let n = Pow::pow(base.numer(), k);
    let d = Pow::pow(base.denom(), k);
    let p = BigRational::new(n, d);
    if exp < 0 {
        Some(p.recip())
    } else {
        Some(p)
    }
}

impl Expr {
    /// Exact evaluation; `None` on division by zero or zero raised to a
    /// negative power.
    pub fn eval_rational(&self, env: &BTreeMap<String, BigRational>) -> Option<BigRational> {
        match self {
            Expr::Num(r) => Some(r.clone()),
            Expr::Var(name) => env.get(name).cloned(),
            Expr::Add(a, b) => Some(a.eval_rational(env)? + b.eval_rational(env)?),
            Expr::Sub(a, b) => Some(a.eval_rational(env)? - b.eval_rational(env)?),
            Expr::Mul(a, b) => Some(a.eval_rational(env)? * b.eval_rational(env)?),
            Expr::Div(a, b) => {
                let d = b.eval_rational(env)?;
                if d.is_zero() {
                    return None;
                }
                Some(a.eval_rational(env)? / d)
            }
            Expr::Pow(a, k) => rat_pow(&a.eval_rational(env)?, *k),
            Expr::Neg(a) => Some(-a.eval_rational(env)?),
        }
    }

    /// Floating-point evaluation; `None` when the result is not finite.
    pub fn eval_f64(&self, env: &BTreeMap<String, f64>) -> Option<f64> {
        let v = match self {
            Expr::Num(r) => r.to_f64()?,
            Expr::Var(name) => *env.get(name)?,
            Expr::Add(a, b) => a.eval_f64(env)? + b.eval_f64(env)?,
            Expr::Sub(a, b) => a.eval_f64(env)? - b.eval_f64(env)?,
            Expr::Mul(a, b) => a.eval_f64(env)? * b.eval_f64(env)?,
            Expr::Div(a, b) => a.eval_f64(env)? / b.eval_f64(env)?,
            Expr::Pow(a, k) => a.eval_f64(env)?.powi(*k as i32),
            Expr::Neg(a) => -a.eval_f64(env)?,
        };
        if v.is_finite() {
            Some(v)
        } else {
            None
        }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Pow(a, _) | Expr::Neg(a) => a.collect_vars(out),
        }
    }

    /// True if a division or negative power occurs anywhere in the tree.
    pub fn has_division(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Div(_, _) => true,
            Expr::Pow(a, k) => *k < 0 || a.has_division(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.has_division() || b.has_division()
            }
            Expr::Neg(a) => a.has_division(),
        }
    }
}

pub fn parse_number(token: &str) -> Option<BigRational> {
    if !is_number(token) {
        return None;
    }
    let (sign, body) = match token.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, token),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    let digits: String = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().ok()?;
    let denom = Pow::pow(&BigInt::from(10), frac_part.len() as u32);
    Some(BigRational::new(numer * BigInt::from(sign), denom))
}

struct Parser<'a> {
    tokens: &'a [String],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(|s| s.as_str())
    }

    fn bump(&mut self) -> Option<&str> {
        let t = self.tokens.get(self.pos).map(|s| s.as_str());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Option<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some("+") => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some("-") | Some("\u{2212}") => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Some(lhs),
            }
        }
    }

    fn term(&mut self) -> Option<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some("*") | Some("\u{00d7}") => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some("/") | Some("\u{00f7}") => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Some(lhs),
            }
        }
    }

    fn factor(&mut self) -> Option<Expr> {
        match self.peek() {
            Some("-") | Some("\u{2212}") => {
                self.bump();
                let inner = self.factor()?;
                Some(Expr::Neg(Box::new(inner)))
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Option<Expr> {
        let base = self.atom()?;
        if self.peek() == Some("^") {
            self.bump();
            let mut neg = false;
            if matches!(self.peek(), Some("-") | Some("\u{2212}")) {
                self.bump();
                neg = true;
            }
            let tok = self.bump()?;
            if !is_number(tok) || tok.contains('.') {
                return None;
            }
            let mut e: i64 = tok.parse().ok()?;
            if neg {
                e = -e;
            }
            if e.abs() > MAX_EXPONENT {
                return None;
            }
            return Some(Expr::Pow(Box::new(base), e));
        }
        Some(base)
    }

    fn atom(&mut self) -> Option<Expr> {
        match self.peek() {
            Some("(") => {
                self.bump();
                let inner = self.expr()?;
                if self.bump() != Some(")") {
                    return None;
                }
                Some(inner)
            }
            Some(tok) if is_number(tok) => {
                let n = parse_number(tok)?;
                self.bump();
                Some(Expr::Num(n))
            }
            Some(tok) if is_identifier(tok) => {
                let v = Expr::Var(tok.to_string());
                self.bump();
                Some(v)
            }
            _ => None,
        }
    }
}

/// An identifier: alphanumeric word that is not a numeric literal.
pub fn is_identifier(token: &str) -> bool {
    !token.is_empty()
        && !is_number(token)
        && token.chars().all(|c| c.is_alphanumeric() || c == '_')
}

/// Parses a full token slice as one expression; `None` on leftovers.
pub fn parse_tokens(tokens: &[String]) -> Option<Expr> {
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if p.pos == tokens.len() {
        Some(e)
    } else {
        None
    }
}

/// A parseable span: either a standalone expression or an equation chain
/// whose sides all parse.
#[derive(Debug, Clone, PartialEq)]
pub enum Span {
    Single(Expr),
    Equation(Vec<Expr>),
}

impl Span {
    pub fn sides(&self) -> Vec<&Expr> {
        match self {
            Span::Single(e) => vec![e],
            Span::Equation(sides) => sides.iter().collect(),
        }
    }
}

fn parse_span(tokens: &[String]) -> Option<Span> {
    if tokens.iter().any(|t| t == "=") {
        let mut sides = Vec::new();
        for part in tokens.split(|t| t == "=") {
            if part.is_empty() {
                return None;
            }
            sides.push(parse_tokens(part)?);
        }
        if sides.len() < 2 {
            return None;
        }
        Some(Span::Equation(sides))
    } else {
        parse_tokens(tokens).map(Span::Single)
    }
}

/// Parse one text span under the grammar. Equation spans "lhs = rhs"
/// parse to the difference expression lhs - rhs; anything outside the
/// grammar abstains by returning `None`.
pub fn parse_expression(text: &str) -> Option<Expr> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return None;
    }
    match parse_span(&tokens)? {
        Span::Single(e) => Some(e),
        Span::Equation(sides) => {
            let mut it = sides.into_iter();
            let lhs = it.next()?;
            let rhs = it.next()?;
            Some(Expr::Sub(Box::new(lhs), Box::new(rhs)))
        }
    }
}

/// Greedy maximal-span scan: at each position, the longest token window
/// that parses (an equation chain or a standalone expression) becomes a
/// span. Single-token spans only qualify for numeric literals, which
/// keeps prose words out of the expression list.
pub fn extract_spans(tokens: &[String]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut matched = None;
        let mut j = tokens.len();
        while j > i {
            if j - i == 1 && !is_number(&tokens[i]) {
                break;
            }
            if let Some(span) = parse_span(&tokens[i..j]) {
                matched = Some((span, j));
                break;
            }
            j -= 1;
        }
        match matched {
            Some((span, end)) => {
                spans.push(span);
                i = end;
            }
            None => i += 1,
        }
    }
    spans
}

/// Flattened expression list used for positional pairing: equation sides
/// in order, standalone expressions as-is.
pub fn extract_expressions(tokens: &[String]) -> Vec<Expr> {
    extract_spans(tokens)
        .into_iter()
        .flat_map(|s| match s {
            Span::Single(e) => vec![e],
            Span::Equation(sides) => sides,
        })
        .collect()
}

/// Bindings `ident = expr` (longest parseable right-hand side).
pub fn extract_bindings(tokens: &[String]) -> Vec<(String, Expr)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + 2 < tokens.len() + 1 {
        if i + 2 <= tokens.len()
            && is_identifier(&tokens[i])
            && tokens.get(i + 1).map(|t| t.as_str()) == Some("=")
        {
            let start = i + 2;
            let mut found = None;
            let mut j = tokens.len();
            while j > start {
                if tokens[start..j].iter().any(|t| t == "=") {
                    j -= 1;
                    continue;
                }
                if let Some(e) = parse_tokens(&tokens[start..j]) {
                    found = Some((e, j));
                    break;
                }
                j -= 1;
            }
            if let Some((expr, end)) = found {
                out.push((tokens[i].clone(), expr));
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Substitution values declared as "at x = c" with a constant right-hand
/// side.
pub fn extract_at_bindings(tokens: &[String]) -> BTreeMap<String, BigRational> {
    let mut out = BTreeMap::new();
    let empty = BTreeMap::new();
    for i in 0..tokens.len() {
        if tokens[i] == "at"
            && i + 3 <= tokens.len()
            && is_identifier(&tokens[i + 1])
            && tokens.get(i + 2).map(|t| t.as_str()) == Some("=")
        {
            // Longest constant expression after the '='.
            let start = i + 3;
            let mut j = tokens.len();
            while j > start {
                if tokens[start..j].iter().any(|t| t == "=") {
                    j -= 1;
                    continue;
                }
                if let Some(e) = parse_tokens(&tokens[start..j]) {
                    if let Some(v) = e.eval_rational(&empty) {
                        out.insert(tokens[i + 1].clone(), v);
                        break;
                    }
                }
                j -= 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parses_product_tree() {
        let e = parse_expression("2*(x+1)").unwrap();
        match &e {
            Expr::Mul(a, b) => {
                assert_eq!(**a, Expr::Num(rat(2, 1)));
                match &**b {
                    Expr::Add(x, one) => {
                        assert_eq!(**x, Expr::Var("x".into()));
                        assert_eq!(**one, Expr::Num(rat(1, 1)));
                    }
                    other => panic!("unexpected rhs {other:?}"),
                }
            }
            other => panic!("unexpected tree {other:?}"),
        }
        let mut env = BTreeMap::new();
        env.insert("x".to_string(), rat(3, 1));
        assert_eq!(e.eval_rational(&env).unwrap(), rat(8, 1));
    }

    #[test]
    fn abstains_outside_grammar() {
        assert!(parse_expression("\u{222b} f dx").is_none());
        assert!(parse_expression("").is_none());
        assert!(parse_expression("x +").is_none());
    }

    #[test]
    fn equation_parses_to_difference() {
        // Verified by evaluation at x = 3: (9 - 1) - (2 * 4) = 0.
        let e = parse_expression("x^2 - 1 = (x-1)*(x+1)").unwrap();
        let mut env = BTreeMap::new();
        env.insert("x".to_string(), rat(3, 1));
        assert_eq!(e.eval_rational(&env).unwrap(), rat(0, 1));
    }

    #[test]
    fn division_by_zero_is_none() {
        let e = parse_expression("(x^5 - 1)/(x - 1)").unwrap();
        let mut env = BTreeMap::new();
        env.insert("x".to_string(), rat(1, 1));
        assert_eq!(e.eval_rational(&env), None);
        env.insert("x".to_string(), rat(2, 1));
        assert_eq!(e.eval_rational(&env).unwrap(), rat(31, 1));
    }

    #[test]
    fn decimal_literals_are_exact() {
        let e = parse_expression("0.28").unwrap();
        assert_eq!(e.eval_rational(&BTreeMap::new()).unwrap(), rat(28, 100));
    }

    #[test]
    fn negative_exponent_and_zero_base() {
        let e = parse_expression("x^-2").unwrap();
        let mut env = BTreeMap::new();
        env.insert("x".to_string(), rat(2, 1));
        assert_eq!(e.eval_rational(&env).unwrap(), rat(1, 4));
        env.insert("x".to_string(), rat(0, 1));
        assert_eq!(e.eval_rational(&env), None);
    }

    #[test]
    fn span_extraction_keeps_numbers_drops_words() {
        let toks = tokenize("There are two odd numbers {1, 3} so 2/6 = 1/3 holds");
        let exprs = extract_expressions(&toks);
        // 1, 3 from the brace list, then the equation sides 2/6 and 1/3.
        assert_eq!(exprs.len(), 4);
        let empty = BTreeMap::new();
        assert_eq!(exprs[0].eval_rational(&empty).unwrap(), rat(1, 1));
        assert_eq!(exprs[1].eval_rational(&empty).unwrap(), rat(3, 1));
        assert_eq!(exprs[2].eval_rational(&empty).unwrap(), rat(1, 3));
        assert_eq!(exprs[3].eval_rational(&empty).unwrap(), rat(1, 3));
    }

    #[test]
    fn binding_extraction() {
        let toks = tokenize("we set p = 1/3 and q = 2 * p here");
        let b = extract_bindings(&toks);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].0, "p");
        assert_eq!(
            b[0].1.eval_rational(&BTreeMap::new()).unwrap(),
            rat(1, 3)
        );
        assert_eq!(b[1].0, "q");
    }

    #[test]
    fn at_binding_extraction() {
        let toks = tokenize("evaluate (x^5 - 1)/(x - 1) at x = 1");
        let b = extract_at_bindings(&toks);
        assert_eq!(b.get("x"), Some(&rat(1, 1)));
    }
}
