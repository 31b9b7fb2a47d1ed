//! Scalar expressions in a single bound variable.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr  := term (('+'|'-') term)*
//! term  := unary (('*'|'/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := NUMBER | IDENT | IDENT '(' expr (',' expr)? ')' | '(' expr ')'
//! ```
//!
//! `IDENT` is either the bound variable or one of `sqrt exp ln tanh abs sin cos min max`.
//! Error positions are 1-based character columns.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Ln,
    Tanh,
    Abs,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func2 {
    Min,
    Max,
}

impl Func2 {
    fn name(self) -> &'static str {
        match self {
            Func2::Min => "min",
            Func2::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at column {position}: {kind}")]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedChar(char),
    BadNumber(String),
    UnknownIdentifier(String),
    Unexpected { found: String, expected: Vec<&'static str> },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Empty => write!(f, "empty expression"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::BadNumber(s) => write!(f, "malformed number {s:?}"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier {s:?}"),
            ParseErrorKind::Unexpected { found, expected } => {
                write!(f, "found {found}, expected one of: {}", expected.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of non-positive argument {0}")]
    LogDomain(f64),
    #[error("square root of negative argument {0}")]
    SqrtDomain(f64),
    #[error("power {base}^{exponent} is undefined")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite intermediate value")]
    NonFinite,
}

/// A parsed expression together with the name of its bound variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    var: String,
    root: Node,
}

impl Expression {
    /// Parses `source` with `x` as the bound variable.
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        Self::parse_in(source, "x")
    }

    pub fn parse_in(source: &str, var: &str) -> Result<Self, ParseError> {
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            var,
        };
        if matches!(parser.peek().tok, Tok::End) {
            return Err(ParseError {
                position: parser.peek().col,
                kind: ParseErrorKind::Empty,
            });
        }
        let root = parser.expr()?;
        let next = parser.peek();
        if !matches!(next.tok, Tok::End) {
            return Err(parser.unexpected(&["operator", "end of input"]));
        }
        Ok(Expression {
            var: var.to_string(),
            root,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self::constant_in(value, "x")
    }

    pub fn constant_in(value: f64, var: &str) -> Self {
        Expression {
            var: var.to_string(),
            root: Node::Const(value),
        }
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// The value when the tree is a bare literal.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn eval(&self, v: f64) -> Result<f64, EvalError> {
        eval_node(&self.root, v)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, &self.var, f)
    }
}

fn write_node(node: &Node, var: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let bin = |f: &mut fmt::Formatter<'_>, a: &Node, op: &str, b: &Node| -> fmt::Result {
        f.write_str("(")?;
        write_node(a, var, f)?;
        write!(f, " {op} ")?;
        write_node(b, var, f)?;
        f.write_str(")")
    };
    match node {
        // `{:?}` is the shortest representation that round-trips exactly.
        Node::Const(c) if *c < 0.0 => write!(f, "(-{:?})", -c),
        Node::Const(c) => write!(f, "{c:?}"),
        Node::Var => f.write_str(var),
        Node::Neg(a) => {
            f.write_str("(-")?;
            write_node(a, var, f)?;
            f.write_str(")")
        }
        Node::Add(a, b) => bin(f, a, "+", b),
        Node::Sub(a, b) => bin(f, a, "-", b),
        Node::Mul(a, b) => bin(f, a, "*", b),
        Node::Div(a, b) => bin(f, a, "/", b),
        Node::Pow(a, b) => bin(f, a, "^", b),
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, var, f)?;
            f.write_str(")")
        }
        Node::Call2(func, a, b) => {
            write!(f, "{}(", func.name())?;
            write_node(a, var, f)?;
            f.write_str(", ")?;
            write_node(b, var, f)?;
            f.write_str(")")
        }
    }
}

#[inline]
fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn eval_node(node: &Node, v: f64) -> Result<f64, EvalError> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Var => finite(v),
        Node::Neg(a) => Ok(-eval_node(a, v)?),
        Node::Add(a, b) => finite(eval_node(a, v)? + eval_node(b, v)?),
        Node::Sub(a, b) => finite(eval_node(a, v)? - eval_node(b, v)?),
        Node::Mul(a, b) => finite(eval_node(a, v)? * eval_node(b, v)?),
        Node::Div(a, b) => {
            let num = eval_node(a, v)?;
            let den = eval_node(b, v)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            finite(num / den)
        }
        Node::Pow(a, b) => {
            let base = eval_node(a, v)?;
            let exponent = eval_node(b, v)?;
            let r = if exponent == 2.0 {
                base * base
            } else {
                base.powf(exponent)
            };
            if r.is_nan() {
                return Err(EvalError::PowDomain { base, exponent });
            }
            if base == 0.0 && exponent < 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            finite(r)
        }
        Node::Call(func, a) => {
            let x = eval_node(a, v)?;
            match func {
                Func::Sqrt if x < 0.0 => Err(EvalError::SqrtDomain(x)),
                Func::Sqrt => Ok(x.sqrt()),
                Func::Exp => finite(x.exp()),
                Func::Ln if x <= 0.0 => Err(EvalError::LogDomain(x)),
                Func::Ln => Ok(x.ln()),
                Func::Tanh => Ok(x.tanh()),
                Func::Abs => Ok(x.abs()),
                Func::Sin => Ok(x.sin()),
                Func::Cos => Ok(x.cos()),
            }
        }
        Node::Call2(func, a, b) => {
            let x = eval_node(a, v)?;
            let y = eval_node(b, v)?;
            Ok(match func {
                Func2::Min => x.min(y),
                Func2::Max => x.max(y),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            tokens.push(Token { tok, col });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text.parse().map_err(|_| ParseError {
                position: col,
                kind: ParseErrorKind::BadNumber(text.clone()),
            })?;
            if !value.is_finite() {
                return Err(ParseError {
                    position: col,
                    kind: ParseErrorKind::BadNumber(text),
                });
            }
            tokens.push(Token {
                tok: Tok::Num(value),
                col,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        return Err(ParseError {
            position: col,
            kind: ParseErrorKind::UnexpectedChar(c),
        });
    }
    tokens.push(Token {
        tok: Tok::End,
        col: chars.len() + 1,
    });
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    var: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if !matches!(t.tok, Tok::End) {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&'static str]) -> ParseError {
        let t = self.peek();
        ParseError {
            position: t.col,
            kind: ParseErrorKind::Unexpected {
                found: t.tok.describe(),
                expected: expected.to_vec(),
            },
        }
    }

    fn expect(&mut self, tok: Tok, label: &'static str) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&[label]))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(n) => {
                self.bump();
                Ok(Node::Const(n))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(ref name) if name == self.var => {
                self.bump();
                Ok(Node::Var)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek().tok != Tok::LParen {
                    return Err(self.unexpected(&["'('"]));
                }
                let unary = match name.as_str() {
                    "sqrt" => Some(Func::Sqrt),
                    "exp" => Some(Func::Exp),
                    "ln" => Some(Func::Ln),
                    "tanh" => Some(Func::Tanh),
                    "abs" => Some(Func::Abs),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    _ => None,
                };
                let binary = match name.as_str() {
                    "min" => Some(Func2::Min),
                    "max" => Some(Func2::Max),
                    _ => None,
                };
                if unary.is_none() && binary.is_none() {
                    return Err(ParseError {
                        position: t.col,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    });
                }
                self.bump();
                let first = self.expr()?;
                let node = if let Some(func) = unary {
                    Node::Call(func, Box::new(first))
                } else {
                    self.expect(Tok::Comma, "','")?;
                    let second = self.expr()?;
                    Node::Call2(binary.unwrap(), Box::new(first), Box::new(second))
                };
                self.expect(Tok::RParen, "')'")?;
                Ok(node)
            }
            _ => Err(self.unexpected(&["number", "identifier", "'('", "'-'"])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Node {
        Expression::parse(s).unwrap().root
    }

    fn b(n: Node) -> Box<Node> {
        Box::new(n)
    }

    #[test]
    fn precedence_examples() {
        assert_eq!(
            p("x^2+x"),
            Node::Add(b(Node::Pow(b(Node::Var), b(Node::Const(2.0)))), b(Node::Var))
        );
        assert_eq!(
            p("1+x/2"),
            Node::Add(b(Node::Const(1.0)), b(Node::Div(b(Node::Var), b(Node::Const(2.0)))))
        );
        // ^ is right-associative and binds tighter than unary minus.
        assert_eq!(
            p("-x^2^3"),
            Node::Neg(b(Node::Pow(
                b(Node::Var),
                b(Node::Pow(b(Node::Const(2.0)), b(Node::Const(3.0))))
            )))
        );
        assert_eq!(
            p("2^-1"),
            Node::Pow(b(Node::Const(2.0)), b(Node::Neg(b(Node::Const(1.0)))))
        );
    }

    #[test]
    fn incomplete_identifier_reports_position() {
        let err = Expression::parse("2+sin").unwrap_err();
        assert_eq!(err.position, 6);
        let err = Expression::parse("2+sinh(x)").unwrap_err();
        assert_eq!(err.position, 3);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("sinh".into()));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(Expression::parse("").unwrap_err().kind, ParseErrorKind::Empty));
        assert_eq!(Expression::parse("(x+1").unwrap_err().position, 5);
        assert_eq!(Expression::parse("x+*2").unwrap_err().position, 3);
        assert_eq!(Expression::parse("min(x)").unwrap_err().position, 6);
        assert_eq!(Expression::parse("x $ 2").unwrap_err().position, 3);
        assert!(Expression::parse("1e999").is_err());
        // `t` is only bound when asked for.
        assert!(Expression::parse("t+1").is_err());
        assert!(Expression::parse_in("t+1", "t").is_ok());
    }

    #[test]
    fn eval_examples() {
        let e = |s: &str, v: f64| Expression::parse(s).unwrap().eval(v);
        assert_eq!(e("x^2+x", 1.0), Ok(2.0));
        assert_eq!(e("1+x/2", 2.0), Ok(2.0));
        assert!(matches!(e("ln(x)", -1.0), Err(EvalError::LogDomain(_))));
        assert!(matches!(e("sqrt(x)", -1.0), Err(EvalError::SqrtDomain(_))));
        assert_eq!(e("1/x", 0.0), Err(EvalError::DivisionByZero));
        assert_eq!(e("exp(x)", 1000.0), Err(EvalError::NonFinite));
        assert!(matches!(e("x^0.5", -4.0), Err(EvalError::PowDomain { .. })));
        assert_eq!(e("min(x, 3) + max(x, 3)", 5.0), Ok(8.0));
        assert_eq!(e("abs(x-1)", 0.0), Ok(1.0));
        assert_eq!(e("2*tanh(x)", 0.0), Ok(0.0));
        assert_eq!(e("1.5e-1*x", 2.0), Ok(0.3));
    }

    #[test]
    fn display_reparses_negative_constants() {
        let e = Expression::constant(-2.5);
        let back = Expression::parse(&e.to_string()).unwrap();
        assert_eq!(back.eval(0.0), Ok(-2.5));
    }

    fn arb_source() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            Just("x".to_string()),
            (0u32..1000).prop_map(|n| format!("{}", n as f64 / 8.0)),
            (1u32..9).prop_map(|n| format!("{n}e-3")),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}+{b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}-{b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}*{b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}/({b})")),
                (inner.clone(), 0u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
                inner.clone().prop_map(|a| format!("-{a}")),
                inner.clone().prop_map(|a| format!("tanh({a})")),
                inner.clone().prop_map(|a| format!("sin({a})")),
                inner.clone().prop_map(|a| format!("sqrt(abs({a}))")),
                (inner.clone(), inner).prop_map(|(a, b)| format!("max({a}, {b})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn serialize_round_trip(src in arb_source(), v in -10.0f64..10.0) {
            let first = Expression::parse(&src).unwrap();
            let second = Expression::parse(&first.to_string()).unwrap();
            prop_assert_eq!(&first, &second);
            match (first.eval(v), second.eval(v)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn product_binds_tighter_than_sum(a in -1e3f64..1e3, b in -1e3f64..1e3, c in -1e3f64..1e3) {
            let plain = Expression::parse(&format!("{a:?}+{b:?}*{c:?}")).unwrap();
            let grouped = Expression::parse(&format!("{a:?}+({b:?}*{c:?})")).unwrap();
            prop_assert_eq!(plain.eval(0.0).unwrap().to_bits(), grouped.eval(0.0).unwrap().to_bits());
        }

        #[test]
        fn eval_never_leaks_non_finite(src in arb_source(), v in -1e6f64..1e6) {
            if let Ok(y) = Expression::parse(&src).unwrap().eval(v) {
                prop_assert!(y.is_finite());
            }
        }
    }
}
