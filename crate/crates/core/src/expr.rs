//! A small arithmetic expression language for potentials and confinement minorants.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('+' | '-') unary | power
//! power   := atom ('^' unary)?          right associative, binds tighter than prefix minus
//! atom    := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers are either variables (`x1`..`xn` for potentials, `t` for minorants) or one of
//! the functions `abs sqrt exp log sin cos tanh` (one argument) and `min max` (two arguments).

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("function `{name}` at position {pos} expects {expected} argument(s), got {got}")]
    Arity {
        pos: usize,
        name: String,
        expected: usize,
        got: usize,
    },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnknownIdentifier { pos, .. }
            | ParseError::Arity { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expected {expected} coordinate(s), got {got}")]
    Arity { expected: usize, got: usize },
}

/// The variable set an expression is parsed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variables {
    /// `x1`..`xn`.
    Coordinates(usize),
    /// The single scalar `t`.
    Scalar,
}

impl Variables {
    /// Number of entries `Expr::eval` expects.
    pub fn arity(self) -> usize {
        match self {
            Variables::Coordinates(n) => n,
            Variables::Scalar => 1,
        }
    }

    fn lookup(self, name: &str) -> Option<Var> {
        match self {
            Variables::Scalar => (name == "t").then_some(Var::T),
            Variables::Coordinates(n) => {
                let digits = name.strip_prefix('x')?;
                if digits.is_empty() || digits.starts_with('0') {
                    return None;
                }
                let i: usize = digits.parse().ok()?;
                (1..=n).contains(&i).then_some(Var::X(i - 1))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Zero-based coordinate index.
    X(usize),
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(source: &str, vars: Variables) -> Result<Expr, ParseError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            vars,
            end: source.len(),
        };
        if parser.tokens.is_empty() {
            return Err(ParseError::Syntax {
                pos: 0,
                msg: "empty expression".into(),
            });
        }
        let expr = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ParseError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {}", tok.kind),
            });
        }
        Ok(expr)
    }

    /// Evaluates at `args`, which must have as many entries as the variable set.
    ///
    /// Any non-finite intermediate result is reported as a domain error.
    pub fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(Var::X(i)) => args.get(*i).copied().ok_or(EvalError::Arity {
                expected: i + 1,
                got: args.len(),
            }),
            Expr::Var(Var::T) => args.first().copied().ok_or(EvalError::Arity {
                expected: 1,
                got: 0,
            }),
            Expr::Unary(op, a) => {
                let a = a.eval(args)?;
                let v = match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::Domain(format!("sqrt of negative value {a}")));
                        }
                        a.sqrt()
                    }
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => {
                        if a <= 0.0 {
                            return Err(EvalError::Domain(format!("log of nonpositive value {a}")));
                        }
                        a.ln()
                    }
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tanh => a.tanh(),
                };
                finite(v, || format!("{op:?}({a})"))
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval(args)?;
                let b = b.eval(args)?;
                let v = match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::Domain(format!("division of {a} by zero")));
                        }
                        a / b
                    }
                    BinaryOp::Pow => pow(a, b),
                    BinaryOp::Min => a.min(b),
                    BinaryOp::Max => a.max(b),
                };
                finite(v, || format!("{op:?}({a}, {b})"))
            }
        }
    }

    /// True if every variable in the tree belongs to `vars`.
    pub fn uses_only(&self, vars: Variables) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(Var::X(i)) => matches!(vars, Variables::Coordinates(n) if *i < n),
            Expr::Var(Var::T) => vars == Variables::Scalar,
            Expr::Unary(_, a) => a.uses_only(vars),
            Expr::Binary(_, a, b) => a.uses_only(vars) && b.uses_only(vars),
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn finite(v: f64, what: impl FnOnce() -> String) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain(format!("{} is not finite", what())))
    }
}

/// Fully parenthesized form; re-parses to an equivalent tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Abs => "abs",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Log => "log",
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Tanh => "tanh",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            Expr::Binary(BinaryOp::Min, a, b) => write!(f, "min({a}, {b})"),
            Expr::Binary(BinaryOp::Max, a, b) => write!(f, "max({a}, {b})"),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => '+',
                    BinaryOp::Sub => '-',
                    BinaryOp::Mul => '*',
                    BinaryOp::Div => '/',
                    BinaryOp::Pow => '^',
                    BinaryOp::Min | BinaryOp::Max => unreachable!(),
                };
                write!(f, "({a} {sym} {b})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Op(c) => write!(f, "operator `{c}`"),
            TokenKind::LParen => write!(f, "`(`"),
            TokenKind::RParen => write!(f, "`)`"),
            TokenKind::Comma => write!(f, "`,`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })?;
            tokens.push(Token {
                kind: TokenKind::Num(value),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(src[start..i].to_string()),
                pos: start,
            });
        } else {
            let kind = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => TokenKind::Op(c as char),
                b'(' => TokenKind::LParen,
                b')' => TokenKind::RParen,
                b',' => TokenKind::Comma,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(ParseError::Syntax {
                        pos: start,
                        msg: format!("unexpected character `{ch}`"),
                    });
                }
            };
            tokens.push(Token { kind, pos: start });
            i += 1;
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    vars: Variables,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn peek_op(&self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) if ops.contains(c) => Some(*c),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ParseError> {
        match self.next() {
            Some(tok) if tok.kind == kind => Ok(()),
            Some(tok) => Err(ParseError::Syntax {
                pos: tok.pos,
                msg: format!("expected {kind}, found {}", tok.kind),
            }),
            None => Err(ParseError::Syntax {
                pos: self.end,
                msg: format!("expected {kind}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_op(&['+', '-']) {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if op == '+' {
                BinaryOp::Add
            } else {
                BinaryOp::Sub
            };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_op(&['*', '/']) {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if op == '*' {
                BinaryOp::Mul
            } else {
                BinaryOp::Div
            };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek_op(&['+', '-']) {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            Some(_) => {
                self.pos += 1;
                self.unary()
            }
            None => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek_op(&['^']).is_some() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.here();
        let tok = self.next().ok_or_else(|| ParseError::Syntax {
            pos,
            msg: "unexpected end of input".into(),
        })?;
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Const(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::LParen)) {
                    self.pos += 1;
                    self.call(name, tok.pos)
                } else if let Some(var) = self.vars.lookup(&name) {
                    Ok(Expr::Var(var))
                } else {
                    Err(ParseError::UnknownIdentifier { pos: tok.pos, name })
                }
            }
            other => Err(ParseError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {other}"),
            }),
        }
    }

    fn call(&mut self, name: String, pos: usize) -> Result<Expr, ParseError> {
        enum Kind {
            Unary(UnaryOp),
            Binary(BinaryOp),
        }
        let kind = match name.as_str() {
            "abs" => Kind::Unary(UnaryOp::Abs),
            "sqrt" => Kind::Unary(UnaryOp::Sqrt),
            "exp" => Kind::Unary(UnaryOp::Exp),
            "log" => Kind::Unary(UnaryOp::Log),
            "sin" => Kind::Unary(UnaryOp::Sin),
            "cos" => Kind::Unary(UnaryOp::Cos),
            "tanh" => Kind::Unary(UnaryOp::Tanh),
            "min" => Kind::Binary(BinaryOp::Min),
            "max" => Kind::Binary(BinaryOp::Max),
            _ => return Err(ParseError::UnknownIdentifier { pos, name }),
        };
        let mut args = vec![self.expr()?];
        while matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Comma)) {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(TokenKind::RParen)?;
        let expected = match kind {
            Kind::Unary(_) => 1,
            Kind::Binary(_) => 2,
        };
        if args.len() != expected {
            return Err(ParseError::Arity {
                pos,
                name,
                expected,
                got: args.len(),
            });
        }
        let mut args = args.into_iter();
        let first = Box::new(args.next().unwrap());
        Ok(match kind {
            Kind::Unary(op) => Expr::Unary(op, first),
            Kind::Binary(op) => Expr::Binary(op, first, Box::new(args.next().unwrap())),
        })
    }
}
