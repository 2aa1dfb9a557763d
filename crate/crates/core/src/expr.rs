//! A small, pure arithmetic expression language for user-defined functions.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          (right-associative)
//! primary := number | variable | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables are `x1 .. xn` plus any extra names the caller registers.
//! Functions: `sin cos exp log abs sqrt min max`; constant `pi`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::field::Field;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("`{name}` takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("{op} is undefined here (argument {value})")]
    Domain { op: &'static str, value: f64 },
    #[error("expected {expected} coordinates, got {got}")]
    MissingCoordinate { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    /// `x{k+1}`, stored 0-based.
    Coord(usize),
    /// Index into the caller's extra variable names.
    Named(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, coords: &[f64], named: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Node::Num(v) => *v,
            Node::Coord(k) => *coords.get(*k).ok_or(ExprError::MissingCoordinate {
                expected: k + 1,
                got: coords.len(),
            })?,
            Node::Named(i) => named[*i],
            Node::Neg(a) => -a.eval(coords, named)?,
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(coords, named)?, b.eval(coords, named)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::Domain {
                                op: "division",
                                value: b,
                            });
                        }
                        a / b
                    }
                    BinOp::Pow => checked("power", a, a.powf(b))?,
                }
            }
            Node::Call(f, args) => {
                let a = args[0].eval(coords, named)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => checked("exp", a, a.exp())?,
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(ExprError::Domain {
                                op: "log",
                                value: a,
                            });
                        }
                        a.ln()
                    }
                    Func::Abs => a.abs(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(ExprError::Domain {
                                op: "sqrt",
                                value: a,
                            });
                        }
                        a.sqrt()
                    }
                    Func::Min => a.min(args[1].eval(coords, named)?),
                    Func::Max => a.max(args[1].eval(coords, named)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain {
                op: "arithmetic",
                value: v,
            })
        }
    }

    fn max_coord(&self) -> Option<usize> {
        match self {
            Node::Num(_) | Node::Named(_) => None,
            Node::Coord(k) => Some(*k),
            Node::Neg(a) => a.max_coord(),
            Node::Bin(_, a, b) => a.max_coord().max(b.max_coord()),
            Node::Call(_, args) => args.iter().filter_map(Node::max_coord).max(),
        }
    }
}

fn checked(op: &'static str, arg: f64, v: f64) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Domain { op, value: arg })
    }
}

/// A parsed expression together with its source text.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    names: Vec<String>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        Self::parse_with(src, &[])
    }

    /// Parses with extra variable names besides `x1 .. xn`.
    pub fn parse_with(src: &str, names: &[&str]) -> Result<Self, ExprError> {
        let tokens = tokenize(src)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            names,
            end: src.chars().count(),
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ExprError::Syntax {
                position: tok.position,
                expected: "operator or end of input".into(),
            });
        }
        Ok(Self {
            source: src.to_string(),
            root,
            names: names.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Number of coordinates the expression needs (highest `k` in `xk`).
    pub fn arity(&self) -> usize {
        self.root.max_coord().map_or(0, |k| k + 1)
    }

    /// Rejects coordinates beyond `x{dim}`.
    pub fn check_dim(&self, dim: usize) -> Result<(), ExprError> {
        let arity = self.arity();
        if arity > dim {
            return Err(ExprError::UnknownIdentifier {
                name: format!("x{arity}"),
                position: self
                    .source
                    .find(&format!("x{arity}"))
                    .map_or(0, |b| self.source[..b].chars().count()),
            });
        }
        Ok(())
    }

    pub fn eval(&self, coords: &[f64]) -> Result<f64, ExprError> {
        self.eval_with(coords, &[])
    }

    pub fn eval_with(&self, coords: &[f64], named: &[f64]) -> Result<f64, ExprError> {
        if named.len() < self.names.len() {
            return Err(ExprError::MissingCoordinate {
                expected: self.names.len(),
                got: named.len(),
            });
        }
        self.root.eval(coords, named)
    }

    /// The constant value, if the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        fn pure(n: &Node) -> bool {
            match n {
                Node::Num(_) => true,
                Node::Coord(_) | Node::Named(_) => false,
                Node::Neg(a) => pure(a),
                Node::Bin(_, a, b) => pure(a) && pure(b),
                Node::Call(_, args) => args.iter().all(pure),
            }
        }
        if pure(&self.root) {
            self.root.eval(&[], &[]).ok()
        } else {
            None
        }
    }
}

/// An [`Expr`] in `x1 .. xn` used as a [`Field`]; domain errors become `NaN`.
#[derive(Debug, Clone)]
pub struct ExprField {
    expr: Arc<Expr>,
}

impl ExprField {
    pub fn new(expr: Expr) -> Self {
        Self {
            expr: Arc::new(expr),
        }
    }

    pub fn parse(src: &str, dim: usize) -> Result<Self, ExprError> {
        let expr = Expr::parse(src)?;
        expr.check_dim(dim)?;
        Ok(Self::new(expr))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl Field for ExprField {
    fn eval(&self, x: &[f64]) -> f64 {
        self.expr.eval(x).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    tok: Tok,
    position: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let position = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = if c.is_ascii_digit() || c == '.' {
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
            let v = text.parse::<f64>().map_err(|_| ExprError::Syntax {
                position,
                expected: "a number".into(),
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                position,
            });
            continue;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                position,
            });
            continue;
        } else {
            match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(ExprError::Syntax {
                        position,
                        expected: "a number, name, operator or parenthesis".into(),
                    })
                }
            }
        };
        out.push(Token { tok, position });
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    names: &'a [&'a str],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn position(&self) -> usize {
        self.peek().map_or(self.end, |t| t.position)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                tok: Tok::Op(c), ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if t.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(ExprError::Syntax {
                position: self.position(),
                expected: what.into(),
            }),
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.eat_op(&['-', '+']) {
            Some('-') => Ok(Node::Neg(Box::new(self.unary()?))),
            Some(_) => self.unary(),
            None => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let position = self.position();
        let Some(token) = self.peek().cloned() else {
            return Err(ExprError::Syntax {
                position,
                expected: "an operand".into(),
            });
        };
        match token.tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if let Some(f) = Func::lookup(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let mut args = vec![self.expr()?];
                    while matches!(
                        self.peek(),
                        Some(Token {
                            tok: Tok::Comma,
                            ..
                        })
                    ) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    if args.len() != f.arity() {
                        return Err(ExprError::Arity {
                            name,
                            expected: f.arity(),
                            got: args.len(),
                        });
                    }
                    return Ok(Node::Call(f, args));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                if let Some(i) = self.names.iter().position(|n| *n == name) {
                    return Ok(Node::Named(i));
                }
                if let Some(k) = name
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                {
                    return Ok(Node::Coord(k - 1));
                }
                Err(ExprError::UnknownIdentifier { name, position })
            }
            _ => Err(ExprError::Syntax {
                position,
                expected: "an operand".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let e = Expr::parse("x1^2").unwrap();
        assert!(matches!(e.root(), Node::Bin(BinOp::Pow, _, _)));
        assert_eq!(e.eval(&[0.5]).unwrap(), 0.25);
        assert_eq!(Expr::parse("0.4").unwrap().as_constant(), Some(0.4));
        assert_eq!(
            Expr::parse("x1 + * 2"),
            Err(ExprError::Syntax {
                position: 5,
                expected: "an operand".into()
            })
        );
    }

    #[test]
    fn precedence() {
        let ev = |s: &str| Expr::parse(s).unwrap().eval(&[2.0, 3.0]).unwrap();
        assert_eq!(ev("-x1^2"), -4.0);
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("2^-1"), 0.5);
        assert_eq!(ev("1 + 2 * 3 - 4 / 2"), 5.0);
        assert_eq!(ev("(1 + 2) * 3"), 9.0);
        assert_eq!(ev("x1 - x2 - 1"), -2.0);
        assert_eq!(ev("max(x1, x2) * min(1, -x1)"), -6.0);
        assert_eq!(ev("1.5e-1 * 2E1"), 3.0);
        assert_eq!(ev("--x1"), 2.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            Expr::parse("y + 1"),
            Err(ExprError::UnknownIdentifier { position: 0, .. })
        ));
        assert!(matches!(
            Expr::parse("x0"),
            Err(ExprError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expr::parse("sin(1, 2)"),
            Err(ExprError::Arity { .. })
        ));
        assert!(matches!(
            Expr::parse("(1 + 2"),
            Err(ExprError::Syntax { position: 6, .. })
        ));
        assert!(matches!(
            Expr::parse("1 2"),
            Err(ExprError::Syntax { position: 2, .. })
        ));
        assert!(matches!(
            Expr::parse("1 # 2"),
            Err(ExprError::Syntax { position: 2, .. })
        ));
        assert!(matches!(
            Expr::parse(""),
            Err(ExprError::Syntax { position: 0, .. })
        ));
        let e = Expr::parse("x3").unwrap();
        assert!(e.check_dim(2).is_err());
        assert!(e.check_dim(3).is_ok());
    }

    #[test]
    fn domain_errors() {
        let ev = |s: &str| Expr::parse(s).unwrap().eval(&[0.0]);
        assert!(matches!(
            ev("log(x1)"),
            Err(ExprError::Domain { op: "log", .. })
        ));
        assert!(matches!(
            ev("sqrt(x1 - 1)"),
            Err(ExprError::Domain { op: "sqrt", .. })
        ));
        assert!(matches!(ev("1 / x1"), Err(ExprError::Domain { .. })));
        assert!(matches!(ev("exp(1000)"), Err(ExprError::Domain { .. })));
        assert!(ExprField::parse("log(x1)", 1)
            .unwrap()
            .eval(&[0.0])
            .is_nan());
    }

    #[test]
    fn named_variables() {
        let e = Expr::parse_with("c + x1 * (f - c)", &["f", "c"]).unwrap();
        assert_eq!(e.eval_with(&[0.5], &[3.0, 1.0]).unwrap(), 2.0);
        assert!(Expr::parse("c").is_err());
    }
}
