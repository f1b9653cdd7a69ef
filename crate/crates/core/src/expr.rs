//! Expression mini-language for analytic field input.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?
//! atom   := number | 'pi' | coordinate | func '(' expr ')' | '(' expr ')'
//! func   := 'sin' | 'cos' | 'exp'
//! ```
//!
//! Coordinates are `x1 .. xn`; `t` is accepted as an alias for `x1` in
//! one-dimensional contexts (time-dependent Gronwall inputs).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("unexpected character '{0}' at offset {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
    #[error("coordinate {0} exceeds dimension {1}")]
    CoordinateOutOfRange(String, usize),
    #[error("expected '{0}'")]
    Expected(char),
    #[error("trailing input at offset {0}")]
    TrailingInput(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression over `dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    dim: usize,
    source: String,
}

impl Expr {
    pub fn parse(src: &str, dim: usize) -> Result<Expr, ExprError> {
        let mut parser = Parser { src: src.as_bytes(), pos: 0, dim };
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(ExprError::TrailingInput(parser.pos));
        }
        Ok(Expr { root, dim, source: src.to_string() })
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        debug_assert!(coords.len() >= self.dim);
        eval_node(&self.root, coords)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn eval_node(node: &Node, coords: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(i) => coords[*i],
        Node::Add(a, b) => eval_node(a, coords) + eval_node(b, coords),
        Node::Sub(a, b) => eval_node(a, coords) - eval_node(b, coords),
        Node::Mul(a, b) => eval_node(a, coords) * eval_node(b, coords),
        Node::Div(a, b) => eval_node(a, coords) / eval_node(b, coords),
        Node::Pow(a, b) => eval_node(a, coords).powf(eval_node(b, coords)),
        Node::Neg(a) => -eval_node(a, coords),
        Node::Call(f, a) => {
            let v = eval_node(a, coords);
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.factor()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(ExprError::UnexpectedEnd),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(ExprError::Expected(')'));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(ExprError::UnexpectedChar(c as char, self.pos)),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                // exponent part, optionally signed
                self.pos += 1;
                if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| ExprError::UnexpectedChar(self.src[start] as char, start))
    }

    fn ident(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "pi" => Ok(Node::Num(std::f64::consts::PI)),
            "t" => {
                if self.dim == 1 {
                    Ok(Node::Var(0))
                } else {
                    Err(ExprError::UnknownIdent(name.to_string()))
                }
            }
            "sin" | "cos" | "exp" => {
                if self.peek() != Some(b'(') {
                    return Err(ExprError::Expected('('));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(ExprError::Expected(')'));
                }
                self.pos += 1;
                let f = match name {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    _ => Func::Exp,
                };
                Ok(Node::Call(f, Box::new(arg)))
            }
            _ if name.starts_with('x') => {
                let idx: usize = name[1..]
                    .parse()
                    .map_err(|_| ExprError::UnknownIdent(name.to_string()))?;
                if idx == 0 || idx > self.dim {
                    return Err(ExprError::CoordinateOutOfRange(name.to_string(), self.dim));
                }
                Ok(Node::Var(idx - 1))
            }
            _ => Err(ExprError::UnknownIdent(name.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_the_documented_example() {
        let e = Expr::parse("1+0.2*sin(2*pi*x1)", 3).unwrap();
        let v = e.eval(&[0.25, 0.0, 0.0]);
        assert!((v - (1.0 + 0.2 * (2.0 * PI * 0.25).sin())).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-2*3+4", 3).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0, 0.0]), -2.0);
        let e = Expr::parse("2^3*2", 3).unwrap();
        assert_eq!(e.eval(&[0.0; 3]), 16.0);
        let e = Expr::parse("1 - 2 - 3", 3).unwrap();
        assert_eq!(e.eval(&[0.0; 3]), -4.0);
    }

    #[test]
    fn scientific_notation_and_division() {
        let e = Expr::parse("1e-2 / 2", 3).unwrap();
        assert!((e.eval(&[0.0; 3]) - 5e-3).abs() < 1e-18);
    }

    #[test]
    fn coordinate_bounds_are_enforced() {
        assert!(matches!(
            Expr::parse("x4", 3),
            Err(ExprError::CoordinateOutOfRange(_, 3))
        ));
        assert!(Expr::parse("x3", 3).is_ok());
    }

    #[test]
    fn t_alias_only_in_one_dimension() {
        assert!(Expr::parse("exp(-t)", 1).is_ok());
        assert!(Expr::parse("t", 3).is_err());
    }

    #[test]
    fn rejects_trailing_garbage() {
        assert!(matches!(Expr::parse("1+1 )", 3), Err(ExprError::TrailingInput(_))));
        assert!(matches!(Expr::parse("sin 1", 3), Err(ExprError::Expected('('))));
    }
}
