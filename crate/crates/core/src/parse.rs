//! Recursive-descent parser for the metric expression language.
//!
//! Grammar:
//! ```text
//! expr   = term { ("+"|"-") term } ;
//! term   = factor { ("*"|"/") factor } ;
//! factor = unary [ "^" factor ] ;
//! unary  = [ "-" ] base ;
//! base   = NUMBER | IDENT | "(" expr ")" | FUNC "(" expr ")" ;
//! IDENT  = ("x"|"p") DIGITS ;   FUNC = "sqrt"|"exp"|"log"|"sin"|"cos" ;
//! ```
//! Whitespace is insignificant, `^` is right-associative, and a power with
//! both base and exponent non-constant is rejected (no symbolic derivative
//! exists for it in this DSL).

use crate::error::{Error, Result};
use crate::expr::{ExprContext, ExprId, UnaryFn, Var};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
    dim: usize,
    depth: usize,
}

const MAX_DEPTH: usize = 256;

impl<'a> Parser<'a> {
    fn new(src: &'a str, dim: usize) -> Self {
        Parser { src: src.as_bytes(), pos: 0, line: 1, col: 1, dim, depth: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, col: self.col, msg: msg.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.bump();
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expr(&mut self, ctx: &mut ExprContext) -> Result<ExprId> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err("expression nesting too deep"));
        }
        let mut acc = self.term(ctx)?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.bump();
                    let rhs = self.term(ctx)?;
                    acc = ctx.add(acc, rhs);
                }
                Some(b'-') => {
                    self.bump();
                    let rhs = self.term(ctx)?;
                    acc = ctx.sub(acc, rhs);
                }
                _ => break,
            }
        }
        self.depth -= 1;
        Ok(acc)
    }

    fn term(&mut self, ctx: &mut ExprContext) -> Result<ExprId> {
        let mut acc = self.factor(ctx)?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.bump();
                    let rhs = self.factor(ctx)?;
                    acc = ctx.mul(acc, rhs);
                }
                Some(b'/') => {
                    self.bump();
                    let rhs = self.factor(ctx)?;
                    acc = ctx.div(acc, rhs);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self, ctx: &mut ExprContext) -> Result<ExprId> {
        let base = self.unary(ctx)?;
        if self.eat(b'^') {
            let (line, col) = (self.line, self.col);
            let exp = self.factor(ctx)?; // right-associative
            if !ctx.is_constant_tree(exp) && !ctx.is_constant_tree(base) {
                return Err(Error::Parse {
                    line,
                    col,
                    msg: "power with non-constant base and non-constant exponent is not \
                          differentiable in this DSL"
                        .into(),
                });
            }
            if let Some(c) = ctx.as_const(base) {
                if c <= 0.0 && !ctx.is_constant_tree(exp) {
                    return Err(Error::Parse {
                        line,
                        col,
                        msg: format!("variable exponent over non-positive base {c}"),
                    });
                }
            }
            return Ok(ctx.pow(base, exp));
        }
        Ok(base)
    }

    fn unary(&mut self, ctx: &mut ExprContext) -> Result<ExprId> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.bump();
            let inner = self.base(ctx)?;
            return Ok(ctx.neg(inner));
        }
        self.base(ctx)
    }

    fn base(&mut self, ctx: &mut ExprContext) -> Result<ExprId> {
        self.skip_ws();
        let c = self.peek().ok_or_else(|| self.err("unexpected end of input"))?;
        if c == b'(' {
            self.bump();
            let inner = self.expr(ctx)?;
            if !self.eat(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(ctx);
        }
        if c.is_ascii_alphabetic() {
            return self.ident(ctx);
        }
        Err(self.err(format!("unexpected character '{}'", c as char)))
    }

    fn number(&mut self, ctx: &mut ExprContext) -> Result<ExprId> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some(b'.') {
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            // exponent part must be followed by digits (optionally signed)
            let save = (self.pos, self.line, self.col);
            self.bump();
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.bump();
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
            } else {
                (self.pos, self.line, self.col) = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: f64 = text
            .parse()
            .map_err(|_| self.err(format!("invalid number literal '{text}'")))?;
        Ok(ctx.num(v))
    }

    fn ident(&mut self, ctx: &mut ExprContext) -> Result<ExprId> {
        let start = self.pos;
        let (line, col) = (self.line, self.col);
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.bump();
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let func = match word {
            "sqrt" => Some(UnaryFn::Sqrt),
            "exp" => Some(UnaryFn::Exp),
            "log" => Some(UnaryFn::Log),
            "sin" => Some(UnaryFn::Sin),
            "cos" => Some(UnaryFn::Cos),
            _ => None,
        };
        if let Some(f) = func {
            if !self.eat(b'(') {
                return Err(self.err(format!("expected '(' after function '{word}'")));
            }
            let arg = self.expr(ctx)?;
            if !self.eat(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(ctx.fun(f, arg));
        }
        let kind = word.as_bytes().first().copied();
        let rest = &word[1.min(word.len())..];
        let var = match kind {
            Some(b'x') | Some(b'p') if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) => {
                let idx: usize = rest
                    .parse()
                    .map_err(|_| Error::Parse { line, col, msg: format!("bad index in '{word}'") })?;
                if idx == 0 || idx > self.dim {
                    return Err(Error::Parse {
                        line,
                        col,
                        msg: format!("variable '{word}' out of range for dim {}", self.dim),
                    });
                }
                if kind == Some(b'x') {
                    Var::coord(idx - 1)
                } else {
                    Var::momentum(idx - 1)
                }
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    col,
                    msg: format!("unknown identifier '{word}'"),
                })
            }
        };
        Ok(ctx.var(var))
    }
}

/// Parse `text` over variables `x1..x<dim>`, `p1..p<dim>` into `ctx`.
pub fn parse_into(ctx: &mut ExprContext, text: &str, dim: usize) -> Result<ExprId> {
    if dim < 2 {
        return Err(Error::Config(format!("dim must be >= 2, got {dim}")));
    }
    let mut p = Parser::new(text, dim);
    let id = p.expr(ctx)?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input after expression"));
    }
    Ok(id)
}
