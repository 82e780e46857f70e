//! Lexer and recursive-descent parser for the mini language.

use std::fmt;

use super::ast::{BinOp, Expr, Stmt, UnOp};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(i64),
    Ident(String),
    If,
    Else,
    While,
    Return,
    Break,
    Continue,
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "integer {n}"),
            Tok::Ident(s) => write!(f, "identifier {s}"),
            Tok::If => f.write_str("'if'"),
            Tok::Else => f.write_str("'else'"),
            Tok::While => f.write_str("'while'"),
            Tok::Return => f.write_str("'return'"),
            Tok::Break => f.write_str("'break'"),
            Tok::Continue => f.write_str("'continue'"),
            Tok::Punct(p) => write!(f, "'{p}'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: expected {}, found {found}", .expected.join(" or "))]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

// Longest first so "<=" wins over "<".
const PUNCTS: [&str; 20] = [
    "<=", ">=", "==", "!=", "&&", "||", "(", ")", "{", "}", ";", "=", "+", "-", "*", "/", "%", "<", ">", "!",
];

struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        let (tl, tc) = (line, col);
        if c == '\n' {
            chars.next();
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            col += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                col += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut end = i;
            while let Some(&(j, d)) = chars.peek() {
                if !d.is_ascii_digit() {
                    break;
                }
                end = j + 1;
                chars.next();
                col += 1;
            }
            let n = src[i..end].parse::<i64>().map_err(|_| ParseError {
                line: tl,
                column: tc,
                expected: vec!["integer that fits in 64 bits".into()],
                found: src[i..end].to_string(),
            })?;
            out.push(Spanned { tok: Tok::Int(n), line: tl, column: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut end = i;
            while let Some(&(j, d)) = chars.peek() {
                if !(d.is_ascii_alphanumeric() || d == '_') {
                    break;
                }
                end = j + 1;
                chars.next();
                col += 1;
            }
            let tok = match &src[i..end] {
                "if" => Tok::If,
                "else" => Tok::Else,
                "while" => Tok::While,
                "return" => Tok::Return,
                "break" => Tok::Break,
                "continue" => Tok::Continue,
                word => Tok::Ident(word.to_string()),
            };
            out.push(Spanned { tok, line: tl, column: tc });
            continue;
        }
        match PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    chars.next();
                }
                col += p.len();
                out.push(Spanned { tok: Tok::Punct(p), line: tl, column: tc });
            }
            None => {
                return Err(ParseError {
                    line: tl,
                    column: tc,
                    expected: vec!["a token".into()],
                    found: format!("character {c:?}"),
                })
            }
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

pub fn parse_program(src: &str) -> Result<Vec<Stmt>, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let mut stmts = Vec::new();
    while p.peek() != &Tok::Eof {
        stmts.push(p.stmt()?);
    }
    Ok(stmts)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let s = &self.toks[self.pos];
        Err(ParseError {
            line: s.line,
            column: s.column,
            expected: expected.iter().map(|e| e.to_string()).collect(),
            found: s.tok.to_string(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn expect(&mut self, p: &'static str) -> Result<(), ParseError> {
        if self.is_punct(p) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[&format!("'{p}'")])
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                self.expect("=")?;
                let value = self.expr()?;
                self.expect(";")?;
                Ok(Stmt::Assign { name, value })
            }
            Tok::If => {
                self.bump();
                let cond = self.paren_expr()?;
                let then_body = self.block()?;
                let else_body = if self.peek() == &Tok::Else {
                    self.bump();
                    Some(self.block()?)
                } else {
                    None
                };
                Ok(Stmt::If { cond, then_body, else_body })
            }
            Tok::While => {
                self.bump();
                let cond = self.paren_expr()?;
                let body = self.block()?;
                Ok(Stmt::While { cond, body })
            }
            Tok::Return => {
                self.bump();
                if self.is_punct(";") {
                    self.bump();
                    return Ok(Stmt::Return(None));
                }
                let e = self.expr()?;
                self.expect(";")?;
                Ok(Stmt::Return(Some(e)))
            }
            Tok::Break => {
                self.bump();
                self.expect(";")?;
                Ok(Stmt::Break)
            }
            Tok::Continue => {
                self.bump();
                self.expect(";")?;
                Ok(Stmt::Continue)
            }
            _ => self.fail(&["statement"]),
        }
    }

    fn paren_expr(&mut self) -> Result<Expr, ParseError> {
        self.expect("(")?;
        let e = self.expr()?;
        self.expect(")")?;
        Ok(e)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect("{")?;
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if self.peek() == &Tok::Eof {
                return self.fail(&["statement", "'}'"]);
            }
            body.push(self.stmt()?);
        }
        self.bump();
        Ok(body)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else { return None };
        Some(match *p {
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_punct("!") {
            self.bump();
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.is_punct("-") {
            self.bump();
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Int(n))
            }
            Tok::Ident(v) => {
                self.bump();
                Ok(Expr::Var(v))
            }
            Tok::Punct("(") => self.paren_expr(),
            _ => self.fail(&["expression"]),
        }
    }
}
