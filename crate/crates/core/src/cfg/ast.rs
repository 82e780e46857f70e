use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter. All binary levels are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 5,
        }
    }
}

const UNARY_PREC: u8 = 6;
const ATOM_PREC: u8 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Int(_) | Expr::Var(_) => ATOM_PREC,
            Expr::Unary(..) => UNARY_PREC,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }

    /// Variables read by this expression, in evaluation order, with repeats.
    pub fn uses<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Int(_) => {}
            Expr::Var(v) => out.push(v),
            Expr::Unary(_, e) => e.uses(out),
            Expr::Binary(_, l, r) => {
                l.uses(out);
                r.uses(out);
            }
        }
    }

    fn write(&self, f: &mut impl fmt::Write) -> fmt::Result {
        match self {
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Unary(op, e) => {
                f.write_char(match op {
                    UnOp::Not => '!',
                    UnOp::Neg => '-',
                })?;
                write_operand(f, e, e.precedence() < UNARY_PREC)
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                write_operand(f, l, l.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, r, r.precedence() <= p)
            }
        }
    }
}

fn write_operand(f: &mut impl fmt::Write, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        f.write_char('(')?;
        e.write(f)?;
        f.write_char(')')
    } else {
        e.write(f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign { name: String, value: Expr },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    While { cond: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    Break,
    Continue,
}

impl Stmt {
    pub fn assign(name: &str, value: Expr) -> Stmt {
        Stmt::Assign { name: name.to_string(), value }
    }

    /// Number of statements in this subtree, self included. Statements are
    /// numbered in pre-order, which is how CFG sites are keyed.
    pub fn size(&self) -> usize {
        1 + match self {
            Stmt::If { then_body, else_body, .. } => {
                body_size(then_body) + else_body.as_deref().map(body_size).unwrap_or(0)
            }
            Stmt::While { body, .. } => body_size(body),
            _ => 0,
        }
    }

    /// Single-line form of a non-compound statement, e.g. `x = y + 1;`.
    pub fn simple_text(&self) -> Option<String> {
        Some(match self {
            Stmt::Assign { name, value } => format!("{name} = {value};"),
            Stmt::Return(None) => "return;".into(),
            Stmt::Return(Some(e)) => format!("return {e};"),
            Stmt::Break => "break;".into(),
            Stmt::Continue => "continue;".into(),
            Stmt::If { .. } | Stmt::While { .. } => return None,
        })
    }

    fn write(&self, out: &mut String, depth: usize) {
        let pad = "    ".repeat(depth);
        if let Some(line) = self.simple_text() {
            let _ = writeln!(out, "{pad}{line}");
            return;
        }
        match self {
            Stmt::If { cond, then_body, else_body } => {
                let _ = writeln!(out, "{pad}if ({cond}) {{");
                write_body(out, then_body, depth + 1);
                match else_body {
                    Some(e) => {
                        let _ = writeln!(out, "{pad}}} else {{");
                        write_body(out, e, depth + 1);
                        let _ = writeln!(out, "{pad}}}");
                    }
                    None => {
                        let _ = writeln!(out, "{pad}}}");
                    }
                }
            }
            Stmt::While { cond, body } => {
                let _ = writeln!(out, "{pad}while ({cond}) {{");
                write_body(out, body, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
            _ => unreachable!("simple statements handled above"),
        }
    }
}

pub fn body_size(body: &[Stmt]) -> usize {
    body.iter().map(Stmt::size).sum()
}

fn write_body(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        s.write(out, depth);
    }
}

/// Source text for a statement list, four-space indented.
pub fn pretty(stmts: &[Stmt]) -> String {
    let mut out = String::new();
    write_body(&mut out, stmts, 0);
    out
}
