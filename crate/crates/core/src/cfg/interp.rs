//! Small-step reference interpreter over the AST.
//!
//! Execution walks the syntax tree, not the CFG. It reports which basic
//! block each executed statement lives in (via the builder's site map), so
//! its trace can be checked against the CFG's edges independently.

use std::collections::BTreeMap;

use super::ast::{BinOp, Expr, Stmt, UnOp};
use super::build::{build_cfg, Cfg, CfgError, Site};

pub type Env = BTreeMap<String, i64>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InterpError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("fuel exhausted")]
    FuelExhausted,
    #[error("undefined variable {0}")]
    UndefinedVariable(String),
    #[error(transparent)]
    Cfg(#[from] CfgError),
}

/// One visited block; `branch` is set when the block's condition was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub block: usize,
    pub branch: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    /// Control fell off the end of the program.
    Completed,
    Returned(Option<i64>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub env: Env,
    pub termination: Termination,
    pub steps: Vec<Step>,
}

impl Execution {
    pub fn trace(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.block).collect()
    }
}

/// A run that may have stopped early; the partial trace is still a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub result: Result<Termination, InterpError>,
    pub env: Env,
    pub steps: Vec<Step>,
}

/// Build the CFG for `program` and run it.
pub fn interpret(program: &[Stmt], env: Env, fuel: u64) -> Result<Execution, InterpError> {
    let cfg = build_cfg(program)?;
    let run = run_traced(program, &cfg, env, fuel);
    run.result.map(|termination| Execution { env: run.env, termination, steps: run.steps })
}

pub fn run_traced(program: &[Stmt], cfg: &Cfg, env: Env, fuel: u64) -> Run {
    let mut m = Machine { cfg, env, fuel, steps: Vec::new() };
    m.visit(Some(cfg.entry()));
    let result = match m.body(program, 0) {
        Ok(Flow::Normal) => {
            m.visit(Some(cfg.exit()));
            Ok(Termination::Completed)
        }
        Ok(Flow::Return(v)) => Ok(Termination::Returned(v)),
        Ok(Flow::Break | Flow::Continue) => unreachable!("cfg build rejects stray break/continue"),
        Err(e) => Err(e),
    };
    Run { result, env: m.env, steps: m.steps }
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Option<i64>),
}

struct Machine<'a> {
    cfg: &'a Cfg,
    env: Env,
    fuel: u64,
    steps: Vec<Step>,
}

impl Machine<'_> {
    fn visit(&mut self, block: Option<usize>) {
        let block = block.expect("executed code lives in a reachable block");
        if self.steps.last().map(|s| s.block) != Some(block) {
            self.steps.push(Step { block, branch: None });
        }
    }

    fn decide(&mut self, taken: bool) {
        let last = self.steps.last_mut().expect("branch block was visited");
        last.branch = Some(taken);
    }

    fn burn(&mut self) -> Result<(), InterpError> {
        if self.fuel == 0 {
            return Err(InterpError::FuelExhausted);
        }
        self.fuel -= 1;
        Ok(())
    }

    /// Runs `stmts`; `base` is the pre-order number of the first statement.
    fn body(&mut self, stmts: &[Stmt], mut base: usize) -> Result<Flow, InterpError> {
        for s in stmts {
            let flow = self.stmt(s, base)?;
            if !matches!(flow, Flow::Normal) {
                return Ok(flow);
            }
            base += s.size();
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &Stmt, index: usize) -> Result<Flow, InterpError> {
        let site = self.cfg.sites[index].clone();
        match (s, site) {
            (Stmt::Assign { name, value }, Site::Simple { block }) => {
                self.visit(block);
                self.burn()?;
                let v = self.eval(value)?;
                self.env.insert(name.clone(), v);
                Ok(Flow::Normal)
            }
            (Stmt::Return(e), Site::Simple { block }) => {
                self.visit(block);
                self.burn()?;
                let v = e.as_ref().map(|e| self.eval(e)).transpose()?;
                self.visit(Some(self.cfg.exit()));
                Ok(Flow::Return(v))
            }
            (Stmt::Break, Site::Simple { block }) => {
                self.visit(block);
                self.burn()?;
                Ok(Flow::Break)
            }
            (Stmt::Continue, Site::Simple { block }) => {
                self.visit(block);
                self.burn()?;
                Ok(Flow::Continue)
            }
            (Stmt::If { cond, then_body, else_body }, Site::If { branch, then_entry, else_entry, join }) => {
                self.visit(branch);
                self.burn()?;
                let taken = self.eval(cond)? != 0;
                self.decide(taken);
                let flow = if taken {
                    self.visit(then_entry);
                    self.body(then_body, index + 1)?
                } else if let Some(e) = else_body {
                    self.visit(else_entry);
                    self.body(e, index + 1 + super::ast::body_size(then_body))?
                } else {
                    Flow::Normal
                };
                if matches!(flow, Flow::Normal) {
                    self.visit(join);
                }
                Ok(flow)
            }
            (Stmt::While { cond, body }, Site::While { header, body_entry, after }) => loop {
                self.visit(header);
                self.burn()?;
                let taken = self.eval(cond)? != 0;
                self.decide(taken);
                if !taken {
                    self.visit(after);
                    return Ok(Flow::Normal);
                }
                self.visit(body_entry);
                match self.body(body, index + 1)? {
                    Flow::Normal | Flow::Continue => continue,
                    Flow::Break => {
                        self.visit(after);
                        return Ok(Flow::Normal);
                    }
                    r @ Flow::Return(_) => return Ok(r),
                }
            },
            (s, site) => unreachable!("site {site:?} does not match statement {s:?}"),
        }
    }

    fn eval(&self, e: &Expr) -> Result<i64, InterpError> {
        Ok(match e {
            Expr::Int(n) => *n,
            Expr::Var(v) => *self.env.get(v).ok_or_else(|| InterpError::UndefinedVariable(v.clone()))?,
            Expr::Unary(UnOp::Neg, e) => self.eval(e)?.wrapping_neg(),
            Expr::Unary(UnOp::Not, e) => (self.eval(e)? == 0) as i64,
            Expr::Binary(BinOp::And, l, r) => (self.eval(l)? != 0 && self.eval(r)? != 0) as i64,
            Expr::Binary(BinOp::Or, l, r) => (self.eval(l)? != 0 || self.eval(r)? != 0) as i64,
            Expr::Binary(op, l, r) => {
                let (a, b) = (self.eval(l)?, self.eval(r)?);
                match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::Div | BinOp::Rem if b == 0 => return Err(InterpError::DivisionByZero),
                    BinOp::Div => a.wrapping_div(b),
                    BinOp::Rem => a.wrapping_rem(b),
                    BinOp::Lt => (a < b) as i64,
                    BinOp::Le => (a <= b) as i64,
                    BinOp::Gt => (a > b) as i64,
                    BinOp::Ge => (a >= b) as i64,
                    BinOp::Eq => (a == b) as i64,
                    BinOp::Ne => (a != b) as i64,
                    BinOp::And | BinOp::Or => unreachable!("short-circuit forms handled above"),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_program;
    use super::*;

    fn env(pairs: &[(&str, i64)]) -> Env {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn straight_line_trace() {
        let p = parse_program("x = 1; y = x + 2;").unwrap();
        let ex = interpret(&p, Env::new(), 100).unwrap();
        assert_eq!(ex.env, env(&[("x", 1), ("y", 3)]));
        assert_eq!(ex.trace(), [0, 1, 2]);
        assert_eq!(ex.termination, Termination::Completed);
    }

    #[test]
    fn loop_visits_header_four_times() {
        let p = parse_program("while (x < 3) { x = x + 1; }").unwrap();
        let ex = interpret(&p, env(&[("x", 0)]), 100).unwrap();
        assert_eq!(ex.env, env(&[("x", 3)]));
        // Header is b1 (the reused first block).
        assert_eq!(ex.trace().iter().filter(|&&b| b == 1).count(), 4);
        let decisions: Vec<_> = ex.steps.iter().filter_map(|s| s.branch).collect();
        assert_eq!(decisions, [true, true, true, false]);
    }

    #[test]
    fn division_by_zero() {
        let p = parse_program("x = 1 / 0;").unwrap();
        assert_eq!(interpret(&p, Env::new(), 10).unwrap_err(), InterpError::DivisionByZero);
        let p = parse_program("x = 1 % (2 - 2);").unwrap();
        assert_eq!(interpret(&p, Env::new(), 10).unwrap_err(), InterpError::DivisionByZero);
    }

    #[test]
    fn fuel_and_undefined() {
        let p = parse_program("while (1) { }").unwrap();
        assert_eq!(interpret(&p, Env::new(), 50).unwrap_err(), InterpError::FuelExhausted);
        let p = parse_program("y = z;").unwrap();
        assert_eq!(interpret(&p, Env::new(), 5).unwrap_err(), InterpError::UndefinedVariable("z".into()));
    }

    #[test]
    fn return_value_and_short_circuit() {
        let p = parse_program("if (0 && 1 / 0) { return 1; } return 2 || 1 / 0;").unwrap();
        let ex = interpret(&p, Env::new(), 10).unwrap();
        assert_eq!(ex.termination, Termination::Returned(Some(1)));
        // entry, branch, then, join, exit: the false edge goes straight to the join.
        assert_eq!(ex.trace(), [0, 1, 3, 4]);
    }

    #[test]
    fn break_and_continue() {
        let src = "i = 0; s = 0; while (1) { i = i + 1; if (i > 5) { break; } if (i % 2) { continue; } s = s + i; }";
        let p = parse_program(src).unwrap();
        let ex = interpret(&p, Env::new(), 1000).unwrap();
        assert_eq!(ex.env["s"], 2 + 4);
        assert_eq!(ex.env["i"], 6);
    }
}
