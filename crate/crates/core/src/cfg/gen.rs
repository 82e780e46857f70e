//! Random well-formed programs for property tests and corpus building.

use rand::Rng;

use super::ast::{BinOp, Expr, Stmt, UnOp};

pub const MAX_DEPTH: usize = 3;
pub const MAX_BLOCK_LEN: usize = 5;

/// Variable names the generator draws from.
pub const VARS: [&str; 4] = ["a", "b", "x", "y"];

const BIN_OPS: [BinOp; 13] = [
    BinOp::Mul,
    BinOp::Div,
    BinOp::Rem,
    BinOp::Add,
    BinOp::Sub,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::And,
    BinOp::Or,
];

/// A program of at most [`MAX_BLOCK_LEN`] statements per block, nested at
/// most [`MAX_DEPTH`] levels. `break` and `continue` only appear in loops.
/// Integer literals are non-negative so the printed form re-parses exactly.
pub fn random_program<R: Rng + ?Sized>(rng: &mut R) -> Vec<Stmt> {
    let mut out = block(rng, 0, false);
    if out.is_empty() {
        out.push(Stmt::assign("x", Expr::Int(0)));
    }
    out
}

/// An environment binding every name in [`VARS`] to a small integer.
pub fn random_env<R: Rng + ?Sized>(rng: &mut R) -> super::interp::Env {
    VARS.iter().map(|v| (v.to_string(), rng.gen_range(-5..=5))).collect()
}

fn block<R: Rng + ?Sized>(rng: &mut R, depth: usize, in_loop: bool) -> Vec<Stmt> {
    let len = rng.gen_range(if depth == 0 { 1 } else { 0 }..=MAX_BLOCK_LEN);
    (0..len).map(|_| stmt(rng, depth, in_loop)).collect()
}

fn stmt<R: Rng + ?Sized>(rng: &mut R, depth: usize, in_loop: bool) -> Stmt {
    let nested = depth < MAX_DEPTH;
    loop {
        match rng.gen_range(0..10) {
            0..=4 => return Stmt::assign(VARS[rng.gen_range(0..VARS.len())], expr(rng, 2)),
            5 | 6 if nested => {
                let else_body = rng.gen_bool(0.5).then(|| block(rng, depth + 1, in_loop));
                return Stmt::If { cond: expr(rng, 2), then_body: block(rng, depth + 1, in_loop), else_body };
            }
            7 if nested => return Stmt::While { cond: expr(rng, 2), body: block(rng, depth + 1, true) },
            8 => return Stmt::Return(rng.gen_bool(0.7).then(|| expr(rng, 1))),
            9 if in_loop => return if rng.gen_bool(0.5) { Stmt::Break } else { Stmt::Continue },
            _ => continue,
        }
    }
}

fn expr<R: Rng + ?Sized>(rng: &mut R, depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.35) {
        return if rng.gen_bool(0.5) {
            Expr::Int(rng.gen_range(0..10))
        } else {
            Expr::var(VARS[rng.gen_range(0..VARS.len())])
        };
    }
    match rng.gen_range(0..6) {
        0 => Expr::Unary(if rng.gen_bool(0.5) { UnOp::Not } else { UnOp::Neg }, Box::new(expr(rng, depth - 1))),
        _ => Expr::bin(BIN_OPS[rng.gen_range(0..BIN_OPS.len())], expr(rng, depth - 1), expr(rng, depth - 1)),
    }
}

/// Nesting depth of compound statements; a flat program has depth 0.
pub fn nesting_depth(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| match s {
            Stmt::If { then_body, else_body, .. } => {
                1 + nesting_depth(then_body).max(else_body.as_deref().map(nesting_depth).unwrap_or(0))
            }
            Stmt::While { body, .. } => 1 + nesting_depth(body),
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::{build_cfg, parse_program, pretty};
    use super::*;

    fn longest_block(stmts: &[Stmt]) -> usize {
        stmts
            .iter()
            .map(|s| match s {
                Stmt::If { then_body, else_body, .. } => {
                    longest_block(then_body).max(else_body.as_deref().map(longest_block).unwrap_or(0))
                }
                Stmt::While { body, .. } => longest_block(body),
                _ => 0,
            })
            .max()
            .unwrap_or(0)
            .max(stmts.len())
    }

    #[test]
    fn generated_programs_respect_bounds_and_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let p = random_program(&mut rng);
            assert!(nesting_depth(&p) <= MAX_DEPTH);
            assert!(longest_block(&p) <= MAX_BLOCK_LEN);
            build_cfg(&p).expect("generator keeps break/continue inside loops");
            assert_eq!(parse_program(&pretty(&p)).unwrap(), p);
        }
    }
}
