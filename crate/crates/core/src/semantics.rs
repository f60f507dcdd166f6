//! 32-bit integer semantics shared by constant folding, the interpreter and
//! the FSM simulator. Arithmetic wraps; shift amounts are taken modulo 32;
//! `>>` is arithmetic; division truncates toward zero and traps on zero.

use crate::ir::{BinOp, UnOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trap {
    DivisionByZero,
    OutOfBounds,
}

impl std::fmt::Display for Trap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Trap::DivisionByZero => f.write_str("division by zero"),
            Trap::OutOfBounds => f.write_str("array index out of bounds"),
        }
    }
}

pub fn eval_binary(op: BinOp, a: i32, b: i32) -> Result<i32, Trap> {
    use BinOp::*;
    Ok(match op {
        Add => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Mul => a.wrapping_mul(b),
        Div => {
            if b == 0 {
                return Err(Trap::DivisionByZero);
            }
            a.wrapping_div(b)
        }
        Rem => {
            if b == 0 {
                return Err(Trap::DivisionByZero);
            }
            a.wrapping_rem(b)
        }
        Shl => a.wrapping_shl(b as u32),
        Shr => a.wrapping_shr(b as u32),
        And => a & b,
        Or => a | b,
        Xor => a ^ b,
        Eq => (a == b) as i32,
        Ne => (a != b) as i32,
        Lt => (a < b) as i32,
        Le => (a <= b) as i32,
        Gt => (a > b) as i32,
        Ge => (a >= b) as i32,
    })
}

pub fn eval_unary(op: UnOp, a: i32) -> i32 {
    match op {
        UnOp::Neg => a.wrapping_neg(),
        UnOp::Not => !a,
        UnOp::LNot => (a == 0) as i32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraparound_and_traps() {
        assert_eq!(eval_binary(BinOp::Add, i32::MAX, 1), Ok(i32::MIN));
        assert_eq!(eval_binary(BinOp::Div, i32::MIN, -1), Ok(i32::MIN));
        assert_eq!(eval_binary(BinOp::Rem, 7, 0), Err(Trap::DivisionByZero));
        assert_eq!(eval_binary(BinOp::Div, -7, 2), Ok(-3));
        assert_eq!(eval_binary(BinOp::Rem, -7, 2), Ok(-1));
        assert_eq!(eval_binary(BinOp::Shl, 1, 33), Ok(2));
        assert_eq!(eval_binary(BinOp::Shr, -8, 1), Ok(-4));
        assert_eq!(eval_unary(UnOp::LNot, 5), 0);
    }
}
