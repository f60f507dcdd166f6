//! Static speedup estimate for a synthesized loop, used to accept or
//! reject the accelerator before any code is patched.
//!
//! All times are exact rationals (seconds per loop invocation):
//!
//! * `hw = (overhead + reg_access × transfers + worst × iterations) / f_accel`
//!   where `transfers` counts input, output and `bb_idx` registers;
//! * `sw = Σ sw_cycles(statement) × executions / f_cpu` over the loop body;
//! * `speedup = sw / hw`, accepted when `speedup ≥ min_speedup`.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;

use super::cost::{format_decimal, CostModel, SwKind};
use super::fsm::FsmSpec;
use super::region::LoopRegion;
use crate::ir::{BinOp, Rvalue, Stmt, Terminator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleEstimate {
    pub states: u32,
    pub best_cycles_per_iter: u64,
    pub worst_cycles_per_iter: u64,
    /// Loop-header visits per invocation, summed over the nest.
    pub est_iterations: u128,
    /// Register transfers per invocation.
    pub transfers: u64,
    /// Estimated CPU cycles per invocation.
    pub sw_cycles: u128,
    pub hw_time_s: BigRational,
    pub sw_time_s: BigRational,
    pub speedup: BigRational,
    pub accepted: bool,
    pub reject_reason: Option<String>,
}

fn rat(n: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(n.into())
}

/// Software cost class of a statement; `None` for copies and phis, which
/// a register allocator removes.
pub fn sw_class(s: &Stmt) -> Option<SwKind> {
    match s {
        Stmt::Assign { rv, .. } => match rv {
            Rvalue::Use(_) => None,
            Rvalue::Binary(BinOp::Mul, ..) => Some(SwKind::Mul),
            Rvalue::Binary(BinOp::Div | BinOp::Rem, ..) => Some(SwKind::Div),
            _ => Some(SwKind::Simple),
        },
        Stmt::Load { .. } | Stmt::Store { .. } => Some(SwKind::Mem),
        Stmt::Phi { .. } => None,
        Stmt::Call { .. } => Some(SwKind::Branch),
    }
}

/// Software cost of a terminator: conditional branches only.
pub fn sw_term_class(t: &Terminator) -> Option<SwKind> {
    matches!(t, Terminator::Branch { .. }).then_some(SwKind::Branch)
}

/// CPU cycles of one execution of block `b`.
pub fn block_sw_cycles(f: &crate::ir::MirFunction, b: crate::ir::BlockId, m: &CostModel) -> u64 {
    let blk = f.block(b);
    blk.stmts
        .iter()
        .filter_map(sw_class)
        .chain(sw_term_class(&blk.term))
        .map(|k| m.sw(k) as u64)
        .sum()
}

/// Estimated CPU cycles per invocation: each block weighted by the visits
/// of its innermost enclosing header.
pub fn region_sw_cycles(r: &LoopRegion, m: &CostModel) -> u128 {
    r.body
        .iter()
        .map(|&b| (block_sw_cycles(r.func, b, m) as u128).saturating_mul(r.visits(r.innermost_header(b))))
        .fold(0u128, |a, x| a.saturating_add(x))
}

/// Accelerator time per invocation.
pub fn hw_time(m: &CostModel, transfers: u64, worst: u64, iterations: u128) -> BigRational {
    let cycles = rat(m.invocation_overhead_cycles)
        + rat(m.reg_access_cycles) * rat(transfers)
        + rat(worst) * rat(iterations);
    cycles / rat(m.f_accel_hz)
}

/// Speedup and acceptance for given software and hardware times.
pub fn decide(sw: &BigRational, hw: &BigRational, m: &CostModel) -> (BigRational, bool, Option<String>) {
    let speedup = sw / hw;
    let accepted = speedup >= m.min_speedup;
    let reason = (!accepted).then(|| {
        format!(
            "estimated speedup {} < threshold {}",
            format_decimal(&speedup, 2),
            format_decimal(&m.min_speedup, 2)
        )
    });
    (speedup, accepted, reason)
}

pub fn estimate_and_filter(f: &FsmSpec, r: &LoopRegion, m: &CostModel) -> CycleEstimate {
    let (best, worst) = f.cycle_bounds();
    let iterations = r
        .headers
        .iter()
        .map(|h| r.visits(*h))
        .fold(0u128, |a, x| a.saturating_add(x));
    let transfers = (f.inputs.len() + f.outputs.len() + 1) as u64;
    let sw_cycles = region_sw_cycles(r, m);
    let hw = hw_time(m, transfers, worst, iterations);
    let sw = rat(sw_cycles) / rat(m.f_cpu_hz);
    let (speedup, accepted, reject_reason) = decide(&sw, &hw, m);
    CycleEstimate {
        states: f.state_count(),
        best_cycles_per_iter: best,
        worst_cycles_per_iter: worst,
        est_iterations: iterations,
        transfers,
        sw_cycles,
        hw_time_s: hw,
        sw_time_s: sw,
        speedup,
        accepted,
        reject_reason,
    }
}

impl CycleEstimate {
    /// `key=value` lines for reports.
    pub fn to_kv(&self, prefix: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{prefix}.states={}", self.states);
        let _ = writeln!(s, "{prefix}.best_cycles_per_iter={}", self.best_cycles_per_iter);
        let _ = writeln!(s, "{prefix}.worst_cycles_per_iter={}", self.worst_cycles_per_iter);
        let _ = writeln!(s, "{prefix}.est_iterations={}", self.est_iterations);
        let _ = writeln!(s, "{prefix}.transfers={}", self.transfers);
        let _ = writeln!(s, "{prefix}.sw_cycles={}", self.sw_cycles);
        let _ = writeln!(s, "{prefix}.hw_time_s={}", self.hw_time_s);
        let _ = writeln!(s, "{prefix}.sw_time_s={}", self.sw_time_s);
        let _ = writeln!(s, "{prefix}.speedup={}", self.speedup);
        let _ = writeln!(s, "{prefix}.speedup_decimal={}", format_decimal(&self.speedup, 3));
        let _ = writeln!(s, "{prefix}.accepted={}", self.accepted as u8);
        let _ = writeln!(s, "{prefix}.reason={}", self.reject_reason.as_deref().unwrap_or("-"));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    #[test]
    fn one_state_per_iteration_doubles_speed() {
        let mut m = CostModel::default();
        m.f_cpu_hz = 100_000_000;
        m.f_accel_hz = 100_000_000;
        m.invocation_overhead_cycles = 0;
        m.reg_access_cycles = 0;
        let hw = hw_time(&m, 3, 1, 1000);
        let sw = rat(2 * 1000) / rat(m.f_cpu_hz);
        let (speedup, accepted, reason) = decide(&sw, &hw, &m);
        assert_eq!(speedup, rat(2));
        assert!(accepted && reason.is_none());
    }

    #[test]
    fn measured_table_values_are_rejected() {
        let m = CostModel::default();
        let us = |x: i64| rat(x) / rat(1_000_000);
        let (speedup, accepted, reason) = decide(&us(62), &us(126), &m);
        assert_eq!(format_decimal(&speedup, 2), "0.49");
        assert!(!accepted);
        assert!(reason.unwrap().contains("0.49 < threshold 1.00"));
    }

    #[test]
    fn zero_threshold_accepts_everything() {
        let mut m = CostModel::default();
        m.min_speedup = BigRational::zero();
        let (_, accepted, _) = decide(&rat(1), &rat(1_000_000), &m);
        assert!(accepted);
    }

    #[test]
    fn fun3_estimate_is_consistent() {
        let src = include_str!("../../../../corpus/listings/unit2.c");
        let u = crate::frontend::compile_unit(src, "unit2.c").unwrap().unit;
        let f = u.functions.iter().find(|f| f.name == "fun3").unwrap();
        let forest = crate::ir::loops::find_loops(f);
        let m = CostModel::default();
        let s = crate::synth::synthesize_loop(f, forest.roots[0].header, 3, &m).unwrap();
        let e = &s.estimate;
        assert_eq!(e.est_iterations, 100);
        assert_eq!(e.transfers, 4);
        assert!(e.best_cycles_per_iter <= e.worst_cycles_per_iter);
        assert_eq!(&e.speedup * &e.hw_time_s, e.sw_time_s);
        // Independent recomputation of the hardware time.
        let cycles = 50 + 14 * 4 + e.worst_cycles_per_iter as u128 * 100;
        assert_eq!(e.hw_time_s, rat(cycles) / rat(333_000_000u64));
    }
}
