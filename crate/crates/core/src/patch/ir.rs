//! Inserting the accelerator call in front of a loop.
//!
//! The loop's preheader jumps to a new call block that invokes the
//! wrapper and loads the returned outputs. A chain of dispatch blocks
//! compares `bb_idx` with every exit id and branches to that exit's
//! target, which receives new phi operands carrying the accelerator's
//! results; `bb_idx == 0` falls through to the untouched software loop.

use crate::frontend::compile_unit;
use crate::hdl::layout_registers;
use crate::ir::loops::find_loops;
use crate::ir::validate::validate_function;
use crate::ir::{
    ArrayRef, BinOp, BlockId, FuncDecl, MemSpace, MirFunction, MirProgram, Operand, Rvalue, Stmt, Terminator, ValueId,
};
use crate::synth::fsm::FsmSpec;
use crate::synth::region::{ExitSource, LoopRegion};

use super::wrapper::{hook_prototypes, make_wrapper, WrapperSource};
use super::PatchError;

/// What the patch needs to know about a loop, detached from the function
/// it was computed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopInterface {
    pub header: BlockId,
    pub preheader: BlockId,
    pub exits: Vec<(BlockId, BlockId)>,
    pub inputs: Vec<ValueId>,
    pub outputs: Vec<ValueId>,
    /// Per exit: the target's phis and their source.
    pub exit_phis: Vec<Vec<(ValueId, ExitSource)>>,
}

impl LoopInterface {
    /// Analyzes the loop the FSM was built from and checks that it still
    /// matches the FSM's interface.
    pub fn of(f: &MirFunction, fsm: &FsmSpec) -> Result<LoopInterface, PatchError> {
        let stale = |why: String| PatchError::StaleLoop {
            loop_id: fsm.loop_id,
            reason: why,
        };
        let forest = find_loops(f);
        let r = LoopRegion::new(f, &forest, BlockId(fsm.header_block)).map_err(|e| stale(e.to_string()))?;
        let exits: Vec<(u32, u32)> = r.exits.iter().map(|(a, b)| (a.0, b.0)).collect();
        let fsm_exits: Vec<(u32, u32)> = fsm.exits.iter().map(|e| (e.from_block, e.to_block)).collect();
        if exits != fsm_exits {
            return Err(stale(format!("exit edges {exits:?} differ from the accelerator's {fsm_exits:?}")));
        }
        if r.inputs.len() != fsm.inputs.len() || r.outputs.len() != fsm.outputs.len() {
            return Err(stale("live-in/live-out sets differ from the accelerator's ports".into()));
        }
        Ok(LoopInterface {
            header: r.header,
            preheader: r.preheader,
            exits: r.exits.clone(),
            inputs: r.inputs.clone(),
            outputs: r.outputs.iter().map(|(v, _)| *v).collect(),
            exit_phis: r.exit_phis.clone(),
        })
    }
}

/// The blocks and values a patch introduced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPlan {
    pub loop_id: u32,
    pub function: String,
    pub wrapper: String,
    /// The new block holding the wrapper call (the loop's new preheader
    /// from the program's point of view).
    pub call_block: BlockId,
    pub bb_idx: ValueId,
    /// Values receiving the accelerator outputs.
    pub temporaries: Vec<ValueId>,
    /// `(exit id, dispatch block, target block)`.
    pub dispatch: Vec<(u32, BlockId, BlockId)>,
    /// Where `bb_idx == 0` continues: the original loop header.
    pub fallthrough: BlockId,
}

/// Rewrites `f` per `iface` so it calls `w` before the loop.
pub fn patch_function(f: &mut MirFunction, iface: &LoopInterface, w: &WrapperSource) -> Result<PatchPlan, PatchError> {
    let header = iface.header;
    let pre = iface.preheader;
    if f.block(pre).term != Terminator::Goto(header) {
        return Err(PatchError::StaleLoop {
            loop_id: w.loop_id,
            reason: format!("bb{} no longer jumps to the loop header", pre.0),
        });
    }
    let call = f.new_block(Terminator::Return(None));
    let bb_idx = f.new_value(Some("bb_idx".into()));
    let mut stmts = vec![Stmt::Call {
        dst: Some(bb_idx),
        callee: w.name.clone(),
        args: iface.inputs.iter().map(|v| Operand::Value(*v)).collect(),
    }];
    let mut temporaries = Vec::new();
    for k in 0..iface.outputs.len() {
        let t = f.new_value(Some(format!("acc{}", w.loop_id)));
        stmts.push(Stmt::Load {
            dst: t,
            array: ArrayRef {
                name: w.outputs_array.clone(),
                space: MemSpace::Global,
            },
            index: Operand::Const(k as i32),
        });
        temporaries.push(t);
    }
    f.block_mut(call).stmts = stmts;
    f.block_mut(pre).term = Terminator::Goto(call);

    let mut dispatch = Vec::new();
    let mut prev = call;
    for (k, &(_, target)) in iface.exits.iter().enumerate() {
        let id = k as u32 + 1;
        let d = f.new_block(Terminator::Return(None));
        let c = f.new_value(None);
        f.block_mut(d).stmts.push(Stmt::Assign {
            dst: c,
            rv: Rvalue::Binary(BinOp::Eq, Operand::Value(bb_idx), Operand::Const(id as i32)),
        });
        f.block_mut(d).term = Terminator::Branch {
            cond: Operand::Value(c),
            then_bb: target,
            else_bb: header,
        };
        link(f, prev, d);
        for (phi, src) in &iface.exit_phis[k] {
            let op = match *src {
                ExitSource::Output(j) => Operand::Value(temporaries[j]),
                ExitSource::Outside(o) => o,
            };
            add_phi_arg(f, target, *phi, d, op);
        }
        dispatch.push((id, d, target));
        prev = d;
    }
    if prev == call {
        f.block_mut(call).term = Terminator::Goto(header);
    }
    // The software loop is now entered from the last dispatch block.
    for s in &mut f.block_mut(header).stmts {
        if let Stmt::Phi { args, .. } = s {
            for (p, _) in args.iter_mut() {
                if *p == pre {
                    *p = prev;
                }
            }
        }
    }
    f.canonicalize_phis();
    validate_function(f).map_err(|e| PatchError::Invalid(format!("{}: {e}", f.name)))?;
    Ok(PatchPlan {
        loop_id: w.loop_id,
        function: f.name.clone(),
        wrapper: w.name.clone(),
        call_block: call,
        bb_idx,
        temporaries,
        dispatch,
        fallthrough: header,
    })
}

/// Makes `from` continue to `to`: a fresh block's placeholder terminator
/// or the previous dispatch block's else edge.
fn link(f: &mut MirFunction, from: BlockId, to: BlockId) {
    let t = &mut f.block_mut(from).term;
    match t {
        Terminator::Branch { else_bb, .. } => *else_bb = to,
        _ => *t = Terminator::Goto(to),
    }
}

fn add_phi_arg(f: &mut MirFunction, block: BlockId, phi: ValueId, pred: BlockId, op: Operand) {
    for s in &mut f.block_mut(block).stmts {
        if let Stmt::Phi { dst, args } = s {
            if *dst == phi {
                args.push((pred, op));
                return;
            }
        }
    }
}

/// A whole-program patch result.
#[derive(Debug, Clone)]
pub struct PatchedProgram {
    pub program: MirProgram,
    pub plans: Vec<PatchPlan>,
    /// Wrappers per translation unit name.
    pub wrappers: Vec<(String, WrapperSource)>,
}

/// Patches every loop in `fsms` (analyzed on `original`) and adds the
/// compiled wrappers to the units owning the loops.
pub fn patch_program(original: &MirProgram, fsms: &[FsmSpec]) -> Result<PatchedProgram, PatchError> {
    let mut p = original.clone();
    let mut plans = Vec::new();
    let mut wrappers = Vec::new();
    for fsm in fsms {
        let f = original.function(&fsm.function).ok_or_else(|| PatchError::StaleLoop {
            loop_id: fsm.loop_id,
            reason: format!("function '{}' not found", fsm.function),
        })?;
        let iface = LoopInterface::of(f, fsm)?;
        let w = make_wrapper(fsm, &layout_registers(fsm));
        let target = p.function_mut(&fsm.function).expect("function exists in the copy");
        plans.push(patch_function(target, &iface, &w)?);
        let unit = original.unit_of(&fsm.function).expect("owning unit").name.clone();
        add_wrapper_to_unit(&mut p, &unit, &w)?;
        wrappers.push((unit, w));
    }
    Ok(PatchedProgram {
        program: p,
        plans,
        wrappers,
    })
}

/// Compiles the wrapper's C text and merges it into unit `unit`.
fn add_wrapper_to_unit(p: &mut MirProgram, unit: &str, w: &WrapperSource) -> Result<(), PatchError> {
    let src = format!("{}{}", hook_prototypes(), w.to_text());
    let lowered = compile_unit(&src, &format!("{}.wrapper", w.name))
        .map_err(|e| PatchError::Invalid(format!("generated wrapper does not compile: {e}")))?;
    let u = p
        .units
        .iter_mut()
        .find(|u| u.name == unit)
        .ok_or_else(|| PatchError::Invalid(format!("unit '{unit}' not found")))?;
    for g in lowered.unit.globals {
        if !u.globals.iter().any(|x| x.name == g.name) {
            u.globals.push(g);
        }
    }
    for d in lowered.unit.declarations {
        if !u.declarations.iter().any(|x: &FuncDecl| x.name == d.name) {
            u.declarations.push(d);
        }
    }
    u.functions.extend(lowered.unit.functions);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_program;
    use crate::synth::{synthesize_loop, CostModel};
    use crate::verify::{interpret, Limits, NoExternals};

    const UNIT1: &str = include_str!("../../../../corpus/listings/unit1.c");
    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    fn listings() -> MirProgram {
        compile_program(&[("unit1.c".to_string(), UNIT1.to_string()), ("unit2.c".to_string(), UNIT2.to_string())])
            .unwrap()
            .program
    }

    fn fsm(p: &MirProgram, fname: &str, id: u32) -> FsmSpec {
        let f = p.function(fname).unwrap();
        let h = find_loops(f).roots[0].header;
        synthesize_loop(f, h, id, &CostModel::default()).unwrap().fsm
    }

    #[test]
    fn fun3_gets_call_and_two_dispatch_tests() {
        let p = listings();
        let pp = patch_program(&p, &[fsm(&p, "fun3", 3)]).unwrap();
        let plan = &pp.plans[0];
        assert_eq!(plan.wrapper, "__accel_call_3");
        assert_eq!(plan.dispatch.len(), 2);
        assert_eq!(plan.temporaries.len(), 1);
        let f = pp.program.function("fun3").unwrap();
        // Call block: call + one load, then the first test.
        let cb = f.block(plan.call_block);
        assert!(matches!(&cb.stmts[0], Stmt::Call { callee, .. } if callee == "__accel_call_3"));
        assert_eq!(cb.term, Terminator::Goto(plan.dispatch[0].1));
        // Last test falls through to the original header.
        let last = f.block(plan.dispatch[1].1);
        assert!(matches!(last.term, Terminator::Branch { else_bb, .. } if else_bb == plan.fallthrough));
        // The original loop is preserved.
        let orig = p.function("fun3").unwrap();
        for b in &orig.blocks {
            if b.id != find_loops(orig).roots[0].header {
                continue;
            }
            assert_eq!(f.block(b.id).term, b.term);
        }
        assert!(pp.program.function("__accel_call_3").is_some());
        assert!(crate::ir::validate::validate_program(&pp.program).is_ok());
    }

    #[test]
    fn fallback_matches_original() {
        let p = listings();
        let pp = patch_program(&p, &[fsm(&p, "fun3", 3)]).unwrap();
        for (a, b) in [(0, 0), (3, 4), (-100, 7), (250, 1)] {
            let o = interpret(&p, "fun3", &[a, b], Limits::default(), NoExternals);
            let q = interpret(&pp.program, "fun3", &[a, b], Limits::default(), NoExternals);
            assert_eq!(o.ret, q.ret);
            assert_eq!(o.mem.observable(), q.mem.observable());
        }
    }

    #[test]
    fn single_exit_has_one_test() {
        let src = "int g(int x){ int s = 0; for (int i = 0; i < 10; i++) s += x; return s; }";
        let p = compile_program(&[("t.c".to_string(), src.to_string())]).unwrap().program;
        let pp = patch_program(&p, &[fsm(&p, "g", 1)]).unwrap();
        assert_eq!(pp.plans[0].dispatch.len(), 1);
    }

    #[test]
    fn stale_loop_is_rejected() {
        let p = listings();
        let mut bad = fsm(&p, "fun3", 3);
        bad.header_block = 0;
        assert!(matches!(patch_program(&p, &[bad]), Err(PatchError::StaleLoop { .. })));
    }
}
