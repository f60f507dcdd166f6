//! Structural and SSA invariant checks for the IR.

use std::collections::HashSet;

use super::dom::Dominators;
use super::{MirFunction, MirProgram, Operand, Stmt, Terminator, ValueId};

/// Checks block numbering, edge well-formedness, phi placement and operand
/// order, single definition, and that every use is dominated by its
/// definition.
pub fn validate_function(f: &MirFunction) -> Result<(), String> {
    let nb = f.blocks.len();
    let nv = f.values.len();
    let fname = &f.name;
    if f.entry.index() >= nb || f.exit.index() >= nb {
        return Err(format!("{fname}: entry or exit block out of range"));
    }
    for (i, b) in f.blocks.iter().enumerate() {
        if b.id.index() != i {
            return Err(format!("{fname}: block at position {i} has id {}", b.id));
        }
        for s in b.term.successors() {
            if s.index() >= nb {
                return Err(format!("{fname}: {} jumps to missing block {s}", b.id));
            }
            if s == f.entry {
                return Err(format!("{fname}: {} jumps to the entry block", b.id));
            }
        }
        if let Terminator::Branch { then_bb, else_bb, .. } = b.term {
            if then_bb == else_bb {
                return Err(format!("{fname}: {} branches to {then_bb} on both edges", b.id));
            }
        }
    }

    let mut def_block = vec![None; nv];
    let mut def_pos = vec![usize::MAX; nv];
    let mut define = |v: ValueId, b: usize, pos: usize| -> Result<(), String> {
        if v.index() >= nv {
            return Err(format!("{fname}: definition of unknown value {v}"));
        }
        if def_block[v.index()].is_some() {
            return Err(format!("{fname}: value {v} defined more than once"));
        }
        def_block[v.index()] = Some(b);
        def_pos[v.index()] = pos;
        Ok(())
    };
    for (_, p) in &f.params {
        define(*p, f.entry.index(), 0)?;
    }
    for b in &f.blocks {
        let mut seen_non_phi = false;
        for (k, s) in b.stmts.iter().enumerate() {
            if s.is_phi() {
                if seen_non_phi {
                    return Err(format!("{fname}: phi after a non-phi statement in {}", b.id));
                }
            } else {
                seen_non_phi = true;
            }
            if let Some(d) = s.def() {
                define(d, b.id.index(), k + 1)?;
            }
        }
    }

    let dom = Dominators::of(f);
    let preds = f.predecessors();
    let check_use = |o: Operand, block: usize, pos: usize, what: &str| -> Result<(), String> {
        let Operand::Value(v) = o else { return Ok(()) };
        if v.index() >= nv {
            return Err(format!("{fname}: use of unknown value {v} in {what}"));
        }
        let Some(db) = def_block[v.index()] else {
            return Err(format!("{fname}: use of undefined value {v} in {what}"));
        };
        let ok = if db == block {
            def_pos[v.index()] < pos
        } else {
            dom.dominates(db, block)
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{fname}: use of {v} in {what} is not dominated by its definition"))
        }
    };
    for b in &f.blocks {
        let i = b.id.index();
        if !dom.is_reachable(i) {
            if b.id != f.exit {
                return Err(format!("{fname}: {} is unreachable", b.id));
            }
            continue;
        }
        for (k, s) in b.stmts.iter().enumerate() {
            if let Stmt::Phi { args, .. } = s {
                let order: Vec<_> = args.iter().map(|(p, _)| *p).collect();
                if order != preds[i] {
                    return Err(format!(
                        "{fname}: phi in {} lists predecessors {:?}, expected {:?}",
                        b.id, order, preds[i]
                    ));
                }
                for (p, o) in args {
                    // The operand must be available at the end of the predecessor.
                    check_use(*o, p.index(), usize::MAX, &format!("phi operand from {p}"))?;
                }
            } else {
                for o in s.uses() {
                    check_use(o, i, k + 1, &format!("{}", b.id))?;
                }
            }
        }
        for o in b.term.uses() {
            check_use(o, i, usize::MAX, &format!("terminator of {}", b.id))?;
        }
    }
    for b in &f.blocks {
        for s in &b.stmts {
            let array = match s {
                Stmt::Load { array, .. } | Stmt::Store { array, .. } => array,
                _ => continue,
            };
            if array.space == super::MemSpace::Local && f.local_array(&array.name).is_none() {
                return Err(format!("{fname}: unknown local array '{}'", array.name));
            }
        }
    }
    Ok(())
}

/// Validates every function plus program-wide references: call targets,
/// call arity, and global array names.
pub fn validate_program(p: &MirProgram) -> Result<(), String> {
    let mut names = HashSet::new();
    for f in p.functions() {
        if !names.insert(f.name.as_str()) {
            return Err(format!("function '{}' defined more than once", f.name));
        }
        validate_function(f)?;
    }
    for u in &p.units {
        for f in &u.functions {
            for b in &f.blocks {
                for s in &b.stmts {
                    match s {
                        Stmt::Call { callee, args, dst } => {
                            let arity = if let Some(g) = p.function(callee) {
                                Some((g.params.len(), g.returns_value))
                            } else {
                                u.declarations
                                    .iter()
                                    .find(|d| &d.name == callee)
                                    .map(|d| (d.arity, d.returns_value))
                            };
                            let Some((n, returns)) = arity else {
                                return Err(format!("{}: call to unknown function '{callee}'", f.name));
                            };
                            if n != args.len() {
                                return Err(format!("{}: call to '{callee}' has {} argument(s), expected {n}", f.name, args.len()));
                            }
                            if dst.is_some() && !returns {
                                return Err(format!("{}: result of void function '{callee}' used", f.name));
                            }
                        }
                        Stmt::Load { array, .. } | Stmt::Store { array, .. } if array.space == super::MemSpace::Global => {
                            if p.global(&array.name).is_none() {
                                return Err(format!("{}: unknown global '{}'", f.name, array.name));
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(())
}
