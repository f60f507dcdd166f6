//! The boundary of a loop (nest) chosen for synthesis: its blocks, exits,
//! live-in and live-out values, and the loop headers that start
//! hyperblocks.

use std::collections::{BTreeSet, HashMap};

use crate::ir::loops::{LoopForest, LoopNode};
use crate::ir::{BlockId, MemSpace, MirFunction, Operand, Rvalue, Stmt, Terminator, ValueId};

use super::SynthError;

/// How an exit-block phi obtains its value when the accelerator leaves
/// through that exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitSource {
    /// The value computed in the loop, returned in data output `k`.
    Output(usize),
    /// A value that does not change in the loop (a live-in or a constant).
    Outside(Operand),
}

#[derive(Debug, Clone)]
pub struct LoopRegion<'f> {
    pub func: &'f MirFunction,
    pub header: BlockId,
    pub preheader: BlockId,
    /// Sorted.
    pub body: Vec<BlockId>,
    /// Exit edges (inside, outside); exit id = position + 1.
    pub exits: Vec<(BlockId, BlockId)>,
    /// Headers of every loop in the nest, outermost first (preorder).
    pub headers: Vec<BlockId>,
    /// Per nest header: estimated latch executions and the enclosing header.
    pub counts: Vec<(BlockId, u64, Option<BlockId>)>,
    /// Copy chains resolved: `alias[v]` is the operand `v` is a copy of
    /// (or `v` itself).
    pub alias: Vec<Operand>,
    /// Values defined outside the loop and read inside.
    pub inputs: Vec<ValueId>,
    /// Distinct loop-defined values that reach an exit phi, with port names.
    pub outputs: Vec<(ValueId, String)>,
    /// For every exit: the target's phis and where their values come from.
    pub exit_phis: Vec<Vec<(ValueId, ExitSource)>>,
    /// Global arrays accessed in the loop.
    pub arrays: Vec<String>,
    /// Innermost nest header per body block.
    innermost: HashMap<BlockId, BlockId>,
    def_block: Vec<Option<BlockId>>,
}

fn resolve(alias: &mut Vec<Option<Operand>>, copies: &HashMap<ValueId, Operand>, v: ValueId) -> Operand {
    if let Some(o) = alias[v.index()] {
        return o;
    }
    let r = match copies.get(&v) {
        Some(Operand::Value(w)) if *w != v => resolve(alias, copies, *w),
        Some(o @ Operand::Const(_)) => *o,
        _ => Operand::Value(v),
    };
    alias[v.index()] = Some(r);
    r
}

/// Resolves every `copy` chain in `f`.
pub fn copy_aliases(f: &MirFunction) -> Vec<Operand> {
    let mut copies = HashMap::new();
    for b in &f.blocks {
        for s in &b.stmts {
            if let Stmt::Assign { dst, rv: Rvalue::Use(o) } = s {
                copies.insert(*dst, *o);
            }
        }
    }
    let mut alias = vec![None; f.values.len()];
    (0..f.values.len())
        .map(|i| resolve(&mut alias, &copies, ValueId(i as u32)))
        .collect()
}

impl<'f> LoopRegion<'f> {
    /// Analyzes the loop with header `header`. Fails for loops the
    /// accelerator cannot express (calls, local arrays, irreducible flow,
    /// values escaping without an exit phi).
    pub fn new(f: &'f MirFunction, forest: &LoopForest, header: BlockId) -> Result<LoopRegion<'f>, SynthError> {
        let unsupported = |reason: String| SynthError::Unsupported {
            function: f.name.clone(),
            reason,
        };
        let node: &LoopNode = forest
            .by_header(header)
            .ok_or_else(|| SynthError::StaleLoop(format!("{}: no loop with header {header}", f.name)))?;
        if node.preorder().iter().any(|l| l.irreducible_inside) {
            return Err(unsupported("irreducible control flow in loop".into()));
        }
        let body = node.body.clone();
        let in_body = |b: BlockId| body.binary_search(&b).is_ok();

        let preds = f.predecessors();
        let outside: Vec<BlockId> = preds[header.index()].iter().copied().filter(|p| !in_body(*p)).collect();
        let preheader = match outside.as_slice() {
            [p] if matches!(f.block(*p).term, Terminator::Goto(_)) => *p,
            _ => return Err(unsupported("loop has no dedicated preheader".into())),
        };

        let mut arrays = Vec::new();
        for &b in &body {
            for s in &f.block(b).stmts {
                match s {
                    Stmt::Call { callee, .. } => {
                        return Err(unsupported(format!("call to '{callee}' in loop body")));
                    }
                    Stmt::Load { array, .. } | Stmt::Store { array, .. } => {
                        if array.space == MemSpace::Local {
                            return Err(unsupported(format!("access to local array '{}'", array.name)));
                        }
                        if !arrays.contains(&array.name) {
                            arrays.push(array.name.clone());
                        }
                    }
                    _ => {}
                }
            }
        }

        let alias = copy_aliases(f);
        let def_block = f.def_blocks();
        let defined_inside = |o: Operand| match o {
            Operand::Value(v) => def_block[v.index()].is_some_and(in_body),
            Operand::Const(_) => false,
        };

        // Live-ins.
        let mut inputs_set = BTreeSet::new();
        for &b in &body {
            let blk = f.block(b);
            let uses = blk.stmts.iter().flat_map(|s| s.uses()).chain(blk.term.uses());
            for o in uses {
                if let Operand::Value(v) = alias_of(&alias, o) {
                    if !defined_inside(Operand::Value(v)) {
                        inputs_set.insert(v);
                    }
                }
            }
        }
        let mut inputs: Vec<ValueId> = Vec::new();
        for (_, p) in &f.params {
            if inputs_set.remove(p) {
                inputs.push(*p);
            }
        }
        inputs.extend(inputs_set);

        // Live-outs: only through phis at the exit targets.
        for b in &f.blocks {
            if in_body(b.id) {
                continue;
            }
            let exit_target = node.exits.iter().any(|(_, t)| *t == b.id);
            for s in &b.stmts {
                if s.is_phi() && exit_target {
                    continue;
                }
                for o in s.uses() {
                    if defined_inside(alias_of(&alias, o)) {
                        return Err(unsupported(format!("loop value used after {} without an exit phi", b.id)));
                    }
                }
            }
            for o in b.term.uses() {
                if defined_inside(alias_of(&alias, o)) {
                    return Err(unsupported(format!("loop value used after {} without an exit phi", b.id)));
                }
            }
        }
        let mut outputs: Vec<(ValueId, String)> = Vec::new();
        let mut exit_phis = Vec::new();
        for &(src, tgt) in &node.exits {
            if preds[tgt.index()].len() != 1 {
                return Err(unsupported(format!("exit block {tgt} is shared")));
            }
            let mut phis = Vec::new();
            for s in &f.block(tgt).stmts {
                let Stmt::Phi { dst, args } = s else { continue };
                let op = args
                    .iter()
                    .find(|(p, _)| *p == src)
                    .map(|(_, o)| alias_of(&alias, *o))
                    .expect("exit phi has an operand for its only predecessor");
                let source = match op {
                    Operand::Value(v) if defined_inside(op) => {
                        let k = match outputs.iter().position(|(w, _)| *w == v) {
                            Some(k) => k,
                            None => {
                                let base = f.value_name(*dst).or_else(|| f.value_name(v)).unwrap_or("value");
                                outputs.push((v, format!("{}_out", base.replace('.', "_"))));
                                outputs.len() - 1
                            }
                        };
                        ExitSource::Output(k)
                    }
                    other => ExitSource::Outside(other),
                };
                phis.push((*dst, source));
            }
            exit_phis.push(phis);
        }

        let nest = node.preorder();
        let headers: Vec<BlockId> = nest.iter().map(|l| l.header).collect();
        let mut counts = Vec::new();
        let mut innermost = HashMap::new();
        for l in &nest {
            let parent = nest
                .iter()
                .filter(|p| p.header != l.header && p.contains(l.header))
                .min_by_key(|p| p.body.len())
                .map(|p| p.header);
            counts.push((l.header, l.local_count, parent));
        }
        for &b in &body {
            let inner = nest
                .iter()
                .filter(|l| l.contains(b))
                .min_by_key(|l| l.body.len())
                .map(|l| l.header)
                .expect("block of the nest");
            innermost.insert(b, inner);
        }

        Ok(LoopRegion {
            func: f,
            header,
            preheader,
            body,
            exits: node.exits.clone(),
            headers,
            counts,
            alias,
            inputs,
            outputs,
            exit_phis,
            arrays,
            innermost,
            def_block,
        })
    }

    pub fn contains(&self, b: BlockId) -> bool {
        self.body.binary_search(&b).is_ok()
    }

    pub fn is_header(&self, b: BlockId) -> bool {
        self.headers.contains(&b)
    }

    pub fn resolve(&self, o: Operand) -> Operand {
        alias_of(&self.alias, o)
    }

    pub fn def_block(&self, v: ValueId) -> Option<BlockId> {
        self.def_block[v.index()]
    }

    pub fn defined_inside(&self, v: ValueId) -> bool {
        self.def_block(v).is_some_and(|b| self.contains(b))
    }

    /// 1-based exit id of the edge `src -> tgt`, if it leaves the loop.
    pub fn exit_id(&self, src: BlockId, tgt: BlockId) -> Option<u32> {
        self.exits.iter().position(|e| *e == (src, tgt)).map(|i| i as u32 + 1)
    }

    /// Innermost nest header whose loop contains `b`.
    pub fn innermost_header(&self, b: BlockId) -> BlockId {
        self.innermost[&b]
    }

    /// Estimated header visits per invocation for each nest header:
    /// product of `count + 1` down the nest.
    pub fn visits(&self, header: BlockId) -> u128 {
        let mut product: u128 = 1;
        let mut cur = Some(header);
        while let Some(h) = cur {
            let (_, c, parent) = self.counts.iter().find(|(x, _, _)| *x == h).expect("nest header");
            product = product.saturating_mul(*c as u128 + 1);
            cur = *parent;
        }
        product
    }

    /// Human-readable name of a value for ports and registers.
    pub fn value_label(&self, v: ValueId) -> String {
        match self.func.value_name(v) {
            Some(n) => n.replace('.', "_"),
            None => format!("t{}", v.0),
        }
    }
}

fn alias_of(alias: &[Operand], o: Operand) -> Operand {
    match o {
        Operand::Value(v) => alias[v.index()],
        c => c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_unit;
    use crate::ir::loops::find_loops;

    fn region_of<R>(src: &str, fname: &str, k: usize, check: impl FnOnce(&LoopRegion) -> R) -> R {
        let u = compile_unit(src, "t.c").unwrap().unit;
        let f = u.functions.iter().find(|f| f.name == fname).unwrap();
        let forest = find_loops(f);
        let header = forest.preorder()[k].header;
        let r = LoopRegion::new(f, &forest, header).unwrap();
        check(&r)
    }

    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    #[test]
    fn fun3_boundary() {
        region_of(UNIT2, "fun3", 0, |r| {
            let names: Vec<String> = r.inputs.iter().map(|v| r.value_label(*v)).collect();
            assert_eq!(names, vec!["a", "b"]);
            let outs: Vec<&str> = r.outputs.iter().map(|(_, n)| n.as_str()).collect();
            assert_eq!(outs, vec!["a_out"]);
            assert_eq!(r.exits.len(), 2);
            assert_eq!(r.exit_phis[0], vec![(r.exit_phis[0][0].0, ExitSource::Output(0))]);
        });
    }

    #[test]
    fn loop_without_live_outs() {
        let src = "int A[8]; void f(int v){ for(int i=0;i<8;i++) A[i]=v; }";
        region_of(src, "f", 0, |r| {
            assert!(r.outputs.is_empty());
            assert_eq!(r.arrays, vec!["A".to_string()]);
        });
    }

    #[test]
    fn rejects_calls() {
        let src = "int g(int x); int f(int n){ int s=0; for(int i=0;i<n;i++) s+=g(i); return s; }";
        let u = compile_unit(src, "t.c").unwrap().unit;
        let f = &u.functions[0];
        let forest = find_loops(f);
        let e = LoopRegion::new(f, &forest, forest.roots[0].header).unwrap_err();
        assert!(e.to_string().contains("call to 'g'"), "{e}");
    }
}
