//! SSA construction: pruned phi placement on iterated dominance frontiers,
//! forced phis at loop exit blocks, and renaming over the dominator tree.

use super::lower::PreSsa;
use crate::diag::Diagnostic;
use crate::ir::dom::{successor_lists, Dominators};
use crate::ir::loops::find_loops_with_default;
use crate::ir::{BlockId, MirFunction, Operand, Rvalue, Stmt, Terminator, ValueId, ValueInfo};

/// Fixed-size bit set over variable indices.
#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Bits {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
}

/// Renames the variables of `pre` into SSA values.
pub(super) fn construct(pre: PreSsa, unit_name: &str) -> (MirFunction, Vec<Diagnostic>) {
    let PreSsa { func: f, var_spans } = pre;
    let nv = f.values.len();
    let nb = f.blocks.len();
    let succs = successor_lists(&f);
    let dom = Dominators::of(&f);
    let df = dom.frontiers(&succs);

    // Upward-exposed uses and kills per block.
    let mut ue = vec![Bits::new(nv); nb];
    let mut kill = vec![Bits::new(nv); nb];
    for b in &f.blocks {
        let i = b.id.index();
        let note_use = |o: &Operand, kill: &Bits, ue: &mut Bits| {
            if let Operand::Value(v) = o {
                if !kill.get(v.index()) {
                    ue.set(v.index());
                }
            }
        };
        for s in &b.stmts {
            for o in s.uses() {
                note_use(&o, &kill[i], &mut ue[i]);
            }
            if let Some(d) = s.def() {
                kill[i].set(d.index());
            }
        }
        for o in b.term.uses() {
            note_use(&o, &kill[i], &mut ue[i]);
        }
    }
    let live_in = liveness(&succs, &dom, &ue, &kill, nv);

    // Definition sites per variable.
    let mut def_sites: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (_, p) in &f.params {
        def_sites[p.index()].push(f.entry.index());
    }
    for b in &f.blocks {
        for s in &b.stmts {
            if let Some(d) = s.def() {
                if def_sites[d.index()].last() != Some(&b.id.index()) {
                    def_sites[d.index()].push(b.id.index());
                }
            }
        }
    }

    // phis[b] = variables needing a phi at b, in variable order.
    let mut has_phi = vec![Bits::new(nv); nb];
    for v in 0..nv {
        if def_sites[v].is_empty() {
            continue;
        }
        let mut in_idf = vec![false; nb];
        let mut work = def_sites[v].clone();
        let mut queued = vec![false; nb];
        for &d in &work {
            queued[d] = true;
        }
        while let Some(x) = work.pop() {
            for &y in &df[x] {
                if !in_idf[y] {
                    in_idf[y] = true;
                    if live_in[y].get(v) {
                        has_phi[y].set(v);
                    }
                    if !queued[y] {
                        queued[y] = true;
                        work.push(y);
                    }
                }
            }
        }
    }
    // Forced phis at loop exit blocks keep every loop live-out in a value
    // defined outside the loop.
    let forest = find_loops_with_default(&f, 0);
    for l in forest.preorder() {
        for &(_, x) in &l.exits {
            for v in 0..nv {
                if live_in[x.index()].get(v) && !def_sites[v].is_empty() {
                    has_phi[x.index()].set(v);
                }
            }
        }
    }

    let preds = f.predecessors();
    let mut r = Renamer {
        src: &f,
        preds: &preds,
        values: Vec::new(),
        stacks: vec![Vec::new(); nv],
        out: Vec::with_capacity(nb),
        phi_vars: Vec::with_capacity(nb),
        warned: vec![false; nv],
        warnings: Vec::new(),
        unit_name,
        var_spans: &var_spans,
    };
    for b in &f.blocks {
        let i = b.id.index();
        let mut phis = Vec::new();
        let mut vars = Vec::new();
        for v in 0..nv {
            if has_phi[i].get(v) {
                let dst = r.fresh(ValueId(v as u32));
                phis.push(Stmt::Phi {
                    dst,
                    args: preds[i].iter().map(|p| (*p, Operand::Const(0))).collect(),
                });
                vars.push(ValueId(v as u32));
            }
        }
        r.out.push(phis);
        r.phi_vars.push(vars);
    }
    let mut params = Vec::new();
    for (name, var) in &f.params {
        let v = r.fresh(*var);
        r.stacks[var.index()].push(Operand::Value(v));
        params.push((name.clone(), v));
    }
    let children = dom.children();
    let mut terms: Vec<Option<Terminator>> = vec![None; nb];
    r.rename(f.entry.index(), &children, &mut terms);

    let mut blocks = Vec::with_capacity(nb);
    for (i, (stmts, term)) in r.out.into_iter().zip(terms).enumerate() {
        let term = term.unwrap_or_else(|| {
            // Unreachable blocks (only the isolated exit of a function that
            // never returns) keep a constant terminator.
            match &f.blocks[i].term {
                Terminator::Return(Some(_)) => Terminator::Return(Some(Operand::Const(0))),
                t => t.clone(),
            }
        });
        blocks.push(crate::ir::BasicBlock {
            id: BlockId(i as u32),
            stmts,
            term,
        });
    }
    let mut out = MirFunction {
        name: f.name.clone(),
        params,
        returns_value: f.returns_value,
        blocks,
        entry: f.entry,
        exit: f.exit,
        values: r.values,
        local_arrays: f.local_arrays.clone(),
        source_map: f.source_map.clone(),
    };
    propagate_constants(&mut out);
    eliminate_dead_code(&mut out);
    (out, r.warnings)
}

fn liveness(succs: &[Vec<usize>], dom: &Dominators, ue: &[Bits], kill: &[Bits], nv: usize) -> Vec<Bits> {
    let nb = succs.len();
    let mut live_in = ue.to_vec();
    let order: Vec<usize> = dom.rpo().iter().rev().copied().collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &b in &order {
            let mut out = Bits::new(nv);
            for &s in &succs[b] {
                for (w, x) in out.0.iter_mut().zip(&live_in[s].0) {
                    *w |= x;
                }
            }
            let mut inn = ue[b].clone();
            for ((w, o), k) in inn.0.iter_mut().zip(&out.0).zip(&kill[b].0) {
                *w |= o & !k;
            }
            if inn != live_in[b] {
                live_in[b] = inn;
                changed = true;
            }
        }
    }
    debug_assert_eq!(live_in.len(), nb);
    live_in
}

struct Renamer<'a> {
    src: &'a MirFunction,
    preds: &'a [Vec<BlockId>],
    values: Vec<ValueInfo>,
    stacks: Vec<Vec<Operand>>,
    out: Vec<Vec<Stmt>>,
    phi_vars: Vec<Vec<ValueId>>,
    warned: Vec<bool>,
    warnings: Vec<Diagnostic>,
    unit_name: &'a str,
    var_spans: &'a [crate::diag::Span],
}

impl Renamer<'_> {
    fn fresh(&mut self, var: ValueId) -> ValueId {
        self.values.push(ValueInfo {
            name: self.src.values[var.index()].name.clone(),
        });
        ValueId(self.values.len() as u32 - 1)
    }

    fn current(&mut self, var: ValueId) -> Operand {
        if let Some(top) = self.stacks[var.index()].last() {
            return *top;
        }
        if !self.warned[var.index()] {
            self.warned[var.index()] = true;
            if let Some(name) = self.src.value_name(var) {
                self.warnings.push(Diagnostic::warning(
                    self.unit_name,
                    self.var_spans[var.index()],
                    format!("variable '{name}' may be used uninitialized in '{}'; 0 is used", self.src.name),
                ));
            }
        }
        Operand::Const(0)
    }

    fn map(&mut self, o: Operand) -> Operand {
        match o {
            Operand::Value(v) => self.current(v),
            c => c,
        }
    }

    fn rename(&mut self, b: usize, children: &[Vec<usize>], terms: &mut [Option<Terminator>]) {
        let mut pushed: Vec<ValueId> = Vec::new();
        let phi_vars = self.phi_vars[b].clone();
        for (k, var) in phi_vars.iter().enumerate() {
            let Stmt::Phi { dst, .. } = self.out[b][k] else {
                unreachable!("phis lead the block")
            };
            self.stacks[var.index()].push(Operand::Value(dst));
            pushed.push(*var);
        }
        for s in &self.src.blocks[b].stmts {
            let mut s = s.clone();
            for o in s.operands_mut() {
                *o = self.map(*o);
            }
            if let Some(var) = s.def() {
                let v = self.fresh(var);
                match &mut s {
                    Stmt::Assign { dst, .. } | Stmt::Load { dst, .. } | Stmt::Phi { dst, .. } => *dst = v,
                    Stmt::Call { dst, .. } => *dst = Some(v),
                    Stmt::Store { .. } => {}
                }
                self.stacks[var.index()].push(Operand::Value(v));
                pushed.push(var);
            }
            self.out[b].push(s);
        }
        let mut term = self.src.blocks[b].term.clone();
        match &mut term {
            Terminator::Branch { cond, .. } => *cond = self.map(*cond),
            Terminator::Return(Some(v)) => *v = self.map(*v),
            _ => {}
        }
        for s in term.successors() {
            let si = s.index();
            let pos = self.preds[si]
                .iter()
                .position(|p| p.index() == b)
                .expect("edge has a predecessor entry");
            let vars = self.phi_vars[si].clone();
            for (k, var) in vars.iter().enumerate() {
                let op = self.current(*var);
                if let Stmt::Phi { args, .. } = &mut self.out[si][k] {
                    args[pos].1 = op;
                }
            }
        }
        terms[b] = Some(term);
        for &c in &children[b] {
            self.rename(c, children, terms);
        }
        for var in pushed {
            self.stacks[var.index()].pop();
        }
    }
}

/// Replaces values that are compile-time constants (constant copies,
/// foldable operations on constants, phis of one constant) by the constant.
fn propagate_constants(f: &mut MirFunction) {
    use crate::semantics::{eval_binary, eval_unary};
    loop {
        let mut known: Vec<Option<i32>> = vec![None; f.values.len()];
        let mut any = false;
        for b in &f.blocks {
            for s in &b.stmts {
                let c = match s {
                    Stmt::Assign { rv: Rvalue::Use(Operand::Const(c)), .. } => Some(*c),
                    Stmt::Assign { rv: Rvalue::Unary(op, Operand::Const(a)), .. } => Some(eval_unary(*op, *a)),
                    Stmt::Assign { rv: Rvalue::Binary(op, Operand::Const(a), Operand::Const(b)), .. } => {
                        eval_binary(*op, *a, *b).ok()
                    }
                    Stmt::Phi { args, .. } => match args.first() {
                        Some((_, Operand::Const(c))) if args.iter().all(|(_, o)| *o == Operand::Const(*c)) => Some(*c),
                        _ => None,
                    },
                    _ => None,
                };
                if let (Some(c), Some(d)) = (c, s.def()) {
                    known[d.index()] = Some(c);
                    any = true;
                }
            }
        }
        if !any {
            return;
        }
        let subst = |o: &mut Operand| {
            if let Operand::Value(v) = o {
                if let Some(c) = known[v.index()] {
                    *o = Operand::Const(c);
                }
            }
        };
        for b in &mut f.blocks {
            b.stmts.retain(|s| !s.def().is_some_and(|d| known[d.index()].is_some()));
            for s in &mut b.stmts {
                for o in s.operands_mut() {
                    subst(o);
                }
            }
            match &mut b.term {
                Terminator::Branch { cond, .. } => subst(cond),
                Terminator::Return(Some(v)) => subst(v),
                _ => {}
            }
        }
    }
}

/// Removes side-effect-free definitions whose values are never used.
fn eliminate_dead_code(f: &mut MirFunction) {
    loop {
        let mut used = vec![false; f.values.len()];
        for b in &f.blocks {
            for s in &b.stmts {
                for o in s.uses() {
                    if let Operand::Value(v) = o {
                        used[v.index()] = true;
                    }
                }
            }
            for o in b.term.uses() {
                if let Operand::Value(v) = o {
                    used[v.index()] = true;
                }
            }
        }
        let mut removed = false;
        for b in &mut f.blocks {
            b.stmts.retain(|s| {
                let removable = match s {
                    Stmt::Phi { .. } => true,
                    Stmt::Assign { rv, .. } => match rv {
                        Rvalue::Binary(op, _, d) => {
                            !op.may_trap() || matches!(d, Operand::Const(c) if *c != 0)
                        }
                        _ => true,
                    },
                    _ => false,
                };
                let dead = removable && s.def().is_some_and(|d| !used[d.index()]);
                removed |= dead;
                !dead
            });
        }
        if !removed {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::frontend::compile_unit;
    use crate::ir::validate::validate_function;
    use crate::ir::Stmt;

    #[test]
    fn listing_functions_are_valid_ssa() {
        let src = "int fun3(int a, int b) { for (int i=0;i<100;i++) { if (a>b) break; a+=b; } return a; }\n\
                   int fun2(int a, int b) { int c; for (int i=0;i<30;i++) { c += fun3(b + a, a - b); } return c; }";
        let lu = compile_unit(src, "t.c").unwrap();
        for f in &lu.unit.functions {
            validate_function(f).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        }
        assert!(lu.warnings.iter().any(|w| w.message.contains("'c' may be used uninitialized")));
    }

    #[test]
    fn straight_line_has_no_phis() {
        let lu = compile_unit("int f(int a){ int b = a + 1; b = b * 2; return b; }", "t.c").unwrap();
        let f = &lu.unit.functions[0];
        assert!(f.blocks.iter().all(|b| b.stmts.iter().all(|s| !matches!(s, Stmt::Phi { .. }))));
    }

    #[test]
    fn dead_temporaries_are_removed() {
        let lu = compile_unit("int f(int n){ int s=0; for(int i=0;i<n;i++) s+=i; return s; }", "t.c").unwrap();
        let f = &lu.unit.functions[0];
        // `i++` as a statement leaves no copy of the old value behind.
        let copies = f
            .blocks
            .iter()
            .flat_map(|b| &b.stmts)
            .filter(|s| matches!(s, Stmt::Assign { rv: crate::ir::Rvalue::Use(_), .. }))
            .filter(|s| f.value_name(s.def().unwrap()) != Some("__ret"))
            .count();
        assert_eq!(copies, 0);
    }
}
