//! If-conversion: every loop header in the nest starts a hyperblock, the
//! acyclic region reachable from it without crossing another header.
//! Inside a hyperblock both sides of every branch are computed; phis
//! become predicate-controlled selects, and memory accesses and trapping
//! operations carry the predicate of their block so they only take effect
//! on the path actually taken.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::ir::dom::Dominators;
use crate::ir::{BinOp, BlockId, Operand, Rvalue, Stmt, Terminator, UnOp, ValueId};

use super::cost::OpKind;
use super::region::{ExitSource, LoopRegion};

/// A datapath operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Src {
    /// Result of node `n` of the same hyperblock.
    Node(u32),
    /// Register `r` of the accelerator.
    Reg(u32),
    Const(i32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeOp {
    Bin(BinOp),
    Un(UnOp),
    /// `args = [p1, v1, p2, v2, ..., vlast]`: the first value whose
    /// predicate is true, else `vlast`.
    Select,
    /// `args = [p, c]`: `p && c != 0`, or `p && c == 0` when negated.
    PredAnd { negate: bool },
    /// `args = [p, q]`: `p || q` (both 0/1).
    PredOr,
    /// `args = [index]`.
    Load(String),
    /// `args = [index, value]`.
    Store(String),
}

impl NodeOp {
    pub fn kind(&self) -> OpKind {
        match self {
            NodeOp::Bin(op) => match op {
                BinOp::Add | BinOp::Sub => OpKind::Add,
                BinOp::Mul => OpKind::Mul,
                BinOp::Div | BinOp::Rem => OpKind::Div,
                BinOp::Shl | BinOp::Shr => OpKind::Shift,
                BinOp::And | BinOp::Or | BinOp::Xor => OpKind::Logic,
                _ => OpKind::Compare,
            },
            NodeOp::Un(UnOp::Neg) => OpKind::Add,
            NodeOp::Un(_) => OpKind::Logic,
            NodeOp::Select => OpKind::Select,
            NodeOp::PredAnd { .. } | NodeOp::PredOr => OpKind::Logic,
            NodeOp::Load(_) => OpKind::Load,
            NodeOp::Store(_) => OpKind::Store,
        }
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, NodeOp::Load(_) | NodeOp::Store(_))
    }

    pub fn mnemonic(&self) -> String {
        match self {
            NodeOp::Bin(op) => op.mnemonic().to_string(),
            NodeOp::Un(op) => op.mnemonic().to_string(),
            NodeOp::Select => "select".into(),
            NodeOp::PredAnd { negate: false } => "pand".into(),
            NodeOp::PredAnd { negate: true } => "pandn".into(),
            NodeOp::PredOr => "por".into(),
            NodeOp::Load(a) => format!("load {a}"),
            NodeOp::Store(a) => format!("store {a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfgNode {
    pub op: NodeOp,
    pub args: Vec<Src>,
    /// Commit predicate for side effects and traps; `None` for operations
    /// that run speculatively.
    pub pred: Option<Src>,
    /// Register written with the result (for values read in other
    /// hyperblocks).
    pub dst: Option<u32>,
    /// SSA value computed, if any.
    pub value: Option<u32>,
    /// Original basic block.
    pub block: u32,
}

impl DfgNode {
    /// Node operands including the predicate.
    pub fn operands(&self) -> impl Iterator<Item = Src> + '_ {
        self.args.iter().copied().chain(self.pred)
    }
}

/// Destination of a transition copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dest {
    Reg(u32),
    Output(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Copy {
    pub dest: Dest,
    pub src: Src,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// Start of hyperblock `h`.
    Block(u32),
    /// Leave the accelerator with `bb_idx = id`.
    Exit(u32),
}

/// A way out of a hyperblock: taken when `pred` is true, after all
/// `requires` nodes have executed; `copies` happen in parallel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutEdge {
    pub pred: Src,
    pub target: Target,
    pub copies: Vec<Copy>,
    pub requires: Vec<u32>,
    /// Original CFG edge.
    pub from_block: u32,
    pub to_block: u32,
}

/// The data-flow graph of one hyperblock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfg {
    pub root: BlockId,
    /// Topologically ordered: operands refer to lower node ids.
    pub nodes: Vec<DfgNode>,
    /// Dependence edges (data plus memory/trap ordering) used by the
    /// scheduler.
    pub edges: Vec<(u32, u32)>,
    pub out_edges: Vec<OutEdge>,
    /// Original blocks, topologically ordered.
    pub blocks: Vec<BlockId>,
}

impl Dfg {
    /// Data dependences implied by node operands plus ordering between
    /// effectful nodes (memory accesses and predicated operations) in
    /// program order.
    pub fn implied_edges(nodes: &[DfgNode]) -> Vec<(u32, u32)> {
        let mut edges = BTreeSet::new();
        let mut last_effect: Option<u32> = None;
        for (i, n) in nodes.iter().enumerate() {
            for s in n.operands() {
                if let Src::Node(u) = s {
                    edges.insert((u, i as u32));
                }
            }
            if n.op.is_memory() || n.pred.is_some() {
                if let Some(p) = last_effect {
                    edges.insert((p, i as u32));
                }
                last_effect = Some(i as u32);
            }
        }
        edges.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegInfo {
    pub name: String,
    pub value: u32,
}

/// Result of if-converting a loop region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IfConverted {
    pub registers: Vec<RegInfo>,
    /// Registers holding the live-ins, in input order.
    pub input_regs: Vec<u32>,
    /// Copies performed when the accelerator starts (header phis from the
    /// preheader edge); control enters hyperblock 0.
    pub entry_copies: Vec<Copy>,
    pub hyperblocks: Vec<Dfg>,
}

struct Builder<'a, 'f> {
    r: &'a LoopRegion<'f>,
    registers: Vec<RegInfo>,
    reg_of: HashMap<ValueId, u32>,
}

impl Builder<'_, '_> {
    fn reg(&mut self, v: ValueId) -> u32 {
        if let Some(&r) = self.reg_of.get(&v) {
            return r;
        }
        let r = self.registers.len() as u32;
        self.registers.push(RegInfo {
            name: format!("{}_{}", self.r.value_label(v), v.0),
            value: v.0,
        });
        self.reg_of.insert(v, r);
        r
    }
}

struct Hb {
    blocks: Vec<BlockId>,
    nodes: Vec<DfgNode>,
    node_of: HashMap<ValueId, u32>,
    root: BlockId,
}

impl Hb {
    fn push(&mut self, n: DfgNode) -> Src {
        self.nodes.push(n);
        Src::Node(self.nodes.len() as u32 - 1)
    }
}

/// Builds one data-flow graph per loop header of the nest; hyperblock 0
/// starts at the outermost header.
pub fn if_convert(r: &LoopRegion) -> IfConverted {
    let f = r.func;
    let dom = Dominators::of(f);
    let rpo: Vec<BlockId> = dom.rpo().iter().map(|&b| BlockId(b as u32)).collect();
    let mut b = Builder {
        r,
        registers: Vec::new(),
        reg_of: HashMap::new(),
    };
    let input_regs: Vec<u32> = r.inputs.iter().map(|v| b.reg(*v)).collect();
    // Root phis live in registers.
    for &h in &r.headers {
        for s in &f.block(h).stmts {
            if let Stmt::Phi { dst, .. } = s {
                b.reg(*dst);
            }
        }
    }
    let all_preds = f.predecessors();
    let hb_index: HashMap<BlockId, u32> = r.headers.iter().enumerate().map(|(i, h)| (*h, i as u32)).collect();

    let mut hyperblocks = Vec::new();
    let mut reaches = Vec::new();
    for &root in &r.headers {
        // Blocks reachable from the root without re-entering a header.
        let mut member = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            if !member.insert(x) {
                continue;
            }
            for y in f.block(x).term.successors() {
                if r.contains(y) && !r.is_header(y) {
                    stack.push(y);
                }
            }
        }
        let blocks: Vec<BlockId> = rpo.iter().copied().filter(|x| member.contains(x)).collect();
        let mut hb = Hb {
            blocks: blocks.clone(),
            nodes: Vec::new(),
            node_of: HashMap::new(),
            root,
        };
        let in_hb = |x: BlockId| member.contains(&x);

        // Source operand for value `o` inside this hyperblock.
        let src_of = |hb: &Hb, b: &mut Builder, o: Operand| -> Src {
            match r.resolve(o) {
                Operand::Const(c) => Src::Const(c),
                Operand::Value(v) => match hb.node_of.get(&v) {
                    Some(&n) => Src::Node(n),
                    None => Src::Reg(b.reg(v)),
                },
            }
        };

        let mut pred_of: HashMap<BlockId, Src> = HashMap::new();
        let mut edge_pred: HashMap<(BlockId, BlockId), Src> = HashMap::new();
        let mut out_edges = Vec::new();
        for &x in &blocks {
            // Block predicate.
            let p = if x == root {
                Src::Const(1)
            } else {
                let preds: Vec<Src> = all_preds[x.index()]
                    .iter()
                    .filter(|q| in_hb(**q))
                    .map(|q| edge_pred[&(*q, x)])
                    .collect();
                let mut acc = preds[0];
                for &q in &preds[1..] {
                    acc = hb.push(DfgNode {
                        op: NodeOp::PredOr,
                        args: vec![acc, q],
                        pred: None,
                        dst: None,
                        value: None,
                        block: x.0,
                    });
                }
                acc
            };
            pred_of.insert(x, p);

            for s in &f.block(x).stmts {
                match s {
                    Stmt::Phi { dst, args } => {
                        if x == root {
                            continue;
                        }
                        let mut sel = Vec::new();
                        let live: Vec<&(BlockId, Operand)> = args.iter().filter(|(q, _)| in_hb(*q)).collect();
                        for (k, (q, o)) in live.iter().enumerate() {
                            let v = src_of(&hb, &mut b, *o);
                            if k + 1 < live.len() {
                                sel.push(edge_pred[&(*q, x)]);
                            }
                            sel.push(v);
                        }
                        let n = hb.push(DfgNode {
                            op: NodeOp::Select,
                            args: sel,
                            pred: None,
                            dst: None,
                            value: Some(dst.0),
                            block: x.0,
                        });
                        if let Src::Node(id) = n {
                            hb.node_of.insert(*dst, id);
                        }
                    }
                    Stmt::Assign { dst, rv } => {
                        let (op, args, pred) = match rv {
                            Rvalue::Use(_) => continue,
                            Rvalue::Binary(op, a, c) => {
                                let a = src_of(&hb, &mut b, *a);
                                let c = src_of(&hb, &mut b, *c);
                                let safe = matches!(c, Src::Const(k) if k != 0);
                                let pred = (op.may_trap() && !safe).then_some(p);
                                (NodeOp::Bin(*op), vec![a, c], pred)
                            }
                            Rvalue::Unary(op, a) => (NodeOp::Un(*op), vec![src_of(&hb, &mut b, *a)], None),
                        };
                        let n = hb.push(DfgNode {
                            op,
                            args,
                            pred,
                            dst: None,
                            value: Some(dst.0),
                            block: x.0,
                        });
                        if let Src::Node(id) = n {
                            hb.node_of.insert(*dst, id);
                        }
                    }
                    Stmt::Load { dst, array, index } => {
                        let i = src_of(&hb, &mut b, *index);
                        let n = hb.push(DfgNode {
                            op: NodeOp::Load(array.name.clone()),
                            args: vec![i],
                            pred: Some(p),
                            dst: None,
                            value: Some(dst.0),
                            block: x.0,
                        });
                        if let Src::Node(id) = n {
                            hb.node_of.insert(*dst, id);
                        }
                    }
                    Stmt::Store { array, index, value } => {
                        let i = src_of(&hb, &mut b, *index);
                        let v = src_of(&hb, &mut b, *value);
                        hb.push(DfgNode {
                            op: NodeOp::Store(array.name.clone()),
                            args: vec![i, v],
                            pred: Some(p),
                            dst: None,
                            value: None,
                            block: x.0,
                        });
                    }
                    Stmt::Call { .. } => unreachable!("calls are rejected by the region analysis"),
                }
            }

            // Outgoing edge predicates.
            let term = &f.block(x).term;
            let succs = term.successors();
            for &y in &succs {
                let ep = match term {
                    Terminator::Branch { cond, then_bb, .. } => {
                        let c = src_of(&hb, &mut b, *cond);
                        match (p, c) {
                            (Src::Const(1), Src::Const(k)) => Src::Const(((k != 0) == (y == *then_bb)) as i32),
                            _ => hb.push(DfgNode {
                                op: NodeOp::PredAnd { negate: y != *then_bb },
                                args: vec![p, c],
                                pred: None,
                                dst: None,
                                value: None,
                                block: x.0,
                            }),
                        }
                    }
                    _ => p,
                };
                edge_pred.insert((x, y), ep);
                if in_hb(y) && y != root {
                    continue;
                }
                // Leaving the hyperblock.
                let (target, copies) = if let Some(id) = r.exit_id(x, y) {
                    let mut copies = Vec::new();
                    let mut seen = BTreeSet::new();
                    for (_, src) in &r.exit_phis[id as usize - 1] {
                        if let ExitSource::Output(k) = src {
                            if seen.insert(*k) {
                                let v = r.outputs[*k].0;
                                copies.push(Copy {
                                    dest: Dest::Output(*k as u32),
                                    src: src_of(&hb, &mut b, Operand::Value(v)),
                                });
                            }
                        }
                    }
                    (Target::Exit(id), copies)
                } else {
                    let mut copies = Vec::new();
                    for s in &f.block(y).stmts {
                        if let Stmt::Phi { dst, args } = s {
                            let (_, o) = args.iter().find(|(q, _)| *q == x).expect("phi operand for edge");
                            let src = src_of(&hb, &mut b, *o);
                            copies.push(Copy {
                                dest: Dest::Reg(b.reg(*dst)),
                                src,
                            });
                        }
                    }
                    (Target::Block(hb_index[&y]), copies)
                };
                out_edges.push(OutEdge {
                    pred: ep,
                    target,
                    copies,
                    requires: Vec::new(),
                    from_block: x.0,
                    to_block: y.0,
                });
            }
        }

        // Blocks reachable from each block inside the hyperblock.
        let mut reach: HashMap<BlockId, BTreeSet<BlockId>> = HashMap::new();
        for &x in blocks.iter().rev() {
            let mut set = BTreeSet::new();
            set.insert(x);
            for y in f.block(x).term.successors() {
                if in_hb(y) && y != root {
                    set.extend(reach[&y].iter().copied());
                }
            }
            reach.insert(x, set);
        }
        reaches.push(reach);

        let edges = Dfg::implied_edges(&hb.nodes);
        hyperblocks.push(Dfg {
            root: hb.root,
            nodes: hb.nodes,
            edges,
            out_edges,
            blocks: hb.blocks,
        });
    }

    // Every node whose value is read through a register writes it.
    for h in &mut hyperblocks {
        for n in &mut h.nodes {
            if let Some(v) = n.value {
                n.dst = b.reg_of.get(&ValueId(v)).copied();
            }
        }
    }

    // Work that must complete before leaving through an edge: its
    // predicate and copy sources, plus every side effect and register
    // write in blocks that can reach the edge's source block.
    for (h, reach) in hyperblocks.iter_mut().zip(&reaches) {
        for e in &mut h.out_edges {
            let from = BlockId(e.from_block);
            let mut req = BTreeSet::new();
            if let Src::Node(n) = e.pred {
                req.insert(n);
            }
            for c in &e.copies {
                if let Src::Node(n) = c.src {
                    req.insert(n);
                }
            }
            for (i, n) in h.nodes.iter().enumerate() {
                if (n.pred.is_some() || n.dst.is_some()) && reach[&BlockId(n.block)].contains(&from) {
                    req.insert(i as u32);
                }
            }
            e.requires = req.into_iter().collect();
        }
    }

    let mut entry_copies = Vec::new();
    for s in &f.block(r.header).stmts {
        if let Stmt::Phi { dst, args } = s {
            let (_, o) = args.iter().find(|(q, _)| *q == r.preheader).expect("preheader operand");
            let src = match r.resolve(*o) {
                Operand::Const(c) => Src::Const(c),
                Operand::Value(v) => Src::Reg(b.reg(v)),
            };
            entry_copies.push(Copy {
                dest: Dest::Reg(b.reg(*dst)),
                src,
            });
        }
    }

    IfConverted {
        registers: b.registers,
        input_regs,
        entry_copies,
        hyperblocks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_unit;
    use crate::ir::loops::find_loops;

    pub(crate) fn convert(src: &str, fname: &str) -> IfConverted {
        let u = compile_unit(src, "t.c").unwrap().unit;
        let f = u.functions.iter().find(|f| f.name == fname).unwrap();
        let forest = find_loops(f);
        let r = LoopRegion::new(f, &forest, forest.roots[0].header).unwrap();
        if_convert(&r)
    }

    #[test]
    fn fun3_has_two_tagged_exits() {
        let c = convert(include_str!("../../../../corpus/listings/unit2.c"), "fun3");
        assert_eq!(c.hyperblocks.len(), 1);
        let h = &c.hyperblocks[0];
        let exits: Vec<u32> = h
            .out_edges
            .iter()
            .filter_map(|e| match e.target {
                Target::Exit(id) => Some(id),
                _ => None,
            })
            .collect();
        assert_eq!(exits, vec![1, 2]);
        let ops: Vec<String> = h.nodes.iter().map(|n| n.op.mnemonic()).collect();
        assert!(ops.contains(&"add".to_string()) && ops.contains(&"gt".to_string()) && ops.contains(&"sub".to_string()));
        assert_eq!(c.input_regs.len(), 2);
    }

    #[test]
    fn straight_body_has_no_predicates() {
        let c = convert("int f(int n){ int s=0; for(int i=0;i<10;i++) s+=n; return s; }", "f");
        let h = &c.hyperblocks[0];
        assert!(h.nodes.iter().all(|n| n.pred.is_none() && n.op != NodeOp::Select));
    }

    #[test]
    fn if_else_becomes_select() {
        let c = convert(
            "int f(int a, int b){ int x=0; for(int i=0;i<10;i++){ if (i & 1) x = a; else x = b; a = a + x; } return a; }",
            "f",
        );
        let h = &c.hyperblocks[0];
        assert_eq!(h.nodes.iter().filter(|n| n.op == NodeOp::Select).count(), 1);
    }

    #[test]
    fn nest_has_one_hyperblock_per_header() {
        let c = convert(
            "int A[64]; void f(){ for(int i=0;i<8;i++){ for(int j=0;j<8;j++){ A[i*8+j] = i+j; } } }",
            "f",
        );
        assert_eq!(c.hyperblocks.len(), 2);
    }
}
