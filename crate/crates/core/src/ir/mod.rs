//! SSA control-flow IR: programs made of translation units, functions made
//! of basic blocks holding SSA statements.

pub mod dom;
pub mod loops;
pub mod text;
pub mod validate;

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::frontend::ast::StmtId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValueId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub u32);

impl ValueId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl BlockId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bb{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Value(ValueId),
    Const(i32),
}

impl Operand {
    pub fn value(self) -> Option<ValueId> {
        match self {
            Operand::Value(v) => Some(v),
            Operand::Const(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Value(v) => write!(f, "{v}"),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    And,
    Or,
    Xor,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub const ALL: [BinOp; 16] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
    ];

    pub fn mnemonic(self) -> &'static str {
        use BinOp::*;
        match self {
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Div => "div",
            Rem => "rem",
            Shl => "shl",
            Shr => "shr",
            And => "and",
            Or => "or",
            Xor => "xor",
            Eq => "eq",
            Ne => "ne",
            Lt => "lt",
            Le => "le",
            Gt => "gt",
            Ge => "ge",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<BinOp> {
        BinOp::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    pub fn is_compare(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    /// Operations that may trap and therefore must not run speculatively.
    pub fn may_trap(self) -> bool {
        matches!(self, BinOp::Div | BinOp::Rem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Neg,
    Not,
    LNot,
}

impl UnOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            UnOp::Neg => "neg",
            UnOp::Not => "not",
            UnOp::LNot => "lnot",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<UnOp> {
        [UnOp::Neg, UnOp::Not, UnOp::LNot].into_iter().find(|op| op.mnemonic() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MemSpace {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArrayRef {
    pub name: String,
    pub space: MemSpace,
}

impl fmt::Display for ArrayRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let space = match self.space {
            MemSpace::Global => "global",
            MemSpace::Local => "local",
        };
        write!(f, "{space} {}", self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rvalue {
    Binary(BinOp, Operand, Operand),
    Unary(UnOp, Operand),
    Use(Operand),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Assign {
        dst: ValueId,
        rv: Rvalue,
    },
    Load {
        dst: ValueId,
        array: ArrayRef,
        index: Operand,
    },
    Store {
        array: ArrayRef,
        index: Operand,
        value: Operand,
    },
    Call {
        dst: Option<ValueId>,
        callee: String,
        args: Vec<Operand>,
    },
    /// One operand per predecessor, in predecessor order.
    Phi {
        dst: ValueId,
        args: Vec<(BlockId, Operand)>,
    },
}

impl Stmt {
    pub fn def(&self) -> Option<ValueId> {
        match self {
            Stmt::Assign { dst, .. } | Stmt::Load { dst, .. } | Stmt::Phi { dst, .. } => Some(*dst),
            Stmt::Call { dst, .. } => *dst,
            Stmt::Store { .. } => None,
        }
    }

    pub fn is_phi(&self) -> bool {
        matches!(self, Stmt::Phi { .. })
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, Stmt::Load { .. } | Stmt::Store { .. })
    }

    pub fn uses(&self) -> Vec<Operand> {
        match self {
            Stmt::Assign { rv, .. } => match rv {
                Rvalue::Binary(_, a, b) => vec![*a, *b],
                Rvalue::Unary(_, a) | Rvalue::Use(a) => vec![*a],
            },
            Stmt::Load { index, .. } => vec![*index],
            Stmt::Store { index, value, .. } => vec![*index, *value],
            Stmt::Call { args, .. } => args.clone(),
            Stmt::Phi { args, .. } => args.iter().map(|(_, o)| *o).collect(),
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Stmt::Assign { rv, .. } => match rv {
                Rvalue::Binary(_, a, b) => vec![a, b],
                Rvalue::Unary(_, a) | Rvalue::Use(a) => vec![a],
            },
            Stmt::Load { index, .. } => vec![index],
            Stmt::Store { index, value, .. } => vec![index, value],
            Stmt::Call { args, .. } => args.iter_mut().collect(),
            Stmt::Phi { args, .. } => args.iter_mut().map(|(_, o)| o).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Goto(BlockId),
    Branch {
        cond: Operand,
        then_bb: BlockId,
        else_bb: BlockId,
    },
    Return(Option<Operand>),
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Terminator::Goto(t) => vec![*t],
            Terminator::Branch { then_bb, else_bb, .. } => vec![*then_bb, *else_bb],
            Terminator::Return(_) => vec![],
        }
    }

    pub fn uses(&self) -> Vec<Operand> {
        match self {
            Terminator::Branch { cond, .. } => vec![*cond],
            Terminator::Return(Some(v)) => vec![*v],
            _ => vec![],
        }
    }

    pub fn retarget(&mut self, from: BlockId, to: BlockId) {
        match self {
            Terminator::Goto(t) => {
                if *t == from {
                    *t = to
                }
            }
            Terminator::Branch { then_bb, else_bb, .. } => {
                if *then_bb == from {
                    *then_bb = to
                }
                if *else_bb == from {
                    *else_bb = to
                }
            }
            Terminator::Return(_) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub stmts: Vec<Stmt>,
    pub term: Terminator,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValueInfo {
    /// Source variable this value is a version of; `None` for temporaries.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalArray {
    pub name: String,
    pub len: u32,
}

/// Links a source loop statement to the blocks lowering produced for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopSource {
    pub stmt: StmtId,
    pub header: BlockId,
    /// The block following the loop; `None` when the loop never falls
    /// through (e.g. `for (;;)` left only by `return`).
    pub after: Option<BlockId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceMap {
    pub loops: Vec<LoopSource>,
    pub labels: Vec<(String, BlockId)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MirFunction {
    pub name: String,
    pub params: Vec<(String, ValueId)>,
    pub returns_value: bool,
    /// Block `i` has id `i`.
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
    pub exit: BlockId,
    pub values: Vec<ValueInfo>,
    pub local_arrays: Vec<LocalArray>,
    pub source_map: SourceMap,
}

impl MirFunction {
    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id.index()]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut BasicBlock {
        &mut self.blocks[id.index()]
    }

    pub fn block_ids(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.blocks.iter().map(|b| b.id)
    }

    pub fn new_value(&mut self, name: Option<String>) -> ValueId {
        self.values.push(ValueInfo { name });
        ValueId(self.values.len() as u32 - 1)
    }

    pub fn new_block(&mut self, term: Terminator) -> BlockId {
        let id = BlockId(self.blocks.len() as u32);
        self.blocks.push(BasicBlock {
            id,
            stmts: Vec::new(),
            term,
        });
        id
    }

    pub fn value_name(&self, v: ValueId) -> Option<&str> {
        self.values.get(v.index()).and_then(|i| i.name.as_deref())
    }

    /// Predecessor lists in canonical order: by predecessor block id, then
    /// successor position.
    pub fn predecessors(&self) -> Vec<Vec<BlockId>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for b in &self.blocks {
            for s in b.term.successors() {
                preds[s.index()].push(b.id);
            }
        }
        preds
    }

    /// Maps every defined value to its defining block; parameters map to
    /// the entry block.
    pub fn def_blocks(&self) -> Vec<Option<BlockId>> {
        let mut defs = vec![None; self.values.len()];
        for (_, p) in &self.params {
            defs[p.index()] = Some(self.entry);
        }
        for b in &self.blocks {
            for s in &b.stmts {
                if let Some(d) = s.def() {
                    defs[d.index()] = Some(b.id);
                }
            }
        }
        defs
    }

    pub fn loop_source_for_header(&self, header: BlockId) -> Option<&LoopSource> {
        self.source_map.loops.iter().find(|l| l.header == header)
    }

    pub fn local_array(&self, name: &str) -> Option<&LocalArray> {
        self.local_arrays.iter().find(|a| a.name == name)
    }

    /// Reorders every phi's operands to match the current predecessor
    /// lists. Operands for edges that no longer exist are dropped.
    pub fn canonicalize_phis(&mut self) {
        let preds = self.predecessors();
        for b in &mut self.blocks {
            let order = &preds[b.id.index()];
            for s in &mut b.stmts {
                if let Stmt::Phi { args, .. } = s {
                    let mut sorted = Vec::with_capacity(order.len());
                    for p in order {
                        if let Some(pos) = args.iter().position(|(q, _)| q == p) {
                            sorted.push(args.remove(pos));
                        }
                    }
                    *args = sorted;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalVar {
    pub name: String,
    pub len: u32,
    pub scalar: bool,
    /// Leading initial values; the remainder is zero.
    pub init: Vec<i32>,
    pub is_extern: bool,
}

/// A function known in a unit only by its prototype.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuncDecl {
    pub name: String,
    pub arity: usize,
    pub returns_value: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationUnit {
    pub name: String,
    pub globals: Vec<GlobalVar>,
    pub declarations: Vec<FuncDecl>,
    pub functions: Vec<MirFunction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MirProgram {
    pub units: Vec<TranslationUnit>,
    pub entry: Option<String>,
}

impl MirProgram {
    pub fn function(&self, name: &str) -> Option<&MirFunction> {
        self.units.iter().flat_map(|u| &u.functions).find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut MirFunction> {
        self.units.iter_mut().flat_map(|u| &mut u.functions).find(|f| f.name == name)
    }

    pub fn unit_of(&self, function: &str) -> Option<&TranslationUnit> {
        self.units.iter().find(|u| u.functions.iter().any(|f| f.name == function))
    }

    pub fn functions(&self) -> impl Iterator<Item = &MirFunction> {
        self.units.iter().flat_map(|u| &u.functions)
    }

    /// The defining (non-extern) declaration of a global.
    pub fn global(&self, name: &str) -> Option<&GlobalVar> {
        let all = self.units.iter().flat_map(|u| &u.globals).filter(|g| g.name == name);
        let mut fallback = None;
        for g in all {
            if !g.is_extern {
                return Some(g);
            }
            fallback.get_or_insert(g);
        }
        fallback
    }

    /// Every distinct global, definitions preferred over extern declarations.
    pub fn globals(&self) -> Vec<&GlobalVar> {
        let mut names: Vec<&str> = self.units.iter().flat_map(|u| &u.globals).map(|g| g.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().filter_map(|n| self.global(n)).collect()
    }

    /// The entry function: the recorded entry, else `main`, else the first
    /// function that no other function calls.
    pub fn entry_function(&self) -> Option<&str> {
        if let Some(e) = &self.entry {
            return Some(e.as_str());
        }
        if self.function("main").is_some() {
            return Some("main");
        }
        let called: std::collections::HashSet<&str> = self
            .functions()
            .flat_map(|f| &f.blocks)
            .flat_map(|b| &b.stmts)
            .filter_map(|s| match s {
                Stmt::Call { callee, .. } => Some(callee.as_str()),
                _ => None,
            })
            .collect();
        self.functions().map(|f| f.name.as_str()).find(|n| !called.contains(n))
    }
}
