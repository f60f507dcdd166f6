//! Lowering from the syntax tree to a block CFG over mutable variables.
//!
//! In the functions produced here a `ValueId` names a *variable* that may be
//! assigned many times; SSA construction renames them afterwards. Loops are
//! emitted in rotated form (guard, preheader, body, bottom test), and every
//! loop gets a dedicated preheader and dedicated exit blocks before SSA
//! construction runs.

use std::collections::HashMap;

use super::ast::{
    self, BinaryOp, Expr, ExprKind, ForInit, FunctionDef, Item, LValue, LocalDecl, LocalInit,
    RetType, StmtKind, UnaryOp,
};
use super::parser::{const_eval, to_ir_binary, to_ir_unary};
use super::FrontendError;
use crate::diag::{Diagnostic, Span};
use crate::ir::loops::find_loops_with_default;
use crate::ir::{
    ArrayRef, BinOp, BlockId, FuncDecl, GlobalVar, LocalArray, LoopSource, MemSpace,
    MirFunction, Operand, Rvalue, SourceMap, Stmt, Terminator, TranslationUnit, UnOp, ValueId,
};
use crate::semantics::{eval_binary, eval_unary};

/// A function over variables, ready for SSA construction.
pub(super) struct PreSsa {
    pub func: MirFunction,
    /// Declaration span of every variable, indexed by `ValueId`.
    pub var_spans: Vec<Span>,
}

type LResult<T> = Result<T, FrontendError>;

fn semantic(span: Span, message: impl Into<String>) -> FrontendError {
    FrontendError::Semantic {
        span,
        message: message.into(),
    }
}

#[derive(Clone)]
struct GlobalInfo {
    len: u32,
    scalar: bool,
}

#[derive(Clone, Copy)]
struct Signature {
    arity: usize,
    returns_value: bool,
}

struct UnitEnv {
    globals: HashMap<String, GlobalInfo>,
    functions: HashMap<String, Signature>,
}

/// Lowers every function of `unit`. The returned unit skeleton carries the
/// globals and prototypes; its function list is empty.
pub(super) fn lower_unit(
    unit: &ast::Unit,
) -> LResult<(TranslationUnit, Vec<PreSsa>, Vec<Diagnostic>)> {
    let mut env = UnitEnv {
        globals: HashMap::new(),
        functions: HashMap::new(),
    };
    let mut globals: Vec<GlobalVar> = Vec::new();
    let mut declarations: Vec<FuncDecl> = Vec::new();
    let mut defined: Vec<&str> = Vec::new();

    for item in &unit.items {
        match item {
            Item::Global(g) => {
                let info = GlobalInfo {
                    len: g.len.unwrap_or(1),
                    scalar: g.len.is_none(),
                };
                if env.functions.contains_key(&g.name) {
                    return Err(semantic(g.span, format!("'{}' redeclared as a different kind of symbol", g.name)));
                }
                if let Some(prev) = env.globals.get(&g.name) {
                    if prev.len != info.len || prev.scalar != info.scalar {
                        return Err(semantic(g.span, format!("conflicting types for '{}'", g.name)));
                    }
                }
                if let Some(init) = &g.init {
                    if init.len() as u32 > info.len {
                        return Err(semantic(g.span, format!("excess elements in initializer of '{}'", g.name)));
                    }
                }
                if let Some(existing) = globals.iter_mut().find(|x| x.name == g.name) {
                    if !g.is_extern {
                        if !existing.is_extern {
                            return Err(semantic(g.span, format!("redefinition of '{}'", g.name)));
                        }
                        existing.is_extern = false;
                        existing.init = g.init.clone().unwrap_or_default();
                    }
                } else {
                    globals.push(GlobalVar {
                        name: g.name.clone(),
                        len: info.len,
                        scalar: info.scalar,
                        init: g.init.clone().unwrap_or_default(),
                        is_extern: g.is_extern,
                    });
                }
                env.globals.insert(g.name.clone(), info);
            }
            Item::Prototype(p) => {
                let sig = Signature {
                    arity: p.params.len(),
                    returns_value: p.ret == RetType::Int,
                };
                declare(&mut env, &p.name, sig, p.span)?;
                if !declarations.iter().any(|d| d.name == p.name) {
                    declarations.push(FuncDecl {
                        name: p.name.clone(),
                        arity: sig.arity,
                        returns_value: sig.returns_value,
                    });
                }
            }
            Item::Function(f) => {
                if defined.contains(&f.name.as_str()) {
                    return Err(semantic(f.span, format!("redefinition of '{}'", f.name)));
                }
                defined.push(&f.name);
                let sig = Signature {
                    arity: f.params.len(),
                    returns_value: f.ret == RetType::Int,
                };
                declare(&mut env, &f.name, sig, f.span)?;
            }
        }
    }
    // Prototypes of functions defined in this unit are not external.
    declarations.retain(|d| !defined.contains(&d.name.as_str()));

    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for f in unit.functions() {
        let mut l = Lowerer::new(&env, &unit.name, f);
        l.lower_body(f)?;
        let pre = l.finish()?;
        warnings.extend(pre.1);
        out.push(pre.0);
    }
    Ok((
        TranslationUnit {
            name: unit.name.clone(),
            globals,
            declarations,
            functions: Vec::new(),
        },
        out,
        warnings,
    ))
}

fn declare(env: &mut UnitEnv, name: &str, sig: Signature, span: Span) -> LResult<()> {
    if env.globals.contains_key(name) {
        return Err(semantic(span, format!("'{name}' redeclared as a different kind of symbol")));
    }
    if let Some(prev) = env.functions.get(name) {
        if prev.arity != sig.arity || prev.returns_value != sig.returns_value {
            return Err(semantic(span, format!("conflicting types for '{name}'")));
        }
    }
    env.functions.insert(name.to_string(), sig);
    Ok(())
}

#[derive(Clone)]
enum Binding {
    Var(ValueId),
    Array(String),
}

enum Place {
    Var(ValueId),
    Mem(ArrayRef, Operand),
}

struct Label {
    block: BlockId,
    defined: bool,
    first_use: Span,
}

struct Lowerer<'a> {
    env: &'a UnitEnv,
    unit_name: &'a str,
    f: MirFunction,
    var_spans: Vec<Span>,
    temps: Vec<bool>,
    scopes: Vec<HashMap<String, Binding>>,
    cur: Option<BlockId>,
    /// (break target, continue target)
    loops: Vec<(BlockId, BlockId)>,
    labels: HashMap<String, Label>,
    label_order: Vec<String>,
    ret_var: Option<ValueId>,
    warnings: Vec<Diagnostic>,
}

impl<'a> Lowerer<'a> {
    fn new(env: &'a UnitEnv, unit_name: &'a str, def: &FunctionDef) -> Self {
        let mut f = MirFunction {
            name: def.name.clone(),
            params: Vec::new(),
            returns_value: def.ret == RetType::Int,
            blocks: Vec::new(),
            entry: BlockId(0),
            exit: BlockId(1),
            values: Vec::new(),
            local_arrays: Vec::new(),
            source_map: SourceMap::default(),
        };
        f.new_block(Terminator::Return(None));
        f.new_block(Terminator::Return(None));
        let mut l = Lowerer {
            env,
            unit_name,
            f,
            var_spans: Vec::new(),
            temps: Vec::new(),
            scopes: vec![HashMap::new()],
            cur: Some(BlockId(0)),
            loops: Vec::new(),
            labels: HashMap::new(),
            label_order: Vec::new(),
            ret_var: None,
            warnings: Vec::new(),
        };
        if def.ret == RetType::Int {
            let r = l.new_var(Some("__ret".into()), def.span, true);
            l.ret_var = Some(r);
            l.f.blocks[1].term = Terminator::Return(Some(Operand::Value(r)));
        }
        l
    }

    fn new_var(&mut self, name: Option<String>, span: Span, temp: bool) -> ValueId {
        self.var_spans.push(span);
        self.temps.push(temp);
        self.f.new_value(name)
    }

    fn temp(&mut self, span: Span) -> ValueId {
        self.new_var(None, span, true)
    }

    fn new_block(&mut self) -> BlockId {
        self.f.new_block(Terminator::Return(None))
    }

    fn block(&mut self) -> BlockId {
        match self.cur {
            Some(b) => b,
            None => {
                // Code after a jump: lowered into a fresh block that nothing
                // reaches; it is removed afterwards.
                let b = self.new_block();
                self.cur = Some(b);
                b
            }
        }
    }

    fn emit(&mut self, s: Stmt) {
        let b = self.block();
        self.f.blocks[b.index()].stmts.push(s);
    }

    fn terminate(&mut self, t: Terminator) {
        let b = self.block();
        self.f.blocks[b.index()].term = t;
        self.cur = None;
    }

    fn jump(&mut self, target: BlockId) {
        self.terminate(Terminator::Goto(target));
    }

    fn branch(&mut self, cond: Operand, then_bb: BlockId, else_bb: BlockId) {
        match cond {
            Operand::Const(c) => self.jump(if c != 0 { then_bb } else { else_bb }),
            _ if then_bb == else_bb => self.jump(then_bb),
            _ => self.terminate(Terminator::Branch {
                cond,
                then_bb,
                else_bb,
            }),
        }
    }

    fn start(&mut self, b: BlockId) {
        self.cur = Some(b);
    }

    // ----- names ---------------------------------------------------------

    fn lookup(&self, name: &str) -> Option<Binding> {
        self.scopes.iter().rev().find_map(|s| s.get(name).cloned())
    }

    fn bind(&mut self, name: &str, b: Binding, span: Span) -> LResult<()> {
        let scope = self.scopes.last_mut().expect("scope stack is never empty");
        if scope.contains_key(name) {
            return Err(semantic(span, format!("redeclaration of '{name}'")));
        }
        scope.insert(name.to_string(), b);
        Ok(())
    }

    fn array_ref(&self, name: &str, span: Span) -> LResult<ArrayRef> {
        match self.lookup(name) {
            Some(Binding::Array(ir)) => Ok(ArrayRef {
                name: ir,
                space: MemSpace::Local,
            }),
            Some(Binding::Var(_)) => Err(semantic(span, format!("subscripted value '{name}' is not an array"))),
            None => match self.env.globals.get(name) {
                Some(g) if !g.scalar => Ok(ArrayRef {
                    name: name.to_string(),
                    space: MemSpace::Global,
                }),
                Some(_) => Err(semantic(span, format!("subscripted value '{name}' is not an array"))),
                None => Err(semantic(span, format!("use of undeclared identifier '{name}'"))),
            },
        }
    }

    fn place(&mut self, target: &LValue, span: Span) -> LResult<Place> {
        match target {
            LValue::Var(name) => match self.lookup(name) {
                Some(Binding::Var(v)) => Ok(Place::Var(v)),
                Some(Binding::Array(..)) => Err(semantic(span, format!("array '{name}' is not assignable"))),
                None => match self.env.globals.get(name) {
                    Some(g) if g.scalar => Ok(Place::Mem(
                        ArrayRef {
                            name: name.clone(),
                            space: MemSpace::Global,
                        },
                        Operand::Const(0),
                    )),
                    Some(_) => Err(semantic(span, format!("array '{name}' is not assignable"))),
                    None => Err(semantic(span, format!("use of undeclared identifier '{name}'"))),
                },
            },
            LValue::Index(name, idx) => {
                let array = self.array_ref(name, span)?;
                let i = self.expr(idx)?;
                Ok(Place::Mem(array, i))
            }
        }
    }

    fn read_place(&mut self, p: &Place, span: Span) -> Operand {
        match p {
            Place::Var(v) => Operand::Value(*v),
            Place::Mem(array, index) => {
                let t = self.temp(span);
                self.emit(Stmt::Load {
                    dst: t,
                    array: array.clone(),
                    index: *index,
                });
                Operand::Value(t)
            }
        }
    }

    fn write_place(&mut self, p: &Place, value: Operand) {
        match p {
            Place::Var(v) => self.assign_into(*v, value),
            Place::Mem(array, index) => self.emit(Stmt::Store {
                array: array.clone(),
                index: *index,
                value,
            }),
        }
    }

    /// `dst = value`, reusing the statement that computed `value` when it
    /// is a temporary defined immediately before.
    fn assign_into(&mut self, dst: ValueId, value: Operand) {
        if let Operand::Value(t) = value {
            if self.temps[t.index()] && Some(t) != self.ret_var {
                if let Some(b) = self.cur {
                    if let Some(last) = self.f.blocks[b.index()].stmts.last_mut() {
                        let slot = match last {
                            Stmt::Assign { dst, .. } | Stmt::Load { dst, .. } => Some(dst),
                            Stmt::Call { dst: Some(d), .. } => Some(d),
                            _ => None,
                        };
                        if let Some(slot) = slot {
                            if *slot == t {
                                *slot = dst;
                                return;
                            }
                        }
                    }
                }
            }
        }
        self.emit(Stmt::Assign {
            dst,
            rv: Rvalue::Use(value),
        });
    }

    // ----- expressions ---------------------------------------------------

    fn binary(&mut self, op: BinOp, a: Operand, b: Operand, span: Span) -> Operand {
        if let (Operand::Const(x), Operand::Const(y)) = (a, b) {
            if let Ok(v) = eval_binary(op, x, y) {
                return Operand::Const(v);
            }
        }
        let t = self.temp(span);
        self.emit(Stmt::Assign {
            dst: t,
            rv: Rvalue::Binary(op, a, b),
        });
        Operand::Value(t)
    }

    fn unary(&mut self, op: UnOp, a: Operand, span: Span) -> Operand {
        if let Operand::Const(x) = a {
            return Operand::Const(eval_unary(op, x));
        }
        let t = self.temp(span);
        self.emit(Stmt::Assign {
            dst: t,
            rv: Rvalue::Unary(op, a),
        });
        Operand::Value(t)
    }

    /// Normalizes a value to 0/1 unless it already is a comparison result.
    fn to_bool(&mut self, e: &Expr, v: Operand, span: Span) -> Operand {
        let already = matches!(
            &e.kind,
            ExprKind::Binary(op, ..) if matches!(op, BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge | BinaryOp::LogAnd | BinaryOp::LogOr)
        ) || matches!(&e.kind, ExprKind::Unary(UnaryOp::LogNot, _));
        if already {
            v
        } else {
            self.binary(BinOp::Ne, v, Operand::Const(0), span)
        }
    }

    fn expr(&mut self, e: &Expr) -> LResult<Operand> {
        if let Some(c) = const_eval(e) {
            return Ok(Operand::Const(c));
        }
        match &e.kind {
            ExprKind::Int(v) => Ok(Operand::Const(*v)),
            ExprKind::Var(name) => match self.lookup(name) {
                Some(Binding::Var(v)) => Ok(Operand::Value(v)),
                Some(Binding::Array(..)) => Err(semantic(e.span, format!("array '{name}' used as a value"))),
                None => match self.env.globals.get(name) {
                    Some(g) if g.scalar => {
                        let p = Place::Mem(
                            ArrayRef {
                                name: name.clone(),
                                space: MemSpace::Global,
                            },
                            Operand::Const(0),
                        );
                        Ok(self.read_place(&p, e.span))
                    }
                    Some(_) => Err(semantic(e.span, format!("array '{name}' used as a value"))),
                    None => Err(semantic(e.span, format!("use of undeclared identifier '{name}'"))),
                },
            },
            ExprKind::Index(name, idx) => {
                let array = self.array_ref(name, e.span)?;
                let i = self.expr(idx)?;
                Ok(self.read_place(&Place::Mem(array, i), e.span))
            }
            ExprKind::Unary(UnaryOp::Plus, a) => self.expr(a),
            ExprKind::Unary(op, a) => {
                let v = self.expr(a)?;
                let op = to_ir_unary(*op).expect("non-plus unary maps to an IR op");
                Ok(self.unary(op, v, e.span))
            }
            ExprKind::Binary(op @ (BinaryOp::LogAnd | BinaryOp::LogOr), l, r) => {
                if is_pure(r) {
                    let a = self.expr(l)?;
                    let a = self.to_bool(l, a, l.span);
                    let b = self.expr(r)?;
                    let b = self.to_bool(r, b, r.span);
                    let bop = if *op == BinaryOp::LogAnd { BinOp::And } else { BinOp::Or };
                    Ok(self.binary(bop, a, b, e.span))
                } else {
                    self.materialize_cond(e)
                }
            }
            ExprKind::Binary(op, l, r) => {
                let a = self.expr(l)?;
                let b = self.expr(r)?;
                let op = to_ir_binary(*op).expect("non-logical binary maps to an IR op");
                Ok(self.binary(op, a, b, e.span))
            }
            ExprKind::Assign { target, op, value } => {
                let place = self.place(target, e.span)?;
                let v = match op {
                    None => self.expr(value)?,
                    Some(op) => {
                        let old = self.read_place(&place, e.span);
                        let rhs = self.expr(value)?;
                        let op = to_ir_binary(*op).expect("compound assignment uses arithmetic op");
                        self.binary(op, old, rhs, e.span)
                    }
                };
                self.write_place(&place, v);
                Ok(match place {
                    Place::Var(var) => Operand::Value(var),
                    Place::Mem(..) => v,
                })
            }
            ExprKind::IncDec {
                target,
                increment,
                prefix,
            } => {
                let place = self.place(target, e.span)?;
                let old = self.read_place(&place, e.span);
                let saved = match (&place, prefix) {
                    (Place::Var(_), false) => {
                        let t = self.temp(e.span);
                        self.emit(Stmt::Assign {
                            dst: t,
                            rv: Rvalue::Use(old),
                        });
                        Operand::Value(t)
                    }
                    _ => old,
                };
                let op = if *increment { BinOp::Add } else { BinOp::Sub };
                let new = self.binary(op, old, Operand::Const(1), e.span);
                self.write_place(&place, new);
                Ok(match (place, prefix) {
                    (_, false) => saved,
                    (Place::Var(v), true) => Operand::Value(v),
                    (Place::Mem(..), true) => new,
                })
            }
            ExprKind::Call(..) => self.call(e, true),
            ExprKind::Cond(c, t, f) => {
                let r = self.temp(e.span);
                let tb = self.new_block();
                let fb = self.new_block();
                let join = self.new_block();
                self.cond(c, tb, fb)?;
                self.start(tb);
                let v = self.expr(t)?;
                self.emit(Stmt::Assign {
                    dst: r,
                    rv: Rvalue::Use(v),
                });
                self.jump(join);
                self.start(fb);
                let v = self.expr(f)?;
                self.emit(Stmt::Assign {
                    dst: r,
                    rv: Rvalue::Use(v),
                });
                self.jump(join);
                self.start(join);
                Ok(Operand::Value(r))
            }
        }
    }

    /// Lowers a short-circuit expression to branches producing 0 or 1.
    fn materialize_cond(&mut self, e: &Expr) -> LResult<Operand> {
        let r = self.temp(e.span);
        let tb = self.new_block();
        let fb = self.new_block();
        let join = self.new_block();
        self.cond(e, tb, fb)?;
        self.start(tb);
        self.emit(Stmt::Assign {
            dst: r,
            rv: Rvalue::Use(Operand::Const(1)),
        });
        self.jump(join);
        self.start(fb);
        self.emit(Stmt::Assign {
            dst: r,
            rv: Rvalue::Use(Operand::Const(0)),
        });
        self.jump(join);
        self.start(join);
        Ok(Operand::Value(r))
    }

    fn call(&mut self, e: &Expr, need_value: bool) -> LResult<Operand> {
        let ExprKind::Call(name, args) = &e.kind else {
            unreachable!("call() is only invoked on call expressions")
        };
        let Some(sig) = self.env.functions.get(name).copied() else {
            return Err(semantic(e.span, format!("call to undeclared function '{name}'")));
        };
        if sig.arity != args.len() {
            return Err(semantic(
                e.span,
                format!("function '{name}' expects {} argument(s), {} given", sig.arity, args.len()),
            ));
        }
        if need_value && !sig.returns_value {
            return Err(semantic(e.span, format!("void value of '{name}' used in an expression")));
        }
        let mut ops = Vec::with_capacity(args.len());
        for a in args {
            ops.push(self.expr(a)?);
        }
        let dst = sig.returns_value.then(|| self.temp(e.span));
        self.emit(Stmt::Call {
            dst,
            callee: name.clone(),
            args: ops,
        });
        Ok(dst.map(Operand::Value).unwrap_or(Operand::Const(0)))
    }

    /// Lowers `e` as a branch condition.
    fn cond(&mut self, e: &Expr, t: BlockId, f: BlockId) -> LResult<()> {
        if let Some(c) = const_eval(e) {
            self.jump(if c != 0 { t } else { f });
            return Ok(());
        }
        match &e.kind {
            ExprKind::Unary(UnaryOp::LogNot, a) => self.cond(a, f, t),
            ExprKind::Binary(BinaryOp::LogAnd, a, b) if !is_pure(b) => {
                let mid = self.new_block();
                self.cond(a, mid, f)?;
                self.start(mid);
                self.cond(b, t, f)
            }
            ExprKind::Binary(BinaryOp::LogOr, a, b) if !is_pure(b) => {
                let mid = self.new_block();
                self.cond(a, t, mid)?;
                self.start(mid);
                self.cond(b, t, f)
            }
            _ => {
                let v = self.expr(e)?;
                self.branch(v, t, f);
                Ok(())
            }
        }
    }

    // ----- statements ----------------------------------------------------

    fn lower_body(&mut self, def: &FunctionDef) -> LResult<()> {
        for (name, span) in &def.params {
            let v = self.new_var(Some(name.clone()), *span, false);
            self.bind(name, Binding::Var(v), *span)?;
            self.f.params.push((name.clone(), v));
        }
        self.scopes.push(HashMap::new());
        for s in &def.body {
            self.stmt(s)?;
        }
        self.scopes.pop();
        if self.cur.is_some() {
            if let Some(r) = self.ret_var {
                if def.name != "main" {
                    self.warnings.push(Diagnostic::warning(
                        self.unit_name,
                        def.span,
                        format!("control may reach the end of non-void function '{}'; 0 is returned", def.name),
                    ));
                }
                self.emit(Stmt::Assign {
                    dst: r,
                    rv: Rvalue::Use(Operand::Const(0)),
                });
            }
            self.jump(self.f.exit);
        }
        for name in &self.label_order {
            let l = &self.labels[name];
            if !l.defined {
                return Err(semantic(l.first_use, format!("use of undeclared label '{name}'")));
            }
        }
        Ok(())
    }

    fn label_block(&mut self, name: &str, span: Span) -> BlockId {
        if let Some(l) = self.labels.get(name) {
            return l.block;
        }
        let block = self.new_block();
        self.labels.insert(
            name.to_string(),
            Label {
                block,
                defined: false,
                first_use: span,
            },
        );
        self.label_order.push(name.to_string());
        block
    }

    fn decl(&mut self, d: &LocalDecl) -> LResult<()> {
        match d.len {
            None => {
                let init = match &d.init {
                    Some(LocalInit::Scalar(e)) => Some(self.expr(e)?),
                    Some(LocalInit::Array(_)) => {
                        return Err(semantic(d.span, format!("scalar '{}' initialized with a brace list", d.name)))
                    }
                    None => None,
                };
                let v = self.new_var(Some(d.name.clone()), d.span, false);
                if let Some(init) = init {
                    self.assign_into(v, init);
                }
                self.bind(&d.name, Binding::Var(v), d.span)
            }
            Some(len) => {
                if len == 0 {
                    return Err(semantic(d.span, format!("array '{}' has zero length", d.name)));
                }
                let mut ir_name = d.name.clone();
                let mut k = 1;
                while self.f.local_array(&ir_name).is_some() {
                    k += 1;
                    ir_name = format!("{}.{k}", d.name);
                }
                self.f.local_arrays.push(LocalArray {
                    name: ir_name.clone(),
                    len,
                });
                self.bind(&d.name, Binding::Array(ir_name.clone()), d.span)?;
                match &d.init {
                    None => {}
                    Some(LocalInit::Scalar(_)) => {
                        return Err(semantic(d.span, format!("array '{}' initialized with a scalar", d.name)))
                    }
                    Some(LocalInit::Array(items)) => {
                        if items.len() as u32 > len {
                            return Err(semantic(d.span, format!("excess elements in initializer of '{}'", d.name)));
                        }
                        let array = ArrayRef {
                            name: ir_name,
                            space: MemSpace::Local,
                        };
                        for i in 0..len {
                            let value = match items.get(i as usize) {
                                Some(e) => self.expr(e)?,
                                None => Operand::Const(0),
                            };
                            self.emit(Stmt::Store {
                                array: array.clone(),
                                index: Operand::Const(i as i32),
                                value,
                            });
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn expr_stmt(&mut self, e: &Expr) -> LResult<()> {
        match &e.kind {
            ExprKind::Call(..) => {
                self.call(e, false)?;
            }
            _ => {
                self.expr(e)?;
            }
        }
        Ok(())
    }

    fn record_loop(&mut self, stmt: ast::StmtId, header: BlockId, after: BlockId) {
        self.f.source_map.loops.push(LoopSource {
            stmt,
            header,
            after: Some(after),
        });
    }

    fn stmt(&mut self, s: &ast::Stmt) -> LResult<()> {
        match &s.kind {
            StmtKind::Decl(ds) => {
                for d in ds {
                    self.decl(d)?;
                }
            }
            StmtKind::Expr(e) => self.expr_stmt(e)?,
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let tb = self.new_block();
                let join = self.new_block();
                let eb = if else_branch.is_some() { self.new_block() } else { join };
                self.cond(cond, tb, eb)?;
                self.start(tb);
                self.scoped(then_branch)?;
                self.jump(join);
                if let Some(e) = else_branch {
                    self.start(eb);
                    self.scoped(e)?;
                    self.jump(join);
                }
                self.start(join);
            }
            StmtKind::While { cond, body } => {
                self.rotated_loop(s.id, Some(cond), None, body)?;
            }
            StmtKind::For {
                init,
                cond,
                step,
                body,
            } => {
                self.scopes.push(HashMap::new());
                match init {
                    Some(ForInit::Decl(ds)) => {
                        for d in ds {
                            self.decl(d)?;
                        }
                    }
                    Some(ForInit::Expr(e)) => self.expr_stmt(e)?,
                    None => {}
                }
                self.rotated_loop(s.id, cond.as_ref(), step.as_ref(), body)?;
                self.scopes.pop();
            }
            StmtKind::DoWhile { body, cond } => {
                let pre = self.new_block();
                let header = self.new_block();
                let test = self.new_block();
                let after = self.new_block();
                self.jump(pre);
                self.start(pre);
                self.jump(header);
                self.start(header);
                self.loops.push((after, test));
                self.scoped(body)?;
                self.loops.pop();
                self.jump(test);
                self.start(test);
                self.cond(cond, header, after)?;
                self.start(after);
                self.record_loop(s.id, header, after);
            }
            StmtKind::Break => {
                let Some(&(brk, _)) = self.loops.last() else {
                    return Err(semantic(s.span, "'break' statement not in a loop"));
                };
                self.jump(brk);
            }
            StmtKind::Continue => {
                let Some(&(_, cont)) = self.loops.last() else {
                    return Err(semantic(s.span, "'continue' statement not in a loop"));
                };
                self.jump(cont);
            }
            StmtKind::Return(value) => {
                match (value, self.ret_var) {
                    (Some(e), Some(r)) => {
                        let v = self.expr(e)?;
                        self.emit(Stmt::Assign {
                            dst: r,
                            rv: Rvalue::Use(v),
                        });
                    }
                    (None, None) => {}
                    (Some(_), None) => return Err(semantic(s.span, "void function should not return a value")),
                    (None, Some(_)) => return Err(semantic(s.span, "non-void function should return a value")),
                }
                self.jump(self.f.exit);
            }
            StmtKind::Block(stmts) => {
                self.scopes.push(HashMap::new());
                for st in stmts {
                    self.stmt(st)?;
                }
                self.scopes.pop();
            }
            StmtKind::Goto(label) => {
                let b = self.label_block(label, s.span);
                self.jump(b);
            }
            StmtKind::Labeled(label, inner) => {
                let b = self.label_block(label, s.span);
                let l = self.labels.get_mut(label).expect("label just created");
                if l.defined {
                    return Err(semantic(s.span, format!("redefinition of label '{label}'")));
                }
                l.defined = true;
                self.jump(b);
                self.start(b);
                self.f.source_map.labels.push((label.clone(), b));
                self.stmt(inner)?;
            }
            StmtKind::Empty => {}
        }
        Ok(())
    }

    fn scoped(&mut self, s: &ast::Stmt) -> LResult<()> {
        self.scopes.push(HashMap::new());
        let r = self.stmt(s);
        self.scopes.pop();
        r
    }

    /// `guard: if (cond) goto pre else after; pre: goto body;
    ///  body: ...; latch: step; if (cond) goto body else after`
    fn rotated_loop(
        &mut self,
        id: ast::StmtId,
        cond: Option<&Expr>,
        step: Option<&Expr>,
        body: &ast::Stmt,
    ) -> LResult<()> {
        let pre = self.new_block();
        let header = self.new_block();
        let latch = self.new_block();
        let after = self.new_block();
        match cond {
            Some(c) => self.cond(c, pre, after)?,
            None => self.jump(pre),
        }
        self.start(pre);
        self.jump(header);
        self.start(header);
        self.loops.push((after, latch));
        self.scoped(body)?;
        self.loops.pop();
        self.jump(latch);
        self.start(latch);
        if let Some(st) = step {
            self.expr_stmt(st)?;
        }
        match cond {
            Some(c) => self.cond(c, header, after)?,
            None => self.jump(header),
        }
        self.start(after);
        self.record_loop(id, header, after);
        Ok(())
    }

    fn finish(mut self) -> LResult<(PreSsa, Vec<Diagnostic>)> {
        remove_unreachable(&mut self.f);
        normalize_loops(&mut self.f);
        let mut spans = self.var_spans;
        spans.resize(self.f.values.len(), Span::default());
        Ok((
            PreSsa {
                func: self.f,
                var_spans: spans,
            },
            self.warnings,
        ))
    }
}

/// True when evaluating `e` can neither trap nor have side effects, so it
/// may be computed unconditionally.
fn is_pure(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Var(_) => true,
        ExprKind::Index(..) | ExprKind::Assign { .. } | ExprKind::IncDec { .. } | ExprKind::Call(..) | ExprKind::Cond(..) => false,
        ExprKind::Unary(_, a) => is_pure(a),
        ExprKind::Binary(op, a, b) => {
            let divisor_ok = match op {
                BinaryOp::Div | BinaryOp::Rem => matches!(const_eval(b), Some(d) if d != 0),
                _ => true,
            };
            divisor_ok && is_pure(a) && is_pure(b)
        }
    }
}

/// Drops blocks unreachable from the entry (the exit block is always kept)
/// and renumbers the rest densely in layout order.
pub(super) fn remove_unreachable(f: &mut MirFunction) {
    let n = f.blocks.len();
    let mut reach = vec![false; n];
    let mut stack = vec![f.entry.index()];
    reach[f.entry.index()] = true;
    while let Some(b) = stack.pop() {
        for s in f.blocks[b].term.successors() {
            if !reach[s.index()] {
                reach[s.index()] = true;
                stack.push(s.index());
            }
        }
    }
    if !reach[f.exit.index()] {
        // The function never returns; keep an isolated exit block.
        reach[f.exit.index()] = true;
        let exit = f.exit;
        if f.returns_value {
            f.block_mut(exit).term = Terminator::Return(Some(Operand::Const(0)));
        }
    }
    let mut map = vec![None; n];
    let mut next = 0u32;
    for (i, r) in reach.iter().enumerate() {
        if *r {
            map[i] = Some(BlockId(next));
            next += 1;
        }
    }
    let old = std::mem::take(&mut f.blocks);
    for (i, mut b) in old.into_iter().enumerate() {
        let Some(id) = map[i] else { continue };
        b.id = id;
        match &mut b.term {
            Terminator::Goto(t) => *t = map[t.index()].expect("successor of reachable block"),
            Terminator::Branch { then_bb, else_bb, .. } => {
                *then_bb = map[then_bb.index()].expect("successor of reachable block");
                *else_bb = map[else_bb.index()].expect("successor of reachable block");
            }
            Terminator::Return(_) => {}
        }
        for s in &mut b.stmts {
            if let Stmt::Phi { args, .. } = s {
                args.retain(|(p, _)| map[p.index()].is_some());
                for (p, _) in args.iter_mut() {
                    *p = map[p.index()].expect("retained");
                }
            }
        }
        f.blocks.push(b);
    }
    f.entry = map[f.entry.index()].expect("entry is reachable");
    f.exit = map[f.exit.index()].expect("exit is kept");
    let loops = std::mem::take(&mut f.source_map.loops);
    f.source_map.loops = loops
        .into_iter()
        .filter_map(|l| {
            Some(LoopSource {
                stmt: l.stmt,
                header: map[l.header.index()]?,
                after: l.after.and_then(|a| map[a.index()]),
            })
        })
        .collect();
    let labels = std::mem::take(&mut f.source_map.labels);
    f.source_map.labels = labels
        .into_iter()
        .filter_map(|(n, b)| Some((n, map[b.index()]?)))
        .collect();
}

/// Gives every natural loop a dedicated preheader (single outside
/// predecessor ending in an unconditional jump) and splits every exit edge
/// whose target has other predecessors.
pub(super) fn normalize_loops(f: &mut MirFunction) {
    loop {
        let forest = find_loops_with_default(f, 0);
        let preds = f.predecessors();
        let mut changed = false;
        for l in forest.preorder() {
            let outside: Vec<BlockId> = preds[l.header.index()]
                .iter()
                .copied()
                .filter(|p| !l.contains(*p))
                .collect();
            let dedicated =
                outside.len() == 1 && matches!(f.block(outside[0]).term, Terminator::Goto(_));
            if !dedicated {
                let p = f.new_block(Terminator::Goto(l.header));
                for o in outside {
                    f.block_mut(o).term.retarget(l.header, p);
                }
                changed = true;
                break;
            }
            let mut split = false;
            for &(src, dst) in &l.exits {
                if preds[dst.index()].len() > 1 {
                    let x = f.new_block(Terminator::Goto(dst));
                    retarget_edge(f, src, dst, x);
                    split = true;
                    break;
                }
            }
            if split {
                changed = true;
                break;
            }
        }
        if !changed {
            return;
        }
    }
}

fn retarget_edge(f: &mut MirFunction, src: BlockId, dst: BlockId, new: BlockId) {
    f.block_mut(src).term.retarget(dst, new);
}
