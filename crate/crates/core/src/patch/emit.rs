//! Re-emitting a (patched) program as C-subset source.
//!
//! Untouched functions, globals and prototypes are pretty-printed from
//! their syntax trees. Patched functions are rendered from the IR: one
//! local per SSA value, one label per block, phis resolved into parallel
//! copies on the incoming edges, and `goto` for every jump. Wrapper
//! declarations go to the top of the owning unit and definitions to the
//! end.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::frontend::ast::{
    BinaryOp, Expr, ExprKind, ForInit, FunctionDef, GlobalDecl, Item, LValue, LocalDecl, LocalInit, Prototype, RetType,
    Stmt, StmtKind, UnaryOp, Unit,
};
use crate::ir::{self, BinOp, BlockId, MemSpace, MirFunction, MirProgram, Operand, Rvalue, Terminator, UnOp};

use super::wrapper::{hook_prototypes, WrapperSource};

// ---------------------------------------------------------------------
// Syntax-tree printer
// ---------------------------------------------------------------------

fn int_literal(c: i32) -> String {
    if c == i32::MIN {
        "(-2147483647 - 1)".into()
    } else if c < 0 {
        format!("(-{})", -(c as i64))
    } else {
        c.to_string()
    }
}

/// Precedence of an expression for parenthesization; higher binds tighter.
fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Assign { .. } => 0,
        ExprKind::Cond(..) => 1,
        ExprKind::Binary(op, ..) => op.precedence() + 1,
        ExprKind::Unary(..) => 20,
        ExprKind::IncDec { prefix: true, .. } => 20,
        _ => 30,
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    let s = expr(e);
    if prec(e) < min {
        format!("({s})")
    } else {
        s
    }
}

fn lvalue(l: &LValue) -> String {
    match l {
        LValue::Var(n) => n.clone(),
        LValue::Index(n, i) => format!("{n}[{}]", expr(i)),
    }
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(c) => int_literal(*c),
        ExprKind::Var(n) => n.clone(),
        ExprKind::Index(n, i) => format!("{n}[{}]", expr(i)),
        ExprKind::Unary(op, a) => {
            let sym = match op {
                UnaryOp::Neg => "-",
                UnaryOp::Plus => "+",
                UnaryOp::BitNot => "~",
                UnaryOp::LogNot => "!",
            };
            // `- -x` must not become `--x`.
            let inner = wrap(a, 20);
            if matches!(op, UnaryOp::Neg | UnaryOp::Plus) && inner.starts_with(['-', '+']) {
                format!("{sym}({inner})")
            } else {
                format!("{sym}{inner}")
            }
        }
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence() + 1;
            format!("{} {} {}", wrap(a, p), op.symbol(), wrap(b, p + 1))
        }
        ExprKind::Assign { target, op, value } => {
            let sym = op.map_or("=".to_string(), |o: BinaryOp| format!("{}=", o.symbol()));
            format!("{} {sym} {}", lvalue(target), wrap(value, 0))
        }
        ExprKind::IncDec {
            target,
            increment,
            prefix,
        } => {
            let o = if *increment { "++" } else { "--" };
            if *prefix {
                format!("{o}{}", lvalue(target))
            } else {
                format!("{}{o}", lvalue(target))
            }
        }
        ExprKind::Call(n, args) => {
            format!("{n}({})", args.iter().map(|a| wrap(a, 1)).collect::<Vec<_>>().join(", "))
        }
        ExprKind::Cond(c, a, b) => format!("{} ? {} : {}", wrap(c, 2), wrap(a, 0), wrap(b, 1)),
    }
}

fn local_decl(d: &LocalDecl) -> String {
    let mut s = match d.len {
        Some(n) => format!("{}[{n}]", d.name),
        None => d.name.clone(),
    };
    match &d.init {
        None => {}
        Some(LocalInit::Scalar(e)) => {
            let _ = write!(s, " = {}", wrap(e, 1));
        }
        Some(LocalInit::Array(es)) => {
            let items: Vec<String> = es.iter().map(|e| wrap(e, 1)).collect();
            let _ = write!(s, " = {{{}}}", items.join(", "));
        }
    }
    s
}

fn decls(ds: &[LocalDecl]) -> String {
    format!("int {}", ds.iter().map(local_decl).collect::<Vec<_>>().join(", "))
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    let ind = "    ".repeat(depth);
    match &s.kind {
        StmtKind::Decl(ds) => {
            let _ = writeln!(out, "{ind}{};", decls(ds));
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{ind}{};", expr(e));
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            let _ = writeln!(out, "{ind}if ({}) {{", expr(cond));
            body(out, then_branch, depth + 1);
            match else_branch {
                Some(e) => {
                    let _ = writeln!(out, "{ind}}} else {{");
                    body(out, e, depth + 1);
                    let _ = writeln!(out, "{ind}}}");
                }
                None => {
                    let _ = writeln!(out, "{ind}}}");
                }
            }
        }
        StmtKind::While { cond, body: b } => {
            let _ = writeln!(out, "{ind}while ({}) {{", expr(cond));
            body(out, b, depth + 1);
            let _ = writeln!(out, "{ind}}}");
        }
        StmtKind::DoWhile { body: b, cond } => {
            let _ = writeln!(out, "{ind}do {{");
            body(out, b, depth + 1);
            let _ = writeln!(out, "{ind}}} while ({});", expr(cond));
        }
        StmtKind::For {
            init,
            cond,
            step,
            body: b,
        } => {
            let i = match init {
                None => String::new(),
                Some(ForInit::Decl(ds)) => decls(ds),
                Some(ForInit::Expr(e)) => expr(e),
            };
            let c = cond.as_ref().map(expr).unwrap_or_default();
            let st = step.as_ref().map(expr).unwrap_or_default();
            let _ = writeln!(out, "{ind}for ({i}; {c}; {st}) {{");
            body(out, b, depth + 1);
            let _ = writeln!(out, "{ind}}}");
        }
        StmtKind::Break => {
            let _ = writeln!(out, "{ind}break;");
        }
        StmtKind::Continue => {
            let _ = writeln!(out, "{ind}continue;");
        }
        StmtKind::Return(None) => {
            let _ = writeln!(out, "{ind}return;");
        }
        StmtKind::Return(Some(e)) => {
            let _ = writeln!(out, "{ind}return {};", expr(e));
        }
        StmtKind::Block(ss) => {
            let _ = writeln!(out, "{ind}{{");
            for s in ss {
                stmt(out, s, depth + 1);
            }
            let _ = writeln!(out, "{ind}}}");
        }
        StmtKind::Goto(l) => {
            let _ = writeln!(out, "{ind}goto {l};");
        }
        StmtKind::Labeled(l, inner) => {
            let _ = writeln!(out, "{}{l}:", "    ".repeat(depth.saturating_sub(1)));
            stmt(out, inner, depth);
        }
        StmtKind::Empty => {
            let _ = writeln!(out, "{ind};");
        }
    }
}

/// Statements of a braced body without repeating the braces.
fn body(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::Block(ss) => {
            for s in ss {
                stmt(out, s, depth);
            }
        }
        _ => stmt(out, s, depth),
    }
}

fn ret_type(r: RetType) -> &'static str {
    match r {
        RetType::Int => "int",
        RetType::Void => "void",
    }
}

pub fn prototype(p: &Prototype) -> String {
    let params = if p.params.is_empty() {
        "void".to_string()
    } else {
        p.params
            .iter()
            .map(|n| n.as_ref().map_or("int".to_string(), |n| format!("int {n}")))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!("{} {}({params});", ret_type(p.ret), p.name)
}

pub fn global(g: &GlobalDecl) -> String {
    let mut s = String::new();
    if g.is_extern {
        s += "extern ";
    }
    s += "int ";
    s += &g.name;
    if let Some(n) = g.len {
        let _ = write!(s, "[{n}]");
    }
    if let Some(init) = &g.init {
        let items: Vec<String> = init.iter().map(|c| int_literal(*c)).collect();
        if g.len.is_some() {
            let _ = write!(s, " = {{{}}}", items.join(", "));
        } else {
            let _ = write!(s, " = {}", items.join(", "));
        }
    }
    s + ";"
}

pub fn function_def(f: &FunctionDef) -> String {
    let params = if f.params.is_empty() {
        "void".to_string()
    } else {
        f.params.iter().map(|(n, _)| format!("int {n}")).collect::<Vec<_>>().join(", ")
    };
    let mut out = format!("{} {}({params}) {{\n", ret_type(f.ret), f.name);
    for s in &f.body {
        stmt(&mut out, s, 1);
    }
    out + "}\n"
}

/// Pretty-prints a syntax tree.
pub fn print_unit(u: &Unit) -> String {
    let mut out = String::new();
    for item in &u.items {
        match item {
            Item::Function(f) => {
                out += &function_def(f);
            }
            Item::Prototype(p) => {
                out += &prototype(p);
                out.push('\n');
            }
            Item::Global(g) => {
                out += &global(g);
                out.push('\n');
            }
        }
    }
    out
}

// ---------------------------------------------------------------------
// IR printer
// ---------------------------------------------------------------------

fn c_binop(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Div => "/",
        BinOp::Rem => "%",
        BinOp::Shl => "<<",
        BinOp::Shr => ">>",
        BinOp::And => "&",
        BinOp::Or => "|",
        BinOp::Xor => "^",
        BinOp::Eq => "==",
        BinOp::Ne => "!=",
        BinOp::Lt => "<",
        BinOp::Le => "<=",
        BinOp::Gt => ">",
        BinOp::Ge => ">=",
    }
}

struct IrNames {
    values: Vec<String>,
}

impl IrNames {
    fn new(f: &MirFunction, taken: &BTreeSet<String>) -> IrNames {
        let mut used: BTreeSet<String> = taken.clone();
        used.extend(f.local_arrays.iter().map(|a| a.name.clone()));
        let mut values = vec![String::new(); f.values.len()];
        for (n, v) in &f.params {
            values[v.index()] = n.clone();
            used.insert(n.clone());
        }
        for (i, slot) in values.iter_mut().enumerate() {
            if !slot.is_empty() {
                continue;
            }
            let stem = f
                .value_name(ir::ValueId(i as u32))
                .map(|n| n.replace('.', "_"))
                .unwrap_or_else(|| "t".into());
            let mut name = format!("{stem}_v{i}");
            while used.contains(&name) {
                name.push('_');
            }
            used.insert(name.clone());
            *slot = name;
        }
        IrNames { values }
    }

    fn op(&self, o: Operand) -> String {
        match o {
            Operand::Const(c) => int_literal(c),
            Operand::Value(v) => self.values[v.index()].clone(),
        }
    }
}

fn array_access(p: &MirProgram, a: &ir::ArrayRef, index: String) -> String {
    let scalar = a.space == MemSpace::Global && p.global(&a.name).is_some_and(|g| g.scalar);
    if scalar {
        a.name.clone()
    } else {
        format!("{}[{index}]", a.name)
    }
}

/// Parallel copies for the phis of `to` on the edge from `from`.
fn edge_copies(out: &mut String, f: &MirFunction, nm: &IrNames, from: BlockId, to: BlockId, ind: &str) {
    let mut copies = Vec::new();
    for s in &f.block(to).stmts {
        if let ir::Stmt::Phi { dst, args } = s {
            if let Some((_, o)) = args.iter().find(|(p, _)| *p == from) {
                copies.push((nm.values[dst.index()].clone(), nm.op(*o)));
            }
        }
    }
    let dsts: BTreeSet<&String> = copies.iter().map(|(d, _)| d).collect();
    let conflict = copies.iter().any(|(_, s)| dsts.contains(s));
    if conflict && copies.len() > 1 {
        let _ = writeln!(out, "{ind}{{");
        for (k, (_, s)) in copies.iter().enumerate() {
            let _ = writeln!(out, "{ind}    int phi_tmp{k} = {s};");
        }
        for (k, (d, _)) in copies.iter().enumerate() {
            let _ = writeln!(out, "{ind}    {d} = phi_tmp{k};");
        }
        let _ = writeln!(out, "{ind}}}");
    } else {
        for (d, s) in copies {
            if d != s {
                let _ = writeln!(out, "{ind}{d} = {s};");
            }
        }
    }
}

/// Renders an IR function as C with labels and `goto`.
pub fn function_from_ir(p: &MirProgram, f: &MirFunction) -> String {
    let mut taken: BTreeSet<String> = p.globals().iter().map(|g| g.name.clone()).collect();
    taken.extend(p.functions().map(|g| g.name.clone()));
    for u in &p.units {
        taken.extend(u.declarations.iter().map(|d| d.name.clone()));
    }
    let nm = IrNames::new(f, &taken);
    let params: Vec<String> = f.params.iter().map(|(n, _)| format!("int {n}")).collect();
    let mut out = format!(
        "{} {}({}) {{\n",
        if f.returns_value { "int" } else { "void" },
        f.name,
        if params.is_empty() { "void".to_string() } else { params.join(", ") }
    );
    let params: BTreeSet<usize> = f.params.iter().map(|(_, v)| v.index()).collect();
    let locals: Vec<&String> = nm
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| !params.contains(i))
        .map(|(_, n)| n)
        .collect();
    for chunk in locals.chunks(8) {
        let _ = writeln!(
            out,
            "    int {};",
            chunk.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    for a in &f.local_arrays {
        let _ = writeln!(out, "    int {}[{}];", a.name, a.len);
    }
    // Only reachable blocks are emitted; the entry comes first.
    let reach = reachable(f);
    let mut order: Vec<BlockId> = vec![f.entry];
    order.extend(f.block_ids().filter(|b| *b != f.entry && reach[b.index()]));
    let label = |b: BlockId| format!("bb{}", b.0);
    for (pos, &b) in order.iter().enumerate() {
        let _ = writeln!(out, "{}:", label(b));
        let blk = f.block(b);
        let mut wrote = false;
        for s in &blk.stmts {
            let line = match s {
                ir::Stmt::Phi { .. } => continue,
                ir::Stmt::Assign { dst, rv } => {
                    let d = &nm.values[dst.index()];
                    let r = match rv {
                        Rvalue::Use(o) => nm.op(*o),
                        Rvalue::Unary(op, a) => {
                            let sym = match op {
                                UnOp::Neg => "-",
                                UnOp::Not => "~",
                                UnOp::LNot => "!",
                            };
                            format!("{sym}{}", nm.op(*a))
                        }
                        Rvalue::Binary(op, a, b) => format!("{} {} {}", nm.op(*a), c_binop(*op), nm.op(*b)),
                    };
                    format!("{d} = {r};")
                }
                ir::Stmt::Load { dst, array, index } => {
                    format!("{} = {};", nm.values[dst.index()], array_access(p, array, nm.op(*index)))
                }
                ir::Stmt::Store { array, index, value } => {
                    format!("{} = {};", array_access(p, array, nm.op(*index)), nm.op(*value))
                }
                ir::Stmt::Call { dst, callee, args } => {
                    let a: Vec<String> = args.iter().map(|o| nm.op(*o)).collect();
                    match dst {
                        Some(d) => format!("{} = {callee}({});", nm.values[d.index()], a.join(", ")),
                        None => format!("{callee}({});", a.join(", ")),
                    }
                }
            };
            let _ = writeln!(out, "    {line}");
            wrote = true;
        }
        let next = order.get(pos + 1).copied();
        match &blk.term {
            Terminator::Return(None) => {
                let _ = writeln!(out, "    return;");
            }
            Terminator::Return(Some(o)) => {
                let _ = writeln!(out, "    return {};", nm.op(*o));
            }
            Terminator::Goto(t) => {
                edge_copies(&mut out, f, &nm, b, *t, "    ");
                if Some(*t) != next {
                    let _ = writeln!(out, "    goto {};", label(*t));
                } else if !wrote {
                    let _ = writeln!(out, "    ;");
                }
            }
            Terminator::Branch { cond, then_bb, else_bb } => {
                let _ = writeln!(out, "    if ({} != 0) {{", nm.op(*cond));
                edge_copies(&mut out, f, &nm, b, *then_bb, "        ");
                let _ = writeln!(out, "        goto {};", label(*then_bb));
                let _ = writeln!(out, "    }}");
                edge_copies(&mut out, f, &nm, b, *else_bb, "    ");
                let _ = writeln!(out, "    goto {};", label(*else_bb));
            }
        }
    }
    out + "}\n"
}

fn reachable(f: &MirFunction) -> Vec<bool> {
    let mut seen = vec![false; f.blocks.len()];
    let mut stack = vec![f.entry];
    while let Some(b) = stack.pop() {
        if std::mem::replace(&mut seen[b.index()], true) {
            continue;
        }
        stack.extend(f.block(b).term.successors());
    }
    seen
}

/// Emits every unit of `program`: functions named in `patched` come from
/// the IR, everything else from the syntax trees. Returns `(unit name,
/// text)` in unit order.
pub fn emit_c(
    program: &MirProgram,
    asts: &[Unit],
    patched: &BTreeSet<String>,
    wrappers: &[(String, WrapperSource)],
) -> Vec<(String, String)> {
    let by_unit: HashMap<&str, Vec<&WrapperSource>> = wrappers.iter().fold(HashMap::new(), |mut m, (u, w)| {
        m.entry(u.as_str()).or_default().push(w);
        m
    });
    let mut files = Vec::new();
    for ast in asts {
        let ws = by_unit.get(ast.name.as_str()).cloned().unwrap_or_default();
        let mut out = String::new();
        if !ws.is_empty() {
            out += "/* accelerator interface */\n";
            out += &hook_prototypes();
            for w in &ws {
                out += &w.declarations;
            }
            out.push('\n');
        }
        for item in &ast.items {
            match item {
                Item::Function(fd) if patched.contains(&fd.name) => {
                    let f = program.function(&fd.name).expect("patched function in program");
                    out += &function_from_ir(program, f);
                }
                Item::Function(fd) => out += &function_def(fd),
                Item::Prototype(p) => {
                    out += &prototype(p);
                    out.push('\n');
                }
                Item::Global(g) => {
                    out += &global(g);
                    out.push('\n');
                }
            }
        }
        for w in &ws {
            out.push('\n');
            out += &w.definition;
        }
        files.push((ast.name.clone(), out));
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{compile_program, parse_unit, CompiledProgram};
    use crate::ir::loops::find_loops;
    use crate::patch::patch_program;
    use crate::synth::{synthesize_loop, CostModel};
    use crate::verify::{interpret, Limits, NoExternals};

    const UNIT1: &str = include_str!("../../../../corpus/listings/unit1.c");
    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    fn compile(files: &[(String, String)]) -> CompiledProgram {
        compile_program(files).unwrap_or_else(|e| panic!("{e}\n{files:#?}"))
    }

    #[test]
    fn ast_round_trip_is_stable() {
        let srcs = [
            UNIT1,
            UNIT2,
            "int A[3] = {1, -2, 3}; extern int E; int G = -5; void h(void);\n\
             int f(int x, int y) { int t[4]; int k = x ? y : -x; t[0] = - -k; k += t[0] << 2;\n\
             do { k--; if (k & 1) continue; else { k = k / 2; } } while (k > 0 && !(y == 3) || x != 1);\n\
             L: for (;;) { if (x++ >= 3) break; goto L; } return (x - y) - (x - y) * 2 + -2147483647 - 1; }",
        ];
        for (i, s) in srcs.iter().enumerate() {
            let u = parse_unit(s, "u.c").unwrap();
            let once = print_unit(&u);
            let twice = print_unit(&parse_unit(&once, "u.c").unwrap());
            assert_eq!(once, twice, "source {i}");
        }
    }

    #[test]
    fn unpatched_program_reemits_equivalently() {
        let files = vec![("unit1.c".to_string(), UNIT1.to_string()), ("unit2.c".to_string(), UNIT2.to_string())];
        let c = compile(&files);
        let out = emit_c(&c.program, &c.asts, &BTreeSet::new(), &[]);
        let again = compile(&out);
        for a in [0, 1, 5, -3] {
            let x = interpret(&c.program, "main", &[a, 2], Limits::default(), NoExternals);
            let y = interpret(&again.program, "main", &[a, 2], Limits::default(), NoExternals);
            assert_eq!(x.ret, y.ret);
        }
    }

    #[test]
    fn patched_listings_reparse_and_agree() {
        let files = vec![("unit1.c".to_string(), UNIT1.to_string()), ("unit2.c".to_string(), UNIT2.to_string())];
        let c = compile(&files);
        let f = c.program.function("fun3").unwrap();
        let h = find_loops(f).roots[0].header;
        let fsm = synthesize_loop(f, h, 3, &CostModel::default()).unwrap().fsm;
        let pp = patch_program(&c.program, &[fsm]).unwrap();
        let patched: BTreeSet<String> = pp.plans.iter().map(|p| p.function.clone()).collect();
        let out = emit_c(&pp.program, &c.asts, &patched, &pp.wrappers);
        assert_eq!(out.len(), 2);
        assert!(!out[0].1.contains("__accel"));
        assert!(out[1].1.contains("__accel_call_3"));
        assert!(out[1].1.contains("goto bb"));
        let again = compile(&out);
        for (a, b) in [(0, 1), (201, 0), (-7, 9), (100, 100)] {
            let x = interpret(&c.program, "fun3", &[a, b], Limits::default(), NoExternals);
            let y = interpret(&again.program, "fun3", &[a, b], Limits::default(), NoExternals);
            assert_eq!(x.ret, y.ret, "fun3({a},{b})");
        }
    }

    #[test]
    fn conflicting_phi_copies_use_temporaries() {
        // A swap in the loop; resolving the phi operands through their copy
        // chains makes the header phis read each other.
        let src = "int f(int a, int b, int n){ for (int i = 0; i < n; i++) { int t = a; a = b; b = t; } return a - b; }";
        let files = vec![("s.c".to_string(), src.to_string())];
        let c = compile(&files);
        let mut p = c.program.clone();
        let f = p.function_mut("f").unwrap();
        let alias = crate::synth::region::copy_aliases(f);
        for b in &mut f.blocks {
            for s in &mut b.stmts {
                if let ir::Stmt::Phi { args, .. } = s {
                    for (_, o) in args.iter_mut() {
                        if let Operand::Value(v) = *o {
                            *o = alias[v.index()];
                        }
                    }
                }
            }
        }
        let names: BTreeSet<String> = ["f".to_string()].into();
        let out = emit_c(&p, &c.asts, &names, &[]);
        assert!(out[0].1.contains("phi_tmp"), "{}", out[0].1);
        let again = compile(&out);
        for n in 0..5 {
            let x = interpret(&c.program, "f", &[1, 10, n], Limits::default(), NoExternals);
            let y = interpret(&again.program, "f", &[1, 10, n], Limits::default(), NoExternals);
            assert_eq!(x.ret, y.ret);
        }
    }
}
