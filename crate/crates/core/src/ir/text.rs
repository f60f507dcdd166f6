//! Human-readable IR text with a parser for the same format.
//!
//! ```text
//! func fun3(a %0, b %1) -> int entry bb0 exit bb6
//! local buf[8]
//! name %4 i
//! bb0:
//!   %2 = add %0, 1
//!   %3 = load global A[%2]
//!   store local buf[0], %3
//!   %4 = phi [bb0: 0], [bb2: %5]
//!   br %2, bb1, bb2
//! end
//! ```

use std::fmt::Write as _;

use super::{
    ArrayRef, BasicBlock, BinOp, BlockId, LocalArray, MemSpace, MirFunction, Operand, Rvalue,
    SourceMap, Stmt, Terminator, UnOp, ValueId, ValueInfo,
};

pub fn print_stmt(s: &Stmt) -> String {
    match s {
        Stmt::Assign { dst, rv } => match rv {
            Rvalue::Binary(op, a, b) => format!("{dst} = {} {a}, {b}", op.mnemonic()),
            Rvalue::Unary(op, a) => format!("{dst} = {} {a}", op.mnemonic()),
            Rvalue::Use(a) => format!("{dst} = copy {a}"),
        },
        Stmt::Load { dst, array, index } => format!("{dst} = load {array}[{index}]"),
        Stmt::Store { array, index, value } => format!("store {array}[{index}], {value}"),
        Stmt::Call { dst, callee, args } => {
            let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
            match dst {
                Some(d) => format!("{d} = call {callee}({})", args.join(", ")),
                None => format!("call {callee}({})", args.join(", ")),
            }
        }
        Stmt::Phi { dst, args } => {
            let args: Vec<String> = args.iter().map(|(b, o)| format!("[{b}: {o}]")).collect();
            format!("{dst} = phi {}", args.join(", "))
        }
    }
}

pub fn print_terminator(t: &Terminator) -> String {
    match t {
        Terminator::Goto(b) => format!("goto {b}"),
        Terminator::Branch { cond, then_bb, else_bb } => format!("br {cond}, {then_bb}, {else_bb}"),
        Terminator::Return(Some(v)) => format!("ret {v}"),
        Terminator::Return(None) => "ret".into(),
    }
}

pub fn print_function(f: &MirFunction) -> String {
    let mut out = String::new();
    let params: Vec<String> = f.params.iter().map(|(n, v)| format!("{n} {v}")).collect();
    let _ = writeln!(
        out,
        "func {}({}) -> {} entry {} exit {} values {}",
        f.name,
        params.join(", "),
        if f.returns_value { "int" } else { "void" },
        f.entry,
        f.exit,
        f.values.len()
    );
    for a in &f.local_arrays {
        let _ = writeln!(out, "local {}[{}]", a.name, a.len);
    }
    for (i, v) in f.values.iter().enumerate() {
        if let Some(n) = &v.name {
            let _ = writeln!(out, "name %{i} {n}");
        }
    }
    for b in &f.blocks {
        let _ = writeln!(out, "{}:", b.id);
        for s in &b.stmts {
            let _ = writeln!(out, "  {}", print_stmt(s));
        }
        let _ = writeln!(out, "  {}", print_terminator(&b.term));
    }
    out.push_str("end\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct TextError {
    pub line: usize,
    pub message: String,
}

struct Cursor<'a> {
    s: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, m: impl Into<String>) -> Result<T, TextError> {
        Err(TextError {
            line: self.line,
            message: m.into(),
        })
    }
    fn ws(&mut self) {
        self.s = self.s.trim_start();
    }
    fn eat(&mut self, p: &str) -> bool {
        self.ws();
        if let Some(r) = self.s.strip_prefix(p) {
            self.s = r;
            true
        } else {
            false
        }
    }
    fn expect(&mut self, p: &str) -> Result<(), TextError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.err(format!("expected '{p}' at '{}'", self.s))
        }
    }
    fn word(&mut self) -> Result<&'a str, TextError> {
        self.ws();
        let end = self
            .s
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or(self.s.len());
        if end == 0 {
            return self.err(format!("expected a name at '{}'", self.s));
        }
        let (w, r) = self.s.split_at(end);
        self.s = r;
        Ok(w)
    }
    fn number(&mut self) -> Result<i64, TextError> {
        self.ws();
        let end = self
            .s
            .char_indices()
            .find(|&(i, c)| !(c.is_ascii_digit() || (i == 0 && c == '-')))
            .map(|(i, _)| i)
            .unwrap_or(self.s.len());
        let (w, r) = self.s.split_at(end);
        match w.parse() {
            Ok(n) => {
                self.s = r;
                Ok(n)
            }
            Err(_) => self.err(format!("expected a number at '{}'", self.s)),
        }
    }
    fn value(&mut self) -> Result<ValueId, TextError> {
        self.expect("%")?;
        Ok(ValueId(self.number()? as u32))
    }
    fn block(&mut self) -> Result<BlockId, TextError> {
        self.expect("bb")?;
        Ok(BlockId(self.number()? as u32))
    }
    fn operand(&mut self) -> Result<Operand, TextError> {
        self.ws();
        if self.s.starts_with('%') {
            Ok(Operand::Value(self.value()?))
        } else {
            let n = self.number()?;
            match i32::try_from(n) {
                Ok(c) => Ok(Operand::Const(c)),
                Err(_) => self.err(format!("constant {n} out of range")),
            }
        }
    }
    fn array(&mut self) -> Result<ArrayRef, TextError> {
        let space = match self.word()? {
            "global" => MemSpace::Global,
            "local" => MemSpace::Local,
            other => return self.err(format!("unknown memory space '{other}'")),
        };
        let name = self.word()?.to_string();
        Ok(ArrayRef { name, space })
    }
    fn done(&mut self) -> Result<(), TextError> {
        self.ws();
        if self.s.is_empty() {
            Ok(())
        } else {
            self.err(format!("trailing text '{}'", self.s))
        }
    }
}

/// Parses one function printed by [`print_function`]. The source map is
/// not part of the text and comes back empty.
pub fn parse_function(text: &str) -> Result<MirFunction, TextError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let Some((ln, head)) = lines.next() else {
        return Err(TextError { line: 0, message: "empty input".into() });
    };
    let mut c = Cursor { s: head, line: ln };
    c.expect("func")?;
    let name = c.word()?.to_string();
    c.expect("(")?;
    let mut params = Vec::new();
    if !c.eat(")") {
        loop {
            let n = c.word()?.to_string();
            let v = c.value()?;
            params.push((n, v));
            if c.eat(")") {
                break;
            }
            c.expect(",")?;
        }
    }
    c.expect("->")?;
    let returns_value = match c.word()? {
        "int" => true,
        "void" => false,
        other => return c.err(format!("unknown return type '{other}'")),
    };
    c.expect("entry")?;
    let entry = c.block()?;
    c.expect("exit")?;
    let exit = c.block()?;
    c.expect("values")?;
    let nvalues = c.number()? as usize;
    c.done()?;

    let mut f = MirFunction {
        name,
        params,
        returns_value,
        blocks: Vec::new(),
        entry,
        exit,
        values: vec![ValueInfo::default(); nvalues],
        local_arrays: Vec::new(),
        source_map: SourceMap::default(),
    };
    let mut current: Option<BasicBlock> = None;
    for (ln, line) in lines {
        let mut c = Cursor { s: line, line: ln };
        let t = line.trim();
        if t == "end" {
            if current.is_some() {
                return c.err("block without terminator");
            }
            return Ok(f);
        }
        if let Some(rest) = t.strip_prefix("local ") {
            let mut c = Cursor { s: rest, line: ln };
            let n = c.word()?.to_string();
            c.expect("[")?;
            let len = c.number()? as u32;
            c.expect("]")?;
            f.local_arrays.push(LocalArray { name: n, len });
            continue;
        }
        if let Some(rest) = t.strip_prefix("name ") {
            let mut c = Cursor { s: rest, line: ln };
            let v = c.value()?;
            let n = c.word()?.to_string();
            match f.values.get_mut(v.index()) {
                Some(info) => info.name = Some(n),
                None => return c.err(format!("{v} out of range")),
            }
            continue;
        }
        if let Some(label) = t.strip_suffix(':') {
            if current.is_some() {
                return c.err("block without terminator");
            }
            let mut lc = Cursor { s: label, line: ln };
            let id = lc.block()?;
            if id.index() != f.blocks.len() {
                return c.err(format!("expected bb{}, found {id}", f.blocks.len()));
            }
            current = Some(BasicBlock { id, stmts: Vec::new(), term: Terminator::Return(None) });
            continue;
        }
        let Some(block) = current.as_mut() else {
            return c.err("statement outside a block");
        };
        // terminators
        if c.eat("goto ") {
            block.term = Terminator::Goto(c.block()?);
        } else if c.eat("br ") {
            let cond = c.operand()?;
            c.expect(",")?;
            let then_bb = c.block()?;
            c.expect(",")?;
            let else_bb = c.block()?;
            block.term = Terminator::Branch { cond, then_bb, else_bb };
        } else if t == "ret" {
            block.term = Terminator::Return(None);
            c.s = "";
        } else if c.eat("ret ") {
            block.term = Terminator::Return(Some(c.operand()?));
        } else {
            let stmt = parse_stmt(&mut c)?;
            c.done()?;
            block.stmts.push(stmt);
            continue;
        }
        c.done()?;
        f.blocks.push(current.take().expect("block in progress"));
    }
    Err(TextError { line: 0, message: "missing 'end'".into() })
}

fn parse_stmt(c: &mut Cursor<'_>) -> Result<Stmt, TextError> {
    if c.eat("store ") {
        let array = c.array()?;
        c.expect("[")?;
        let index = c.operand()?;
        c.expect("]")?;
        c.expect(",")?;
        let value = c.operand()?;
        return Ok(Stmt::Store { array, index, value });
    }
    if c.eat("call ") {
        let (callee, args) = call_tail(c)?;
        return Ok(Stmt::Call { dst: None, callee, args });
    }
    let dst = c.value()?;
    c.expect("=")?;
    let op = c.word()?;
    Ok(match op {
        "copy" => Stmt::Assign { dst, rv: Rvalue::Use(c.operand()?) },
        "load" => {
            let array = c.array()?;
            c.expect("[")?;
            let index = c.operand()?;
            c.expect("]")?;
            Stmt::Load { dst, array, index }
        }
        "call" => {
            let (callee, args) = call_tail(c)?;
            Stmt::Call { dst: Some(dst), callee, args }
        }
        "phi" => {
            let mut args = Vec::new();
            while c.eat("[") {
                let b = c.block()?;
                c.expect(":")?;
                let o = c.operand()?;
                c.expect("]")?;
                args.push((b, o));
                if !c.eat(",") {
                    break;
                }
            }
            Stmt::Phi { dst, args }
        }
        other => {
            if let Some(op) = BinOp::from_mnemonic(other) {
                let a = c.operand()?;
                c.expect(",")?;
                let b = c.operand()?;
                Stmt::Assign { dst, rv: Rvalue::Binary(op, a, b) }
            } else if let Some(op) = UnOp::from_mnemonic(other) {
                Stmt::Assign { dst, rv: Rvalue::Unary(op, c.operand()?) }
            } else {
                return c.err(format!("unknown operation '{other}'"));
            }
        }
    })
}

fn call_tail(c: &mut Cursor<'_>) -> Result<(String, Vec<Operand>), TextError> {
    let callee = c.word()?.to_string();
    c.expect("(")?;
    let mut args = Vec::new();
    if !c.eat(")") {
        loop {
            args.push(c.operand()?);
            if c.eat(")") {
                break;
            }
            c.expect(",")?;
        }
    }
    Ok((callee, args))
}
