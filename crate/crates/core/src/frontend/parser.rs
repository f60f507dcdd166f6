//! Recursive-descent parser for the C subset.

use super::ast::*;
use super::lexer::{lex, Kw, Tok, Token};
use super::FrontendError;
use crate::diag::Span;

pub fn parse_unit(source: &str, unit_name: &str) -> Result<Unit, FrontendError> {
    let tokens = lex(source)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        next_id: 0,
    };
    let mut items = Vec::new();
    while !p.at_eof() {
        items.extend(p.item()?);
    }
    Ok(Unit {
        name: unit_name.to_string(),
        items,
    })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_id: StmtId,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn is_kw(&self, kw: Kw) -> bool {
        matches!(self.peek(), Tok::Kw(k) if *k == kw)
    }

    fn eat_kw(&mut self, kw: Kw) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(FrontendError::Syntax {
            span: self.span(),
            message: message.into(),
        })
    }

    fn unsupported<T>(&self, construct: &str) -> PResult<T> {
        Err(FrontendError::Unsupported {
            span: self.span(),
            construct: construct.into(),
        })
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected '{p}', found {}", describe(self.peek())))
        }
    }

    fn expect_ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(name)
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn stmt(&mut self, span: Span, kind: StmtKind) -> Stmt {
        let id = self.next_id;
        self.next_id += 1;
        Stmt { id, span, kind }
    }

    fn reject_pointer(&self) -> PResult<()> {
        if self.is_punct("*") {
            return self.unsupported("pointer type");
        }
        Ok(())
    }

    // ---- top level ----

    fn item(&mut self) -> PResult<Vec<Item>> {
        let span = self.span();
        let is_extern = self.eat_kw(Kw::Extern);
        let ret = if self.eat_kw(Kw::Int) {
            RetType::Int
        } else if self.eat_kw(Kw::Void) {
            RetType::Void
        } else {
            return self.error(format!("expected declaration, found {}", describe(self.peek())));
        };
        self.reject_pointer()?;
        let name = self.expect_ident()?;
        if self.is_punct("(") {
            return self.function(name, ret, span).map(|i| vec![i]);
        }
        if ret == RetType::Void {
            return self.error("variable declared void");
        }
        let mut items = vec![Item::Global(self.global_rest(name, is_extern, span)?)];
        while self.eat_punct(",") {
            self.reject_pointer()?;
            let span = self.span();
            let name = self.expect_ident()?;
            items.push(Item::Global(self.global_rest(name, is_extern, span)?));
        }
        self.expect_punct(";")?;
        Ok(items)
    }

    fn global_rest(&mut self, name: String, is_extern: bool, span: Span) -> PResult<GlobalDecl> {
        let len = self.array_suffix()?;
        let mut init = None;
        if self.eat_punct("=") {
            if is_extern {
                return self.error("extern declaration cannot have an initializer");
            }
            init = Some(match len {
                Some(n) => {
                    let vals = self.const_list()?;
                    if vals.len() > n as usize {
                        return self.error("too many initializers");
                    }
                    vals
                }
                None => vec![self.const_expr()?],
            });
        }
        Ok(GlobalDecl {
            name,
            len,
            init,
            is_extern,
            span,
        })
    }

    fn array_suffix(&mut self) -> PResult<Option<u32>> {
        if !self.eat_punct("[") {
            return Ok(None);
        }
        let v = self.const_expr()?;
        self.expect_punct("]")?;
        if self.is_punct("[") {
            return self.unsupported("multi-dimensional array");
        }
        if v <= 0 {
            return self.error("array size must be positive");
        }
        Ok(Some(v as u32))
    }

    fn const_list(&mut self) -> PResult<Vec<i32>> {
        self.expect_punct("{")?;
        let mut vals = Vec::new();
        if !self.is_punct("}") {
            loop {
                vals.push(self.const_expr()?);
                if !self.eat_punct(",") || self.is_punct("}") {
                    break;
                }
            }
        }
        self.expect_punct("}")?;
        Ok(vals)
    }

    fn const_expr(&mut self) -> PResult<i32> {
        let span = self.span();
        let e = self.conditional()?;
        const_eval(&e).ok_or(FrontendError::Syntax {
            span,
            message: "expected constant expression".into(),
        })
    }

    fn function(&mut self, name: String, ret: RetType, span: Span) -> PResult<Item> {
        self.expect_punct("(")?;
        let mut params: Vec<(Option<String>, Span)> = Vec::new();
        if self.is_kw(Kw::Void) && matches!(self.peek_at(1), Tok::Punct(")")) {
            self.advance();
        } else if !self.is_punct(")") {
            loop {
                if self.is_punct("...") {
                    return self.unsupported("variadic function");
                }
                if !self.eat_kw(Kw::Int) {
                    return self.error(format!("expected parameter type, found {}", describe(self.peek())));
                }
                self.reject_pointer()?;
                let pspan = self.span();
                let pname = match self.peek().clone() {
                    Tok::Ident(n) => {
                        self.advance();
                        Some(n)
                    }
                    _ => None,
                };
                if self.is_punct("[") {
                    return self.unsupported("array parameter");
                }
                params.push((pname, pspan));
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        if self.eat_punct(";") {
            return Ok(Item::Prototype(Prototype {
                name,
                ret,
                params: params.into_iter().map(|(n, _)| n).collect(),
                span,
            }));
        }
        let mut named = Vec::new();
        for (p, pspan) in params {
            match p {
                Some(n) => named.push((n, pspan)),
                None => {
                    return Err(FrontendError::Syntax {
                        span: pspan,
                        message: "parameter name omitted in function definition".into(),
                    })
                }
            }
        }
        let body = self.block_body()?;
        Ok(Item::Function(FunctionDef {
            name,
            ret,
            params: named,
            body,
            span,
        }))
    }

    // ---- statements ----

    fn block_body(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.error("unexpected end of file, expected '}'");
            }
            stmts.push(self.statement()?);
        }
        self.advance();
        Ok(stmts)
    }

    fn local_decls(&mut self) -> PResult<Vec<LocalDecl>> {
        let mut decls = Vec::new();
        loop {
            self.reject_pointer()?;
            let span = self.span();
            let name = self.expect_ident()?;
            let len = self.array_suffix()?;
            let init = if self.eat_punct("=") {
                Some(match len {
                    Some(n) => {
                        self.expect_punct("{")?;
                        let mut vals = Vec::new();
                        if !self.is_punct("}") {
                            loop {
                                vals.push(self.assignment()?);
                                if !self.eat_punct(",") || self.is_punct("}") {
                                    break;
                                }
                            }
                        }
                        self.expect_punct("}")?;
                        if vals.len() > n as usize {
                            return self.error("too many initializers");
                        }
                        LocalInit::Array(vals)
                    }
                    None => LocalInit::Scalar(self.assignment()?),
                })
            } else {
                None
            };
            decls.push(LocalDecl {
                name,
                len,
                init,
                span,
            });
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(decls)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Kw(Kw::Int) => {
                self.advance();
                let decls = self.local_decls()?;
                self.expect_punct(";")?;
                Ok(self.stmt(span, StmtKind::Decl(decls)))
            }
            Tok::Kw(Kw::Void) | Tok::Kw(Kw::Extern) => self.unsupported("local declaration of this kind"),
            Tok::Kw(Kw::If) => {
                self.advance();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let then_branch = Box::new(self.statement()?);
                let else_branch = if self.eat_kw(Kw::Else) {
                    Some(Box::new(self.statement()?))
                } else {
                    None
                };
                Ok(self.stmt(
                    span,
                    StmtKind::If {
                        cond,
                        then_branch,
                        else_branch,
                    },
                ))
            }
            Tok::Kw(Kw::While) => {
                self.advance();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let body = Box::new(self.statement()?);
                Ok(self.stmt(span, StmtKind::While { cond, body }))
            }
            Tok::Kw(Kw::Do) => {
                self.advance();
                let body = Box::new(self.statement()?);
                if !self.eat_kw(Kw::While) {
                    return self.error("expected 'while' after do-body");
                }
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                Ok(self.stmt(span, StmtKind::DoWhile { body, cond }))
            }
            Tok::Kw(Kw::For) => {
                self.advance();
                self.expect_punct("(")?;
                let init = if self.eat_punct(";") {
                    None
                } else if self.eat_kw(Kw::Int) {
                    let d = self.local_decls()?;
                    self.expect_punct(";")?;
                    Some(ForInit::Decl(d))
                } else {
                    let e = self.expr()?;
                    self.expect_punct(";")?;
                    Some(ForInit::Expr(e))
                };
                let cond = if self.is_punct(";") { None } else { Some(self.expr()?) };
                self.expect_punct(";")?;
                let step = if self.is_punct(")") { None } else { Some(self.expr()?) };
                self.expect_punct(")")?;
                let body = Box::new(self.statement()?);
                Ok(self.stmt(
                    span,
                    StmtKind::For {
                        init,
                        cond,
                        step,
                        body,
                    },
                ))
            }
            Tok::Kw(Kw::Break) => {
                self.advance();
                self.expect_punct(";")?;
                Ok(self.stmt(span, StmtKind::Break))
            }
            Tok::Kw(Kw::Continue) => {
                self.advance();
                self.expect_punct(";")?;
                Ok(self.stmt(span, StmtKind::Continue))
            }
            Tok::Kw(Kw::Return) => {
                self.advance();
                let value = if self.is_punct(";") { None } else { Some(self.expr()?) };
                self.expect_punct(";")?;
                Ok(self.stmt(span, StmtKind::Return(value)))
            }
            Tok::Kw(Kw::Goto) => {
                self.advance();
                let label = self.expect_ident()?;
                self.expect_punct(";")?;
                Ok(self.stmt(span, StmtKind::Goto(label)))
            }
            Tok::Punct("{") => {
                let body = self.block_body()?;
                Ok(self.stmt(span, StmtKind::Block(body)))
            }
            Tok::Punct(";") => {
                self.advance();
                Ok(self.stmt(span, StmtKind::Empty))
            }
            Tok::Ident(label) if matches!(self.peek_at(1), Tok::Punct(":")) => {
                self.advance();
                self.advance();
                let inner = Box::new(self.statement()?);
                Ok(self.stmt(span, StmtKind::Labeled(label, inner)))
            }
            Tok::Kw(Kw::Else) => self.error("'else' without matching 'if'"),
            _ => {
                let e = self.expr()?;
                self.expect_punct(";")?;
                Ok(self.stmt(span, StmtKind::Expr(e)))
            }
        }
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<Expr> {
        let e = self.assignment()?;
        if self.is_punct(",") {
            return self.unsupported("comma operator");
        }
        Ok(e)
    }

    fn assignment(&mut self) -> PResult<Expr> {
        let span = self.span();
        let lhs = self.conditional()?;
        let op = match self.peek() {
            Tok::Punct("=") => None,
            Tok::Punct("+=") => Some(BinaryOp::Add),
            Tok::Punct("-=") => Some(BinaryOp::Sub),
            Tok::Punct("*=") => Some(BinaryOp::Mul),
            Tok::Punct("/=") => Some(BinaryOp::Div),
            Tok::Punct("%=") => Some(BinaryOp::Rem),
            Tok::Punct("<<=") => Some(BinaryOp::Shl),
            Tok::Punct(">>=") => Some(BinaryOp::Shr),
            Tok::Punct("&=") => Some(BinaryOp::BitAnd),
            Tok::Punct("|=") => Some(BinaryOp::BitOr),
            Tok::Punct("^=") => Some(BinaryOp::BitXor),
            _ => return Ok(lhs),
        };
        self.advance();
        let target = to_lvalue(lhs).ok_or(FrontendError::Syntax {
            span,
            message: "left side of assignment is not assignable".into(),
        })?;
        let value = self.assignment()?;
        Ok(Expr::new(
            span,
            ExprKind::Assign {
                target,
                op,
                value: Box::new(value),
            },
        ))
    }

    fn conditional(&mut self) -> PResult<Expr> {
        let span = self.span();
        let c = self.binary(1)?;
        if self.eat_punct("?") {
            let t = self.expr()?;
            self.expect_punct(":")?;
            let e = self.conditional()?;
            return Ok(Expr::new(span, ExprKind::Cond(Box::new(c), Box::new(t), Box::new(e))));
        }
        Ok(c)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct(p) => match binop_of(p) {
                    Some(op) if op.precedence() >= min_prec => op,
                    _ => break,
                },
                _ => break,
            };
            let span = self.span();
            self.advance();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::new(span, ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let op = match self.peek() {
            Tok::Punct("-") => Some(UnaryOp::Neg),
            Tok::Punct("+") => Some(UnaryOp::Plus),
            Tok::Punct("~") => Some(UnaryOp::BitNot),
            Tok::Punct("!") => Some(UnaryOp::LogNot),
            Tok::Punct("&") => return self.unsupported("address-of operator"),
            Tok::Punct("*") => return self.unsupported("pointer dereference"),
            Tok::Punct("++") | Tok::Punct("--") => {
                let increment = self.is_punct("++");
                self.advance();
                let operand = self.unary()?;
                let target = to_lvalue(operand).ok_or(FrontendError::Syntax {
                    span,
                    message: "operand of increment is not assignable".into(),
                })?;
                return Ok(Expr::new(
                    span,
                    ExprKind::IncDec {
                        target,
                        increment,
                        prefix: true,
                    },
                ));
            }
            Tok::Punct("(") if matches!(self.peek_at(1), Tok::Kw(_)) => {
                return self.unsupported("cast expression");
            }
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let operand = self.unary()?;
            return Ok(Expr::new(span, ExprKind::Unary(op, Box::new(operand))));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let span = self.span();
        let mut e = match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                Expr::new(span, ExprKind::Int(v))
            }
            Tok::Ident(name) => {
                self.advance();
                if self.eat_punct("(") {
                    let mut args = Vec::new();
                    if !self.is_punct(")") {
                        loop {
                            args.push(self.assignment()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                    Expr::new(span, ExprKind::Call(name, args))
                } else if self.eat_punct("[") {
                    let idx = self.expr()?;
                    self.expect_punct("]")?;
                    if self.is_punct("[") {
                        return self.unsupported("multi-dimensional array");
                    }
                    Expr::new(span, ExprKind::Index(name, Box::new(idx)))
                } else {
                    Expr::new(span, ExprKind::Var(name))
                }
            }
            Tok::Punct("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_punct(")")?;
                e
            }
            other => return self.error(format!("expected expression, found {}", describe(&other))),
        };
        loop {
            if self.is_punct("++") || self.is_punct("--") {
                let increment = self.is_punct("++");
                let s = self.span();
                self.advance();
                let target = to_lvalue(e).ok_or(FrontendError::Syntax {
                    span: s,
                    message: "operand of increment is not assignable".into(),
                })?;
                e = Expr::new(
                    span,
                    ExprKind::IncDec {
                        target,
                        increment,
                        prefix: false,
                    },
                );
            } else if self.is_punct(".") || self.is_punct("->") {
                return self.unsupported("struct member access");
            } else if self.is_punct("[") || self.is_punct("(") {
                return self.unsupported("indirect access");
            } else {
                break;
            }
        }
        Ok(e)
    }
}

fn binop_of(p: &str) -> Option<BinaryOp> {
    use BinaryOp::*;
    Some(match p {
        "||" => LogOr,
        "&&" => LogAnd,
        "|" => BitOr,
        "^" => BitXor,
        "&" => BitAnd,
        "==" => Eq,
        "!=" => Ne,
        "<" => Lt,
        "<=" => Le,
        ">" => Gt,
        ">=" => Ge,
        "<<" => Shl,
        ">>" => Shr,
        "+" => Add,
        "-" => Sub,
        "*" => Mul,
        "/" => Div,
        "%" => Rem,
        _ => return None,
    })
}

fn to_lvalue(e: Expr) -> Option<LValue> {
    match e.kind {
        ExprKind::Var(n) => Some(LValue::Var(n)),
        ExprKind::Index(n, i) => Some(LValue::Index(n, i)),
        _ => None,
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(n) => format!("identifier '{n}'"),
        Tok::Int(v) => format!("integer {v}"),
        Tok::Kw(k) => format!("keyword '{}'", format!("{k:?}").to_lowercase()),
        Tok::Punct(p) => format!("'{p}'"),
        Tok::Eof => "end of file".into(),
    }
}

/// Folds an expression built only from literals; `None` otherwise or when
/// folding would divide by zero.
pub fn const_eval(e: &Expr) -> Option<i32> {
    match &e.kind {
        ExprKind::Int(v) => Some(*v),
        ExprKind::Unary(UnaryOp::Plus, a) => const_eval(a),
        ExprKind::Unary(op, a) => {
            let a = const_eval(a)?;
            Some(crate::semantics::eval_unary(to_ir_unary(*op)?, a))
        }
        ExprKind::Binary(op, a, b) => {
            let a = const_eval(a)?;
            let b = const_eval(b)?;
            match op {
                BinaryOp::LogAnd => Some((a != 0 && b != 0) as i32),
                BinaryOp::LogOr => Some((a != 0 || b != 0) as i32),
                _ => crate::semantics::eval_binary(to_ir_binary(*op)?, a, b).ok(),
            }
        }
        ExprKind::Cond(c, t, f) => {
            if const_eval(c)? != 0 {
                const_eval(t)
            } else {
                const_eval(f)
            }
        }
        _ => None,
    }
}

pub(crate) fn to_ir_unary(op: UnaryOp) -> Option<crate::ir::UnOp> {
    use crate::ir::UnOp;
    match op {
        UnaryOp::Neg => Some(UnOp::Neg),
        UnaryOp::BitNot => Some(UnOp::Not),
        UnaryOp::LogNot => Some(UnOp::LNot),
        UnaryOp::Plus => None,
    }
}

pub(crate) fn to_ir_binary(op: BinaryOp) -> Option<crate::ir::BinOp> {
    use crate::ir::BinOp as B;
    Some(match op {
        BinaryOp::Add => B::Add,
        BinaryOp::Sub => B::Sub,
        BinaryOp::Mul => B::Mul,
        BinaryOp::Div => B::Div,
        BinaryOp::Rem => B::Rem,
        BinaryOp::Shl => B::Shl,
        BinaryOp::Shr => B::Shr,
        BinaryOp::BitAnd => B::And,
        BinaryOp::BitOr => B::Or,
        BinaryOp::BitXor => B::Xor,
        BinaryOp::Eq => B::Eq,
        BinaryOp::Ne => B::Ne,
        BinaryOp::Lt => B::Lt,
        BinaryOp::Le => B::Le,
        BinaryOp::Gt => B::Gt,
        BinaryOp::Ge => B::Ge,
        BinaryOp::LogAnd | BinaryOp::LogOr => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FUN3: &str = "int fun3(int a, int b) {\n    for (int i=0; i<100; i++) {\n        a += b;\n        if (a > 200 )\n            break;\n        b--;\n    }\n    return a;\n}\n";

    #[test]
    fn parses_listing_two() {
        let unit = parse_unit(FUN3, "unit2.c").unwrap();
        let funcs: Vec<_> = unit.functions().collect();
        assert_eq!(funcs.len(), 1);
        assert_eq!(funcs[0].name, "fun3");
        let params: Vec<_> = funcs[0].params.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(params, ["a", "b"]);
    }

    #[test]
    fn trivial_function() {
        let unit = parse_unit("int f(){return 0;}", "t.c").unwrap();
        assert_eq!(unit.functions().count(), 1);
    }

    #[test]
    fn rejects_float_declaration() {
        let err = parse_unit("float x;", "t.c").unwrap_err();
        assert_eq!(err.to_string(), "unsupported construct: float");
    }

    #[test]
    fn rejects_pointer_parameter() {
        let err = parse_unit("int f(int *p) { return 0; }", "t.c").unwrap_err();
        assert_eq!(err.to_string(), "unsupported construct: pointer type");
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse_unit("int f() {\n  return 1 +;\n}", "t.c").unwrap_err() {
            FrontendError::Syntax { span, .. } => assert_eq!(span, Span::new(2, 13)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        let unit = parse_unit("int g = 1 + 2 * 3 - 4 - 1 << 1;", "t.c").unwrap();
        match &unit.items[0] {
            Item::Global(g) => assert_eq!(g.init.as_deref(), Some(&[4][..])),
            _ => unreachable!(),
        }
    }

    #[test]
    fn globals_and_prototypes() {
        let unit = parse_unit(
            "int fun3(int a, int b);\nextern int tab[4];\nint k[3] = {1, -2, 0x10};\n",
            "t.c",
        )
        .unwrap();
        assert!(matches!(&unit.items[0], Item::Prototype(p) if p.params.len() == 2));
        assert!(matches!(&unit.items[1], Item::Global(g) if g.is_extern && g.len == Some(4)));
        assert!(matches!(&unit.items[2], Item::Global(g) if g.init.as_deref() == Some(&[1, -2, 16][..])));
    }

    #[test]
    fn goto_and_labels() {
        let unit = parse_unit("int f(int x) { top: x--; if (x > 0) goto top; return x; }", "t.c").unwrap();
        let f = unit.functions().next().unwrap();
        assert!(matches!(f.body[0].kind, StmtKind::Labeled(ref l, _) if l == "top"));
    }
}
