//! C-subset frontend: parsing, lowering to a block CFG, and SSA
//! construction.

pub mod ast;
pub mod lexer;
mod lower;
pub mod parser;
mod ssa;

use thiserror::Error;

use crate::diag::{Diagnostic, Span};
use crate::ir::{MirFunction, MirProgram, Stmt, TranslationUnit};

pub use parser::parse_unit;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{message}")]
    Syntax { span: Span, message: String },
    #[error("unsupported construct: {construct}")]
    Unsupported { span: Span, construct: String },
    #[error("{message}")]
    Semantic { span: Span, message: String },
}

impl FrontendError {
    pub fn span(&self) -> Span {
        match self {
            FrontendError::Syntax { span, .. }
            | FrontendError::Unsupported { span, .. }
            | FrontendError::Semantic { span, .. } => *span,
        }
    }

    pub fn to_diagnostic(&self, file: &str) -> Diagnostic {
        Diagnostic::error(file, self.span(), self.to_string())
    }
}

/// A lowered translation unit together with the warnings lowering produced.
#[derive(Debug, Clone)]
pub struct LoweredUnit {
    pub unit: TranslationUnit,
    pub warnings: Vec<Diagnostic>,
}

/// Lowers a parsed unit to SSA form. Every function satisfies the IR
/// validator's invariants on return.
pub fn build_ssa_cfg(unit: &ast::Unit) -> Result<LoweredUnit, FrontendError> {
    let (skeleton, pre_ssa, mut warnings) = lower::lower_unit(unit)?;
    let mut functions = Vec::with_capacity(pre_ssa.len());
    for f in pre_ssa {
        let (func, w) = ssa::construct(f, &unit.name);
        warnings.extend(w);
        functions.push(func);
    }
    Ok(LoweredUnit {
        unit: TranslationUnit {
            functions,
            ..skeleton
        },
        warnings,
    })
}

/// Parses and lowers one source file.
pub fn compile_unit(source: &str, unit_name: &str) -> Result<LoweredUnit, FrontendError> {
    let ast = parse_unit(source, unit_name)?;
    build_ssa_cfg(&ast)
}

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("{file}:{line}:{col}: error: {error}", line = error.span().line, col = error.span().col)]
    Unit { file: String, error: FrontendError },
    #[error("function '{name}' is defined in both {first} and {second}")]
    DuplicateFunction { name: String, first: String, second: String },
    #[error("global '{name}' is defined in both {first} and {second}")]
    DuplicateGlobal { name: String, first: String, second: String },
    #[error("duplicate translation unit name '{0}'")]
    DuplicateUnit(String),
}

impl ProgramError {
    pub fn to_diagnostic(&self) -> Diagnostic {
        match self {
            ProgramError::Unit { file, error } => error.to_diagnostic(file),
            other => Diagnostic::error("<program>", Span::default(), other.to_string()),
        }
    }
}

/// A whole program: the parsed units (kept for source re-emission) and
/// their lowered form.
#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub asts: Vec<ast::Unit>,
    pub program: MirProgram,
    pub warnings: Vec<Diagnostic>,
}

/// Compiles all units of a program and checks program-wide invariants
/// (unique function and global definitions).
pub fn compile_program(sources: &[(String, String)]) -> Result<CompiledProgram, ProgramError> {
    let mut asts = Vec::new();
    let mut units: Vec<TranslationUnit> = Vec::new();
    let mut warnings = Vec::new();
    for (name, src) in sources {
        if units.iter().any(|u| &u.name == name) {
            return Err(ProgramError::DuplicateUnit(name.clone()));
        }
        let ast = parse_unit(src, name).map_err(|error| ProgramError::Unit {
            file: name.clone(),
            error,
        })?;
        let lowered = build_ssa_cfg(&ast).map_err(|error| ProgramError::Unit {
            file: name.clone(),
            error,
        })?;
        for f in &lowered.unit.functions {
            if let Some(prev) = units.iter().find(|u| u.functions.iter().any(|g| g.name == f.name)) {
                return Err(ProgramError::DuplicateFunction {
                    name: f.name.clone(),
                    first: prev.name.clone(),
                    second: name.clone(),
                });
            }
        }
        for g in lowered.unit.globals.iter().filter(|g| !g.is_extern) {
            if let Some(prev) = units
                .iter()
                .find(|u| u.globals.iter().any(|h| h.name == g.name && !h.is_extern))
            {
                return Err(ProgramError::DuplicateGlobal {
                    name: g.name.clone(),
                    first: prev.name.clone(),
                    second: name.clone(),
                });
            }
        }
        warnings.extend(lowered.warnings);
        units.push(lowered.unit);
        asts.push(ast);
    }
    Ok(CompiledProgram {
        asts,
        program: MirProgram { units, entry: None },
        warnings,
    })
}

/// Names of all functions called from `f`, in first-call order (block
/// layout order, then statement order), duplicates removed.
pub fn callees_of(f: &MirFunction) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for b in &f.blocks {
        for s in &b.stmts {
            if let Stmt::Call { callee, .. } = s {
                if !out.contains(callee) {
                    out.push(callee.clone());
                }
            }
        }
    }
    out
}
