//! Program patching: the C wrapper for each accelerator, the IR rewrite
//! that calls it in front of the loop with a `bb_idx` dispatch, and C
//! re-emission of the patched program.

pub mod emit;
pub mod ir;
pub mod wrapper;

use thiserror::Error;

pub use emit::{emit_c, print_unit};
pub use ir::{patch_function, patch_program, LoopInterface, PatchPlan, PatchedProgram};
pub use wrapper::{make_wrapper, platform_hooks_c, wrapper_name, WrapperSource};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PatchError {
    #[error("loop {loop_id} cannot be patched: {reason}")]
    StaleLoop { loop_id: u32, reason: String },
    #[error("patched program is invalid: {0}")]
    Invalid(String),
}
