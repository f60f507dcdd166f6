//! A batch hardware/software partitioning compiler for a small C subset.
//!
//! The pipeline parses C sources into an SSA control-flow IR, records every
//! loop in a profile transcript, ranks loops by estimated execution
//! frequency, synthesizes the chosen loops into finite-state-machine
//! accelerators, emits Verilog and a register map, patches the program to
//! call the accelerator, and checks the result by co-simulation.

pub mod analyzer;
pub mod collector;
pub mod diag;
pub mod driver;
pub mod frontend;
pub mod hdl;
pub mod patch;
pub mod ir;
pub mod semantics;
pub mod synth;
pub mod verify;

/// The book's chapters, compiled and run as doctests so their snippets
/// stay in step with the library.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/collecting.md")]
    pub struct Collecting;
    #[doc = include_str!("../../../book/src/selection.md")]
    pub struct Selection;
    #[doc = include_str!("../../../book/src/synthesis.md")]
    pub struct Synthesis;
    #[doc = include_str!("../../../book/src/hardware.md")]
    pub struct Hardware;
    #[doc = include_str!("../../../book/src/patching.md")]
    pub struct Patching;
    #[doc = include_str!("../../../book/src/verification.md")]
    pub struct Verification;
    #[doc = include_str!("../../../book/src/configuration.md")]
    pub struct Configuration;
}
