//! Verification: a reference interpreter, a cycle-level FSM simulator,
//! randomized equivalence checking between the two, and whole-program
//! co-simulation of patched programs with timing reports.

pub mod cosim;
pub mod equivalence;
pub mod fsm_sim;
pub mod interp;

pub use fsm_sim::{simulate_fsm, SimResult};
pub use interp::{interpret, run_region, Externals, Limits, Memory, NoExternals, RunResult, Stop, TraceEntry};
pub use equivalence::{check_equivalence, run_fault_suite, Counterexample, EquivConfig, EquivReport};
pub use cosim::{base_address, cosimulate, run_with_accelerators, AccelSim, AccelStats, Cosimulation, TimingReport};
