//! Loop synthesis: if-conversion into predicated data-flow graphs, list
//! scheduling with chaining, FSM construction, and the speedup estimate
//! that accepts or rejects a candidate.

pub mod cost;
pub mod dfg;
pub mod estimate;
pub mod fsm;
pub mod region;
pub mod schedule;

use thiserror::Error;

use crate::ir::loops::find_loops;
use crate::ir::{BlockId, MirFunction};

pub use cost::{CostModel, OpKind, SwKind};
pub use dfg::{if_convert, Dfg, IfConverted};
pub use estimate::{estimate_and_filter, CycleEstimate};
pub use fsm::{build_fsm, validate_fsm, FsmSpec};
pub use region::LoopRegion;
pub use schedule::{schedule, Schedule};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SynthError {
    /// The loop contains something the accelerator cannot express.
    #[error("{function}: loop candidate rejected: {reason}")]
    Unsupported { function: String, reason: String },
    /// The selected loop no longer exists in the program.
    #[error("stale loop selection: {0}")]
    StaleLoop(String),
    #[error("{0}")]
    Unschedulable(String),
    #[error("invalid FSM: {0}")]
    Invalid(String),
}

/// Everything synthesis produces for one loop.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub fsm: FsmSpec,
    pub estimate: CycleEstimate,
}

/// Runs the whole synthesis step for the loop (nest) headed by `header`
/// in `f`, naming the accelerator after `loop_id`.
pub fn synthesize_loop(
    f: &MirFunction,
    header: BlockId,
    loop_id: u32,
    model: &CostModel,
) -> Result<Synthesized, SynthError> {
    let forest = find_loops(f);
    let region = LoopRegion::new(f, &forest, header)?;
    let conv = if_convert(&region);
    let schedules = conv
        .hyperblocks
        .iter()
        .map(|d| schedule(d, model))
        .collect::<Result<Vec<_>, _>>()?;
    let fsm = build_fsm(&format!("loop{loop_id}"), loop_id, &region, &conv, &schedules, model);
    validate_fsm(&fsm).map_err(SynthError::Invalid)?;
    let estimate = estimate_and_filter(&fsm, &region, model);
    Ok(Synthesized { fsm, estimate })
}
