//! Reference interpreter for the SSA IR: 32-bit wrapping arithmetic,
//! bounds-checked arrays, a step limit and a call-depth limit.
//!
//! Functions that are only declared are serviced by an [`Externals`]
//! implementation; calls it does not handle return a deterministic hash
//! of their name and arguments and are recorded in the call trace.

use std::collections::{BTreeMap, HashMap};

use crate::ir::{BlockId, MemSpace, MirFunction, MirProgram, Operand, Rvalue, Stmt, Terminator, ValueId};
use crate::semantics::{eval_binary, eval_unary, Trap};

/// Prefix of the accelerator runtime symbols; excluded from traces and
/// memory comparisons.
pub const ACCEL_PREFIX: &str = "__accel_";

/// Global memory: every global as an array (scalars have length 1).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Memory {
    pub arrays: BTreeMap<String, Vec<i32>>,
}

impl Memory {
    /// Globals with their initial values.
    pub fn of_program(p: &MirProgram) -> Memory {
        let mut arrays = BTreeMap::new();
        for g in p.globals() {
            let mut v = vec![0; g.len.max(1) as usize];
            for (slot, x) in v.iter_mut().zip(&g.init) {
                *slot = *x;
            }
            arrays.insert(g.name.clone(), v);
        }
        Memory { arrays }
    }

    pub fn load(&self, name: &str, index: i32) -> Result<i32, Stop> {
        let a = self
            .arrays
            .get(name)
            .ok_or_else(|| Stop::Error(format!("unknown global '{name}'")))?;
        usize::try_from(index)
            .ok()
            .and_then(|i| a.get(i).copied())
            .ok_or(Stop::Trap(Trap::OutOfBounds))
    }

    pub fn store(&mut self, name: &str, index: i32, value: i32) -> Result<(), Stop> {
        let a = self
            .arrays
            .get_mut(name)
            .ok_or_else(|| Stop::Error(format!("unknown global '{name}'")))?;
        let slot = usize::try_from(index)
            .ok()
            .and_then(|i| a.get_mut(i))
            .ok_or(Stop::Trap(Trap::OutOfBounds))?;
        *slot = value;
        Ok(())
    }

    /// The program-visible part of memory (accelerator runtime excluded).
    pub fn observable(&self) -> BTreeMap<String, Vec<i32>> {
        self.arrays
            .iter()
            .filter(|(k, _)| !k.starts_with(ACCEL_PREFIX))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_steps: u64,
    pub max_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 20_000_000,
            max_depth: 200,
        }
    }
}

/// Why execution stopped early.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stop {
    Trap(Trap),
    StepLimit,
    DepthLimit,
    /// Malformed program or runtime misuse.
    Error(String),
}

impl std::fmt::Display for Stop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stop::Trap(t) => write!(f, "trap: {t}"),
            Stop::StepLimit => f.write_str("step limit exceeded"),
            Stop::DepthLimit => f.write_str("call depth limit exceeded"),
            Stop::Error(e) => f.write_str(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub callee: String,
    pub args: Vec<i32>,
    pub result: i32,
}

/// Services calls to functions without a body.
pub trait Externals {
    /// `None` when the call is not handled here.
    fn call(&mut self, name: &str, args: &[i32], mem: &mut Memory) -> Option<Result<i32, Stop>>;
}

/// Handles nothing: every external call gets the default treatment, and
/// accelerator lookups report the accelerator absent.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoExternals;

impl Externals for NoExternals {
    fn call(&mut self, _: &str, _: &[i32], _: &mut Memory) -> Option<Result<i32, Stop>> {
        None
    }
}

/// Deterministic result of an unknown external call (FNV-1a).
pub fn external_hash(name: &str, args: &[i32]) -> i32 {
    let mut h: u32 = 0x811c_9dc5;
    let mut mix = |b: u8| {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    };
    name.bytes().for_each(&mut mix);
    for a in args {
        a.to_le_bytes().into_iter().for_each(&mut mix);
    }
    (h & 0xFFFF) as i32
}

/// Outcome of running a whole program entry point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub ret: Result<Option<i32>, Stop>,
    pub mem: Memory,
    pub trace: Vec<TraceEntry>,
    pub steps: u64,
}

impl RunResult {
    /// What an outside observer can compare: result, memory and calls.
    pub fn observation(&self) -> (Result<Option<i32>, Stop>, BTreeMap<String, Vec<i32>>, &[TraceEntry]) {
        (self.ret.clone(), self.mem.observable(), &self.trace)
    }
}

/// Where a loop-region run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionResult {
    /// 1-based exit id taken, or `None` when execution stopped.
    pub exit: Option<u32>,
    pub stop: Option<Stop>,
    /// SSA values at the exit.
    pub values: Vec<i32>,
    pub mem: Memory,
    pub steps: u64,
}

struct Frame<'f> {
    f: &'f MirFunction,
    values: Vec<i32>,
    locals: HashMap<String, Vec<i32>>,
}

pub struct Interpreter<'p, E: Externals> {
    functions: HashMap<&'p str, &'p MirFunction>,
    pub ext: E,
    pub mem: Memory,
    pub limits: Limits,
    pub steps: u64,
    pub trace: Vec<TraceEntry>,
    /// Block execution counts per function, when profiling.
    pub profile: Option<HashMap<String, Vec<u64>>>,
}

enum Flow {
    Return(Option<i32>),
    Exit(u32),
}

impl<'p, E: Externals> Interpreter<'p, E> {
    pub fn new(p: &'p MirProgram, ext: E, limits: Limits) -> Self {
        Interpreter {
            functions: p.functions().map(|f| (f.name.as_str(), f)).collect(),
            ext,
            mem: Memory::of_program(p),
            limits,
            steps: 0,
            trace: Vec::new(),
            profile: None,
        }
    }

    pub fn enable_profile(&mut self) {
        self.profile = Some(HashMap::new());
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            Err(Stop::StepLimit)
        } else {
            Ok(())
        }
    }

    pub fn call(&mut self, name: &str, args: &[i32], depth: usize) -> Result<Option<i32>, Stop> {
        if depth > self.limits.max_depth {
            return Err(Stop::DepthLimit);
        }
        let Some(&f) = self.functions.get(name) else {
            if let Some(r) = self.ext.call(name, args, &mut self.mem) {
                return r.map(Some);
            }
            if name.starts_with(ACCEL_PREFIX) {
                // Accelerator runtime without a simulator: report absence.
                return Ok(Some(0));
            }
            let result = external_hash(name, args);
            self.trace.push(TraceEntry {
                callee: name.to_string(),
                args: args.to_vec(),
                result,
            });
            return Ok(Some(result));
        };
        if f.params.len() != args.len() {
            return Err(Stop::Error(format!(
                "'{name}' expects {} arguments, got {}",
                f.params.len(),
                args.len()
            )));
        }
        let mut frame = Frame {
            f,
            values: vec![0; f.values.len()],
            locals: f.local_arrays.iter().map(|a| (a.name.clone(), vec![0; a.len as usize])).collect(),
        };
        for ((_, v), a) in f.params.iter().zip(args) {
            frame.values[v.index()] = *a;
        }
        match self.run_blocks(&mut frame, f.entry, None, None, depth)? {
            Flow::Return(r) => Ok(r),
            Flow::Exit(_) => unreachable!("no exits requested"),
        }
    }

    fn operand(frame: &Frame, o: Operand) -> i32 {
        match o {
            Operand::Const(c) => c,
            Operand::Value(v) => frame.values[v.index()],
        }
    }

    fn run_blocks(
        &mut self,
        frame: &mut Frame,
        start: BlockId,
        prev: Option<BlockId>,
        exits: Option<&[(BlockId, BlockId)]>,
        depth: usize,
    ) -> Result<Flow, Stop> {
        let f = frame.f;
        let mut cur = start;
        let mut prev = prev;
        loop {
            if let Some(p) = &mut self.profile {
                let counts = p.entry(f.name.clone()).or_insert_with(|| vec![0; f.blocks.len()]);
                counts[cur.index()] += 1;
            }
            let blk = f.block(cur);
            // Phis read their operands in parallel.
            let mut phi_writes = Vec::new();
            for s in &blk.stmts {
                if let Stmt::Phi { dst, args } = s {
                    let p = prev.ok_or_else(|| Stop::Error("phi in entry block".into()))?;
                    let (_, o) = args
                        .iter()
                        .find(|(q, _)| *q == p)
                        .ok_or_else(|| Stop::Error(format!("{}: phi in {cur} lacks operand for {p}", f.name)))?;
                    phi_writes.push((*dst, Self::operand(frame, *o)));
                }
            }
            for (d, v) in phi_writes {
                frame.values[d.index()] = v;
            }
            for s in &blk.stmts {
                self.tick()?;
                match s {
                    Stmt::Phi { .. } => {}
                    Stmt::Assign { dst, rv } => {
                        let v = match rv {
                            Rvalue::Use(o) => Self::operand(frame, *o),
                            Rvalue::Unary(op, a) => eval_unary(*op, Self::operand(frame, *a)),
                            Rvalue::Binary(op, a, b) => {
                                eval_binary(*op, Self::operand(frame, *a), Self::operand(frame, *b))
                                    .map_err(Stop::Trap)?
                            }
                        };
                        frame.values[dst.index()] = v;
                    }
                    Stmt::Load { dst, array, index } => {
                        let i = Self::operand(frame, *index);
                        let v = match array.space {
                            MemSpace::Global => self.mem.load(&array.name, i)?,
                            MemSpace::Local => local(frame, &array.name, i).map(|x| *x)?,
                        };
                        frame.values[dst.index()] = v;
                    }
                    Stmt::Store { array, index, value } => {
                        let i = Self::operand(frame, *index);
                        let v = Self::operand(frame, *value);
                        match array.space {
                            MemSpace::Global => self.mem.store(&array.name, i, v)?,
                            MemSpace::Local => *local(frame, &array.name, i)? = v,
                        }
                    }
                    Stmt::Call { dst, callee, args } => {
                        let vals: Vec<i32> = args.iter().map(|a| Self::operand(frame, *a)).collect();
                        let r = self.call(callee, &vals, depth + 1)?;
                        if let Some(d) = dst {
                            frame.values[d.index()] = r.unwrap_or(0);
                        }
                    }
                }
            }
            self.tick()?;
            let next = match &blk.term {
                Terminator::Return(v) => return Ok(Flow::Return(v.map(|o| Self::operand(frame, o)))),
                Terminator::Goto(t) => *t,
                Terminator::Branch { cond, then_bb, else_bb } => {
                    if Self::operand(frame, *cond) != 0 {
                        *then_bb
                    } else {
                        *else_bb
                    }
                }
            };
            if let Some(ex) = exits {
                if let Some(k) = ex.iter().position(|e| *e == (cur, next)) {
                    return Ok(Flow::Exit(k as u32 + 1));
                }
            }
            prev = Some(cur);
            cur = next;
        }
    }

    /// Runs loop code of `f` from `header` (entered from `preheader`) with
    /// the given SSA values, until one of `exits` is taken.
    pub fn run_region(
        &mut self,
        f: &'p MirFunction,
        header: BlockId,
        preheader: BlockId,
        exits: &[(BlockId, BlockId)],
        inputs: &[(ValueId, i32)],
    ) -> (Option<u32>, Option<Stop>, Vec<i32>) {
        let mut frame = Frame {
            f,
            values: vec![0; f.values.len()],
            locals: f.local_arrays.iter().map(|a| (a.name.clone(), vec![0; a.len as usize])).collect(),
        };
        for (v, x) in inputs {
            frame.values[v.index()] = *x;
        }
        match self.run_blocks(&mut frame, header, Some(preheader), Some(exits), 0) {
            Ok(Flow::Exit(id)) => (Some(id), None, frame.values),
            Ok(Flow::Return(_)) => (None, Some(Stop::Error("region returned without exiting".into())), frame.values),
            Err(s) => (None, Some(s), frame.values),
        }
    }
}

fn local<'a>(frame: &'a mut Frame, name: &str, i: i32) -> Result<&'a mut i32, Stop> {
    let a = frame
        .locals
        .get_mut(name)
        .ok_or_else(|| Stop::Error(format!("unknown local array '{name}'")))?;
    usize::try_from(i)
        .ok()
        .and_then(|i| a.get_mut(i))
        .ok_or(Stop::Trap(Trap::OutOfBounds))
}

/// Runs `entry(args)` on a fresh memory image.
pub fn interpret<E: Externals>(p: &MirProgram, entry: &str, args: &[i32], limits: Limits, ext: E) -> RunResult {
    let mut it = Interpreter::new(p, ext, limits);
    let ret = it.call(entry, args, 0);
    RunResult {
        ret,
        mem: it.mem,
        trace: it.trace,
        steps: it.steps,
    }
}

/// Runs a loop region on a given memory image.
#[allow(clippy::too_many_arguments)]
pub fn run_region<'p>(
    p: &'p MirProgram,
    f: &'p MirFunction,
    header: BlockId,
    preheader: BlockId,
    exits: &[(BlockId, BlockId)],
    inputs: &[(ValueId, i32)],
    mem: Memory,
    limits: Limits,
) -> RegionResult {
    let mut it = Interpreter::new(p, NoExternals, limits);
    it.mem = mem;
    let (exit, stop, values) = it.run_region(f, header, preheader, exits, inputs);
    RegionResult {
        exit,
        stop,
        values,
        mem: it.mem,
        steps: it.steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::compile_program;

    fn program(srcs: &[(&str, &str)]) -> MirProgram {
        let s: Vec<(String, String)> = srcs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        compile_program(&s).unwrap().program
    }

    const UNIT1: &str = include_str!("../../../../corpus/listings/unit1.c");
    const UNIT2: &str = include_str!("../../../../corpus/listings/unit2.c");

    /// Direct Rust transcription of fun3 as an independent oracle.
    fn fun3_oracle(mut a: i32, mut b: i32) -> i32 {
        for _ in 0..100 {
            a = a.wrapping_add(b);
            if a > 200 {
                break;
            }
            b = b.wrapping_sub(1);
        }
        a
    }

    #[test]
    fn fun3_matches_hand_transcription() {
        let p = program(&[("unit1.c", UNIT1), ("unit2.c", UNIT2)]);
        for (a, b) in [(0, 1), (201, 0), (-5, 7), (150, 60), (i32::MAX, 1)] {
            let r = interpret(&p, "fun3", &[a, b], Limits::default(), NoExternals);
            assert_eq!(r.ret, Ok(Some(fun3_oracle(a, b))), "fun3({a},{b})");
        }
        // a=201, b=0: the first check already exceeds 200.
        assert_eq!(interpret(&p, "fun3", &[201, 0], Limits::default(), NoExternals).ret, Ok(Some(201)));
    }

    #[test]
    fn trivial_function() {
        let p = program(&[("t.c", "int f(){return 0;}")]);
        assert_eq!(interpret(&p, "f", &[], Limits::default(), NoExternals).ret, Ok(Some(0)));
    }

    #[test]
    fn traps_and_limits() {
        let p = program(&[(
            "t.c",
            "int A[4]; int d(int x){ return 10 / x; } int oob(int i){ return A[i]; } int spin(){ while(1){} return 0; } int rec(int n){ return rec(n+1); }",
        )]);
        let run = |f: &str, a: &[i32]| interpret(&p, f, a, Limits { max_steps: 10_000, max_depth: 50 }, NoExternals).ret;
        assert_eq!(run("d", &[0]), Err(Stop::Trap(Trap::DivisionByZero)));
        assert_eq!(run("oob", &[4]), Err(Stop::Trap(Trap::OutOfBounds)));
        assert_eq!(run("oob", &[-1]), Err(Stop::Trap(Trap::OutOfBounds)));
        assert_eq!(run("spin", &[]), Err(Stop::StepLimit));
        assert_eq!(run("rec", &[0]), Err(Stop::DepthLimit));
    }

    #[test]
    fn externals_are_traced_deterministically() {
        let p = program(&[("t.c", "int ext(int x); int G; int f(int a){ G = ext(a) + 1; return G; }")]);
        let r1 = interpret(&p, "f", &[3], Limits::default(), NoExternals);
        let r2 = interpret(&p, "f", &[3], Limits::default(), NoExternals);
        assert_eq!(r1, r2);
        assert_eq!(r1.trace.len(), 1);
        assert_eq!(r1.trace[0].result, external_hash("ext", &[3]));
        assert_eq!(r1.mem.arrays["G"], vec![external_hash("ext", &[3]) + 1]);
    }

    #[test]
    fn local_arrays_are_per_call() {
        let p = program(&[("t.c", "int f(int n){ int t[3]; t[0] = n; t[1] = t[0] * 2; return t[1] + t[2]; }")]);
        assert_eq!(interpret(&p, "f", &[5], Limits::default(), NoExternals).ret, Ok(Some(10)));
    }
}
